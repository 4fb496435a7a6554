"""
Forward kinematics and fitting rotations back from positions
============================================================

Pose a skeleton, read off joint positions, then recover the rotations
with the damped Gauss-Newton fitter and check how close we got.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from physimetrics import PoseSequence, default_skeleton, forward_kinematics, ik_fit, matrix_to_rot6d

skeleton = default_skeleton()
print(skeleton.joint_count, "joints, root", skeleton.joint_names[skeleton.root_index])

# a gentle random pose held for 20 frames, drifting forward
rng = np.random.default_rng(0)
rotvec = rng.normal(scale=0.3, size=(skeleton.joint_count, 3))
rot = matrix_to_rot6d(Rotation.from_rotvec(rotvec).as_matrix())
frames = 20
root = np.stack([np.linspace(0, 0.5, frames), np.zeros(frames), np.full(frames, 0.9)], axis=1)
pose = PoseSequence(root, np.repeat(rot[None], frames, axis=0))

positions = forward_kinematics(skeleton, pose)
print("positions", positions.shape)

# bone lengths never change under FK
rest = np.linalg.norm(skeleton.rest_offset[skeleton.bones], axis=1)
length = np.linalg.norm(positions[:, skeleton.bones] - positions[:, skeleton.parent[skeleton.bones]], axis=-1)
print("max bone length drift (m):", np.abs(length - rest).max())

# back to rotations
fit = ik_fit(skeleton, positions)
print("per-frame RMS residual (m): max", fit.residual.max())
print("iterations per frame:", fit.iterations)

# the 6D numbers may differ from the originals only where a joint has no child to pin its twist
refit = forward_kinematics(skeleton, fit.pose)
print("max joint error after refit (mm):", 1000 * np.abs(refit - positions).max())
