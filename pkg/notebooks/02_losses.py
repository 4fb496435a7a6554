"""
Consistency and interaction losses
==================================

Build a representation from a motion, break it in a few ways and watch
which loss notices.
"""

import numpy as np

from physimetrics import (LossConfig, MotionRep, PoseSequence, default_skeleton, mc_loss, mi_loss,
                          rep_from_motion, simple_loss, velocity_loss)
from physimetrics.bodymodel import load_body_config, regress_markers

skeleton = default_skeleton()
markers, _ = load_body_config(None, skeleton)

root = np.stack([np.linspace(0, 0.3, 10), np.zeros(10), np.full(10, 0.93)], axis=1)
gt = rep_from_motion(skeleton, PoseSequence.rest(skeleton, 10, root_translation=root))
print("frame width:", gt.to_array().shape[1])

internal = LossConfig(mc_mode="internal")
print("self-consistency of a clean rep:", mc_loss(gt, gt, skeleton, internal))

# velocities that disagree with the positions
lazy = MotionRep(gt.p, np.zeros_like(gt.v), gt.r)
print("zeroed velocity  -> mc (internal):", mc_loss(lazy, lazy, skeleton, internal))
print("                 -> velocity loss:", velocity_loss(lazy, gt))

# noisy positions, untouched rotations
rng = np.random.default_rng(1)
noisy = MotionRep(gt.p + rng.normal(scale=0.01, size=gt.p.shape), gt.v, gt.r)
print("1 cm noise       -> simple:", simple_loss(noisy, gt), " mc:", mc_loss(noisy, gt, skeleton))

# two people: markers 5 cm apart are "in contact"
a = regress_markers(gt.p, markers)
b = a + [0.05, 0.0, 0.0]
print("interaction loss at ground truth (contact term survives):", mi_loss(a, b, a, b))
print("partner pushed 20 cm away:", mi_loss(a, b + [0.2, 0, 0], a, b))
