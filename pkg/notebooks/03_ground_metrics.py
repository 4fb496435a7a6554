"""
Penetration, float and skating
==============================

The synthetic generators put the body exactly on the ground, so shifting
it up or down by a known amount should show up one-for-one in the metrics.
"""

from physimetrics import default_skeleton, forward_kinematics, ground_contact_metrics, pfc, skate
from physimetrics.bodymodel import load_body_config
from physimetrics.synth import generate

skeleton = default_skeleton()
_, spheres = load_body_config(None, skeleton)

for offset in (0.0, -0.010, 0.0087):
    (pose,) = generate("static", skeleton, spheres, frames=5, height_offset=offset)
    pen, flo, contact = ground_contact_metrics(forward_kinematics(skeleton, pose), spheres)
    print(f"offset {offset:+.4f} m: penetration {pen:.4f} mm, float {flo:.4f} mm, contact {contact:.4f} mm")

# feet glued to the floor while the whole body slides 1.2 cm per frame
(pose,) = generate("walk-line", skeleton, spheres, frames=10, fps=20, speed=0.012)
p = forward_kinematics(skeleton, pose)
print("skate at 20 fps:", skate(p, spheres, fps=20), "cm/s")
print("pfc (uniform motion, no acceleration):", pfc(p, skeleton, 20))
