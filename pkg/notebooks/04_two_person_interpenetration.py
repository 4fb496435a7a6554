"""
Two people walking into each other
==================================

Sphere bodies overlap once the roots get closer than a torso width.
"""

import numpy as np

from physimetrics import default_skeleton, forward_kinematics, interpenetration
from physimetrics.bodymodel import load_body_config
from physimetrics.synth import generate

skeleton = default_skeleton()
_, spheres = load_body_config(None, skeleton)

a, b = (forward_kinematics(skeleton, p)
        for p in generate("two-person-approach", skeleton, spheres, frames=30, gap=0.3))

for t in range(0, 30, 5):
    gap = np.linalg.norm(a[t, 0, :2] - b[t, 0, :2])
    vol = interpenetration([a[t:t + 1], b[t:t + 1]], spheres)
    print(f"frame {t:2d}: root gap {gap:.2f} m, overlap {vol:10.1f} cm^3")

print("clip mean:", interpenetration([a, b], spheres), "cm^3")
