#!/usr/bin/env python3
"""Score candidate camera poses by cluster entropy of their virtual
renders, discount far poses, and sample the next view."""

import numpy as np

from openobj.nbv import (
    CameraPose,
    SegmentedScene,
    render_virtual,
    select_next_view,
    viewpoint_entropy,
    weighted_entropy,
)
from openobj.pointcloud import PointCloud
from openobj.segmentation import euclidean_cluster
from openobj.synthgen import ShapeSpec, generate_scene

objects = [
    ShapeSpec("box", (0.1, 0.08, 0.1), points=600, translation=(0.25, 0.1, 0.09), seed=1),
    ShapeSpec("cylinder", (0.04, 0.14), points=600, translation=(-0.2, -0.12, 0.11), seed=2),
    ShapeSpec("sphere", (0.05,), points=600, translation=(0.0, 0.22, 0.09), seed=3),
]
world, _ = generate_scene(objects, seed=4)

down = np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]])
current = CameraPose(rotation=down, translation=[0.0, 0.0, 2.0])
candidates = [
    CameraPose(rotation=down, translation=[x, y, 2.0])
    for x, y in [(0.0, 0.0), (0.4, 0.0), (-0.4, 0.3), (0.8, -0.6)]
]

weighted = []
for i, pose in enumerate(candidates):
    view = render_virtual(world, pose, resolution=96)
    clusters = euclidean_cluster(view, link_dist=0.04, min_pts=10)
    entropy = (
        viewpoint_entropy(SegmentedScene(clusters=tuple(clusters), total_area=len(view)))
        if clusters
        else 0.0
    )
    hw = weighted_entropy(entropy, pose, current, sigma=0.5)
    weighted.append((pose, hw))
    print(f"pose {i} at {pose.translation}: {len(view)} visible points, "
          f"{len(clusters)} clusters, H={entropy:.3f}, weighted={hw:.3f}")

probs = np.array([w for _, w in weighted])
probs /= probs.sum()
print(f"selection probabilities: {np.round(probs, 3)}")
chosen = select_next_view(weighted, seed=0)
print(f"next view: translation {chosen.translation}")
