"""Next-best-view selection: viewpoint entropy over segmented scenes,
orthographic depth-buffer rendering of virtual views, Gaussian distance
weighting and probabilistic view sampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .pointcloud import PointCloud

__all__ = [
    "CameraPose",
    "SegmentedScene",
    "viewpoint_entropy",
    "render_virtual",
    "weighted_entropy",
    "select_next_view",
    "load_poses",
]

DEFAULT_RESOLUTION = 128
EXTENT_MARGIN = 0.05  # orthographic window grows 5 % past the scene AABB


class NbvError(ValueError):
    pass


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world rotation and translation; the camera looks along
    its local +Z axis."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise NbvError("camera rotation must have determinant +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(
            self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3)
        )

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation


@dataclass(frozen=True)
class SegmentedScene:
    """Cluster decomposition of a rendered view. Cluster area is its
    visible point count; total_area defaults to the sum but may be larger
    when the scene holds non-cluster points."""

    clusters: tuple
    total_area: float | None = None

    def __post_init__(self):
        clusters = tuple(self.clusters)
        object.__setattr__(self, "clusters", clusters)
        covered = float(sum(len(c) for c in clusters))
        total = covered if self.total_area is None else float(self.total_area)
        if total < covered:
            raise NbvError("total area cannot undercut the cluster areas")
        object.__setattr__(self, "total_area", total)


def viewpoint_entropy(scene: SegmentedScene) -> float:
    """H = -sum (A_i / S) log(A_i / S) over cluster area fractions."""
    if not scene.clusters:
        raise NbvError("need at least one cluster")
    areas = np.array([len(c) for c in scene.clusters], dtype=np.float64)
    if np.any(areas <= 0) or scene.total_area <= 0:
        raise NbvError("cluster areas must be positive")
    fractions = areas / scene.total_area
    return float(-np.sum(fractions * np.log(fractions)))


def render_virtual(
    world: PointCloud,
    pose: CameraPose,
    resolution: int = DEFAULT_RESOLUTION,
    extent: float | None = None,
) -> PointCloud:
    """Virtual view by orthographic projection with a depth buffer.

    Points are binned onto a resolution x resolution pixel grid over the
    camera-frame XY window (auto-fit to the scene plus a margin when no
    extent is given); each pixel keeps its nearest point (smallest
    camera z). The result is the subset of world points that stay visible,
    in world coordinates.
    """
    if len(world) == 0:
        raise NbvError("empty world cloud")
    if resolution < 1:
        raise NbvError("resolution must be positive")
    cam = pose.to_camera(world.points)
    xy = cam[:, :2]
    if extent is None:
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        span = float(np.max(hi - lo)) * (1 + EXTENT_MARGIN) + 1e-12
        center = (lo + hi) / 2
    else:
        span = float(extent)
        center = np.zeros(2)
    origin = center - span / 2
    pix = np.floor((xy - origin) / span * resolution).astype(np.int64)
    in_window = np.all((pix >= 0) & (pix < resolution), axis=1)
    flat = pix[:, 0] * resolution + pix[:, 1]
    idx = np.flatnonzero(in_window)
    if len(idx) == 0:
        return world.select(idx)
    # group by pixel, keep the smallest camera z (ties: lowest point index)
    order = np.lexsort((idx, cam[idx, 2], flat[idx]))
    ranked = idx[order]
    first = np.ones(len(ranked), dtype=bool)
    first[1:] = flat[ranked[1:]] != flat[ranked[:-1]]
    return world.select(np.sort(ranked[first]))


def weighted_entropy(h: float, v: CameraPose, v_c: CameraPose, sigma: float) -> float:
    """Gaussian travel-distance weighting of a view entropy:
    H / (sigma sqrt(2 pi)) * exp(-|t_v - t_vc|^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise NbvError("sigma must be positive")
    dist_sq = float(np.sum((v.translation - v_c.translation) ** 2))
    weight = np.exp(-dist_sq / (2 * sigma**2)) / (sigma * np.sqrt(2 * np.pi))
    return float(h * weight)


def select_next_view(candidates, seed: int = 0) -> CameraPose:
    """Sample a pose with probability proportional to its weighted
    entropy; deterministic per seed."""
    if not candidates:
        raise NbvError("no candidate views")
    poses = [pose for pose, _ in candidates]
    weights = np.array([w for _, w in candidates], dtype=np.float64)
    if np.any(weights < 0):
        raise NbvError("weighted entropies must be non-negative")
    total = weights.sum()
    if total <= 0:
        raise NbvError("all candidate weights are zero")
    rng = np.random.default_rng(seed)
    idx = int(np.searchsorted(np.cumsum(weights / total), rng.random(), side="right"))
    return poses[min(idx, len(poses) - 1)]


def load_poses(path) -> list:
    """Candidate poses from a JSON list of {rotation (row-major 9),
    translation (3)}."""
    with open(path, "r", encoding="ascii") as fh:
        raw = json.load(fh)
    poses = []
    for entry in raw:
        rot = np.asarray(entry["rotation"], dtype=np.float64).reshape(3, 3)
        poses.append(CameraPose(rotation=rot, translation=entry["translation"]))
    return poses
