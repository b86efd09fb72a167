"""Object-view feature extraction: the global orthographic object
descriptor (three binned projections in a disambiguated PCA frame, ordered
by entropy then variance) and spin-image local features over
voxel-selected keypoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cmp_to_key

import numpy as np
from scipy.spatial import cKDTree

from .pointcloud import (
    PointCloud,
    PointCloudError,
    ReferenceFrame,
    aabb_in_frame,
    compute_reference_frame,
)

__all__ = [
    "GoodDescriptor",
    "SpinImage",
    "FeatureSet",
    "project_distribution",
    "projection_entropy",
    "projection_variance",
    "compute_good",
    "extract_keypoints",
    "estimate_normals",
    "compute_spin_image",
    "compute_feature_set",
]

PROJECTION_PLANES = ("XoZ", "XoY", "YoZ")
# (alpha, beta) coordinate picks per projection plane
_PLANE_AXES = {"XoZ": (0, 2), "XoY": (0, 1), "YoZ": (1, 2)}

# Upper-bound epsilon (meters) in the bin index formulas: strictly smaller
# than any meaningful object dimension.
BIN_EPSILON = 1e-6

DEFAULT_GOOD_BINS = 15
DEFAULT_KEYPOINT_VOXEL = 0.01
DEFAULT_IMAGE_WIDTH = 4
DEFAULT_SUPPORT_LENGTH = 0.05
DEFAULT_SUPPORT_ANGLE = 90.0


class DescriptorError(ValueError):
    pass


@dataclass(frozen=True)
class GoodDescriptor:
    """Concatenation of three flattened n x n projection distributions.

    ``order`` records which projection landed in which block; each block is
    individually normalized to unit mass.
    """

    bins: np.ndarray
    n: int
    frame: ReferenceFrame
    order: tuple

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.float64)
        if bins.shape != (3 * self.n * self.n,):
            raise DescriptorError(f"expected {3 * self.n**2} bins, got {bins.shape}")
        if np.any(bins < 0):
            raise DescriptorError("descriptor bins must be non-negative")
        if np.any(np.abs(bins.reshape(3, -1).sum(axis=1) - 1.0) > 1e-9):
            raise DescriptorError("each projection block must sum to 1")
        object.__setattr__(self, "bins", bins)

    def __len__(self) -> int:
        return len(self.bins)

    def to_json_dict(self) -> dict:
        return {
            "type": "good",
            "params": {"n": self.n, "order": list(self.order)},
            "values": self.bins.tolist(),
        }


@dataclass(frozen=True)
class SpinImage:
    """2D histogram of (radial, elevation) neighbor offsets about a
    keypoint normal; raw counts, (IW+1) x (2 IW + 1)."""

    histogram: np.ndarray
    keypoint: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "histogram", np.asarray(self.histogram, dtype=np.float64))
        object.__setattr__(self, "keypoint", np.asarray(self.keypoint, dtype=np.float64))
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=np.float64))

    def flatten(self) -> np.ndarray:
        return self.histogram.ravel()


@dataclass(frozen=True)
class FeatureSet:
    """The spin images of one object view (one per keypoint)."""

    spin_images: tuple

    def __len__(self) -> int:
        return len(self.spin_images)

    def as_matrix(self) -> np.ndarray:
        return np.stack([s.flatten() for s in self.spin_images])


# ---------------------------------------------------------------------------
# Global descriptor
# ---------------------------------------------------------------------------

def project_distribution(
    cloud_in_frame: PointCloud, plane: str, l: float, n: int
) -> np.ndarray:
    """n x n distribution matrix of one orthographic projection.

    Points must already be expressed in the object frame and fit inside
    the centered square of side ``l``; the bin index for coordinate a is
    floor(n (a + l/2) / (l + eps)), which maps the upper bound onto the
    last bin instead of out of range. The matrix is normalized to total
    mass 1.
    """
    if plane not in _PLANE_AXES:
        raise DescriptorError(f"unknown projection plane {plane!r}")
    if n < 2:
        raise DescriptorError("need at least 2 bins per side")
    if l <= 0:
        raise DescriptorError("enclosing square side must be positive")
    if len(cloud_in_frame) == 0:
        raise DescriptorError("empty cloud")
    ia, ib = _PLANE_AXES[plane]
    alpha = cloud_in_frame.points[:, ia]
    beta = cloud_in_frame.points[:, ib]
    if np.any(np.abs(alpha) > l / 2) or np.any(np.abs(beta) > l / 2):
        raise DescriptorError("l not enclosing: projected point outside the square")
    rows = np.floor(n * (alpha + l / 2) / (l + BIN_EPSILON)).astype(np.int64)
    cols = np.floor(n * (beta + l / 2) / (l + BIN_EPSILON)).astype(np.int64)
    matrix = np.zeros((n, n))
    np.add.at(matrix, (rows, cols), 1.0)
    return matrix / matrix.sum()


def projection_entropy(m: np.ndarray) -> float:
    """Shannon entropy (bits) of a flattened distribution, 0 log 0 = 0."""
    m = np.asarray(m, dtype=np.float64).ravel()
    if np.any(m < 0):
        raise DescriptorError("distribution entries must be non-negative")
    nz = m[m > 0]
    return float(-np.sum(nz * np.log2(nz)))


def projection_variance(m: np.ndarray) -> float:
    """Variance of the bin-index random variable under the distribution.

    Indices are 1-based over the flattened vector: mu = sum i m_i,
    var = sum (i - mu)^2 m_i.
    """
    m = np.asarray(m, dtype=np.float64).ravel()
    if np.any(m < 0):
        raise DescriptorError("distribution entries must be non-negative")
    idx = np.arange(1, len(m) + 1, dtype=np.float64)
    mu = float(np.sum(idx * m))
    return float(np.sum((idx - mu) ** 2 * m))


def compute_good(
    cloud: PointCloud, n: int = DEFAULT_GOOD_BINS, sign_threshold: float = 0.015
) -> GoodDescriptor:
    """Full global descriptor pipeline for one object view.

    The object frame comes from the disambiguated PCA; the three
    projections share one centered square whose side is the largest
    bounding-box edge, grown when off-center mass (e.g. cone-like shapes)
    would fall outside it. The highest-entropy projection fills the first
    block; the remaining two follow in increasing variance. Ties closer
    than 1e-9 fall back to the fixed plane precedence XoZ < XoY < YoZ.
    """
    frame = compute_reference_frame(cloud, t=sign_threshold)
    local = PointCloud(frame.to_local(cloud.points))
    box = aabb_in_frame(cloud, frame)
    l = float(max(np.max(box.extents), 2.0 * np.max(np.abs(local.points))))

    matrices = {p: project_distribution(local, p, l, n) for p in PROJECTION_PLANES}
    entropy = {p: projection_entropy(matrices[p]) for p in PROJECTION_PLANES}
    variance = {p: projection_variance(matrices[p]) for p in PROJECTION_PLANES}

    precedence = {p: i for i, p in enumerate(PROJECTION_PLANES)}

    def ordered(values, descending):
        def compare(a, b):
            if abs(values[a] - values[b]) < 1e-9:
                return precedence[a] - precedence[b]
            if values[a] < values[b]:
                return 1 if descending else -1
            return -1 if descending else 1

        return sorted(PROJECTION_PLANES, key=cmp_to_key(compare))

    first = ordered(entropy, descending=True)[0]
    rest = [p for p in ordered(variance, descending=False) if p != first]
    order = (first, rest[0], rest[1])
    bins = np.concatenate([matrices[p].ravel() for p in order])
    return GoodDescriptor(bins=bins, n=n, frame=frame, order=order)


# ---------------------------------------------------------------------------
# Local features
# ---------------------------------------------------------------------------

def _keypoint_indices(points: np.ndarray, voxel: float) -> np.ndarray:
    """Index of the point nearest each occupied voxel's center."""
    origin = points.min(axis=0)
    idx = np.floor((points - origin) / voxel).astype(np.int64)
    cells, inverse = np.unique(idx, axis=0, return_inverse=True)
    centers = origin + (cells + 0.5) * voxel
    dist = np.linalg.norm(points - centers[inverse], axis=1)
    # first point per voxel after ranking by distance (ties: lowest index)
    order = np.lexsort((np.arange(len(points)), dist, inverse))
    first = np.ones(len(order), dtype=bool)
    first[1:] = inverse[order[1:]] != inverse[order[:-1]]
    return order[first]


def extract_keypoints(cloud: PointCloud, voxel: float = DEFAULT_KEYPOINT_VOXEL) -> np.ndarray:
    """One keypoint per occupied voxel: the original point nearest the
    voxel center. Returns a (k, 3) array that is a subset of the cloud."""
    if voxel <= 0:
        raise DescriptorError("voxel size must be positive")
    if len(cloud) == 0:
        raise DescriptorError("empty cloud")
    return cloud.points[_keypoint_indices(cloud.points, voxel)]


def estimate_normals(
    cloud: PointCloud, k: int = 10, viewpoint=(0.0, 0.0, 0.0)
) -> np.ndarray:
    """Per-point surface normals by PCA over the k nearest neighbors,
    oriented toward the viewpoint."""
    pts = cloud.points
    m = len(pts)
    if m == 0:
        raise DescriptorError("empty cloud")
    k = min(k, m)
    tree = cKDTree(pts)
    _, nbrs = tree.query(pts, k=k)
    if k == 1:
        nbrs = nbrs.reshape(-1, 1)
    patches = pts[nbrs]  # (m, k, 3)
    centered = patches - patches.mean(axis=1, keepdims=True)
    cov = np.einsum("mki,mkj->mij", centered, centered)
    _, vecs = np.linalg.eigh(cov)  # batched; ascending eigenvalues
    normals = vecs[:, :, 0]
    flip = np.einsum("mi,mi->m", normals, np.asarray(viewpoint, dtype=np.float64) - pts) < 0
    normals[flip] *= -1.0
    return normals


def compute_spin_image(
    cloud: PointCloud,
    keypoint,
    normal,
    image_width: int = DEFAULT_IMAGE_WIDTH,
    support_length: float = DEFAULT_SUPPORT_LENGTH,
    support_angle: float = DEFAULT_SUPPORT_ANGLE,
    point_normals: np.ndarray | None = None,
) -> SpinImage:
    """Raw-count spin image around a keypoint.

    Neighbors inside the support cylinder (radius SL, height 2 SL around
    the tangent plane) contribute the pair alpha = radial distance to the
    normal axis, beta = signed distance to the tangent plane, binned into
    an (IW+1) x (2 IW + 1) histogram. When per-point normals are given,
    neighbors whose normal deviates from the keypoint normal by more than
    the support angle are skipped; without them the angle test is off.
    """
    keypoint = np.asarray(keypoint, dtype=np.float64).reshape(3)
    normal = np.asarray(normal, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
        raise DescriptorError("keypoint normal must be unit length")
    if support_length <= 0:
        raise DescriptorError("support length must be positive")
    iw = int(image_width)
    sl = float(support_length)

    delta = cloud.points - keypoint
    beta = delta @ normal
    alpha_sq = np.maximum(np.einsum("ij,ij->i", delta, delta) - beta**2, 0.0)
    alpha = np.sqrt(alpha_sq)
    keep = (alpha <= sl) & (np.abs(beta) <= sl)
    if point_normals is not None:
        point_normals = np.asarray(point_normals, dtype=np.float64)
        cos_limit = np.cos(np.radians(support_angle))
        keep &= point_normals @ normal >= cos_limit - 1e-12
    rows = np.minimum(np.floor(alpha[keep] * iw / sl).astype(np.int64), iw)
    cols = np.clip(np.floor((beta[keep] + sl) * iw / sl).astype(np.int64), 0, 2 * iw)
    histogram = np.zeros((iw + 1, 2 * iw + 1))
    np.add.at(histogram, (rows, cols), 1.0)
    return SpinImage(histogram=histogram, keypoint=keypoint, normal=normal)


def compute_feature_set(
    cloud: PointCloud,
    voxel: float = DEFAULT_KEYPOINT_VOXEL,
    image_width: int = DEFAULT_IMAGE_WIDTH,
    support_length: float = DEFAULT_SUPPORT_LENGTH,
    support_angle: float = DEFAULT_SUPPORT_ANGLE,
    viewpoint=(0.0, 0.0, 0.0),
) -> FeatureSet:
    """Spin images over voxel-selected keypoints of an object view."""
    if voxel <= 0:
        raise DescriptorError("voxel size must be positive")
    if len(cloud) == 0:
        raise DescriptorError("empty cloud")
    key_idx = _keypoint_indices(cloud.points, voxel)
    normals = estimate_normals(cloud, k=10, viewpoint=viewpoint)
    images = tuple(
        compute_spin_image(
            cloud,
            cloud.points[i],
            normals[i],
            image_width,
            support_length,
            support_angle,
            point_normals=normals,
        )
        for i in key_idx
    )
    return FeatureSet(spin_images=images)
