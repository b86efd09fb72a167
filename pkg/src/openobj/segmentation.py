"""Table-top scene decomposition: dominant-plane RANSAC, prism extraction
above the plane, Euclidean clustering and the boolean object-candidate
filter (size and table-edge constraints).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .pointcloud import PointCloud, PointCloudError

__all__ = [
    "Plane",
    "ObjectCandidate",
    "SegmentationParams",
    "ransac_plane",
    "extract_prism",
    "euclidean_cluster",
    "euclidean_cluster_indices",
    "detect_objects",
]


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class Plane:
    """Plane {p : normal . p + d = 0} with the indices of its inliers in
    the scene cloud it was fitted to."""

    normal: np.ndarray
    d: float
    inlier_indices: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise SegmentationError("plane normal must be unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(
            self, "inlier_indices", np.asarray(self.inlier_indices, dtype=np.int64)
        )

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal + self.d


@dataclass
class ObjectCandidate:
    """A segmented cluster plus the boolean flags the detection expression
    is evaluated on. Tracking and body-filter flags default to True; a live
    tracker would set them."""

    cloud: PointCloud
    track_id: int
    flags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SegmentationParams:
    """Tunables for the detection pipeline; plane tau/iterations follow the
    reference setup, the rest are configuration."""

    plane_tau: float = 0.02
    plane_iterations: int = 200
    prism_min: float = 0.005
    prism_max: float = 0.5
    link_dist: float = 0.03
    min_pts: int = 30
    max_pts: int = 50000
    min_size: float = 0.0
    max_size: float = 0.6
    edge_margin: float = 0.05
    seed: int = 0


def ransac_plane(
    scene: PointCloud, tau: float = 0.02, iterations: int = 200, seed: int = 0
) -> Plane:
    """Best plane through 3 sampled points, scored by inliers within tau.

    Deterministic for a fixed seed; the normal is canonicalized so its
    largest-magnitude component is positive (tables in z-up worlds get an
    upward normal).
    """
    pts = scene.points
    m = len(pts)
    if m < 3:
        raise SegmentationError("need at least 3 points for a plane")
    if tau <= 0:
        raise SegmentationError("tau must be positive")
    rng = np.random.default_rng(seed)
    best_count = -1
    best = None
    for _ in range(iterations):
        i, j, k = rng.choice(m, size=3, replace=False)
        normal = np.cross(pts[j] - pts[i], pts[k] - pts[i])
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue  # collinear sample
        normal = normal / norm
        d = -normal @ pts[i]
        count = int(np.sum(np.abs(pts @ normal + d) < tau))
        if count > best_count:
            best_count = count
            best = (normal, d)
    if best is None:
        raise SegmentationError("no plane found: all samples collinear")
    normal, d = best
    axis = int(np.argmax(np.abs(normal)))
    if normal[axis] < 0:
        normal, d = -normal, -d
    inliers = np.flatnonzero(np.abs(pts @ normal + d) < tau)
    return Plane(normal=normal, d=d, inlier_indices=inliers)


def _plane_basis(normal: np.ndarray) -> np.ndarray:
    """Two orthonormal in-plane directions, rows of a (2, 3) matrix."""
    seed_axis = np.zeros(3)
    seed_axis[int(np.argmin(np.abs(normal)))] = 1.0
    u = np.cross(seed_axis, normal)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    return np.vstack([u, v])


def _hull_interior(hull_pts2d: np.ndarray, query2d: np.ndarray, slack: float = 1e-9):
    """Membership of query points in the convex hull of hull_pts2d."""
    try:
        hull = ConvexHull(hull_pts2d)
    except QhullError as exc:
        raise SegmentationError(f"degenerate plane inliers: {exc}") from exc
    # hull.equations rows are (a, b, c) with a x + b y + c <= 0 inside
    values = query2d @ hull.equations[:, :2].T + hull.equations[:, 2]
    return np.all(values <= slack, axis=1), hull

def _hull_boundary_distance(hull: ConvexHull, query2d: np.ndarray) -> np.ndarray:
    """Distance from each query point to the hull polygon boundary."""
    vertices = hull.points[hull.vertices]
    dists = np.full(len(query2d), np.inf)
    n = len(vertices)
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n]
        ab = b - a
        t = np.clip(((query2d - a) @ ab) / (ab @ ab), 0.0, 1.0)
        proj = a + t[:, None] * ab
        dists = np.minimum(dists, np.linalg.norm(query2d - proj, axis=1))
    return dists


def extract_prism(
    scene: PointCloud, plane: Plane, min_h: float, max_h: float
) -> PointCloud:
    """Points whose height above the plane lies in (min_h, max_h) and whose
    projection falls inside the convex hull of the plane inliers."""
    if not min_h < max_h:
        raise SegmentationError("min_h must be below max_h")
    if len(plane.inlier_indices) < 3:
        raise SegmentationError("not enough plane inliers to build a hull")
    basis = _plane_basis(plane.normal)
    hull2d = scene.points[plane.inlier_indices] @ basis.T
    heights = plane.signed_distance(scene.points)
    in_band = (heights > min_h) & (heights < max_h)
    query2d = scene.points @ basis.T
    inside, _ = _hull_interior(hull2d, query2d)
    return scene.select(in_band & inside)


def euclidean_cluster_indices(
    cloud: PointCloud, link_dist: float, min_pts: int = 1, max_pts: int | None = None
) -> list[np.ndarray]:
    """Connected components of the link graph, as index arrays.

    Points closer than link_dist (strict) are linked; components with size
    outside [min_pts, max_pts] are discarded. Clusters are ordered by their
    lowest contained point index, so the result does not depend on
    traversal order.
    """
    if link_dist <= 0:
        raise SegmentationError("link_dist must be positive")
    m = len(cloud)
    if m == 0:
        return []
    tree = cKDTree(cloud.points)
    pairs = tree.query_pairs(r=link_dist, output_type="ndarray")
    if len(pairs):
        gap = np.linalg.norm(cloud.points[pairs[:, 0]] - cloud.points[pairs[:, 1]], axis=1)
        pairs = pairs[gap < link_dist]  # strict inequality
    parent = np.arange(m)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(m)])
    clusters = []
    for root in np.unique(roots):
        members = np.flatnonzero(roots == root)
        size = len(members)
        if size < min_pts or (max_pts is not None and size > max_pts):
            continue
        clusters.append(members)
    clusters.sort(key=lambda idx: idx[0])
    return clusters


def euclidean_cluster(
    cloud: PointCloud, link_dist: float, min_pts: int = 1, max_pts: int | None = None
) -> list[PointCloud]:
    """Size-filtered connected components as point clouds."""
    return [cloud.select(idx) for idx in euclidean_cluster_indices(cloud, link_dist, min_pts, max_pts)]


def _cluster_extents(cluster: PointCloud) -> np.ndarray:
    return cluster.points.max(axis=0) - cluster.points.min(axis=0)


def detect_objects(
    scene: PointCloud, params: SegmentationParams = SegmentationParams()
) -> list[ObjectCandidate]:
    """Full detection pipeline: plane -> prism -> clusters -> flags.

    Clusters exceeding the point-count cap (touching piles) get one
    refinement pass with half the link distance; the survivors are flagged
    and only candidates with size_ok and not near_edge are returned.
    """
    plane = ransac_plane(scene, params.plane_tau, params.plane_iterations, params.seed)
    prism = extract_prism(scene, plane, params.prism_min, params.prism_max)
    clusters = euclidean_cluster(prism, params.link_dist, params.min_pts, max_pts=None)

    refined = []
    for cluster in clusters:
        if len(cluster) > params.max_pts:
            refined.extend(
                euclidean_cluster(cluster, params.link_dist / 2, params.min_pts, params.max_pts)
            )
        else:
            refined.append(cluster)

    basis = _plane_basis(plane.normal)
    hull2d = scene.points[plane.inlier_indices] @ basis.T
    try:
        hull = ConvexHull(hull2d)
    except QhullError as exc:
        raise SegmentationError(f"degenerate plane inliers: {exc}") from exc

    candidates = []
    for track_id, cluster in enumerate(refined):
        extents = _cluster_extents(cluster)
        size_ok = bool(np.max(extents) <= params.max_size and np.max(extents) >= params.min_size)
        center2d = (cluster.points.mean(axis=0) @ basis.T)[None, :]
        inside = bool(
            np.all(center2d @ hull.equations[:, :2].T + hull.equations[:, 2] <= 1e-9)
        )
        boundary_dist = float(_hull_boundary_distance(hull, center2d)[0])
        near_edge = (not inside) or boundary_dist < params.edge_margin
        flags = {
            "on_table": True,
            "tracked": True,
            "size_ok": size_ok,
            "near_edge": near_edge,
            "is_key_view": True,
        }
        candidates.append(ObjectCandidate(cloud=cluster, track_id=track_id, flags=flags))
    return [c for c in candidates if c.flags["size_ok"] and not c.flags["near_edge"]]
