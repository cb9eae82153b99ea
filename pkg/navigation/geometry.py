import heapq
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError, cKDTree
from scipy.spatial.distance import cdist

from .exceptions import DegenerateInput

UNIT_TOLERANCE = 1e-9
COLLINEAR_TOLERANCE = 1e-9


def as_points(points, dim: int) -> np.ndarray:
    """Return ``points`` as a finite float array of shape (N, dim)"""
    array = np.asarray(points, dtype=float)
    if array.size == 0:
        return np.empty((0, dim))
    array = array.reshape(-1, dim)
    if not np.all(np.isfinite(array)):
        raise ValueError("point coordinates must be finite")
    return array


@dataclass(frozen=True, eq=False)
class Plane:
    """Plane in signed distance form ``normal · p + offset = 0``"""
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(normal) - 1.0) > UNIT_TOLERANCE:
            raise ValueError("plane normal must be a unit vector")
        object.__setattr__(self, 'normal', normal)
        object.__setattr__(self, 'offset', float(self.offset))

    def distance(self, points) -> np.ndarray:
        """Unsigned distance of each point to the plane"""
        return np.abs(as_points(points, 3) @ self.normal + self.offset)


@dataclass(frozen=True, eq=False)
class Line2:
    """2D line through ``point`` with unit ``direction``"""
    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=float).reshape(2)
        if abs(np.linalg.norm(direction) - 1.0) > UNIT_TOLERANCE:
            raise ValueError("line direction must be a unit vector")
        object.__setattr__(self, 'point', np.asarray(self.point, dtype=float).reshape(2))
        object.__setattr__(self, 'direction', direction)

    def distance(self, points) -> np.ndarray:
        offsets = as_points(points, 2) - self.point
        return np.abs(offsets[:, 0] * self.direction[1] - offsets[:, 1] * self.direction[0])


def _canonical_sign(vector: np.ndarray) -> np.ndarray:
    # largest-magnitude component positive, so repeated fits agree
    if vector[int(np.argmax(np.abs(vector)))] < 0:
        return -vector
    return vector


def fit_plane(points) -> Plane:
    """
    Least-squares plane through a point set

    Args:
        points: (N, 3) points, N >= 3 and not collinear

    Returns:
        Plane: the plane minimising the sum of squared orthogonal distances
    """
    pts = as_points(points, 3)
    if len(pts) < 3:
        raise DegenerateInput("a plane needs at least 3 points")

    centroid = pts.mean(axis=0)
    _, singular, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if singular[0] <= 0 or singular[1] <= COLLINEAR_TOLERANCE * singular[0]:
        raise DegenerateInput("points are collinear")

    normal = _canonical_sign(vt[-1] / np.linalg.norm(vt[-1]))
    return Plane(normal=normal, offset=-float(normal @ centroid))


def ransac_plane(points, inlier_threshold: float = 0.05, iterations: int = 200,
                 rng_seed: int = 0) -> Tuple[Plane, np.ndarray]:
    """
    Fit a plane with RANSAC followed by a least-squares refit

    Every iteration samples three points; triples whose cross product is
    shorter than 1e-9 are rejected and use up their iteration. The
    candidate with the most points within ``inlier_threshold`` wins (first
    found on ties), is refit on its inliers, and the inliers are recounted
    against the refit plane.

    Args:
        points: (N, 3) point cloud
        inlier_threshold (float): inlier distance in meters
        iterations (int): number of sampled triples
        rng_seed (int): seed for the sampler

    Returns:
        Tuple[Plane, np.ndarray]: refit plane and sorted inlier indices
    """
    pts = as_points(points, 3)
    if inlier_threshold <= 0:
        raise ValueError("inlier_threshold must be positive")
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if len(pts) < 3:
        raise DegenerateInput("RANSAC needs at least 3 points")

    rng = np.random.default_rng(rng_seed)
    samples = rng.integers(0, len(pts), size=(iterations, 3))
    a, b, c = pts[samples[:, 0]], pts[samples[:, 1]], pts[samples[:, 2]]
    normals = np.cross(b - a, c - a)
    norms = np.linalg.norm(normals, axis=1)
    valid = norms >= COLLINEAR_TOLERANCE
    if not valid.any():
        raise DegenerateInput(f"all {iterations} sampled triples were collinear")

    normals[valid] /= norms[valid, None]
    offsets = -np.einsum('ij,ij->i', normals, a)

    counts = np.full(iterations, -1, dtype=int)
    distances = np.abs(normals[valid] @ pts.T + offsets[valid, None])
    counts[valid] = np.count_nonzero(distances <= inlier_threshold, axis=1)
    best = int(np.argmax(counts))

    candidate = np.abs(pts @ normals[best] + offsets[best]) <= inlier_threshold
    plane = fit_plane(pts[candidate])
    inliers = np.flatnonzero(plane.distance(pts) <= inlier_threshold)
    return plane, inliers


def plane_basis(plane: Plane) -> Tuple[np.ndarray, np.ndarray]:
    """
    Right-handed in-plane basis (e1, e2) with e1 × e2 = normal

    e1 is world x projected onto the plane, or world y when x is parallel
    to the normal.
    """
    normal = plane.normal
    for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        e1 = axis - (axis @ normal) * normal
        length = np.linalg.norm(e1)
        if length > UNIT_TOLERANCE:
            e1 = e1 / length
            return e1, np.cross(normal, e1)
    raise DegenerateInput("no in-plane basis")  # unreachable for a unit normal


def project_to_plane(points, plane: Plane) -> np.ndarray:
    """Orthogonal projection of 3D points into 2D plane coordinates"""
    pts = as_points(points, 3)
    e1, e2 = plane_basis(plane)
    return np.column_stack((pts @ e1, pts @ e2))


def lift_from_plane(points2d, plane: Plane) -> np.ndarray:
    """Inverse of :func:`project_to_plane` for points lying on the plane"""
    uv = as_points(points2d, 2)
    e1, e2 = plane_basis(plane)
    return uv[:, :1] * e1 + uv[:, 1:2] * e2 - plane.offset * plane.normal


def _is_collinear(points: np.ndarray) -> bool:
    centered = points - points.mean(axis=0)
    singular = np.linalg.svd(centered, compute_uv=False)
    return singular[0] <= 0 or singular[1] <= COLLINEAR_TOLERANCE * singular[0]


def _signed_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _turn_angle(p_prev: np.ndarray, p_cur: np.ndarray, p_next: np.ndarray) -> float:
    d_in = p_cur - p_prev
    d_out = p_next - p_cur
    cross = d_in[0] * d_out[1] - d_in[1] * d_out[0]
    return math.atan2(cross, float(d_in @ d_out))


def _trace_loops(points: np.ndarray, boundary: List[Tuple[int, int]]) -> List[List[int]]:
    """Chain directed boundary edges into closed vertex loops"""
    outgoing: Dict[int, List[int]] = defaultdict(list)
    for i, j in boundary:
        outgoing[i].append(j)

    unused = set(boundary)
    loops = []
    for start in boundary:
        if start not in unused:
            continue
        loop = []
        edge = start
        while True:
            unused.discard(edge)
            loop.append(edge[0])
            i, j = edge
            candidates = [k for k in outgoing[j] if (j, k) in unused]
            if not candidates:
                break
            # at pinch vertices take the rightmost turn to stay on the outside
            k = min(candidates, key=lambda k: (_turn_angle(points[i], points[j], points[k]), k))
            edge = (j, k)
        loops.append(loop)
    return loops


def concave_hull(points, alpha: float) -> np.ndarray:
    """
    Alpha-shape boundary of a 2D point set

    Delaunay triangles whose circumradius is below ``alpha`` form the
    shape; the outer boundary of their union is returned counter-clockwise
    without repeating the first vertex. Holes are dropped. Point sets that
    fall apart into several components, or leave points outside every kept
    triangle, are rejected.

    Where two parts of the shape meet in a single vertex the ring passes
    through that vertex twice. Such a ring touches itself, so shapely calls
    the polygon invalid, yet it still encloses every input point.

    Args:
        points: (N, 2) points, N >= 3
        alpha (float): circumradius limit in meters

    Returns:
        np.ndarray: (M, 2) hull vertices in traversal order
    """
    pts = as_points(points, 2)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if len(pts) < 3:
        raise DegenerateInput("a hull needs at least 3 points")
    if _is_collinear(pts):
        raise DegenerateInput("points are collinear")

    try:
        triangulation = Delaunay(pts)
    except QhullError as exc:
        raise DegenerateInput(f"triangulation failed: {exc}") from exc

    simplices = triangulation.simplices
    pa, pb, pc = pts[simplices[:, 0]], pts[simplices[:, 1]], pts[simplices[:, 2]]
    a = np.linalg.norm(pa - pb, axis=1)
    b = np.linalg.norm(pb - pc, axis=1)
    c = np.linalg.norm(pc - pa, axis=1)
    cross = (pb[:, 0] - pa[:, 0]) * (pc[:, 1] - pa[:, 1]) - (pb[:, 1] - pa[:, 1]) * (pc[:, 0] - pa[:, 0])
    area = 0.5 * np.abs(cross)
    with np.errstate(divide='ignore', invalid='ignore'):
        circum_r = np.where(area > 0, a * b * c / (4.0 * area), np.inf)

    keep = circum_r < alpha
    if not keep.any():
        raise DegenerateInput(f"no triangle fits inside alpha={alpha}")

    triangles = simplices[keep].copy()
    clockwise = cross[keep] < 0
    triangles[clockwise] = triangles[clockwise][:, [0, 2, 1]]

    # a half-edge is on the boundary when its reverse belongs to no kept triangle
    half_edges = np.concatenate((triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]])).astype(np.int64)
    count = len(pts)
    outer_edges = half_edges[~np.isin(half_edges[:, 1] * count + half_edges[:, 0],
                                      half_edges[:, 0] * count + half_edges[:, 1])]
    outer_edges = outer_edges[np.lexsort((outer_edges[:, 1], outer_edges[:, 0]))]
    boundary = [(int(i), int(j)) for i, j in outer_edges]

    covered = set(triangles.ravel().tolist())
    if triangulation.coplanar.size:
        covered.update(triangulation.coplanar[:, 0].tolist())
    if len(covered) < len(pts):
        raise DegenerateInput(f"{len(pts) - len(covered)} points lie outside the alpha shape")

    loops = _trace_loops(pts, boundary)
    outer = [loop for loop in loops if _signed_area(pts[loop]) > 0]
    if len(outer) != 1:
        raise DegenerateInput(f"alpha shape has {len(outer)} components")
    return pts[outer[0]]


class KdTree2:
    """
    Balanced, immutable 2D kd-tree

    Queries return exactly the same indices as an exhaustive scan sorted by
    (squared distance, insertion index).
    """

    def __init__(self, points):
        pts = as_points(points, 2)
        if len(pts) == 0:
            raise ValueError("KdTree2 needs at least one point")
        self._points = pts.copy()
        self._points.setflags(write=False)
        self._coords = [(float(x), float(y)) for x, y in self._points]
        # node = [point index, split axis, left node, right node]
        self._nodes: List[List[int]] = []
        self._root = self._build(list(range(len(pts))), 0)

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return len(self._coords)

    def _build(self, indices: List[int], depth: int) -> int:
        if not indices:
            return -1
        axis = depth % 2
        ordered = sorted(indices, key=lambda i: (self._coords[i][axis], i))
        middle = len(ordered) // 2
        node = len(self._nodes)
        self._nodes.append([ordered[middle], axis, -1, -1])
        left = self._build(ordered[:middle], depth + 1)
        right = self._build(ordered[middle + 1:], depth + 1)
        self._nodes[node][2] = left
        self._nodes[node][3] = right
        return node

    def query(self, point, k: int = 1) -> List[int]:
        """
        Indices of the k nearest points, nearest first

        Args:
            point: query position (x, y)
            k (int): number of neighbours, clamped to the tree size

        Returns:
            List[int]: insertion indices sorted by distance, ties by index
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        k = min(k, len(self._coords))
        qx, qy = float(point[0]), float(point[1])
        heap: List[Tuple[float, int]] = []  # (-d2, -index): heap[0] is the worst kept

        def visit(node: int):
            if node == -1:
                return
            index, axis, left, right = self._nodes[node]
            px, py = self._coords[index]
            dx = px - qx
            dy = py - qy
            key = (-(dx * dx + dy * dy), -index)
            if len(heap) < k:
                heapq.heappush(heap, key)
            elif key > heap[0]:
                heapq.heapreplace(heap, key)

            diff = qx - px if axis == 0 else qy - py
            near, far = (left, right) if diff < 0 else (right, left)
            visit(near)
            if len(heap) < k or diff * diff <= -heap[0][0]:
                visit(far)

        visit(self._root)
        return [-key[1] for key in sorted(heap, reverse=True)]


def kd_nearest(tree: KdTree2, query, k: int) -> np.ndarray:
    """The ``min(k, len(tree))`` points nearest to ``query``, nearest first"""
    return tree.points[tree.query(query, k)]


def fit_line2(points) -> Line2:
    """
    Total-least-squares line: principal direction through the centroid

    The direction sign is canonical (largest-magnitude component positive).
    """
    pts = as_points(points, 2)
    if len(pts) < 2:
        raise DegenerateInput("a line needs at least 2 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    if not np.any(np.abs(centered) > 0):
        raise DegenerateInput("all points coincide")

    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    direction = _canonical_sign(vt[0] / np.linalg.norm(vt[0]))
    return Line2(point=centroid, direction=direction)


def split_components(points, link_distance: float) -> np.ndarray:
    """Single-linkage component label for each point"""
    pts = as_points(points, 2)
    if len(pts) == 0:
        return np.empty(0, dtype=int)
    pairs = cKDTree(pts).query_pairs(r=link_distance, output_type='ndarray')
    graph = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
        shape=(len(pts), len(pts)),
    )
    _, labels = connected_components(graph, directed=False)
    return labels


def nearest_distances(source, target) -> np.ndarray:
    """For every source point, the Euclidean distance to the nearest target point"""
    src = as_points(source, 2)
    tgt = as_points(target, 2)
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("point sets must be non-empty")
    return cdist(src, tgt).min(axis=1)


def resample_polyline(points, spacing: float) -> np.ndarray:
    """
    Points every ``spacing`` meters of arc length, endpoints included

    A polyline of length L yields floor(L / spacing) + 1 samples, plus the
    final vertex when L is not a multiple of the spacing.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pts = as_points(points, 2)
    if len(pts) <= 1:
        return pts.copy()

    segments = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate(([True], segments > 0))
    pts = pts[keep]
    if len(pts) == 1:
        return pts.copy()

    cumulative = np.concatenate(([0.0], np.cumsum(segments[segments > 0])))
    total = cumulative[-1]
    stations = np.arange(int(math.floor(total / spacing + 1e-9)) + 1) * spacing
    stations = stations[stations <= total + 1e-9]
    if total - stations[-1] > 1e-9:
        stations = np.append(stations, total)
    stations = np.minimum(stations, total)
    return np.column_stack((
        np.interp(stations, cumulative, pts[:, 0]),
        np.interp(stations, cumulative, pts[:, 1]),
    ))


def split_polyline(points, max_gap: float) -> List[np.ndarray]:
    """Break an ordered point sequence wherever consecutive points are farther apart than ``max_gap``"""
    pts = as_points(points, 2)
    if len(pts) == 0:
        return []
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cuts = np.flatnonzero(gaps > max_gap) + 1
    return [piece for piece in np.split(pts, cuts) if len(piece)]


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def wrap_angle(angle):
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def polyline_length(points: Sequence) -> float:
    pts = as_points(points, 2)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
