"""Triangle meshes and the geometric measures used across the pipeline.

All meshes live in unit-cube coordinates after population normalization.
Watertightness (every edge shared by exactly two faces, consistent
winding) is the precondition for the signed measures; queries on an
immutable mesh are safe for concurrent readers.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class NotWatertightError(MeshError):
    """Signed measure requested on a mesh without a well-defined interior."""


class DegenerateMeshError(MeshError):
    """Mesh has no usable surface (zero area or zero extent)."""


class TriMesh:
    """Immutable-by-convention triangle surface: vertices (n,3), faces (m,3)."""

    def __init__(self, vertices, faces):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {self.faces.shape}")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("vertex coordinates must be finite")
        if len(self.faces) and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise MeshError("face indices out of range")
        self._index = None
        self._watertight = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise DegenerateMeshError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum()) if len(self.faces) else 0.0

    def is_watertight(self) -> bool:
        """Every edge shared by exactly 2 faces with opposite direction."""
        if self._watertight is None:
            self._watertight = self._check_watertight()
        return self._watertight

    def _check_watertight(self) -> bool:
        if self.is_empty:
            return False
        f = self.faces
        if np.any(f[:, 0] == f[:, 1]) or np.any(f[:, 1] == f[:, 2]) \
                or np.any(f[:, 2] == f[:, 0]):
            return False
        n = self.n_vertices
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        keys = directed[:, 0] * n + directed[:, 1]
        keys.sort()
        if np.any(keys[1:] == keys[:-1]):
            return False  # repeated directed edge: inconsistent winding
        reverse = directed[:, 1] * n + directed[:, 0]
        reverse.sort()
        return bool(np.array_equal(keys, reverse))

    def connected_component_count(self) -> int:
        if self.is_empty:
            return 0
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components
        f = self.faces
        n = self.n_vertices
        rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        count, labels = connected_components(adj, directed=False)
        used = np.zeros(n, dtype=bool)
        used[f.reshape(-1)] = True
        return int(len(np.unique(labels[used])))

    def distance_index(self):
        """Lazily built acceleration index; construction is single-threaded."""
        if self._index is None:
            from .sdf import MeshDistanceIndex
            self._index = MeshDistanceIndex(self.vertices, self.faces)
        return self._index

    def transformed(self, fn) -> "TriMesh":
        return TriMesh(fn(self.vertices), self.faces.copy())

    def content_hash(self) -> int:
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return int.from_bytes(h.digest()[:8], "little")

    def __repr__(self) -> str:
        return f"TriMesh({self.n_vertices} vertices, {self.n_faces} faces)"


def signed_distance(mesh: TriMesh, points, unsigned: bool = False) -> np.ndarray:
    """Exact Euclidean distance to the surface, negative inside.

    Non-watertight meshes have no defined sign; pass ``unsigned=True`` to
    get the distance magnitude for those.
    """
    from . import sdf

    scalar = np.asarray(points).ndim == 1
    if unsigned:
        out = sdf.unsigned_distance(mesh.distance_index(), points)
    else:
        if not mesh.is_watertight():
            raise NotWatertightError(
                "signed distance needs a watertight mesh; use unsigned=True")
        out = sdf.signed_distance(mesh.distance_index(), points)
    return float(out[0]) if scalar else out


def sample_surface(mesh: TriMesh, n: int, rng) -> np.ndarray:
    """Draw n points area-uniformly on the surface.

    ``rng`` is an integer seed or a ``numpy.random.Generator``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise DegenerateMeshError("mesh has zero surface area")
    cum = np.cumsum(areas)
    tri_idx = np.searchsorted(cum, rng.random(n) * total, side="right")
    tri_idx = np.minimum(tri_idx, len(areas) - 1)
    tri = mesh.vertices[mesh.faces[tri_idx]]
    # square-root trick for uniform barycentric coordinates
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    return (1.0 - r1) * tri[:, 0] + r1 * (1.0 - r2) * tri[:, 1] + r1 * r2 * tri[:, 2]


def mesh_volume(mesh: TriMesh) -> float:
    """Enclosed volume by signed-tetrahedra summation, reported positive."""
    if not mesh.is_watertight():
        raise NotWatertightError("volume needs a watertight, consistently wound mesh")
    tri = mesh.vertices[mesh.faces]
    signed = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0
    return abs(float(signed))


class PopulationTransform:
    """Shared per-axis scaling into the unit cube, invertible exactly."""

    def __init__(self, reference, scale):
        self.reference = np.asarray(reference, dtype=np.float64).reshape(3)
        self.scale = np.asarray(scale, dtype=np.float64).reshape(3)
        if not np.all(self.scale > 0):
            raise DegenerateMeshError("population has zero extent in some dimension")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (points - self.reference) / self.scale + 0.5

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (points - 0.5) * self.scale + self.reference

    def to_dict(self) -> dict:
        return {"reference": [float(x) for x in self.reference],
                "scale": [float(x) for x in self.scale]}

    @staticmethod
    def from_dict(d: dict) -> "PopulationTransform":
        return PopulationTransform(d["reference"], d["scale"])


def normalize_population(meshes, reference=None):
    """Map a population of meshes into [0,1]^3 with one shared per-axis scale.

    The scale per dimension is the largest extent over the population
    (widened when an off-centre mesh would otherwise stick out), so
    relative size variation is preserved. ``reference`` is the common
    centring point; defaults to the joint bounding-box centre.

    Returns the transformed meshes and the recorded transform.
    """
    meshes = list(meshes)
    if not meshes:
        raise ValueError("need at least one mesh")
    los = np.stack([m.bounds()[0] for m in meshes])
    his = np.stack([m.bounds()[1] for m in meshes])
    if reference is None:
        reference = (los.min(axis=0) + his.max(axis=0)) / 2.0
    reference = np.asarray(reference, dtype=np.float64).reshape(3)
    extents = (his - los).max(axis=0)
    reach = np.maximum((his - reference).max(axis=0), (reference - los).max(axis=0))
    scale = np.maximum(extents, 2.0 * reach)
    if np.any(scale <= 0):
        raise DegenerateMeshError("population has zero extent in some dimension")
    transform = PopulationTransform(reference, scale)
    return [m.transformed(transform.apply) for m in meshes], transform


_PLANE_TINY = 1e-300


def cross_section_area(mesh: TriMesh, axis: int = 0, offset: float = 0.5) -> float:
    """Area of the solid interior cut by the plane ``x[axis] = offset``.

    Works directly on the oriented intersection segments: for a watertight
    surface they close up, so the shoelace line integral sums to the total
    enclosed area without polygon assembly. Returns 0 when the plane
    misses the solid.
    """
    if not mesh.is_watertight():
        raise NotWatertightError("cross-section needs a watertight mesh")
    u, w = (axis + 1) % 3, (axis + 2) % 3
    tri = mesh.vertices[mesh.faces]
    s = tri[:, :, axis] - offset
    s = np.where(s == 0.0, _PLANE_TINY, s)
    neg = s < 0.0
    crossing = ~(neg.all(axis=1) | (~neg).all(axis=1))
    if not crossing.any():
        return 0.0
    tri = tri[crossing]
    s = s[crossing]

    edge_pairs = ((0, 1), (1, 2), (2, 0))
    cross_mask = np.stack([(s[:, i] < 0) != (s[:, j] < 0) for i, j in edge_pairs],
                          axis=1)
    pts = []
    for i, j in edge_pairs:
        denom = s[:, i] - s[:, j]
        t = s[:, i] / np.where(denom == 0.0, 1.0, denom)  # non-crossing lanes unused
        pts.append(tri[:, i] + t[:, None] * (tri[:, j] - tri[:, i]))
    pts = np.stack(pts, axis=1)  # (m, 3 edges, 3 coords)

    first = cross_mask.argmax(axis=1)
    rest = cross_mask.copy()
    rest[np.arange(len(rest)), first] = False
    second = rest.argmax(axis=1)
    rows = np.arange(len(tri))
    p1 = pts[rows, first]
    p2 = pts[rows, second]

    # orient each segment along (plane normal) x (triangle normal) so the
    # loops run counter-clockwise around the interior
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    e_a = np.zeros(3)
    e_a[axis] = 1.0
    d = np.cross(e_a, n)
    flip = ((p2 - p1) * d).sum(axis=1) < 0.0
    sign = np.where(flip, -1.0, 1.0)
    contrib = 0.5 * sign * (p1[:, u] * p2[:, w] - p2[:, u] * p1[:, w])
    return abs(float(contrib.sum()))


def mirror_iou(mesh: TriMesh, axis: int = 0, offset: float = 0.5,
               resolution: int = 128) -> float:
    """Overlap between the shape and its mirror image across a plane.

    Voxelizes interior occupancy, reflects across the plane, and returns
    the intersection-over-union; 1 means perfectly symmetric. Defined as
    0 when either side of the plane is empty.
    """
    if resolution < 32:
        raise ValueError("voxel resolution must be >= 32")
    if not mesh.is_watertight():
        raise NotWatertightError("mirror overlap needs a watertight mesh")
    from .voxel import voxelize_occupancy

    occ = voxelize_occupancy(mesh.vertices, mesh.faces, resolution)
    centers = (np.arange(resolution) + 0.5) / resolution
    side = centers < offset
    axis_slices = [slice(None)] * 3
    axis_slices[axis] = side
    left = occ[tuple(axis_slices)]
    axis_slices[axis] = ~side
    right = occ[tuple(axis_slices)]
    if not left.any() or not right.any():
        return 0.0

    # reflect voxel centres across the plane; off-grid images count as empty
    src = np.rint(2.0 * offset * resolution - np.arange(resolution) - 1).astype(np.int64)
    ok = (src >= 0) & (src < resolution)
    mirrored = np.zeros_like(occ)
    take = [slice(None)] * 3
    put = [slice(None)] * 3
    take[axis] = src[ok]
    put[axis] = ok
    mirrored[tuple(put)] = occ[tuple(take)]

    inter = np.logical_and(occ, mirrored).sum()
    union = np.logical_or(occ, mirrored).sum()
    return float(inter / union) if union else 0.0


def chamfer_distance(a: TriMesh, b: TriMesh, n_samples: int = 30000,
                     seed: int = 0) -> float:
    """Symmetric mean surface-to-surface distance via area-uniform sampling.

    Each mesh's sample stream is seeded from (seed, its own vertex and face
    counts): swapping the arguments reproduces the identical value, and a
    rigid motion applied to both meshes leaves the estimate unchanged up to
    rounding (the barycentric draws are pose-independent).
    """
    from . import sdf

    if a.is_empty or b.is_empty:
        raise DegenerateMeshError("chamfer distance needs two non-empty meshes")
    rng_a = np.random.default_rng(
        np.random.SeedSequence([seed, a.n_vertices, a.n_faces]))
    rng_b = np.random.default_rng(
        np.random.SeedSequence([seed, b.n_vertices, b.n_faces]))
    pa = sample_surface(a, n_samples, rng_a)
    pb = sample_surface(b, n_samples, rng_b)
    d_ab = sdf.unsigned_distance(b.distance_index(), pa).mean()
    d_ba = sdf.unsigned_distance(a.distance_index(), pb).mean()
    return float((d_ab + d_ba) / 2.0)


def save_obj(mesh: TriMesh, path: str | Path) -> None:
    """ASCII OBJ with v/f records only; floats keep full precision."""
    lines = []
    for x, y, z in mesh.vertices.tolist():
        lines.append(f"v {x!r} {y!r} {z!r}")
    for i, j, k in mesh.faces + 1:
        lines.append(f"f {i} {j} {k}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path: str | Path) -> TriMesh:
    vertices = []
    faces = []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            for k in range(1, len(idx) - 1):  # fan-triangulate n-gons
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices:
        raise MeshError(f"no vertex records in {path}")
    return TriMesh(np.array(vertices, dtype=np.float64),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def load_stl(path: str | Path) -> TriMesh:
    """Binary STL import; exactly coincident corners are welded."""
    raw = Path(path).read_bytes()
    if len(raw) < 84:
        raise MeshError("truncated STL file")
    (count,) = struct.unpack_from("<I", raw, 80)
    expected = 84 + count * 50
    if len(raw) < expected:
        raise MeshError(f"STL payload too short: {len(raw)} < {expected}")
    rec = np.frombuffer(raw, dtype=np.uint8, count=count * 50, offset=84)
    rec = rec.reshape(count, 50)
    tri = rec[:, 12:48].copy().view("<f4").reshape(count, 3, 3).astype(np.float64)
    flat = tri.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return TriMesh(uniq, inverse.reshape(-1, 3).astype(np.int64))


def mesh_payload_manifest(mesh: TriMesh) -> dict:
    """Small JSON-able summary used by dataset and cohort manifests."""
    return {
        "n_vertices": int(mesh.n_vertices),
        "n_faces": int(mesh.n_faces),
        "watertight": bool(mesh.is_watertight()) if not mesh.is_empty else False,
        "content_hash": f"{mesh.content_hash():016x}",
    }


def json_default(obj):
    """Coerce stray numpy scalars/arrays at serialization boundaries."""
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=False, default=json_default)
        + "\n")
