"""Scalar grids and marching-cubes isosurface extraction.

Extraction uses the classic 256-case tables with linear interpolation along
crossing edges. Vertices are welded exactly by indexing each one with its
global lattice edge, so the output mesh shares vertices across cells and a
closed level set yields a watertight mesh. Ambiguous cases follow the
table's fixed convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from .mesh import TriMesh


@dataclass
class ScalarGrid:
    """Node-centered scalar samples on a regular lattice.

    ``values[i, j, k]`` lives at ``origin + (i, j, k) * spacing``.
    """

    values: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.spacing = np.asarray(self.spacing, dtype=np.float64).reshape(3)
        if self.values.ndim != 3:
            raise ValueError("grid values must be 3-D")
        if not np.all(self.spacing > 0):
            raise ValueError("grid spacing must be positive")

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.values.shape

    @staticmethod
    def cell_centered_unit(resolution: int | tuple[int, int, int]) -> "ScalarGrid":
        """Empty grid whose nodes are the cell centers of [0,1]^3."""
        res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), (3,)).copy()
        if np.any(res < 2):
            raise ValueError("resolution must be at least 2 per axis")
        spacing = 1.0 / res
        return ScalarGrid(np.zeros(tuple(res)), spacing / 2.0, spacing)

    def node_points(self) -> np.ndarray:
        """All node positions, shape (nx*ny*nz, 3), index-major order."""
        nx, ny, nz = self.resolution
        ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                                 indexing="ij")
        idx = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3)
        return self.origin + idx * self.spacing


# edge -> (axis, base corner offset), derived once from the table layout
_EDGE_AXIS = np.zeros(12, dtype=np.int64)
_EDGE_BASE = np.zeros((12, 3), dtype=np.int64)
for _e, (_a, _b) in enumerate(EDGE_CORNERS):
    _oa, _ob = CORNER_OFFSETS[_a], CORNER_OFFSETS[_b]
    _EDGE_AXIS[_e] = int(np.nonzero(_oa != _ob)[0][0])
    _EDGE_BASE[_e] = np.minimum(_oa, _ob)


def marching_cubes(grid: ScalarGrid, level: float = 0.0) -> TriMesh:
    """Extract the ``level`` isosurface as a triangle mesh.

    Faces are wound so normals point toward increasing values (outward under
    the negative-inside convention). An empty level set yields an empty mesh.
    """
    v = grid.values
    if not np.all(np.isfinite(v)):
        raise ValueError("grid values must be finite")
    nx, ny, nz = v.shape
    inside = v < level

    if not inside.any() or inside.all():
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    ncx, ncy, ncz = nx - 1, ny - 1, nz - 1
    cube_index = np.zeros((ncx, ncy, ncz), dtype=np.int32)
    for bit in range(8):
        ox, oy, oz = CORNER_OFFSETS[bit]
        cube_index |= inside[ox:ox + ncx, oy:oy + ncy, oz:oz + ncz] << bit

    flat_index = cube_index.reshape(-1)
    active = np.flatnonzero(EDGE_TABLE[flat_index] != 0)
    if active.size == 0:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    cx, cy, cz = np.unravel_index(active, (ncx, ncy, ncz))

    # global lattice-edge id per (cell, local edge)
    n_nodes = nx * ny * nz
    bx = cx[:, None] + _EDGE_BASE[None, :, 0]
    by = cy[:, None] + _EDGE_BASE[None, :, 1]
    bz = cz[:, None] + _EDGE_BASE[None, :, 2]
    edge_gid = _EDGE_AXIS[None, :] * n_nodes + (bx * ny + by) * nz + bz

    tri_rows = TRI_TABLE[flat_index[active]]
    valid = tri_rows >= 0
    local = np.where(valid, tri_rows, 0)
    gids = np.take_along_axis(edge_gid, local.astype(np.int64), axis=1)
    face_gids = gids[valid].reshape(-1, 3)

    unique_gids, inverse = np.unique(face_gids.reshape(-1), return_inverse=True)
    faces = inverse.reshape(-1, 3).astype(np.int64)

    # interpolate one vertex per unique crossing edge
    axis = unique_gids // n_nodes
    rem = unique_gids % n_nodes
    ix = rem // (ny * nz)
    iy = (rem // nz) % ny
    iz = rem % nz
    jx = ix + (axis == 0)
    jy = iy + (axis == 1)
    jz = iz + (axis == 2)
    v1 = v[ix, iy, iz]
    v2 = v[jx, jy, jz]
    t = np.clip((level - v1) / (v2 - v1), 0.0, 1.0)
    verts = grid.origin + np.stack([ix, iy, iz], axis=1) * grid.spacing
    verts[np.arange(len(t)), axis] += t * grid.spacing[axis]

    # raw tables wind clockwise seen from outside here; flip once
    faces = faces[:, [0, 2, 1]]
    faces = _repair_cracks(faces)
    return TriMesh(verts, faces)


def _repair_cracks(faces: np.ndarray) -> np.ndarray:
    """Close the quad holes the fixed-convention tables leave on ambiguous
    cell faces.

    Adjacent cells can triangulate a shared face with alternating corner
    signs using opposite diagonals; the result is a combinatorial hole
    whose boundary vertices already coincide exactly (they are shared
    lattice-edge vertices). Boundary edges are walked into cycles and each
    cycle is fan-triangulated against its direction, which restores the
    every-directed-edge-paired invariant without moving any vertex.
    """
    if len(faces) == 0:
        return faces
    n = int(faces.max()) + 1
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    keys = directed[:, 0] * n + directed[:, 1]
    reverse = directed[:, 1] * n + directed[:, 0]
    boundary = directed[~np.isin(keys, reverse)]
    if len(boundary) == 0:
        return faces

    order = np.lexsort((boundary[:, 1], boundary[:, 0]))
    boundary = boundary[order]
    outgoing: dict[int, list[int]] = {}
    for a, b in boundary.tolist():
        outgoing.setdefault(a, []).append(b)

    patches = []

    def emit(cycle):
        if len(cycle) >= 3:
            v0 = cycle[0]
            for i in range(1, len(cycle) - 1):
                patches.append((v0, cycle[i + 1], cycle[i]))

    # peel edge-disjoint simple cycles; boundary vertices have balanced
    # in/out degree, so walks can only stall back at their start
    for a0, _ in boundary.tolist():
        if a0 not in outgoing:
            continue
        cycle = [a0]
        position = {a0: 0}
        cur = a0
        for _ in range(len(boundary)):
            nxts = outgoing.get(cur)
            if not nxts:
                break
            nxt = nxts.pop(0)
            if not nxts:
                del outgoing[cur]
            if nxt in position:
                # the tail from nxt onward plus the edge cur->nxt closes
                j = position[nxt]
                emit(cycle[j:])
                for v in cycle[j + 1:]:
                    del position[v]
                del cycle[j + 1:]
                cur = nxt
            else:
                position[nxt] = len(cycle)
                cycle.append(nxt)
                cur = nxt
    if patches:
        faces = np.concatenate([faces, np.array(patches, dtype=np.int64)])
    return faces


def export_grid(grid: ScalarGrid, path: str | Path) -> None:
    """Write values as flat little-endian float32 plus a JSON sidecar."""
    path = Path(path)
    path.write_bytes(grid.values.astype("<f4").tobytes())
    sidecar = {
        "resolution": [int(n) for n in grid.resolution],
        "origin": [float(x) for x in grid.origin],
        "spacing": [float(x) for x in grid.spacing],
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2) + "\n")


def import_grid(path: str | Path) -> ScalarGrid:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    res = tuple(sidecar["resolution"])
    values = np.frombuffer(path.read_bytes(), dtype="<f4").astype(np.float64)
    if values.size != int(np.prod(res)):
        raise ValueError(f"grid payload has {values.size} values, expected {np.prod(res)}")
    return ScalarGrid(values.reshape(res), sidecar["origin"], sidecar["spacing"])
