"""Exact point-to-mesh distance queries on raw arrays.

Distances are exact point-to-triangle minima (Ericson's closest-point
routine). Sign comes from the generalized winding number, which stays
robust on near-degenerate triangles; a pseudo-normal test is the fallback
when the winding value is ambiguous. Nearest-triangle search is pruned
with a centroid k-d tree and verified against a conservative radius bound,
so the accelerated path returns the same minima as exhaustive search.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange
from scipy.spatial import cKDTree

_TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _closest_point_tri(ax, ay, az, bx, by, bz, cx, cy, cz, px, py, pz):
    """Squared distance and closest point from p to triangle abc."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = ax, ay, az
    else:
        bpx, bpy, bpz = px - bx, py - by, pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = bx, by, bz
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                qx, qy, qz = ax + v * abx, ay + v * aby, az + v * abz
            else:
                cpx, cpy, cpz = px - cx, py - cy, pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    qx, qy, qz = cx, cy, cz
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        qx, qy, qz = ax + w * acx, ay + w * acy, az + w * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            qx = bx + w * (cx - bx)
                            qy = by + w * (cy - by)
                            qz = bz + w * (cz - bz)
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            qx = ax + abx * v + acx * w
                            qy = ay + aby * v + acy * w
                            qz = az + abz * v + acz * w
    dx, dy, dz = px - qx, py - qy, pz - qz
    return dx * dx + dy * dy + dz * dz, qx, qy, qz


@njit(cache=True, parallel=True)
def _distance_brute(tri, points, d2_out, closest_out, tri_out):
    for p in prange(points.shape[0]):
        px, py, pz = points[p, 0], points[p, 1], points[p, 2]
        best = np.inf
        bq_x = bq_y = bq_z = 0.0
        bt = -1
        for t in range(tri.shape[0]):
            d2, qx, qy, qz = _closest_point_tri(
                tri[t, 0, 0], tri[t, 0, 1], tri[t, 0, 2],
                tri[t, 1, 0], tri[t, 1, 1], tri[t, 1, 2],
                tri[t, 2, 0], tri[t, 2, 1], tri[t, 2, 2],
                px, py, pz)
            if d2 < best:
                best = d2
                bq_x, bq_y, bq_z = qx, qy, qz
                bt = t
        d2_out[p] = best
        closest_out[p, 0] = bq_x
        closest_out[p, 1] = bq_y
        closest_out[p, 2] = bq_z
        tri_out[p] = bt


@njit(cache=True, parallel=True)
def _distance_candidates(tri, points, cand, cand_start, cand_count,
                         d2_out, closest_out, tri_out):
    """Exact minimum over a per-point candidate triangle list (CSR layout)."""
    for p in prange(points.shape[0]):
        px, py, pz = points[p, 0], points[p, 1], points[p, 2]
        best = np.inf
        bq_x = bq_y = bq_z = 0.0
        bt = -1
        start = cand_start[p]
        for c in range(start, start + cand_count[p]):
            t = cand[c]
            d2, qx, qy, qz = _closest_point_tri(
                tri[t, 0, 0], tri[t, 0, 1], tri[t, 0, 2],
                tri[t, 1, 0], tri[t, 1, 1], tri[t, 1, 2],
                tri[t, 2, 0], tri[t, 2, 1], tri[t, 2, 2],
                px, py, pz)
            if d2 < best:
                best = d2
                bq_x, bq_y, bq_z = qx, qy, qz
                bt = t
        d2_out[p] = best
        closest_out[p, 0] = bq_x
        closest_out[p, 1] = bq_y
        closest_out[p, 2] = bq_z
        tri_out[p] = bt


@njit(cache=True, parallel=True)
def _winding_number(tri, points, out):
    for p in prange(points.shape[0]):
        px, py, pz = points[p, 0], points[p, 1], points[p, 2]
        total = 0.0
        for t in range(tri.shape[0]):
            axx = tri[t, 0, 0] - px
            axy = tri[t, 0, 1] - py
            axz = tri[t, 0, 2] - pz
            bxx = tri[t, 1, 0] - px
            bxy = tri[t, 1, 1] - py
            bxz = tri[t, 1, 2] - pz
            cxx = tri[t, 2, 0] - px
            cxy = tri[t, 2, 1] - py
            cxz = tri[t, 2, 2] - pz
            la = math.sqrt(axx * axx + axy * axy + axz * axz)
            lb = math.sqrt(bxx * bxx + bxy * bxy + bxz * bxz)
            lc = math.sqrt(cxx * cxx + cxy * cxy + cxz * cxz)
            num = (axx * (bxy * cxz - bxz * cxy)
                   - axy * (bxx * cxz - bxz * cxx)
                   + axz * (bxx * cxy - bxy * cxx))
            den = (la * lb * lc
                   + (axx * bxx + axy * bxy + axz * bxz) * lc
                   + (bxx * cxx + bxy * cxy + bxz * cxz) * la
                   + (cxx * axx + cxy * axy + cxz * axz) * lb)
            total += math.atan2(num, den)
        out[p] = total / _TWO_PI


class MeshDistanceIndex:
    """Prebuilt acceleration data for one immutable triangle mesh.

    Safe for concurrent read-only queries once constructed. Zero-area
    triangles are dropped from the query set; their edges belong to
    neighbouring triangles so distances are unchanged.
    """

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if len(faces) == 0:
            raise ValueError("cannot build a distance index for an empty mesh")
        tri = vertices[faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        keep = np.linalg.norm(cross, axis=1) > 1e-300
        self.all_tri = np.ascontiguousarray(tri)
        self.tri = np.ascontiguousarray(tri[keep])
        if len(self.tri) == 0:
            raise ValueError("mesh has no triangles with positive area")
        self.centroids = self.tri.mean(axis=1)
        self.tri_radius = np.linalg.norm(
            self.tri - self.centroids[:, None, :], axis=2).max(axis=1)
        self.r_max = float(self.tri_radius.max())
        self.kdtree = cKDTree(self.centroids)
        self._vertex_normals = None
        self._vertices = vertices
        self._faces = faces

    def vertex_normals(self) -> np.ndarray:
        """Angle-weighted vertex normals (unit length where defined)."""
        if self._vertex_normals is None:
            v, f = self._vertices, self._faces
            normals = np.zeros_like(v)
            fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
            norm = np.linalg.norm(fn, axis=1)
            ok = norm > 1e-300
            fn[ok] /= norm[ok][:, None]
            for corner in range(3):
                a = v[f[:, corner]]
                b = v[f[:, (corner + 1) % 3]] - a
                c = v[f[:, (corner + 2) % 3]] - a
                nb = np.linalg.norm(b, axis=1)
                nc = np.linalg.norm(c, axis=1)
                mask = ok & (nb > 1e-300) & (nc > 1e-300)
                cosang = np.clip(
                    (b * c).sum(axis=1) / np.maximum(nb * nc, 1e-300), -1.0, 1.0)
                ang = np.where(mask, np.arccos(cosang), 0.0)
                np.add.at(normals, f[:, corner], fn * ang[:, None])
            norm = np.linalg.norm(normals, axis=1)
            ok = norm > 1e-300
            normals[ok] /= norm[ok][:, None]
            self._vertex_normals = normals
        return self._vertex_normals


def _as_points(points) -> np.ndarray:
    p = np.ascontiguousarray(points, dtype=np.float64)
    squeeze = p.ndim == 1
    if squeeze:
        p = p.reshape(1, 3)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"points must be (n, 3), got {p.shape}")
    return p


def unsigned_distance(index: MeshDistanceIndex, points, return_closest: bool = False,
                      brute: bool = False):
    """Exact distance from each point to the mesh surface."""
    p = _as_points(points)
    n = len(p)
    d2 = np.empty(n)
    closest = np.empty((n, 3))
    tri_id = np.empty(n, dtype=np.int64)
    m = len(index.tri)
    if brute or m <= 64:
        _distance_brute(index.tri, p, d2, closest, tri_id)
    else:
        k = min(8, m)
        _, knn = index.kdtree.query(p, k=k)
        knn = np.ascontiguousarray(knn.reshape(n, k), dtype=np.int64)
        start0 = np.arange(n, dtype=np.int64) * k
        count0 = np.full(n, k, dtype=np.int64)
        _distance_candidates(index.tri, p, knn.reshape(-1), start0, count0,
                             d2, closest, tri_id)
        # the k-NN minimum is an upper bound; re-check every triangle whose
        # centroid ball could still beat it
        radius = np.sqrt(d2) + index.r_max * (1.0 + 1e-12) + 1e-15
        lists = index.kdtree.query_ball_point(p, radius)
        counts = np.fromiter((len(l) for l in lists), count=n, dtype=np.int64)
        starts = np.zeros(n, dtype=np.int64)
        np.cumsum(counts[:-1], out=starts[1:])
        flat = np.empty(int(counts.sum()), dtype=np.int64)
        for i, l in enumerate(lists):
            flat[starts[i]:starts[i] + counts[i]] = l
        _distance_candidates(index.tri, p, flat, starts, counts,
                             d2, closest, tri_id)
    d = np.sqrt(d2)
    if return_closest:
        return d, closest, tri_id
    return d


def winding_number(index: MeshDistanceIndex, points) -> np.ndarray:
    p = _as_points(points)
    out = np.empty(len(p))
    _winding_number(index.tri, p, out)
    return out


def signed_distance(index: MeshDistanceIndex, points,
                    ambiguous_band: float = 0.01) -> np.ndarray:
    """Negative inside, positive outside, zero on the surface.

    Points whose absolute winding number falls within ``ambiguous_band`` of
    0.5 are resolved by the angle-weighted pseudo-normal at the closest
    surface point instead.
    """
    p = _as_points(points)
    d, closest, tri_id = unsigned_distance(index, p, return_closest=True)
    w = winding_number(index, p)
    inside = np.abs(w) > 0.5
    ambiguous = (np.abs(np.abs(w) - 0.5) < ambiguous_band) & (d > 1e-12)
    if ambiguous.any():
        normals = _pseudo_normals_at(index, closest[ambiguous], tri_id[ambiguous])
        toward = ((p[ambiguous] - closest[ambiguous]) * normals).sum(axis=1)
        inside[ambiguous] = toward < 0.0
    return np.where(inside, -d, d)


def _pseudo_normals_at(index: MeshDistanceIndex, closest: np.ndarray,
                       tri_id: np.ndarray) -> np.ndarray:
    """Barycentric blend of angle-weighted vertex normals at surface points."""
    tri = index.tri[tri_id]
    # barycentric coordinates of the closest points
    v0 = tri[:, 1] - tri[:, 0]
    v1 = tri[:, 2] - tri[:, 0]
    v2 = closest - tri[:, 0]
    d00 = (v0 * v0).sum(axis=1)
    d01 = (v0 * v1).sum(axis=1)
    d11 = (v1 * v1).sum(axis=1)
    d20 = (v2 * v0).sum(axis=1)
    d21 = (v2 * v1).sum(axis=1)
    denom = np.maximum(d00 * d11 - d01 * d01, 1e-300)
    b1 = (d11 * d20 - d01 * d21) / denom
    b2 = (d00 * d21 - d01 * d20) / denom
    b0 = 1.0 - b1 - b2
    bary = np.clip(np.stack([b0, b1, b2], axis=1), 0.0, 1.0)

    vn = index.vertex_normals()
    # map query-set triangles back to original face corners
    keep_faces = index._faces[np.linalg.norm(
        np.cross(index.all_tri[:, 1] - index.all_tri[:, 0],
                 index.all_tri[:, 2] - index.all_tri[:, 0]), axis=1) > 1e-300]
    corners = keep_faces[tri_id]
    blended = (vn[corners] * bary[:, :, None]).sum(axis=1)
    norm = np.linalg.norm(blended, axis=1, keepdims=True)
    return blended / np.maximum(norm, 1e-300)
