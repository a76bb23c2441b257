"""Watertight-mesh occupancy voxelization over the unit cube.

Parity ray casting: for every (y, z) pixel column the crossings with the
surface are collected and interior runs filled between successive pairs.
Pixel centres carry a fixed sub-nanometre jitter in (y, z) so rays never
pass exactly through mesh edges; x stays unjittered, which keeps the grid
exactly mirror-symmetric across x planes.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_JITTER_Y = 1.1102230246251565e-07
_JITTER_Z = 2.2204460492503131e-07


@njit(cache=True)
def _voxelize(tri, res):
    counts = np.zeros(res * res, dtype=np.int64)
    inv_res = 1.0 / res

    # pass 1: crossings per (y, z) pixel column
    for t in range(tri.shape[0]):
        y0, z0 = tri[t, 0, 1], tri[t, 0, 2]
        y1, z1 = tri[t, 1, 1], tri[t, 1, 2]
        y2, z2 = tri[t, 2, 1], tri[t, 2, 2]
        area2 = (y1 - y0) * (z2 - z0) - (z1 - z0) * (y2 - y0)
        if area2 == 0.0:
            continue
        ymin = min(y0, min(y1, y2))
        ymax = max(y0, max(y1, y2))
        zmin = min(z0, min(z1, z2))
        zmax = max(z0, max(z1, z2))
        iy0 = max(0, int(math.ceil((ymin - _JITTER_Y) * res - 0.5)))
        iy1 = min(res - 1, int(math.floor((ymax - _JITTER_Y) * res - 0.5)))
        iz0 = max(0, int(math.ceil((zmin - _JITTER_Z) * res - 0.5)))
        iz1 = min(res - 1, int(math.floor((zmax - _JITTER_Z) * res - 0.5)))
        orient = 1.0 if area2 > 0.0 else -1.0
        for iy in range(iy0, iy1 + 1):
            yc = (iy + 0.5) * inv_res + _JITTER_Y
            for iz in range(iz0, iz1 + 1):
                zc = (iz + 0.5) * inv_res + _JITTER_Z
                e0 = (y2 - y1) * (zc - z1) - (z2 - z1) * (yc - y1)
                e1 = (y0 - y2) * (zc - z2) - (z0 - z2) * (yc - y2)
                e2 = (y1 - y0) * (zc - z0) - (z1 - z0) * (yc - y0)
                if e0 * orient >= 0.0 and e1 * orient >= 0.0 and e2 * orient >= 0.0:
                    counts[iy * res + iz] += 1

    starts = np.zeros(res * res + 1, dtype=np.int64)
    for i in range(res * res):
        starts[i + 1] = starts[i] + counts[i]
    xs = np.empty(starts[res * res], dtype=np.float64)
    cursor = starts[:-1].copy()

    # pass 2: record the crossing x per covered pixel
    for t in range(tri.shape[0]):
        x0, y0, z0 = tri[t, 0, 0], tri[t, 0, 1], tri[t, 0, 2]
        x1, y1, z1 = tri[t, 1, 0], tri[t, 1, 1], tri[t, 1, 2]
        x2, y2, z2 = tri[t, 2, 0], tri[t, 2, 1], tri[t, 2, 2]
        area2 = (y1 - y0) * (z2 - z0) - (z1 - z0) * (y2 - y0)
        if area2 == 0.0:
            continue
        ymin = min(y0, min(y1, y2))
        ymax = max(y0, max(y1, y2))
        zmin = min(z0, min(z1, z2))
        zmax = max(z0, max(z1, z2))
        iy0 = max(0, int(math.ceil((ymin - _JITTER_Y) * res - 0.5)))
        iy1 = min(res - 1, int(math.floor((ymax - _JITTER_Y) * res - 0.5)))
        iz0 = max(0, int(math.ceil((zmin - _JITTER_Z) * res - 0.5)))
        iz1 = min(res - 1, int(math.floor((zmax - _JITTER_Z) * res - 0.5)))
        orient = 1.0 if area2 > 0.0 else -1.0
        inv_area2 = 1.0 / area2
        for iy in range(iy0, iy1 + 1):
            yc = (iy + 0.5) * inv_res + _JITTER_Y
            for iz in range(iz0, iz1 + 1):
                zc = (iz + 0.5) * inv_res + _JITTER_Z
                e0 = (y2 - y1) * (zc - z1) - (z2 - z1) * (yc - y1)
                e1 = (y0 - y2) * (zc - z2) - (z0 - z2) * (yc - y2)
                e2 = (y1 - y0) * (zc - z0) - (z1 - z0) * (yc - y0)
                if e0 * orient >= 0.0 and e1 * orient >= 0.0 and e2 * orient >= 0.0:
                    b0 = e0 * inv_area2
                    b1 = e1 * inv_area2
                    b2 = e2 * inv_area2
                    pid = iy * res + iz
                    xs[cursor[pid]] = b0 * x0 + b1 * x1 + b2 * x2
                    cursor[pid] += 1

    occ = np.zeros((res, res, res), dtype=np.uint8)
    for iy in range(res):
        for iz in range(res):
            pid = iy * res + iz
            lo, hi = starts[pid], starts[pid + 1]
            m = hi - lo
            if m < 2:
                continue
            # insertion sort; crossing counts per column are tiny
            for i in range(lo + 1, hi):
                key = xs[i]
                j = i - 1
                while j >= lo and xs[j] > key:
                    xs[j + 1] = xs[j]
                    j -= 1
                xs[j + 1] = key
            for pair in range(m // 2):
                xin = xs[lo + 2 * pair]
                xout = xs[lo + 2 * pair + 1]
                ix0 = max(0, int(math.ceil(xin * res - 0.5)))
                ix1 = min(res - 1, int(math.ceil(xout * res - 0.5)) - 1)
                for ix in range(ix0, ix1 + 1):
                    occ[ix, iy, iz] = 1
    return occ


def voxelize_occupancy(vertices: np.ndarray, faces: np.ndarray,
                       resolution: int) -> np.ndarray:
    """Boolean interior occupancy on the unit-cube voxel grid.

    Voxel centres are at ``(i + 0.5) / resolution`` per axis.
    """
    tri = np.ascontiguousarray(
        np.asarray(vertices, dtype=np.float64)[np.asarray(faces, dtype=np.int64)])
    occ = _voxelize(tri, int(resolution))
    return occ.astype(bool)
