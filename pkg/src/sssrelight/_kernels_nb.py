"""Numba @njit implementations of the hot kernels.

Signature-for-signature twins of _kernels_np; the loop bodies evaluate the
same floating-point expressions so both backends agree bitwise. fastmath
stays off for that reason.
"""

import numpy as np
from numba import njit, prange

from ._kernels_np import (
    CDF97_ALPHA,
    CDF97_BETA,
    CDF97_DELTA,
    CDF97_GAMMA,
    CDF97_INV_ZETA,
    CDF97_ZETA,
    ISQRT2,
)


@njit(cache=True, parallel=True)
def haar2d_fwd_batch(blocks):
    nb, full, _ = blocks.shape
    out = blocks.astype(np.float64).copy()
    for b in prange(nb):
        tmp = np.empty(full, np.float64)
        s = full
        while s >= 2:
            h = s // 2
            for i in range(s):
                for j in range(h):
                    e = out[b, i, 2 * j]
                    o = out[b, i, 2 * j + 1]
                    tmp[j] = (e + o) * ISQRT2
                    tmp[h + j] = (e - o) * ISQRT2
                for j in range(s):
                    out[b, i, j] = tmp[j]
            for j in range(s):
                for i in range(h):
                    e = out[b, 2 * i, j]
                    o = out[b, 2 * i + 1, j]
                    tmp[i] = (e + o) * ISQRT2
                    tmp[h + i] = (e - o) * ISQRT2
                for i in range(s):
                    out[b, i, j] = tmp[i]
            s = h
    return out


@njit(cache=True, parallel=True)
def haar2d_inv_batch(blocks):
    nb, full, _ = blocks.shape
    out = blocks.astype(np.float64).copy()
    for b in prange(nb):
        tmp = np.empty(full, np.float64)
        s = 2
        while s <= full:
            h = s // 2
            for j in range(s):
                for i in range(h):
                    lo = out[b, i, j]
                    hi = out[b, h + i, j]
                    tmp[2 * i] = (lo + hi) * ISQRT2
                    tmp[2 * i + 1] = (lo - hi) * ISQRT2
                for i in range(s):
                    out[b, i, j] = tmp[i]
            for i in range(s):
                for j in range(h):
                    lo = out[b, i, j]
                    hi = out[b, i, h + j]
                    tmp[2 * j] = (lo + hi) * ISQRT2
                    tmp[2 * j + 1] = (lo - hi) * ISQRT2
                for j in range(s):
                    out[b, i, j] = tmp[j]
            s *= 2
    return out


@njit(cache=True)
def _cdf97_line_fwd(x, s, tmp):
    for i in range(1, s - 2, 2):
        x[i] += CDF97_ALPHA * (x[i - 1] + x[i + 1])
    x[s - 1] += 2.0 * CDF97_ALPHA * x[s - 2]
    for i in range(2, s, 2):
        x[i] += CDF97_BETA * (x[i - 1] + x[i + 1])
    x[0] += 2.0 * CDF97_BETA * x[1]
    for i in range(1, s - 2, 2):
        x[i] += CDF97_GAMMA * (x[i - 1] + x[i + 1])
    x[s - 1] += 2.0 * CDF97_GAMMA * x[s - 2]
    for i in range(2, s, 2):
        x[i] += CDF97_DELTA * (x[i - 1] + x[i + 1])
    x[0] += 2.0 * CDF97_DELTA * x[1]
    h = s // 2
    for i in range(h):
        tmp[i] = x[2 * i] * CDF97_ZETA
        tmp[h + i] = x[2 * i + 1] * CDF97_INV_ZETA
    for i in range(s):
        x[i] = tmp[i]


@njit(cache=True)
def _cdf97_line_inv(x, s, tmp):
    h = s // 2
    for i in range(h):
        tmp[2 * i] = x[i] * CDF97_INV_ZETA
        tmp[2 * i + 1] = x[h + i] * CDF97_ZETA
    for i in range(s):
        x[i] = tmp[i]
    x[0] -= 2.0 * CDF97_DELTA * x[1]
    for i in range(2, s, 2):
        x[i] -= CDF97_DELTA * (x[i - 1] + x[i + 1])
    x[s - 1] -= 2.0 * CDF97_GAMMA * x[s - 2]
    for i in range(1, s - 2, 2):
        x[i] -= CDF97_GAMMA * (x[i - 1] + x[i + 1])
    x[0] -= 2.0 * CDF97_BETA * x[1]
    for i in range(2, s, 2):
        x[i] -= CDF97_BETA * (x[i - 1] + x[i + 1])
    x[s - 1] -= 2.0 * CDF97_ALPHA * x[s - 2]
    for i in range(1, s - 2, 2):
        x[i] -= CDF97_ALPHA * (x[i - 1] + x[i + 1])


@njit(cache=True, parallel=True)
def cdf97_fwd_batch(blocks):
    nb, full, _ = blocks.shape
    out = blocks.astype(np.float64).copy()
    for b in prange(nb):
        tmp = np.empty(full, np.float64)
        line = np.empty(full, np.float64)
        s = full
        while s >= 2:
            for i in range(s):
                _cdf97_line_fwd(out[b, i, :s], s, tmp)
            for j in range(s):
                for i in range(s):
                    line[i] = out[b, i, j]
                _cdf97_line_fwd(line[:s], s, tmp)
                for i in range(s):
                    out[b, i, j] = line[i]
            s //= 2
    return out


@njit(cache=True, parallel=True)
def cdf97_inv_batch(blocks):
    nb, full, _ = blocks.shape
    out = blocks.astype(np.float64).copy()
    for b in prange(nb):
        tmp = np.empty(full, np.float64)
        line = np.empty(full, np.float64)
        s = 2
        while s <= full:
            for j in range(s):
                for i in range(s):
                    line[i] = out[b, i, j]
                _cdf97_line_inv(line[:s], s, tmp)
                for i in range(s):
                    out[b, i, j] = line[i]
            for i in range(s):
                _cdf97_line_inv(out[b, i, :s], s, tmp)
            s *= 2
    return out


@njit(cache=True)
def _bisect_right(arr, v):
    lo = 0
    hi = arr.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if arr[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, parallel=True)
def transfer_block(block_pos, positions, areas, r_nodes, bases, slopes):
    nblk = block_pos.shape[0]
    n = positions.shape[0]
    k = bases.shape[0]
    nr = r_nodes.shape[0]
    r_last = r_nodes[nr - 1]
    out = np.empty((nblk, k, n), np.float64)
    for b in prange(nblk):
        ox = block_pos[b, 0]
        oy = block_pos[b, 1]
        oz = block_pos[b, 2]
        for i in range(n):
            dx = ox - positions[i, 0]
            dy = oy - positions[i, 1]
            dz = oz - positions[i, 2]
            d = np.sqrt((dx * dx + dy * dy) + dz * dz)
            j = _bisect_right(r_nodes, d) - 1
            if j < 0:
                j = 0
            elif j > nr - 2:
                j = nr - 2
            frac = d - r_nodes[j]
            area_eff = areas[i] if d <= r_last else 0.0
            for kk in range(k):
                out[b, kk, i] = (bases[kk, j] + slopes[kk, j] * frac) * area_eff
    return out


@njit(cache=True)
def _tri_hit_one(ox, oy, oz, dx, dy, dz, tmax, v0, e1, e2, t):
    e1x, e1y, e1z = e1[t, 0], e1[t, 1], e1[t, 2]
    e2x, e2y, e2z = e2[t, 0], e2[t, 1], e2[t, 2]
    pvx = dy * e2z - dz * e2y
    pvy = dz * e2x - dx * e2z
    pvz = dx * e2y - dy * e2x
    det = (e1x * pvx + e1y * pvy) + e1z * pvz
    if abs(det) <= 1e-14:
        return False
    inv = 1.0 / det
    tvx = ox - v0[t, 0]
    tvy = oy - v0[t, 1]
    tvz = oz - v0[t, 2]
    u = ((tvx * pvx + tvy * pvy) + tvz * pvz) * inv
    if u < 0.0 or u > 1.0:
        return False
    qvx = tvy * e1z - tvz * e1y
    qvy = tvz * e1x - tvx * e1z
    qvz = tvx * e1y - tvy * e1x
    v = ((dx * qvx + dy * qvy) + dz * qvz) * inv
    if v < 0.0 or u + v > 1.0:
        return False
    tt = ((e2x * qvx + e2y * qvy) + e2z * qvz) * inv
    return tt > 1e-9 and tt < tmax


@njit(cache=True)
def _aabb_hit_one(ox, oy, oz, dx, dy, dz, tmax, bmin, bmax, node):
    tn = 0.0
    tf = tmax
    for ax in range(3):
        if ax == 0:
            o, d = ox, dx
        elif ax == 1:
            o, d = oy, dy
        else:
            o, d = oz, dz
        lo = bmin[node, ax]
        hi = bmax[node, ax]
        if d == 0.0:
            if o < lo or o > hi:
                return False
        else:
            inv = 1.0 / d
            ta = (lo - o) * inv
            tb = (hi - o) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > tn:
                tn = ta
            if tb < tf:
                tf = tb
            if tn > tf:
                return False
    return tn <= tf


@njit(cache=True, parallel=True)
def bvh_any_hit(origins, dirs, tmax, node_min, node_max, node_left, node_right,
                node_start, node_count, v0, e1, e2):
    n_rays = origins.shape[0]
    hit = np.zeros(n_rays, np.bool_)
    if node_min.shape[0] == 0:
        return hit
    for r in prange(n_rays):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        tm = tmax[r]
        stack = np.empty(64, np.int64)
        stack[0] = 0
        top = 1
        found = False
        while top > 0 and not found:
            top -= 1
            node = stack[top]
            if not _aabb_hit_one(ox, oy, oz, dx, dy, dz, tm, node_min, node_max, node):
                continue
            cnt = node_count[node]
            if cnt > 0:
                st = node_start[node]
                for t in range(st, st + cnt):
                    if _tri_hit_one(ox, oy, oz, dx, dy, dz, tm, v0, e1, e2, t):
                        found = True
                        break
            else:
                stack[top] = node_left[node]
                stack[top + 1] = node_right[node]
                top += 2
        hit[r] = found
    return hit


@njit(cache=True)
def csc_apply(cols, colptr, rowidx, vals, x_idx, x_val, out_len):
    out = np.zeros(out_len, np.float64)
    nc = cols.shape[0]
    for q in range(x_idx.shape[0]):
        xi = x_idx[q]
        pos = _bisect_right(cols, xi) - 1
        if pos < 0 or cols[pos] != xi:
            continue
        xv = x_val[q]
        for p in range(colptr[pos], colptr[pos + 1]):
            out[rowidx[p]] += vals[p] * xv
    return out


@njit(cache=True)
def raster_fill(tris, sx, sy, zn, iw, colors, zbuf, img):
    height, width = zbuf.shape
    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        if iw[i0] <= 0.0 or iw[i1] <= 0.0 or iw[i2] <= 0.0:
            continue
        x0, y0 = sx[i0], sy[i0]
        x1, y1 = sx[i1], sy[i1]
        x2, y2 = sx[i2], sy[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        xmin = max(int(np.floor(min(x0, min(x1, x2)))), 0)
        xmax = min(int(np.ceil(max(x0, max(x1, x2)))), width - 1)
        ymin = max(int(np.floor(min(y0, min(y1, y2)))), 0)
        ymax = min(int(np.ceil(max(y0, max(y1, y2)))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        for pyi in range(ymin, ymax + 1):
            pyg = pyi + 0.5
            for pxi in range(xmin, xmax + 1):
                pxg = pxi + 0.5
                w0 = (x2 - x1) * (pyg - y1) - (y2 - y1) * (pxg - x1)
                w1 = (x0 - x2) * (pyg - y2) - (y0 - y2) * (pxg - x2)
                w2 = (x1 - x0) * (pyg - y0) - (y1 - y0) * (pxg - x0)
                if area > 0.0:
                    if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                        continue
                else:
                    if w0 > 0.0 or w1 > 0.0 or w2 > 0.0:
                        continue
                l0 = w0 / area
                l1 = w1 / area
                l2 = w2 / area
                z = l0 * zn[i0] + l1 * zn[i1] + l2 * zn[i2]
                if z < zbuf[pyi, pxi]:
                    wi = l0 * iw[i0] + l1 * iw[i1] + l2 * iw[i2]
                    for c in range(3):
                        num = (l0 * (colors[i0, c] * iw[i0]) + l1 * (colors[i1, c] * iw[i1])
                               + l2 * (colors[i2, c] * iw[i2]))
                        img[pyi, pxi, c] = num / wi
                    zbuf[pyi, pxi] = z
    return zbuf
