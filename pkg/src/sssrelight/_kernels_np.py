"""Vectorized numpy implementations of the hot kernels.

Reference semantics for the numba twins in _kernels_nb: every function here
has an identical signature there and is written so both paths execute the
same floating-point expressions elementwise (the two backends agree bitwise,
which the kernel tests assert).
"""

import math

import numpy as np

# CDF 9/7 lifting constants. alpha/beta/delta are the published values;
# gamma and zeta are closed against alpha and beta so that (a) the detail
# filter annihilates constants exactly in f64 and (b) the per-level DC gain
# is exactly sqrt(2), matching the orthonormal Haar convention. They agree
# with the published 0.882911076 / 1.149604398 to ~1e-11.
CDF97_ALPHA = -1.586134342059924
CDF97_BETA = -0.05298011857296141
_T = 1.0 + 2.0 * CDF97_BETA * (1.0 + 2.0 * CDF97_ALPHA)
CDF97_GAMMA = -(1.0 + 2.0 * CDF97_ALPHA) / (2.0 * _T)
CDF97_DELTA = 0.4435068520511142
CDF97_ZETA = math.sqrt(2.0) / _T
CDF97_INV_ZETA = 1.0 / CDF97_ZETA

ISQRT2 = 1.0 / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Haar, full dyadic pyramid, orthonormal scaling
# ---------------------------------------------------------------------------

def _haar_axis_fwd(a):
    s = a.shape[-1]
    h = s // 2
    ev = a[..., 0::2]
    od = a[..., 1::2]
    lo = (ev + od) * ISQRT2
    hi = (ev - od) * ISQRT2
    a[..., :h] = lo
    a[..., h:] = hi


def _haar_axis_inv(a):
    s = a.shape[-1]
    h = s // 2
    lo = a[..., :h].copy()
    hi = a[..., h:].copy()
    a[..., 0::2] = (lo + hi) * ISQRT2
    a[..., 1::2] = (lo - hi) * ISQRT2


def haar2d_fwd_batch(blocks):
    """Full-pyramid orthonormal Haar on (B, s, s) blocks; returns new array."""
    out = np.array(blocks, dtype=np.float64, copy=True)
    s = out.shape[-1]
    while s >= 2:
        sub = out[:, :s, :s]
        _haar_axis_fwd(sub)
        _haar_axis_fwd(sub.swapaxes(-1, -2))
        s //= 2
    return out


def haar2d_inv_batch(blocks):
    out = np.array(blocks, dtype=np.float64, copy=True)
    full = out.shape[-1]
    s = 2
    while s <= full:
        sub = out[:, :s, :s]
        _haar_axis_inv(sub.swapaxes(-1, -2))
        _haar_axis_inv(sub)
        s *= 2
    return out


# ---------------------------------------------------------------------------
# CDF 9/7, lifting with whole-sample symmetric boundary extension
# ---------------------------------------------------------------------------

def _cdf97_axis_fwd(a):
    s = a.shape[-1]
    h = s // 2
    a[..., 1:s - 2:2] += CDF97_ALPHA * (a[..., 0:s - 3:2] + a[..., 2:s - 1:2])
    a[..., s - 1] += 2.0 * CDF97_ALPHA * a[..., s - 2]
    a[..., 2::2] += CDF97_BETA * (a[..., 1:s - 2:2] + a[..., 3::2])
    a[..., 0] += 2.0 * CDF97_BETA * a[..., 1]
    a[..., 1:s - 2:2] += CDF97_GAMMA * (a[..., 0:s - 3:2] + a[..., 2:s - 1:2])
    a[..., s - 1] += 2.0 * CDF97_GAMMA * a[..., s - 2]
    a[..., 2::2] += CDF97_DELTA * (a[..., 1:s - 2:2] + a[..., 3::2])
    a[..., 0] += 2.0 * CDF97_DELTA * a[..., 1]
    ev = a[..., 0::2] * CDF97_ZETA
    od = a[..., 1::2] * CDF97_INV_ZETA
    a[..., :h] = ev
    a[..., h:] = od


def _cdf97_axis_inv(a):
    s = a.shape[-1]
    ev = a[..., : s // 2] * CDF97_INV_ZETA
    od = a[..., s // 2:] * CDF97_ZETA
    a[..., 0::2] = ev
    a[..., 1::2] = od
    a[..., 0] -= 2.0 * CDF97_DELTA * a[..., 1]
    a[..., 2::2] -= CDF97_DELTA * (a[..., 1:s - 2:2] + a[..., 3::2])
    a[..., s - 1] -= 2.0 * CDF97_GAMMA * a[..., s - 2]
    a[..., 1:s - 2:2] -= CDF97_GAMMA * (a[..., 0:s - 3:2] + a[..., 2:s - 1:2])
    a[..., 0] -= 2.0 * CDF97_BETA * a[..., 1]
    a[..., 2::2] -= CDF97_BETA * (a[..., 1:s - 2:2] + a[..., 3::2])
    a[..., s - 1] -= 2.0 * CDF97_ALPHA * a[..., s - 2]
    a[..., 1:s - 2:2] -= CDF97_ALPHA * (a[..., 0:s - 3:2] + a[..., 2:s - 1:2])


def cdf97_fwd_batch(blocks):
    """Full-pyramid CDF 9/7 on (B, s, s) blocks; returns new array."""
    out = np.array(blocks, dtype=np.float64, copy=True)
    s = out.shape[-1]
    while s >= 2:
        sub = out[:, :s, :s]
        _cdf97_axis_fwd(sub)
        _cdf97_axis_fwd(sub.swapaxes(-1, -2))
        s //= 2
    return out


def cdf97_inv_batch(blocks):
    out = np.array(blocks, dtype=np.float64, copy=True)
    full = out.shape[-1]
    s = 2
    while s <= full:
        sub = out[:, :s, :s]
        _cdf97_axis_inv(sub.swapaxes(-1, -2))
        _cdf97_axis_inv(sub)
        s *= 2
    return out


# ---------------------------------------------------------------------------
# Scattering-transfer row evaluation
# ---------------------------------------------------------------------------

def transfer_block(block_pos, positions, areas, r_nodes, bases, slopes):
    """Rows of the scattering operator for a block of receiver points.

    out[b, k, i] = b_k(|x_i - block_pos_b|) * area_i, zero past the last
    radial node. bases is (K, Nr) sampled on r_nodes, slopes its per-segment
    finite differences.
    """
    nr = r_nodes.shape[0]
    diff = block_pos[:, None, :] - positions[None, :, :]
    d2 = (diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]) + diff[..., 2] * diff[..., 2]
    d = np.sqrt(d2)
    j = np.searchsorted(r_nodes, d, side="right") - 1
    np.clip(j, 0, nr - 2, out=j)
    frac = d - r_nodes[j]
    inside = d <= r_nodes[nr - 1]
    out = (bases[:, j] + slopes[:, j] * frac) * (areas * inside)
    return np.ascontiguousarray(out.swapaxes(0, 1))


# ---------------------------------------------------------------------------
# BVH any-hit (frontier traversal)
# ---------------------------------------------------------------------------

def _tri_any_hit(o, d, tmax, v0, e1, e2):
    """Moller-Trumbore batched any-hit; all inputs row-aligned."""
    pv = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pv)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tv = o - v0
    u = np.einsum("ij,ij->i", tv, pv) * inv
    qv = np.cross(tv, e1)
    v = np.einsum("ij,ij->i", d, qv) * inv
    t = np.einsum("ij,ij->i", e2, qv) * inv
    return ok & (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-9) & (t < tmax)


def _aabb_hit(o, d, tmax, bmin, bmax):
    zero = d == 0.0
    safe = np.where(zero, 1.0, d)
    inv = 1.0 / safe
    ta = (bmin - o) * inv
    tb = (bmax - o) * inv
    lo = np.minimum(ta, tb)
    hi = np.maximum(ta, tb)
    inside = (o >= bmin) & (o <= bmax)
    lo = np.where(zero, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(zero, np.where(inside, np.inf, -np.inf), hi)
    tn = np.maximum(lo.max(axis=-1), 0.0)
    tf = np.minimum(hi.min(axis=-1), tmax)
    return tn <= tf


def _ragged_ranges(starts, counts):
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, np.int64)
    ends = np.cumsum(counts)
    offsets = np.repeat(ends - counts, counts)
    return np.arange(total, dtype=np.int64) - offsets + np.repeat(starts, counts)


def bvh_any_hit(origins, dirs, tmax, node_min, node_max, node_left, node_right,
                node_start, node_count, v0, e1, e2):
    """Boolean any-hit per ray via level-synchronous BVH frontier expansion."""
    n_rays = origins.shape[0]
    hit = np.zeros(n_rays, np.bool_)
    if node_min.shape[0] == 0:
        return hit
    ray = np.arange(n_rays, dtype=np.int64)
    node = np.zeros(n_rays, dtype=np.int64)
    while ray.size:
        ok = _aabb_hit(origins[ray], dirs[ray], tmax[ray], node_min[node], node_max[node])
        ok &= ~hit[ray]
        ray = ray[ok]
        node = node[ok]
        leaf = node_count[node] > 0
        lray, lnode = ray[leaf], node[leaf]
        if lray.size:
            cnt = node_count[lnode].astype(np.int64)
            tri = _ragged_ranges(node_start[lnode].astype(np.int64), cnt)
            rep = np.repeat(lray, cnt)
            h = _tri_any_hit(origins[rep], dirs[rep], tmax[rep], v0[tri], e1[tri], e2[tri])
            np.logical_or.at(hit, rep, h)
        iray, inode = ray[~leaf], node[~leaf]
        ray = np.concatenate([iray, iray])
        node = np.concatenate([node_left[inode], node_right[inode]]).astype(np.int64)
        alive = ~hit[ray]
        ray = ray[alive]
        node = node[alive]
    return hit


# ---------------------------------------------------------------------------
# Sparse column-compressed transfer application
# ---------------------------------------------------------------------------

def csc_apply(cols, colptr, rowidx, vals, x_idx, x_val, out_len):
    """out += sum_j vals[:, j] * x_j over the active input coefficients.

    cols: sorted retained input-coefficient ids; colptr/rowidx/vals the CSC
    payload; (x_idx, x_val) the sparse input spectrum, x_idx sorted.
    """
    out = np.zeros(out_len, np.float64)
    pos = np.searchsorted(cols, x_idx)
    ok = pos < cols.shape[0]
    ok &= cols[np.minimum(pos, cols.shape[0] - 1)] == x_idx
    pos = pos[ok]
    xv = x_val[ok]
    if pos.size == 0:
        return out
    starts = colptr[pos].astype(np.int64)
    counts = (colptr[pos + 1] - colptr[pos]).astype(np.int64)
    sel = _ragged_ranges(starts, counts)
    np.add.at(out, rowidx[sel].astype(np.int64), vals[sel] * np.repeat(xv, counts))
    return out


# ---------------------------------------------------------------------------
# Triangle rasterization (z-buffered, perspective-correct vertex colors)
# ---------------------------------------------------------------------------

def raster_fill(tris, sx, sy, zn, iw, colors, zbuf, img):
    """Rasterize triangles into img/zbuf in place.

    sx/sy pixel coords, zn NDC depth (smaller = closer), iw = 1/w_clip for
    perspective-correct color interpolation; vertices behind the near plane
    are pre-filtered by the caller (iw <= 0 marks them).
    """
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
        xmin = max(int(math.floor(min(x0, x1, x2))), 0)
        xmax = min(int(math.ceil(max(x0, x1, x2))), width - 1)
        ymin = max(int(math.floor(min(y0, y1, y2))), 0)
        ymax = min(int(math.ceil(max(y0, y1, y2))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        px = np.arange(xmin, xmax + 1, dtype=np.float64) + 0.5
        py = np.arange(ymin, ymax + 1, dtype=np.float64) + 0.5
        pxg = px[None, :]
        pyg = py[:, None]
        w0 = (x2 - x1) * (pyg - y1) - (y2 - y1) * (pxg - x1)
        w1 = (x0 - x2) * (pyg - y2) - (y0 - y2) * (pxg - x2)
        w2 = (x1 - x0) * (pyg - y0) - (y1 - y0) * (pxg - x0)
        if area > 0.0:
            inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        else:
            inside = (w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0)
        l0 = w0 / area
        l1 = w1 / area
        l2 = w2 / area
        z = l0 * zn[i0] + l1 * zn[i1] + l2 * zn[i2]
        sub_z = zbuf[ymin:ymax + 1, xmin:xmax + 1]
        upd = inside & (z < sub_z)
        if not upd.any():
            continue
        wi = l0 * iw[i0] + l1 * iw[i1] + l2 * iw[i2]
        sub_img = img[ymin:ymax + 1, xmin:xmax + 1]
        for c in range(3):
            num = (l0 * (colors[i0, c] * iw[i0]) + l1 * (colors[i1, c] * iw[i1])
                   + l2 * (colors[i2, c] * iw[i2]))
            sub_img[..., c] = np.where(upd, num / wi, sub_img[..., c])
        sub_z[upd] = z[upd]
