"""Numba kernels for the discrete registration sweeps.

A control point's data cost is evaluated by block matching: the candidate
displacement shifts the whole support window rigidly, and the cost is the
sum over both channels of one minus the window NCC. Because candidates are
integer steps at the level scale, every candidate shares the point's
trilinear fraction, so all samples a point can need are gathered once into
an expanded buffer and reused across candidates.
"""

import numba
import numpy as np

_VAR_EPS = 1e-12


@numba.njit(inline="always")
def _tri(vol, ix, iy, iz, fx, fy, fz):
    # trilinear value at integer corner (ix, iy, iz) + fraction; 0 outside
    nx, ny, nz = vol.shape
    if ix < 0 or iy < 0 or iz < 0 or ix + 1 >= nx or iy + 1 >= ny or iz + 1 >= nz:
        # fall back to per-corner gathering with zero fill at the border
        v = 0.0
        for dx in range(2):
            wx = fx if dx == 1 else 1.0 - fx
            if wx == 0.0:
                continue
            for dy in range(2):
                wy = fy if dy == 1 else 1.0 - fy
                if wy == 0.0:
                    continue
                for dz in range(2):
                    wz = fz if dz == 1 else 1.0 - fz
                    if wz == 0.0:
                        continue
                    x, y, z = ix + dx, iy + dy, iz + dz
                    if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz:
                        v += wx * wy * wz * vol[x, y, z]
        return v
    c00 = vol[ix, iy, iz] * (1 - fx) + vol[ix + 1, iy, iz] * fx
    c10 = vol[ix, iy + 1, iz] * (1 - fx) + vol[ix + 1, iy + 1, iz] * fx
    c01 = vol[ix, iy, iz + 1] * (1 - fx) + vol[ix + 1, iy, iz + 1] * fx
    c11 = vol[ix, iy + 1, iz + 1] * (1 - fx) + vol[ix + 1, iy + 1, iz + 1] * fx
    return (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz


@numba.njit(cache=True, parallel=True)
def fixed_window_stats(fix0, fix1, pos, woff):
    """Per-point window sums of the fixed channels and the frozen flags."""
    P = pos.shape[0]
    W = woff.shape[0]
    nx, ny, nz = fix0.shape
    sf = np.zeros((P, 2), np.float64)
    sf2 = np.zeros((P, 2), np.float64)
    frozen = np.zeros(P, np.bool_)
    for p in numba.prange(P):
        s0 = 0.0
        q0 = 0.0
        s1 = 0.0
        q1 = 0.0
        for w in range(W):
            x = pos[p, 0] + woff[w, 0]
            y = pos[p, 1] + woff[w, 1]
            z = pos[p, 2] + woff[w, 2]
            if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz:
                v0 = fix0[x, y, z]
                v1 = fix1[x, y, z]
                s0 += v0
                q0 += v0 * v0
                s1 += v1
                q1 += v1 * v1
        sf[p, 0] = s0
        sf2[p, 0] = q0
        sf[p, 1] = s1
        sf2[p, 1] = q1
        var0 = q0 - s0 * s0 / W
        var1 = q1 - s1 * s1 / W
        frozen[p] = var0 <= _VAR_EPS and var1 <= _VAR_EPS
    return sf, sf2, frozen


@numba.njit(cache=True, parallel=True, fastmath=True)
def sweep_data_costs(
    fix0, fix1, mov0, mov1, pos, disp, frozen, sf, sf2, woff, eoff, cw_index, cost
):
    """Data cost per (control point, candidate) at the current displacement.

    disp is in level voxel units. eoff enumerates the expanded sample
    offsets and cw_index[c, w] locates (candidate + window offset) within
    that buffer.
    """
    P = pos.shape[0]
    W = woff.shape[0]
    C = cw_index.shape[0]
    E = eoff.shape[0]
    nxm, nym, nzm = mov0.shape
    nxf, nyf, nzf = fix0.shape
    for p in numba.prange(P):
        if frozen[p]:
            continue
        bx = pos[p, 0] + disp[p, 0]
        by = pos[p, 1] + disp[p, 1]
        bz = pos[p, 2] + disp[p, 2]
        ibx = int(np.floor(bx))
        iby = int(np.floor(by))
        ibz = int(np.floor(bz))
        fx = bx - ibx
        fy = by - iby
        fz = bz - ibz

        buf0 = np.empty(E, np.float64)
        buf1 = np.empty(E, np.float64)
        for e in range(E):
            x = ibx + eoff[e, 0]
            y = iby + eoff[e, 1]
            z = ibz + eoff[e, 2]
            buf0[e] = _tri(mov0, x, y, z, fx, fy, fz)
            buf1[e] = _tri(mov1, x, y, z, fx, fy, fz)

        fw0 = np.empty(W, np.float64)
        fw1 = np.empty(W, np.float64)
        for w in range(W):
            x = pos[p, 0] + woff[w, 0]
            y = pos[p, 1] + woff[w, 1]
            z = pos[p, 2] + woff[w, 2]
            if 0 <= x < nxf and 0 <= y < nyf and 0 <= z < nzf:
                fw0[w] = fix0[x, y, z]
                fw1[w] = fix1[x, y, z]
            else:
                fw0[w] = 0.0
                fw1[w] = 0.0

        varf0 = sf2[p, 0] - sf[p, 0] * sf[p, 0] / W
        varf1 = sf2[p, 1] - sf[p, 1] * sf[p, 1] / W
        for c in range(C):
            sm0 = 0.0
            q0 = 0.0
            x0 = 0.0
            sm1 = 0.0
            q1 = 0.0
            x1 = 0.0
            for w in range(W):
                i = cw_index[c, w]
                v0 = buf0[i]
                v1 = buf1[i]
                sm0 += v0
                q0 += v0 * v0
                x0 += fw0[w] * v0
                sm1 += v1
                q1 += v1 * v1
                x1 += fw1[w] * v1
            total = 0.0
            varm0 = q0 - sm0 * sm0 / W
            if varf0 > _VAR_EPS and varm0 > _VAR_EPS:
                ncc = (x0 - sf[p, 0] * sm0 / W) / np.sqrt(varf0 * varm0)
                total += 1.0 - min(max(ncc, -1.0), 1.0)
            else:
                total += 1.0
            varm1 = q1 - sm1 * sm1 / W
            if varf1 > _VAR_EPS and varm1 > _VAR_EPS:
                ncc = (x1 - sf[p, 1] * sm1 / W) / np.sqrt(varf1 * varm1)
                total += 1.0 - min(max(ncc, -1.0), 1.0)
            else:
                total += 1.0
            cost[p, c] = total


@numba.njit(cache=True)
def icm_sweep(cost, d_start, disp, cand, frozen, ncx, ncy, ncz, lam, sx, sy, sz):
    """One lexicographic pass of the move-making update, in place.

    Each point keeps the candidate minimizing data cost plus lam times the
    squared millimeter displacement differences to its 6-neighbors at
    their current values (sx, sy, sz convert level voxels to mm).
    Candidates are ordered with the zero move first and strict comparison
    keeps the earliest minimum, so exact ties stay put.
    """
    P = cost.shape[0]
    C = cand.shape[0]
    sx2 = sx * sx
    sy2 = sy * sy
    sz2 = sz * sz
    for p in range(P):
        if frozen[p]:
            continue
        i = p // (ncy * ncz)
        rem = p % (ncy * ncz)
        j = rem // ncz
        k = rem % ncz
        best = np.inf
        bc = 0
        for c in range(C):
            dx = d_start[p, 0] + cand[c, 0]
            dy = d_start[p, 1] + cand[c, 1]
            dz = d_start[p, 2] + cand[c, 2]
            sm = 0.0
            if i > 0:
                q = p - ncy * ncz
                sm += sx2 * (dx - disp[q, 0]) ** 2 + sy2 * (dy - disp[q, 1]) ** 2 + sz2 * (dz - disp[q, 2]) ** 2
            if i < ncx - 1:
                q = p + ncy * ncz
                sm += sx2 * (dx - disp[q, 0]) ** 2 + sy2 * (dy - disp[q, 1]) ** 2 + sz2 * (dz - disp[q, 2]) ** 2
            if j > 0:
                q = p - ncz
                sm += sx2 * (dx - disp[q, 0]) ** 2 + sy2 * (dy - disp[q, 1]) ** 2 + sz2 * (dz - disp[q, 2]) ** 2
            if j < ncy - 1:
                q = p + ncz
                sm += sx2 * (dx - disp[q, 0]) ** 2 + sy2 * (dy - disp[q, 1]) ** 2 + sz2 * (dz - disp[q, 2]) ** 2
            if k > 0:
                q = p - 1
                sm += sx2 * (dx - disp[q, 0]) ** 2 + sy2 * (dy - disp[q, 1]) ** 2 + sz2 * (dz - disp[q, 2]) ** 2
            if k < ncz - 1:
                q = p + 1
                sm += sx2 * (dx - disp[q, 0]) ** 2 + sy2 * (dy - disp[q, 1]) ** 2 + sz2 * (dz - disp[q, 2]) ** 2
            t = cost[p, c] + lam * sm
            if t < best:
                best = t
                bc = c
        disp[p, 0] = d_start[p, 0] + cand[bc, 0]
        disp[p, 1] = d_start[p, 1] + cand[bc, 1]
        disp[p, 2] = d_start[p, 2] + cand[bc, 2]
