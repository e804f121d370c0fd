"""Numba kernels for the path tracer.

Everything operates on the flat arrays produced by ``render.compile_scene``:
triangle corners as (T, 9) rows, per-triangle geometric normals, material
indices, emitted radiance and object ids, plus the flattened BVH.

The per-path RNG is a counter-based splitmix64 stream keyed on
(seed, pixel, sample), so images are bit-identical regardless of how
pixels are scheduled across threads.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

F_EPS = 1e-9
SHADOW_EPS = 1e-4  # mm-scale scenes

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MUL2 = np.uint64(0x94D049BB133111EB)
_U64_53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def _mix64(x):
    x = (x ^ (x >> np.uint64(30))) * _SM_MUL1
    x = (x ^ (x >> np.uint64(27))) * _SM_MUL2
    return x ^ (x >> np.uint64(31))


@njit(cache=True, inline="always")
def rng_init(seed, pixel, sample):
    state = _mix64(np.uint64(seed) * _SM_GAMMA + np.uint64(pixel))
    state = _mix64(state + np.uint64(sample) * _SM_MUL2 + _SM_GAMMA)
    return state


@njit(cache=True, inline="always")
def rng_next(state):
    state = state + _SM_GAMMA
    z = _mix64(state)
    return state, float(z >> np.uint64(11)) * _U64_53


@njit(cache=True, inline="always")
def _ray_tri(ox, oy, oz, dx, dy, dz, tv, tri, t_max):
    """Moller-Trumbore; returns hit distance or -1 (no backface culling)."""
    ax = tv[tri, 0]
    ay = tv[tri, 1]
    az = tv[tri, 2]
    e1x = tv[tri, 3] - ax
    e1y = tv[tri, 4] - ay
    e1z = tv[tri, 5] - az
    e2x = tv[tri, 6] - ax
    e2y = tv[tri, 7] - ay
    e2z = tv[tri, 8] - az

    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -1e-12 < det < 1e-12:
        return -1.0
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -1e-9 or u > 1.0 + 1e-9:
        return -1.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -1e-9 or u + v > 1.0 + 1e-9:
        return -1.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= F_EPS or t >= t_max:
        return -1.0
    return t


@njit(cache=True, inline="always")
def _slab_hit(ox, oy, oz, ix, iy, iz, bmin, bmax, node, t_max):
    t0 = (bmin[node, 0] - ox) * ix
    t1 = (bmax[node, 0] - ox) * ix
    tn = min(t0, t1)
    tf = max(t0, t1)
    t0 = (bmin[node, 1] - oy) * iy
    t1 = (bmax[node, 1] - oy) * iy
    tn = max(tn, min(t0, t1))
    tf = min(tf, max(t0, t1))
    t0 = (bmin[node, 2] - oz) * iz
    t1 = (bmax[node, 2] - oz) * iz
    tn = max(tn, min(t0, t1))
    tf = min(tf, max(t0, t1))
    return tf >= max(tn, 0.0) - 1e-12


@njit(cache=True)
def bvh_nearest(ox, oy, oz, dx, dy, dz, tv, bmin, bmax, bleft, bright, border, t_max):
    """Nearest triangle hit in the static geometry; (-1, t_max) if none."""
    ix = 1.0 / dx if abs(dx) > 1e-300 else math.inf
    iy = 1.0 / dy if abs(dy) > 1e-300 else math.inf
    iz = 1.0 / dz if abs(dz) > 1e-300 else math.inf
    best_t = t_max
    best_tri = -1
    stack = np.empty(64, dtype=np.int64)
    top = 0
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(ox, oy, oz, ix, iy, iz, bmin, bmax, node, best_t):
            continue
        l = bleft[node]
        if l < 0:
            start = -l - 1
            count = bright[node]
            for k in range(count):
                tri = border[start + k]
                t = _ray_tri(ox, oy, oz, dx, dy, dz, tv, tri, best_t)
                if t > 0.0:
                    best_t = t
                    best_tri = tri
        else:
            stack[top] = l
            stack[top + 1] = bright[node]
            top += 2
    return best_tri, best_t


@njit(cache=True)
def scene_nearest(ox, oy, oz, dx, dy, dz, tv, bmin, bmax, bleft, bright, border, xv, t_max):
    """Nearest hit over BVH geometry plus the small dynamic list.

    Returns (index, t, is_extra); index -1 when nothing is hit.
    """
    tri, t = bvh_nearest(ox, oy, oz, dx, dy, dz, tv, bmin, bmax, bleft, bright, border, t_max)
    extra = -1
    for k in range(xv.shape[0]):
        tx = _ray_tri(ox, oy, oz, dx, dy, dz, xv, k, t)
        if tx > 0.0:
            t = tx
            extra = k
    if extra >= 0:
        return extra, t, True
    return tri, t, False


@njit(cache=True)
def scene_occluded(ox, oy, oz, dx, dy, dz, tv, bmin, bmax, bleft, bright, border, xv, t_max):
    """Any-hit test up to t_max (early exit inside leaves)."""
    ix = 1.0 / dx if abs(dx) > 1e-300 else math.inf
    iy = 1.0 / dy if abs(dy) > 1e-300 else math.inf
    iz = 1.0 / dz if abs(dz) > 1e-300 else math.inf
    stack = np.empty(64, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(ox, oy, oz, ix, iy, iz, bmin, bmax, node, t_max):
            continue
        l = bleft[node]
        if l < 0:
            start = -l - 1
            count = bright[node]
            for k in range(count):
                t = _ray_tri(ox, oy, oz, dx, dy, dz, tv, border[start + k], t_max)
                if t > 0.0:
                    return True
        else:
            stack[top] = l
            stack[top + 1] = bright[node]
            top += 2
    for k in range(xv.shape[0]):
        if _ray_tri(ox, oy, oz, dx, dy, dz, xv, k, t_max) > 0.0:
            return True
    return False


@njit(cache=True, inline="always")
def _cosine_sample(nx, ny, nz, u1, u2):
    """Cosine-weighted hemisphere direction around the (unit) normal."""
    # orthonormal basis
    if abs(nx) > 0.9:
        bx, by, bz = 0.0, 1.0, 0.0
    else:
        bx, by, bz = 1.0, 0.0, 0.0
    tx = ny * bz - nz * by
    ty = nz * bx - nx * bz
    tz = nx * by - ny * bx
    inv = 1.0 / math.sqrt(tx * tx + ty * ty + tz * tz)
    tx *= inv
    ty *= inv
    tz *= inv
    sx = ny * tz - nz * ty
    sy = nz * tx - nx * tz
    sz = nx * ty - ny * tx

    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    x = r * math.cos(phi)
    y = r * math.sin(phi)
    z = math.sqrt(max(0.0, 1.0 - u1))
    dx = x * tx + y * sx + z * nx
    dy = x * ty + y * sy + z * ny
    dz = x * tz + y * sz + z * nz
    return dx, dy, dz


@njit(cache=True, inline="always")
def _sample_light(lv, u1, u2, light):
    """Uniform point on light triangle ``light`` (sqrt warp)."""
    su = math.sqrt(u1)
    b0 = 1.0 - su
    b1 = su * (1.0 - u2)
    b2 = su * u2
    x = b0 * lv[light, 0] + b1 * lv[light, 3] + b2 * lv[light, 6]
    y = b0 * lv[light, 1] + b1 * lv[light, 4] + b2 * lv[light, 7]
    z = b0 * lv[light, 2] + b1 * lv[light, 5] + b2 * lv[light, 8]
    return x, y, z


@njit(cache=True, inline="always")
def _pick_light(cdf, u):
    lo = 0
    hi = cdf.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] < u:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, parallel=True)
def render_kernel(
    width, height, spp, max_depth, rr_start, seed,
    cam_px, cam_py, cam_pz,
    rx, ry, rz, ux, uy, uz, fx, fy, fz,
    tan_x, tan_y,
    tv, tn, tmat, temit, tbeam,
    xv, xn, xmat, xemit, xbeam,
    tobj, xobj, tpoa, xpoa,
    bmin, bmax, bleft, bright, border,
    mkind, malbedo, mspec, mrough,
    lv, ln, lemit, lcdf, lpmf_over_area, lbeam,
    out, aux_pos, aux_obj,
):
    n_pixels = width * height
    n_lights = lv.shape[0]
    for pixel in prange(n_pixels):
        py = pixel // width
        px = pixel - py * width
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        aux_written = False
        for s in range(spp):
            state = rng_init(seed, pixel, s)
            state, jx = rng_next(state)
            state, jy = rng_next(state)
            ndc_x = 2.0 * ((px + jx) / width) - 1.0
            ndc_y = 1.0 - 2.0 * ((py + jy) / height)
            dx = fx + ndc_x * tan_x * rx + ndc_y * tan_y * ux
            dy = fy + ndc_x * tan_x * ry + ndc_y * tan_y * uy
            dz = fz + ndc_x * tan_x * rz + ndc_y * tan_y * uz
            inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
            dx *= inv
            dy *= inv
            dz *= inv
            ox, oy, oz = cam_px, cam_py, cam_pz

            th_r = 1.0
            th_g = 1.0
            th_b = 1.0
            rad_r = 0.0
            rad_g = 0.0
            rad_b = 0.0
            specular_chain = True
            prev_pdf = 0.0  # solid-angle pdf of the bsdf direction that led here

            for depth in range(max_depth + 1):
                idx, t, is_extra = scene_nearest(
                    ox, oy, oz, dx, dy, dz, tv, bmin, bmax, bleft, bright, border, xv, 1e30
                )
                if idx < 0:
                    break
                if is_extra:
                    nx, ny, nz = xn[idx, 0], xn[idx, 1], xn[idx, 2]
                    mat = xmat[idx]
                    em_r, em_g, em_b = xemit[idx, 0], xemit[idx, 1], xemit[idx, 2]
                    obj = xobj[idx]
                    beam = xbeam[idx]
                    poa = xpoa[idx]
                else:
                    nx, ny, nz = tn[idx, 0], tn[idx, 1], tn[idx, 2]
                    mat = tmat[idx]
                    em_r, em_g, em_b = temit[idx, 0], temit[idx, 1], temit[idx, 2]
                    obj = tobj[idx]
                    beam = tbeam[idx]
                    poa = tpoa[idx]

                cos_in = -(dx * nx + dy * ny + dz * nz)
                front = cos_in > 0.0
                if front and (em_r > 0.0 or em_g > 0.0 or em_b > 0.0):
                    # specular chains carry full weight (light sampling cannot
                    # reach them); diffuse-sampled hits are MIS-weighted
                    # against next-event estimation
                    w_mis = 1.0
                    if not specular_chain:
                        p_light = poa * (t * t) / cos_in
                        w_mis = prev_pdf / (prev_pdf + p_light)
                    lens = 1.0
                    if beam > 0.0:
                        c = cos_in if cos_in < 1.0 else 1.0
                        lens = math.pow(c, beam)
                    rad_r += th_r * em_r * lens * w_mis
                    rad_g += th_g * em_g * lens * w_mis
                    rad_b += th_b * em_b * lens * w_mis

                hx = ox + t * dx
                hy = oy + t * dy
                hz = oz + t * dz

                kind = mkind[mat]
                if kind == 1:  # perfect mirror
                    if depth == max_depth:
                        break
                    refl = mspec[mat]
                    # orient normal toward the incoming side
                    if not front:
                        nx = -nx
                        ny = -ny
                        nz = -nz
                        cos_in = -cos_in
                    dot2 = 2.0 * (dx * nx + dy * ny + dz * nz)
                    dx -= dot2 * nx
                    dy -= dot2 * ny
                    dz -= dot2 * nz
                    ox = hx + SHADOW_EPS * nx
                    oy = hy + SHADOW_EPS * ny
                    oz = hz + SHADOW_EPS * nz
                    th_r *= refl
                    th_g *= refl
                    th_b *= refl
                    specular_chain = True
                    continue

                # diffuse-style vertex (two-sided)
                snx, sny, snz = nx, ny, nz
                if not front:
                    snx = -nx
                    sny = -ny
                    snz = -nz

                if (not aux_written) and s == 0:
                    aux_pos[pixel, 0] = hx
                    aux_pos[pixel, 1] = hy
                    aux_pos[pixel, 2] = hz
                    aux_obj[pixel] = obj
                    aux_written = True

                if depth == max_depth:
                    break

                al_r = malbedo[mat, 0]
                al_g = malbedo[mat, 1]
                al_b = malbedo[mat, 2]

                # glossy branch of the coated material (off when spec = 0)
                spec_p = mspec[mat] if kind == 2 else 0.0
                took_specular = False
                if spec_p > 0.0:
                    state, u_branch = rng_next(state)
                    if u_branch < spec_p:
                        took_specular = True

                if took_specular:
                    dot2 = 2.0 * (dx * snx + dy * sny + dz * snz)
                    gx = dx - dot2 * snx
                    gy = dy - dot2 * sny
                    gz = dz - dot2 * snz
                    rough = mrough[mat]
                    if rough > 0.0:
                        state, g1 = rng_next(state)
                        state, g2 = rng_next(state)
                        state, g3 = rng_next(state)
                        gx += rough * (2.0 * g1 - 1.0)
                        gy += rough * (2.0 * g2 - 1.0)
                        gz += rough * (2.0 * g3 - 1.0)
                        ginv = 1.0 / math.sqrt(gx * gx + gy * gy + gz * gz)
                        gx *= ginv
                        gy *= ginv
                        gz *= ginv
                    if gx * snx + gy * sny + gz * snz <= 0.0:
                        break  # absorbed below the horizon
                    dx, dy, dz = gx, gy, gz
                    ox = hx + SHADOW_EPS * snx
                    oy = hy + SHADOW_EPS * sny
                    oz = hz + SHADOW_EPS * snz
                    specular_chain = True
                    continue

                if spec_p > 0.0:
                    scale = 1.0 / (1.0 - spec_p)
                    al_r *= scale
                    al_g *= scale
                    al_b *= scale

                # next-event estimation toward one light
                if n_lights > 0:
                    state, ul = rng_next(state)
                    light = _pick_light(lcdf, ul)
                    state, u1 = rng_next(state)
                    state, u2 = rng_next(state)
                    lx, ly, lz = _sample_light(lv, u1, u2, light)
                    wx = lx - hx
                    wy = ly - hy
                    wz = lz - hz
                    dist2 = wx * wx + wy * wy + wz * wz
                    if dist2 > 1e-12:
                        dist = math.sqrt(dist2)
                        wx /= dist
                        wy /= dist
                        wz /= dist
                        cos_x = wx * snx + wy * sny + wz * snz
                        cos_y = -(wx * ln[light, 0] + wy * ln[light, 1] + wz * ln[light, 2])
                        if cos_x > 0.0 and cos_y > 0.0:
                            if not scene_occluded(
                                hx + SHADOW_EPS * snx, hy + SHADOW_EPS * sny,
                                hz + SHADOW_EPS * snz,
                                wx, wy, wz,
                                tv, bmin, bmax, bleft, bright, border, xv,
                                dist - 2.0 * SHADOW_EPS,
                            ):
                                lens = 1.0
                                lb = lbeam[light]
                                if lb > 0.0:
                                    c = cos_y if cos_y < 1.0 else 1.0
                                    lens = math.pow(c, lb)
                                p_light = lpmf_over_area[light] * dist2 / cos_y
                                p_bsdf = cos_x / math.pi
                                w_mis = p_light / (p_light + p_bsdf)
                                geom = cos_x * cos_y / dist2 / lpmf_over_area[light]
                                f = geom * lens * w_mis / math.pi
                                rad_r += th_r * al_r * f * lemit[light, 0]
                                rad_g += th_g * al_g * f * lemit[light, 1]
                                rad_b += th_b * al_b * f * lemit[light, 2]

                # cosine-weighted continuation
                state, u1 = rng_next(state)
                state, u2 = rng_next(state)
                dx, dy, dz = _cosine_sample(snx, sny, snz, u1, u2)
                cos_out = dx * snx + dy * sny + dz * snz
                if cos_out <= 0.0:
                    break
                prev_pdf = cos_out / math.pi
                ox = hx + SHADOW_EPS * snx
                oy = hy + SHADOW_EPS * sny
                oz = hz + SHADOW_EPS * snz
                th_r *= al_r
                th_g *= al_g
                th_b *= al_b
                specular_chain = False

                if depth + 1 >= rr_start:
                    p_cont = th_r
                    if th_g > p_cont:
                        p_cont = th_g
                    if th_b > p_cont:
                        p_cont = th_b
                    if p_cont > 0.95:
                        p_cont = 0.95
                    if p_cont < 0.05:
                        p_cont = 0.05
                    state, u_rr = rng_next(state)
                    if u_rr >= p_cont:
                        break
                    inv_p = 1.0 / p_cont
                    th_r *= inv_p
                    th_g *= inv_p
                    th_b *= inv_p

            acc_r += rad_r
            acc_g += rad_g
            acc_b += rad_b

        out[pixel, 0] = acc_r / spp
        out[pixel, 1] = acc_g / spp
        out[pixel, 2] = acc_b / spp
