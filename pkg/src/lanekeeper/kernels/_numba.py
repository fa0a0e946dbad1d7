"""Numba implementations of the hot kernels.

Kept in lockstep with `_numpy.py`: same argument lists, same arithmetic,
same operation order, so both backends produce bit-identical output
(`tests/test_kernels_parity.py` enforces this).
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def _median3_u8(src):
    H, W = src.shape
    out = np.empty((H, W), np.uint8)
    for r in prange(H):
        rm = r - 1 if r > 0 else 0
        rp = r + 1 if r < H - 1 else H - 1
        for c in range(W):
            cm = c - 1 if c > 0 else 0
            cp = c + 1 if c < W - 1 else W - 1
            p0 = src[rm, cm]; p1 = src[rm, c]; p2 = src[rm, cp]
            p3 = src[r, cm]; p4 = src[r, c]; p5 = src[r, cp]
            p6 = src[rp, cm]; p7 = src[rp, c]; p8 = src[rp, cp]
            # 19-exchange median-of-9 network
            p1, p2 = min(p1, p2), max(p1, p2)
            p4, p5 = min(p4, p5), max(p4, p5)
            p7, p8 = min(p7, p8), max(p7, p8)
            p0, p1 = min(p0, p1), max(p0, p1)
            p3, p4 = min(p3, p4), max(p3, p4)
            p6, p7 = min(p6, p7), max(p6, p7)
            p1, p2 = min(p1, p2), max(p1, p2)
            p4, p5 = min(p4, p5), max(p4, p5)
            p7, p8 = min(p7, p8), max(p7, p8)
            p0, p3 = min(p0, p3), max(p0, p3)
            p5, p8 = min(p5, p8), max(p5, p8)
            p4, p7 = min(p4, p7), max(p4, p7)
            p3, p6 = min(p3, p6), max(p3, p6)
            p1, p4 = min(p1, p4), max(p1, p4)
            p2, p5 = min(p2, p5), max(p2, p5)
            p4, p7 = min(p4, p7), max(p4, p7)
            p4, p2 = min(p4, p2), max(p4, p2)
            p6, p4 = min(p6, p4), max(p6, p4)
            p4, p2 = min(p4, p2), max(p4, p2)
            out[r, c] = p4
    return out


@njit(cache=True, parallel=True)
def _median_general_u8(src, k):
    H, W = src.shape
    out = np.empty((H, W), np.uint8)
    half = k // 2
    for r in prange(H):
        buf = np.empty(k * k, np.int32)
        for c in range(W):
            n = 0
            for dy in range(-half, half + 1):
                y = r + dy
                if y < 0:
                    y = 0
                elif y >= H:
                    y = H - 1
                for dx in range(-half, half + 1):
                    x = c + dx
                    if x < 0:
                        x = 0
                    elif x >= W:
                        x = W - 1
                    buf[n] = src[y, x]
                    n += 1
            for i in range(1, n):
                v = buf[i]
                j = i - 1
                while j >= 0 and buf[j] > v:
                    buf[j + 1] = buf[j]
                    j -= 1
                buf[j + 1] = v
            out[r, c] = np.uint8(buf[n // 2])
    return out


def median_blur_u8(src, k):
    if k == 3:
        return _median3_u8(src)
    return _median_general_u8(src, k)


@njit(cache=True)
def ppht(state, xs, ys, cos_t, sin_t, rho_res, n_rho, vote_threshold,
         min_len2, max_gap, out):
    """Progressive probabilistic Hough transform.

    state: uint8 image, 0 = background, 1 = candidate point (mutated:
    2 = voted, 0 = consumed).  xs/ys: candidate coordinates in the
    (seeded) sampling order.  out: (max_segments, 4) int32 buffer.
    Returns the number of segments written.
    """
    H, W = state.shape
    T = cos_t.shape[0]
    off = n_rho // 2
    acc = np.zeros((T, n_rho), np.int32)
    n_seg = 0

    for idx in range(xs.shape[0]):
        x0 = xs[idx]
        y0 = ys[idx]
        if state[y0, x0] == 0:
            continue

        # vote across all theta bins, tracking the best bin
        best_votes = 0
        best_t = 0
        fx = np.float64(x0)
        fy = np.float64(y0)
        for t in range(T):
            r = np.int64(np.floor((fx * cos_t[t] + fy * sin_t[t]) / rho_res + 0.5)) + off
            acc[t, r] += 1
            if acc[t, r] > best_votes:
                best_votes = acc[t, r]
                best_t = t
        state[y0, x0] = 2
        if best_votes < vote_threshold:
            continue

        # walk the best bin's line in both directions from the seed
        dirx = -sin_t[best_t]
        diry = cos_t[best_t]
        x_major = abs(dirx) >= abs(diry)
        if x_major:
            sx = 1 if dirx > 0 else -1
            dstep = diry / abs(dirx)
        else:
            sx = 1 if diry > 0 else -1
            dstep = dirx / abs(diry)

        ex0 = x0
        ey0 = y0
        ex1 = x0
        ey1 = y0
        n_steps0 = 0
        n_steps1 = 0
        for k in range(2):
            sgn = 1 if k == 0 else -1
            gap = 0
            i = 0
            last_i = 0
            ex = x0
            ey = y0
            pf = np.float64(y0) if x_major else np.float64(x0)
            p = x0 if x_major else y0
            while True:
                i += 1
                p += sgn * sx
                pf += sgn * dstep
                q = np.int64(np.floor(pf + 0.5))
                if x_major:
                    cx = p
                    cy = q
                else:
                    cx = q
                    cy = p
                if cx < 0 or cx >= W or cy < 0 or cy >= H:
                    break
                if state[cy, cx] != 0:
                    ex = cx
                    ey = cy
                    last_i = i
                    gap = 0
                else:
                    gap += 1
                    if gap > max_gap:
                        break
            if k == 0:
                ex0 = ex
                ey0 = ey
                n_steps0 = last_i
            else:
                ex1 = ex
                ey1 = ey
                n_steps1 = last_i

        dx = np.float64(ex0 - ex1)
        dy = np.float64(ey0 - ey1)
        good = dx * dx + dy * dy >= min_len2

        # consume the corridor: clear points, un-vote the voted ones
        if state[y0, x0] == 2:
            for t in range(T):
                r = np.int64(np.floor((fx * cos_t[t] + fy * sin_t[t]) / rho_res + 0.5)) + off
                acc[t, r] -= 1
        state[y0, x0] = 0
        for k in range(2):
            sgn = 1 if k == 0 else -1
            n_steps = n_steps0 if k == 0 else n_steps1
            pf = np.float64(y0) if x_major else np.float64(x0)
            p = x0 if x_major else y0
            for i in range(n_steps):
                p += sgn * sx
                pf += sgn * dstep
                q = np.int64(np.floor(pf + 0.5))
                if x_major:
                    cx = p
                    cy = q
                else:
                    cx = q
                    cy = p
                if state[cy, cx] != 0:
                    if state[cy, cx] == 2:
                        gx = np.float64(cx)
                        gy = np.float64(cy)
                        for t in range(T):
                            r = np.int64(np.floor((gx * cos_t[t] + gy * sin_t[t]) / rho_res + 0.5)) + off
                            acc[t, r] -= 1
                    state[cy, cx] = 0

        if good and n_seg < out.shape[0]:
            out[n_seg, 0] = ex1
            out[n_seg, 1] = ey1
            out[n_seg, 2] = ex0
            out[n_seg, 3] = ey0
            n_seg += 1

    return n_seg


@njit(cache=True, parallel=True)
def render_scene(frame, mask, ahead, right, ground, sky_val,
                 cam_x, cam_y, cos_h, sin_h,
                 half_box, corner_r, lane_w, half_line_w,
                 asphalt_val, line_val, off_val, marker_rgb, markers,
                 shadows, glare, contrast, gain,
                 noise_tile, noise_sigma, noise_ox, noise_oy,
                 tex_tile, tex_amp, row_start):
    H, W = mask.shape
    n_markers = markers.shape[0]
    n_shadows = shadows.shape[0]
    n_glare = glare.shape[0]
    for r in prange(row_start, H):
        for c in range(W):
            shade = 1.0
            marker = False
            if ground[r, c]:
                a = ahead[r, c]
                b = right[r, c]
                gx = cam_x + a * cos_h + b * sin_h
                gy = cam_y + a * sin_h - b * cos_h
                ax = abs(gx)
                ay = abs(gy)
                qx = ax - half_box
                qy = ay - half_box
                mx = qx if qx > 0.0 else 0.0
                my = qy if qy > 0.0 else 0.0
                hi = qx if qx > qy else qy
                sd = np.sqrt(mx * mx + my * my) + (hi if hi < 0.0 else 0.0) - corner_r
                line_hit = (abs(sd) <= half_line_w
                            or abs(sd - lane_w) <= half_line_w
                            or abs(sd + lane_w) <= half_line_w)
                if line_hit:
                    val = line_val
                    mask[r, c] = 255
                else:
                    base = asphalt_val if abs(sd) <= lane_w + 0.5 else off_val
                    ix = np.int64(np.floor(gx * 20.0))
                    iy = np.int64(np.floor(gy * 20.0))
                    val = base + np.float64(tex_tile[iy & 511, ix & 511]) * tex_amp
                    for m in range(n_markers):
                        if (markers[m, 0] <= gx and gx <= markers[m, 1]
                                and markers[m, 2] <= gy and gy <= markers[m, 3]):
                            marker = True
                    mask[r, c] = 0
                for s in range(n_shadows):
                    inside = True
                    for e in range(4):
                        x0 = shadows[s, 2 * e]
                        y0 = shadows[s, 2 * e + 1]
                        x1 = shadows[s, (2 * e + 2) % 8]
                        y1 = shadows[s, (2 * e + 3) % 8]
                        if (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0) < 0.0:
                            inside = False
                            break
                    if inside:
                        shade = shade * shadows[s, 8]
            else:
                val = sky_val[r]
                mask[r, c] = 0

            add = 0.0
            for g in range(n_glare):
                dxg = np.float64(c) - glare[g, 0]
                dyg = np.float64(r) - glare[g, 1]
                d2 = dxg * dxg + dyg * dyg
                r2 = glare[g, 2] * glare[g, 2]
                if d2 < r2:
                    add = add + glare[g, 3] * (1.0 - d2 / r2)
            if noise_sigma > 0.0:
                z = np.float64(noise_tile[(r + noise_oy) & 1023, (c + noise_ox) & 1023])
                add = add + noise_sigma * z

            if marker:
                for ch in range(3):
                    v = (marker_rgb[ch] * shade - 128.0) * contrast + 128.0
                    v = v * gain + add
                    iv = np.int64(np.floor(v + 0.5))
                    if iv < 0:
                        iv = 0
                    elif iv > 255:
                        iv = 255
                    frame[r, c, ch] = np.uint8(iv)
            else:
                v = (val * shade - 128.0) * contrast + 128.0
                v = v * gain + add
                iv = np.int64(np.floor(v + 0.5))
                if iv < 0:
                    iv = 0
                elif iv > 255:
                    iv = 255
                u = np.uint8(iv)
                frame[r, c, 0] = u
                frame[r, c, 1] = u
                frame[r, c, 2] = u
