"""Pure numpy fallbacks for the hot kernels.

Same signatures and same elementwise arithmetic as `_numba.py`; the two
backends must stay bit-identical.  The segment extractor keeps python
loops for the sequential walk but vectorizes the voting.
"""

import numpy as np


def median_blur_u8(src, k):
    half = k // 2
    padded = np.pad(src, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    med = np.median(windows.reshape(src.shape[0], src.shape[1], k * k), axis=2)
    return med.astype(np.uint8)


def ppht(state, xs, ys, cos_t, sin_t, rho_res, n_rho, vote_threshold,
         min_len2, max_gap, out):
    H, W = state.shape
    T = cos_t.shape[0]
    off = n_rho // 2
    acc = np.zeros((T, n_rho), np.int32)
    tt = np.arange(T)
    n_seg = 0

    def rho_bins(px, py):
        return (np.floor((px * cos_t + py * sin_t) / rho_res + 0.5).astype(np.int64) + off)

    for idx in range(xs.shape[0]):
        x0 = int(xs[idx])
        y0 = int(ys[idx])
        if state[y0, x0] == 0:
            continue

        bins0 = rho_bins(float(x0), float(y0))
        acc[tt, bins0] += 1
        votes = acc[tt, bins0]
        best_t = int(np.argmax(votes))
        best_votes = int(votes[best_t])
        state[y0, x0] = 2
        if best_votes < vote_threshold:
            continue

        dirx = -sin_t[best_t]
        diry = cos_t[best_t]
        x_major = abs(dirx) >= abs(diry)
        if x_major:
            sx = 1 if dirx > 0 else -1
            dstep = diry / abs(dirx)
        else:
            sx = 1 if diry > 0 else -1
            dstep = dirx / abs(diry)

        ends = []
        steps = []
        for k in range(2):
            sgn = 1 if k == 0 else -1
            gap = 0
            i = 0
            last_i = 0
            ex, ey = x0, y0
            pf = float(y0) if x_major else float(x0)
            p = x0 if x_major else y0
            while True:
                i += 1
                p += sgn * sx
                pf += sgn * dstep
                q = int(np.floor(pf + 0.5))
                cx, cy = (p, q) if x_major else (q, p)
                if cx < 0 or cx >= W or cy < 0 or cy >= H:
                    break
                if state[cy, cx] != 0:
                    ex, ey = cx, cy
                    last_i = i
                    gap = 0
                else:
                    gap += 1
                    if gap > max_gap:
                        break
            ends.append((ex, ey))
            steps.append(last_i)

        dx = float(ends[0][0] - ends[1][0])
        dy = float(ends[0][1] - ends[1][1])
        good = dx * dx + dy * dy >= min_len2

        if state[y0, x0] == 2:
            acc[tt, bins0] -= 1
        state[y0, x0] = 0
        for k in range(2):
            sgn = 1 if k == 0 else -1
            pf = float(y0) if x_major else float(x0)
            p = x0 if x_major else y0
            for i in range(steps[k]):
                p += sgn * sx
                pf += sgn * dstep
                q = int(np.floor(pf + 0.5))
                cx, cy = (p, q) if x_major else (q, p)
                if state[cy, cx] != 0:
                    if state[cy, cx] == 2:
                        acc[tt, rho_bins(float(cx), float(cy))] -= 1
                    state[cy, cx] = 0

        if good and n_seg < out.shape[0]:
            out[n_seg, 0] = ends[1][0]
            out[n_seg, 1] = ends[1][1]
            out[n_seg, 2] = ends[0][0]
            out[n_seg, 3] = ends[0][1]
            n_seg += 1

    return n_seg


def render_scene(frame, mask, ahead, right, ground, sky_val,
                 cam_x, cam_y, cos_h, sin_h,
                 half_box, corner_r, lane_w, half_line_w,
                 asphalt_val, line_val, off_val, marker_rgb, markers,
                 shadows, glare, contrast, gain,
                 noise_tile, noise_sigma, noise_ox, noise_oy,
                 tex_tile, tex_amp, row_start):
    H, W = mask.shape
    sl = slice(row_start, H)
    g_ahead = ahead[sl]
    g_right = right[sl]
    grd = ground[sl]
    gx = cam_x + g_ahead * cos_h + g_right * sin_h
    gy = cam_y + g_ahead * sin_h - g_right * cos_h
    ax = np.abs(gx)
    ay = np.abs(gy)
    qx = ax - half_box
    qy = ay - half_box
    mx = np.maximum(qx, 0.0)
    my = np.maximum(qy, 0.0)
    sd = np.sqrt(mx * mx + my * my) + np.minimum(np.maximum(qx, qy), 0.0) - corner_r
    line_hit = ((np.abs(sd) <= half_line_w)
                | (np.abs(sd - lane_w) <= half_line_w)
                | (np.abs(sd + lane_w) <= half_line_w))
    line_hit &= grd

    ix = np.floor(gx * 20.0).astype(np.int64)
    iy = np.floor(gy * 20.0).astype(np.int64)
    tex = tex_tile[iy & 511, ix & 511].astype(np.float64)
    base = np.where(np.abs(sd) <= lane_w + 0.5, asphalt_val, off_val) + tex * tex_amp
    val = np.where(line_hit, line_val, base)
    val = np.where(grd, val, np.broadcast_to(sky_val[sl, None], grd.shape))

    marker = np.zeros(grd.shape, bool)
    for m in range(markers.shape[0]):
        marker |= ((markers[m, 0] <= gx) & (gx <= markers[m, 1])
                   & (markers[m, 2] <= gy) & (gy <= markers[m, 3]))
    marker &= grd & ~line_hit

    shade = np.ones(grd.shape, np.float64)
    for s in range(shadows.shape[0]):
        inside = grd.copy()
        for e in range(4):
            x0 = shadows[s, 2 * e]
            y0 = shadows[s, 2 * e + 1]
            x1 = shadows[s, (2 * e + 2) % 8]
            y1 = shadows[s, (2 * e + 3) % 8]
            inside &= (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0) >= 0.0
        shade[inside] = shade[inside] * shadows[s, 8]

    add = np.zeros(grd.shape, np.float64)
    if glare.shape[0] > 0:
        cols_f = np.arange(W, dtype=np.float64)[None, :]
        rows_f = np.arange(row_start, H, dtype=np.float64)[:, None]
        for g in range(glare.shape[0]):
            dxg = cols_f - glare[g, 0]
            dyg = rows_f - glare[g, 1]
            d2 = dxg * dxg + dyg * dyg
            r2 = glare[g, 2] * glare[g, 2]
            add = add + np.where(d2 < r2, glare[g, 3] * (1.0 - d2 / r2), 0.0)
    if noise_sigma > 0.0:
        rows_i = (np.arange(row_start, H) + noise_oy) & 1023
        cols_i = (np.arange(W) + noise_ox) & 1023
        z = noise_tile[np.ix_(rows_i, cols_i)].astype(np.float64)
        add = add + noise_sigma * z

    v = (val * shade - 128.0) * contrast + 128.0
    v = v * gain + add
    iv = np.floor(v + 0.5)
    np.clip(iv, 0, 255, out=iv)
    u = iv.astype(np.uint8)
    for ch in range(3):
        frame[sl, :, ch] = u
    if marker.any():
        for ch in range(3):
            vm = (marker_rgb[ch] * shade[marker] - 128.0) * contrast + 128.0
            vm = vm * gain + add[marker]
            ivm = np.floor(vm + 0.5)
            np.clip(ivm, 0, 255, out=ivm)
            frame[sl, :, ch][marker] = ivm.astype(np.uint8)
    mask[sl] = np.where(line_hit, 255, 0).astype(np.uint8)
