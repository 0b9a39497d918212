"""Pure numpy reference kernels. Signatures mirror the compiled ``_kernels`` module.

Recurrent kernels take input projections already computed for every step
(``gx[T, B, G*H]``) and run only the sequential part. Gate order is
``r, z, n`` for GRU and ``i, f, g, o`` for LSTM.
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_forward(gx, w_hh, b_hh, h0):
    t_len, b, g3 = gx.shape
    h = g3 // 3
    hs = np.empty((t_len, b, h))
    r = np.empty((t_len, b, h))
    z = np.empty((t_len, b, h))
    n = np.empty((t_len, b, h))
    ghn = np.empty((t_len, b, h))
    prev = h0
    for t in range(t_len):
        gh = prev @ w_hh.T + b_hh
        r[t] = _sigmoid(gx[t, :, :h] + gh[:, :h])
        z[t] = _sigmoid(gx[t, :, h:2 * h] + gh[:, h:2 * h])
        ghn[t] = gh[:, 2 * h:]
        n[t] = np.tanh(gx[t, :, 2 * h:] + r[t] * ghn[t])
        prev = hs[t] = (1.0 - z[t]) * n[t] + z[t] * prev
    return hs, r, z, n, ghn


def gru_backward(dhs, w_hh, h0, hs, r, z, n, ghn):
    t_len, b, h = dhs.shape
    dgx = np.empty((t_len, b, 3 * h))
    dw = np.zeros_like(w_hh)
    db = np.zeros(3 * h)
    carry = np.zeros((b, h))
    for t in range(t_len - 1, -1, -1):
        prev = hs[t - 1] if t > 0 else h0
        dh = dhs[t] + carry
        dn = dh * (1.0 - z[t])
        dz = dh * (prev - n[t])
        dan = dn * (1.0 - n[t] * n[t])
        daz = dz * z[t] * (1.0 - z[t])
        dar = dan * ghn[t] * r[t] * (1.0 - r[t])
        dgh = np.concatenate([dar, daz, dan * r[t]], axis=1)
        dgx[t, :, :h] = dar
        dgx[t, :, h:2 * h] = daz
        dgx[t, :, 2 * h:] = dan
        dw += dgh.T @ prev
        db += dgh.sum(axis=0)
        carry = dh * z[t] + dgh @ w_hh
    return dgx, dw, db, carry


def lstm_forward(gx, w_hh, b_hh, h0, c0):
    t_len, b, g4 = gx.shape
    h = g4 // 4
    hs = np.empty((t_len, b, h))
    cs = np.empty((t_len, b, h))
    gates = np.empty((t_len, b, 4 * h))
    hp, cp = h0, c0
    for t in range(t_len):
        a = gx[t] + hp @ w_hh.T + b_hh
        gt = gates[t]
        gt[:, :2 * h] = _sigmoid(a[:, :2 * h])
        gt[:, 2 * h:3 * h] = np.tanh(a[:, 2 * h:3 * h])
        gt[:, 3 * h:] = _sigmoid(a[:, 3 * h:])
        cp = cs[t] = gt[:, h:2 * h] * cp + gt[:, :h] * gt[:, 2 * h:3 * h]
        hp = hs[t] = gt[:, 3 * h:] * np.tanh(cp)
    return hs, cs, gates


def lstm_backward(dhs, w_hh, h0, c0, hs, cs, gates):
    t_len, b, h = dhs.shape
    dgx = np.empty((t_len, b, 4 * h))
    dw = np.zeros_like(w_hh)
    db = np.zeros(4 * h)
    dh_carry = np.zeros((b, h))
    dc_carry = np.zeros((b, h))
    for t in range(t_len - 1, -1, -1):
        hp = hs[t - 1] if t > 0 else h0
        cp = cs[t - 1] if t > 0 else c0
        gi, gf = gates[t, :, :h], gates[t, :, h:2 * h]
        gg, go = gates[t, :, 2 * h:3 * h], gates[t, :, 3 * h:]
        tc = np.tanh(cs[t])
        dh = dhs[t] + dh_carry
        dc = dc_carry + dh * go * (1.0 - tc * tc)
        da = dgx[t]
        da[:, :h] = dc * gg * gi * (1.0 - gi)
        da[:, h:2 * h] = dc * cp * gf * (1.0 - gf)
        da[:, 2 * h:3 * h] = dc * gi * (1.0 - gg * gg)
        da[:, 3 * h:] = dh * tc * go * (1.0 - go)
        dw += da.T @ hp
        db += da.sum(axis=0)
        dh_carry = da @ w_hh
        dc_carry = dc * gf
    return dgx, dw, db, dh_carry, dc_carry


def _tap_slices(n_frames, n_bins, half_t, half_f, a, c):
    # Xp has half_t / half_f zero padding; X(n - l, k - i) with l = a - half_t, i = c - half_f
    t0 = 2 * half_t - a
    f0 = 2 * half_f - c
    return (slice(None), slice(t0, t0 + n_frames), slice(f0, f0 + n_bins))


def deep_filter_forward(hr, hi, xr, xi, half_t, half_f):
    b, n, k = xr.shape
    pad = ((0, 0), (half_t, half_t), (half_f, half_f))
    xpr, xpi = np.pad(xr, pad), np.pad(xi, pad)
    yr = np.zeros((b, n, k))
    yi = np.zeros((b, n, k))
    for a in range(2 * half_t + 1):
        for c in range(2 * half_f + 1):
            sl = _tap_slices(n, k, half_t, half_f, a, c)
            sr, si = xpr[sl], xpi[sl]
            h_r, h_i = hr[..., a, c], hi[..., a, c]
            yr += h_r * sr + h_i * si
            yi += h_r * si - h_i * sr
    return yr, yi


def deep_filter_backward(gyr, gyi, hr, hi, xr, xi, half_t, half_f):
    b, n, k = xr.shape
    pad = ((0, 0), (half_t, half_t), (half_f, half_f))
    xpr, xpi = np.pad(xr, pad), np.pad(xi, pad)
    ghr = np.empty_like(hr)
    ghi = np.empty_like(hi)
    gxpr = np.zeros_like(xpr)
    gxpi = np.zeros_like(xpi)
    for a in range(2 * half_t + 1):
        for c in range(2 * half_f + 1):
            sl = _tap_slices(n, k, half_t, half_f, a, c)
            sr, si = xpr[sl], xpi[sl]
            h_r, h_i = hr[..., a, c], hi[..., a, c]
            ghr[..., a, c] = gyr * sr + gyi * si
            ghi[..., a, c] = gyr * si - gyi * sr
            gxpr[sl] += gyr * h_r - gyi * h_i
            gxpi[sl] += gyr * h_i + gyi * h_r
    inner = (slice(None), slice(half_t, half_t + n), slice(half_f, half_f + k))
    return ghr, ghi, gxpr[inner], gxpi[inner]
