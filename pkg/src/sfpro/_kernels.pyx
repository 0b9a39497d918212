# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recurrent-scan and deep-filter kernels.

Same signatures and semantics as ``sfpro._kernels_py``. Recurrent steps call
BLAS ``dgemm`` for the hidden-state products and plain C loops for the gate
math; the deep filter is plain loops with a fixed summation order.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double x) noexcept nogil:
    return 0.5 * (1.0 + tanh(0.5 * x))


cdef inline void _gemm(char ta, char tb, int m, int n, int k, double* a, int lda,
                       double* b, int ldb, double beta, double* c, int ldc) noexcept nogil:
    # column-major BLAS call; row-major callers pass transposed roles
    cdef double one = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


cdef inline void _rows_times_wt(double* prev, double* w, double* out, int B, int G, int H) noexcept nogil:
    """``out[B, G] = prev[B, H] @ w[G, H].T``."""
    _gemm(b"T", b"N", G, B, H, w, H, prev, H, 0.0, out, G)


cdef inline void _rows_times_w(double* g, double* w, double* out, int B, int G, int H) noexcept nogil:
    """``out[B, H] = g[B, G] @ w[G, H]``."""
    _gemm(b"N", b"N", H, B, G, w, H, g, G, 0.0, out, H)


def _prev_states(h0, hs):
    prev = np.empty_like(hs)
    prev[0] = h0
    prev[1:] = hs[:hs.shape[0] - 1]
    return prev


def gru_forward(double[:, :, ::1] gx, double[:, ::1] w_hh, double[::1] b_hh, double[:, ::1] h0):
    cdef Py_ssize_t T = gx.shape[0], B = gx.shape[1], H = gx.shape[2] // 3
    cdef Py_ssize_t t, bi, j
    hs_a = np.empty((T, B, H)); r_a = np.empty((T, B, H)); z_a = np.empty((T, B, H))
    n_a = np.empty((T, B, H)); ghn_a = np.empty((T, B, H))
    cdef double[:, :, ::1] hs = hs_a, r = r_a, z = z_a, n = n_a, ghn = ghn_a
    gh_a = np.empty((B, 3 * H))
    cdef double[:, ::1] gh = gh_a
    cdef double hp
    cdef double* prev
    with nogil:
        for t in range(T):
            prev = &h0[0, 0] if t == 0 else &hs[t - 1, 0, 0]
            _rows_times_wt(prev, &w_hh[0, 0], &gh[0, 0], B, 3 * H, H)
            for bi in range(B):
                for j in range(H):
                    hp = prev[bi * H + j]
                    r[t, bi, j] = _sig(gx[t, bi, j] + gh[bi, j] + b_hh[j])
                    z[t, bi, j] = _sig(gx[t, bi, H + j] + gh[bi, H + j] + b_hh[H + j])
                    ghn[t, bi, j] = gh[bi, 2 * H + j] + b_hh[2 * H + j]
                    n[t, bi, j] = tanh(gx[t, bi, 2 * H + j] + r[t, bi, j] * ghn[t, bi, j])
                    hs[t, bi, j] = (1.0 - z[t, bi, j]) * n[t, bi, j] + z[t, bi, j] * hp
    return hs_a, r_a, z_a, n_a, ghn_a


def gru_backward(double[:, :, ::1] dhs, double[:, ::1] w_hh, double[:, ::1] h0,
                 double[:, :, ::1] hs, double[:, :, ::1] r, double[:, :, ::1] z,
                 double[:, :, ::1] n, double[:, :, ::1] ghn):
    cdef Py_ssize_t T = dhs.shape[0], B = dhs.shape[1], H = dhs.shape[2]
    cdef Py_ssize_t t, bi, j
    dgx_a = np.empty((T, B, 3 * H)); dgh_a = np.empty((T, B, 3 * H))
    carry_a = np.zeros((B, H)); back_a = np.empty((B, H))
    cdef double[:, :, ::1] dgx = dgx_a, dgh = dgh_a
    cdef double[:, ::1] carry = carry_a, back = back_a
    cdef double dh, hp, dan, daz, dar
    with nogil:
        for t in range(T - 1, -1, -1):
            for bi in range(B):
                for j in range(H):
                    hp = h0[bi, j] if t == 0 else hs[t - 1, bi, j]
                    dh = dhs[t, bi, j] + carry[bi, j]
                    dan = dh * (1.0 - z[t, bi, j]) * (1.0 - n[t, bi, j] * n[t, bi, j])
                    daz = dh * (hp - n[t, bi, j]) * z[t, bi, j] * (1.0 - z[t, bi, j])
                    dar = dan * ghn[t, bi, j] * r[t, bi, j] * (1.0 - r[t, bi, j])
                    dgx[t, bi, j] = dar
                    dgx[t, bi, H + j] = daz
                    dgx[t, bi, 2 * H + j] = dan
                    dgh[t, bi, j] = dar
                    dgh[t, bi, H + j] = daz
                    dgh[t, bi, 2 * H + j] = dan * r[t, bi, j]
                    carry[bi, j] = dh * z[t, bi, j]
            _rows_times_w(&dgh[t, 0, 0], &w_hh[0, 0], &back[0, 0], B, 3 * H, H)
            for bi in range(B):
                for j in range(H):
                    carry[bi, j] += back[bi, j]
    flat = dgh_a.reshape(T * B, 3 * H)
    dw_a = flat.T @ _prev_states(np.asarray(h0), np.asarray(hs)).reshape(T * B, H)
    return dgx_a, dw_a, flat.sum(axis=0), carry_a


def lstm_forward(double[:, :, ::1] gx, double[:, ::1] w_hh, double[::1] b_hh,
                 double[:, ::1] h0, double[:, ::1] c0):
    cdef Py_ssize_t T = gx.shape[0], B = gx.shape[1], H = gx.shape[2] // 4
    cdef Py_ssize_t t, bi, j
    hs_a = np.empty((T, B, H)); cs_a = np.empty((T, B, H)); gates_a = np.empty((T, B, 4 * H))
    cdef double[:, :, ::1] hs = hs_a, cs = cs_a, gates = gates_a
    a_a = np.empty((B, 4 * H))
    cdef double[:, ::1] a = a_a
    cdef double cp
    cdef double* prev
    with nogil:
        for t in range(T):
            prev = &h0[0, 0] if t == 0 else &hs[t - 1, 0, 0]
            _rows_times_wt(prev, &w_hh[0, 0], &a[0, 0], B, 4 * H, H)
            for bi in range(B):
                for j in range(4 * H):
                    a[bi, j] = a[bi, j] + gx[t, bi, j] + b_hh[j]
                for j in range(H):
                    gates[t, bi, j] = _sig(a[bi, j])
                    gates[t, bi, H + j] = _sig(a[bi, H + j])
                    gates[t, bi, 2 * H + j] = tanh(a[bi, 2 * H + j])
                    gates[t, bi, 3 * H + j] = _sig(a[bi, 3 * H + j])
                    cp = c0[bi, j] if t == 0 else cs[t - 1, bi, j]
                    cs[t, bi, j] = gates[t, bi, H + j] * cp + gates[t, bi, j] * gates[t, bi, 2 * H + j]
                    hs[t, bi, j] = gates[t, bi, 3 * H + j] * tanh(cs[t, bi, j])
    return hs_a, cs_a, gates_a


def lstm_backward(double[:, :, ::1] dhs, double[:, ::1] w_hh, double[:, ::1] h0,
                  double[:, ::1] c0, double[:, :, ::1] hs, double[:, :, ::1] cs,
                  double[:, :, ::1] gates):
    cdef Py_ssize_t T = dhs.shape[0], B = dhs.shape[1], H = dhs.shape[2]
    cdef Py_ssize_t t, bi, j
    dgx_a = np.empty((T, B, 4 * H))
    dh_carry_a = np.zeros((B, H)); dc_carry_a = np.zeros((B, H))
    cdef double[:, :, ::1] dgx = dgx_a
    cdef double[:, ::1] dh_carry = dh_carry_a, dc_carry = dc_carry_a
    cdef double gi, gf, gg, go, tc, dh, dc, cp
    with nogil:
        for t in range(T - 1, -1, -1):
            for bi in range(B):
                for j in range(H):
                    gi = gates[t, bi, j]; gf = gates[t, bi, H + j]
                    gg = gates[t, bi, 2 * H + j]; go = gates[t, bi, 3 * H + j]
                    cp = c0[bi, j] if t == 0 else cs[t - 1, bi, j]
                    tc = tanh(cs[t, bi, j])
                    dh = dhs[t, bi, j] + dh_carry[bi, j]
                    dc = dc_carry[bi, j] + dh * go * (1.0 - tc * tc)
                    dgx[t, bi, j] = dc * gg * gi * (1.0 - gi)
                    dgx[t, bi, H + j] = dc * cp * gf * (1.0 - gf)
                    dgx[t, bi, 2 * H + j] = dc * gi * (1.0 - gg * gg)
                    dgx[t, bi, 3 * H + j] = dh * tc * go * (1.0 - go)
                    dc_carry[bi, j] = dc * gf
            _rows_times_w(&dgx[t, 0, 0], &w_hh[0, 0], &dh_carry[0, 0], B, 4 * H, H)
    flat = dgx_a.reshape(T * B, 4 * H)
    dw_a = flat.T @ _prev_states(np.asarray(h0), np.asarray(hs)).reshape(T * B, H)
    return dgx_a, dw_a, flat.sum(axis=0), dh_carry_a, dc_carry_a


def deep_filter_forward(double[:, :, :, :, ::1] hr, double[:, :, :, :, ::1] hi,
                        double[:, :, ::1] xr, double[:, :, ::1] xi, int half_t, int half_f):
    cdef Py_ssize_t B = xr.shape[0], N = xr.shape[1], K = xr.shape[2]
    cdef Py_ssize_t bi, n, k, a, c, sn, sk
    yr_a = np.zeros((B, N, K)); yi_a = np.zeros((B, N, K))
    cdef double[:, :, ::1] yr = yr_a, yi = yi_a
    cdef double accr, acci, h_r, h_i, s_r, s_i
    with nogil:
        for bi in range(B):
            for n in range(N):
                for k in range(K):
                    accr = 0.0
                    acci = 0.0
                    for a in range(2 * half_t + 1):
                        sn = n - (a - half_t)
                        if sn < 0 or sn >= N:
                            continue
                        for c in range(2 * half_f + 1):
                            sk = k - (c - half_f)
                            if sk < 0 or sk >= K:
                                continue
                            h_r = hr[bi, n, k, a, c]; h_i = hi[bi, n, k, a, c]
                            s_r = xr[bi, sn, sk]; s_i = xi[bi, sn, sk]
                            accr = accr + h_r * s_r + h_i * s_i
                            acci = acci + h_r * s_i - h_i * s_r
                    yr[bi, n, k] = accr
                    yi[bi, n, k] = acci
    return yr_a, yi_a


def deep_filter_backward(double[:, :, ::1] gyr, double[:, :, ::1] gyi,
                         double[:, :, :, :, ::1] hr, double[:, :, :, :, ::1] hi,
                         double[:, :, ::1] xr, double[:, :, ::1] xi, int half_t, int half_f):
    cdef Py_ssize_t B = xr.shape[0], N = xr.shape[1], K = xr.shape[2]
    cdef Py_ssize_t bi, n, k, a, c, sn, sk
    ghr_a = np.zeros((B, N, K, 2 * half_t + 1, 2 * half_f + 1))
    ghi_a = np.zeros((B, N, K, 2 * half_t + 1, 2 * half_f + 1))
    gxr_a = np.zeros((B, N, K)); gxi_a = np.zeros((B, N, K))
    cdef double[:, :, :, :, ::1] ghr = ghr_a, ghi = ghi_a
    cdef double[:, :, ::1] gxr = gxr_a, gxi = gxi_a
    cdef double g_r, g_i, h_r, h_i, s_r, s_i
    with nogil:
        for bi in range(B):
            for n in range(N):
                for k in range(K):
                    g_r = gyr[bi, n, k]; g_i = gyi[bi, n, k]
                    for a in range(2 * half_t + 1):
                        sn = n - (a - half_t)
                        if sn < 0 or sn >= N:
                            continue
                        for c in range(2 * half_f + 1):
                            sk = k - (c - half_f)
                            if sk < 0 or sk >= K:
                                continue
                            h_r = hr[bi, n, k, a, c]; h_i = hi[bi, n, k, a, c]
                            s_r = xr[bi, sn, sk]; s_i = xi[bi, sn, sk]
                            ghr[bi, n, k, a, c] = g_r * s_r + g_i * s_i
                            ghi[bi, n, k, a, c] = g_r * s_i - g_i * s_r
                            gxr[bi, sn, sk] += g_r * h_r - g_i * h_i
                            gxi[bi, sn, sk] += g_r * h_i + g_i * h_r
    return ghr_a, ghi_a, gxr_a, gxi_a
