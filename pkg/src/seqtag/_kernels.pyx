# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_kernels_py``; same signatures."""
import numpy as np

from libc.math cimport exp, log, tanh
from scipy.linalg.cython_blas cimport dgemm

BACKEND = "cython"


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline void _gemm(char ta, char tb, int m, int n, int k, double* a, int lda,
                       double* b, int ldb, double beta, double* c, int ldc) noexcept nogil:
    """Column-major C = op(A) op(B) + beta C; callers pass row-major buffers
    and read the result through the transpose identities noted inline."""
    cdef double one = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


def gru_forward(double[:, :, ::1] xr, double[:, :, ::1] xz, double[:, :, ::1] xh,
                double[:, ::1] w_rh, double[:, ::1] w_zh, double[:, ::1] w_hh,
                lengths):
    cdef Py_ssize_t B = xr.shape[0], T = xr.shape[1], H = xr.shape[2]
    cdef Py_ssize_t b, t, i
    cdef int iB = <int>B, iH = <int>H
    h_arr = np.zeros((B, T, H))
    r_arr = np.zeros((B, T, H))
    z_arr = np.zeros((B, T, H))
    hc_arr = np.zeros((B, T, H))
    if B == 0 or T == 0 or H == 0:
        return h_arr, r_arr, z_arr, hc_arr
    cdef double[:, :, ::1] h = h_arr, r = r_arr, z = z_arr, hc = hc_arr
    cdef long long[::1] lens = np.ascontiguousarray(lengths, dtype=np.int64)
    # contiguous (B, H) work buffers for the current step
    cdef double[:, ::1] hp = np.zeros((B, H))
    cdef double[:, ::1] pr = np.zeros((B, H))
    cdef double[:, ::1] pz = np.zeros((B, H))
    cdef double[:, ::1] rh = np.zeros((B, H))
    cdef double[:, ::1] ph = np.zeros((B, H))
    cdef double rt, zt, ct, ht
    with nogil:
        for t in range(T):
            # row-major hp @ W.T  ==  column-major W^T(view) transposed times hp
            _gemm(b'T', b'N', iH, iB, iH, &w_rh[0, 0], iH, &hp[0, 0], iH, 0.0, &pr[0, 0], iH)
            _gemm(b'T', b'N', iH, iB, iH, &w_zh[0, 0], iH, &hp[0, 0], iH, 0.0, &pz[0, 0], iH)
            for b in range(B):
                for i in range(H):
                    rt = _sigmoid(xr[b, t, i] + pr[b, i])
                    pr[b, i] = rt
                    rh[b, i] = rt * hp[b, i]
            _gemm(b'T', b'N', iH, iB, iH, &w_hh[0, 0], iH, &rh[0, 0], iH, 0.0, &ph[0, 0], iH)
            for b in range(B):
                if lens[b] <= t:
                    continue
                for i in range(H):
                    zt = _sigmoid(xz[b, t, i] + pz[b, i])
                    ct = tanh(xh[b, t, i] + ph[b, i])
                    ht = zt * hp[b, i] + (1.0 - zt) * ct
                    r[b, t, i] = pr[b, i]
                    z[b, t, i] = zt
                    hc[b, t, i] = ct
                    h[b, t, i] = ht
                    hp[b, i] = ht
    return h_arr, r_arr, z_arr, hc_arr


def gru_backward(double[:, :, ::1] h, double[:, :, ::1] r, double[:, :, ::1] z,
                 double[:, :, ::1] hc, lengths,
                 double[:, ::1] w_rh, double[:, ::1] w_zh, double[:, ::1] w_hh,
                 double[:, :, ::1] dh,
                 double[:, ::1] dw_rh, double[:, ::1] dw_zh, double[:, ::1] dw_hh):
    cdef Py_ssize_t B = h.shape[0], T = h.shape[1], H = h.shape[2]
    cdef Py_ssize_t b, t, i
    cdef int iB = <int>B, iH = <int>H
    dxr_arr = np.zeros((B, T, H))
    dxz_arr = np.zeros((B, T, H))
    dxh_arr = np.zeros((B, T, H))
    if B == 0 or T == 0 or H == 0:
        return dxr_arr, dxz_arr, dxh_arr
    cdef double[:, :, ::1] dxr = dxr_arr, dxz = dxz_arr, dxh = dxh_arr
    cdef long long[::1] lens = np.ascontiguousarray(lengths, dtype=np.int64)
    cdef double[:, ::1] d = np.zeros((B, H))
    cdef double[:, ::1] d_next = np.zeros((B, H))
    cdef double[:, ::1] d_prev = np.zeros((B, H))
    cdef double[:, ::1] hp = np.zeros((B, H))
    cdef double[:, ::1] rh = np.zeros((B, H))
    cdef double[:, ::1] dar = np.zeros((B, H))
    cdef double[:, ::1] daz = np.zeros((B, H))
    cdef double[:, ::1] dah = np.zeros((B, H))
    cdef double[:, ::1] d_rh = np.zeros((B, H))
    cdef double zt, ct, rt, dv
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for i in range(H):
                    hp[b, i] = h[b, t - 1, i] if t > 0 else 0.0
                    dv = dh[b, t, i] + d_next[b, i] if lens[b] > t else 0.0
                    zt = z[b, t, i]
                    ct = hc[b, t, i]
                    d[b, i] = dv
                    daz[b, i] = dv * (hp[b, i] - ct) * zt * (1.0 - zt)
                    dah[b, i] = dv * (1.0 - zt) * (1.0 - ct * ct)
                    rh[b, i] = r[b, t, i] * hp[b, i]
            # row-major d_rh = dah @ W_hh
            _gemm(b'N', b'N', iH, iB, iH, &w_hh[0, 0], iH, &dah[0, 0], iH, 0.0, &d_rh[0, 0], iH)
            for b in range(B):
                for i in range(H):
                    rt = r[b, t, i]
                    dar[b, i] = d_rh[b, i] * hp[b, i] * rt * (1.0 - rt)
                    d_prev[b, i] = d[b, i] * z[b, t, i] + d_rh[b, i] * rt
                    dxr[b, t, i] = dar[b, i]
                    dxz[b, t, i] = daz[b, i]
                    dxh[b, t, i] = dah[b, i]
            # row-major dW += dA.T @ X  ==  column-major dW^T += X^T(view) dA
            _gemm(b'N', b'T', iH, iH, iB, &rh[0, 0], iH, &dah[0, 0], iH, 1.0, &dw_hh[0, 0], iH)
            _gemm(b'N', b'T', iH, iH, iB, &hp[0, 0], iH, &dar[0, 0], iH, 1.0, &dw_rh[0, 0], iH)
            _gemm(b'N', b'T', iH, iH, iB, &hp[0, 0], iH, &daz[0, 0], iH, 1.0, &dw_zh[0, 0], iH)
            _gemm(b'N', b'N', iH, iB, iH, &w_rh[0, 0], iH, &dar[0, 0], iH, 1.0, &d_prev[0, 0], iH)
            _gemm(b'N', b'N', iH, iB, iH, &w_zh[0, 0], iH, &daz[0, 0], iH, 1.0, &d_prev[0, 0], iH)
            for b in range(B):
                if lens[b] > t:
                    for i in range(H):
                        d_next[b, i] = d_prev[b, i]
    return dxr_arr, dxz_arr, dxh_arr


cdef inline double _lse2(double a, double b) nogil:
    if a > b:
        return a + log(1.0 + exp(b - a))
    return b + log(1.0 + exp(a - b))


def crf_forward_backward(double[:, :, ::1] emissions, lengths,
                         double[:, ::1] transitions, double[::1] initial):
    cdef Py_ssize_t B = emissions.shape[0], T = emissions.shape[1], L = emissions.shape[2]
    cdef Py_ssize_t b, t, i, j, n
    log_z_arr = np.zeros(B)
    node_arr = np.zeros((B, T, L))
    edge_arr = np.zeros((L, L))
    cdef double[::1] log_z = log_z_arr
    cdef double[:, :, ::1] node = node_arr
    cdef double[:, ::1] edge = edge_arr
    cdef long long[::1] lens = np.ascontiguousarray(lengths, dtype=np.int64)
    cdef double[:, ::1] alpha = np.zeros((max(T, 1), L))
    cdef double[:, ::1] beta = np.zeros((max(T, 1), L))
    cdef double m, s, v, lz
    with nogil:
        for b in range(B):
            n = lens[b]
            for j in range(L):
                alpha[0, j] = initial[j] + emissions[b, 0, j]
            for t in range(1, n):
                for j in range(L):
                    m = alpha[t - 1, 0] + transitions[0, j]
                    for i in range(1, L):
                        v = alpha[t - 1, i] + transitions[i, j]
                        if v > m:
                            m = v
                    s = 0.0
                    for i in range(L):
                        s = s + exp(alpha[t - 1, i] + transitions[i, j] - m)
                    alpha[t, j] = m + log(s) + emissions[b, t, j]
            for j in range(L):
                beta[n - 1, j] = 0.0
            for t in range(n - 2, -1, -1):
                for i in range(L):
                    m = transitions[i, 0] + emissions[b, t + 1, 0] + beta[t + 1, 0]
                    for j in range(1, L):
                        v = transitions[i, j] + emissions[b, t + 1, j] + beta[t + 1, j]
                        if v > m:
                            m = v
                    s = 0.0
                    for j in range(L):
                        s = s + exp(transitions[i, j] + emissions[b, t + 1, j] + beta[t + 1, j] - m)
                    beta[t, i] = m + log(s)
            m = alpha[n - 1, 0]
            for j in range(1, L):
                if alpha[n - 1, j] > m:
                    m = alpha[n - 1, j]
            s = 0.0
            for j in range(L):
                s = s + exp(alpha[n - 1, j] - m)
            lz = m + log(s)
            log_z[b] = lz
            for t in range(n):
                for j in range(L):
                    node[b, t, j] = exp(alpha[t, j] + beta[t, j] - lz)
            for t in range(1, n):
                for i in range(L):
                    for j in range(L):
                        edge[i, j] += exp(alpha[t - 1, i] + transitions[i, j]
                                          + emissions[b, t, j] + beta[t, j] - lz)
    return log_z_arr, node_arr, edge_arr


def crf_viterbi(double[:, :, ::1] emissions, lengths,
                double[:, ::1] transitions, double[::1] initial):
    cdef Py_ssize_t B = emissions.shape[0], T = emissions.shape[1], L = emissions.shape[2]
    cdef Py_ssize_t b, t, i, j, n, best
    tags_arr = np.zeros((B, T), dtype=np.int64)
    scores_arr = np.zeros(B)
    cdef long long[:, ::1] tags = tags_arr
    cdef double[::1] scores = scores_arr
    cdef long long[::1] lens = np.ascontiguousarray(lengths, dtype=np.int64)
    cdef long long[:, ::1] back = np.zeros((max(T, 1), L), dtype=np.int64)
    cdef double[::1] delta = np.zeros(L)
    cdef double[::1] prev = np.zeros(L)
    cdef double m, v
    with nogil:
        for b in range(B):
            n = lens[b]
            for j in range(L):
                delta[j] = initial[j] + emissions[b, 0, j]
            for t in range(1, n):
                for j in range(L):
                    prev[j] = delta[j]
                for j in range(L):
                    best = 0
                    m = prev[0] + transitions[0, j]
                    for i in range(1, L):
                        v = prev[i] + transitions[i, j]
                        if v > m:
                            m = v
                            best = i
                    back[t, j] = best
                    delta[j] = m + emissions[b, t, j]
            best = 0
            for j in range(1, L):
                if delta[j] > delta[best]:
                    best = j
            scores[b] = delta[best]
            tags[b, n - 1] = best
            for t in range(n - 1, 0, -1):
                best = back[t, best]
                tags[b, t - 1] = best
    return tags_arr, scores_arr
