# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled active-set core. Same contract and pivoting rules as the numpy
fallback in _asqp_py; only the inner loops differ."""

from libc.math cimport fabs, sqrt

import numpy as np

OPTIMAL = 0
ITERATION_CAP = 1
NUMERICAL = 2


cdef int _chol(double[:, :] a, int n) nogil:
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if s <= 0.0:
            return -1
        a[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= a[i, k] * a[j, k]
            a[i, j] = s / a[j, j]
    return 0


cdef void _chol_solve(double[:, :] l, double[:] x, int n) nogil:
    cdef int i, k
    cdef double s
    for i in range(n):
        s = x[i]
        for k in range(i):
            s -= l[i, k] * x[k]
        x[i] = s / l[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s -= l[k, i] * x[k]
        x[i] = s / l[i, i]


cdef double _dot_row(double[:, ::1] a, int row, double[:] v, int n) nogil:
    cdef int j
    cdef double s = 0.0
    for j in range(n):
        s += a[row, j] * v[j]
    return s


cdef int _polish(double[:, ::1] h, double[:, :] l, double[:, ::1] a,
                 double[::1] b, double[::1] f, double[:, ::1] hinv_at,
                 double[:, :] sfac, int[::1] w, int nw,
                 double[::1] z, double[::1] lam_w, double[::1] r1,
                 double[::1] work_k, double[::1] work_n, int n) nogil:
    """Re-solve the equality-constrained problem at the final working set,
    then one iterative-refinement pass. sfac holds the Cholesky factor of the
    current Schur complement when nw > 0."""
    cdef int i, j
    cdef double s
    for i in range(n):
        work_n[i] = f[i]
    _chol_solve(l, work_n, n)          # H^{-1} f
    if nw == 0:
        for i in range(n):
            z[i] = -work_n[i]
    else:
        for i in range(nw):
            lam_w[i] = -(b[w[i]] + _dot_row(a, w[i], work_n, n))
        _chol_solve(sfac, lam_w[:nw], nw)
        for i in range(n):
            s = -work_n[i]
            for j in range(nw):
                s -= hinv_at[i, w[j]] * lam_w[j]
            z[i] = s

    # One refinement pass: r1 = H z + f + A_w^T lam, r2 = A_w z - b_w.
    for i in range(n):
        s = f[i]
        for j in range(n):
            s += h[i, j] * z[j]
        for j in range(nw):
            s += a[w[j], i] * lam_w[j]
        r1[i] = s
        work_n[i] = s
    _chol_solve(l, work_n, n)          # H^{-1} r1
    if nw > 0:
        for i in range(nw):
            work_k[i] = (_dot_row(a, w[i], z, n) - b[w[i]]
                         - _dot_row(a, w[i], work_n, n))
        _chol_solve(sfac, work_k[:nw], nw)
        for i in range(n):
            s = r1[i]
            for j in range(nw):
                s += a[w[j], i] * work_k[j]
            work_n[i] = s
        _chol_solve(l, work_n, n)
        for i in range(n):
            z[i] -= work_n[i]
        for i in range(nw):
            lam_w[i] += work_k[i]
    else:
        for i in range(n):
            z[i] -= work_n[i]
    return 0


def iterate(h_in, f_in, a_in, b_in, z0_in, w0_in, int max_iter):
    """Primal active-set loop; see _asqp_py.iterate for the contract."""
    f_arr = np.ascontiguousarray(f_in, dtype=np.float64).ravel()
    cdef int n = f_arr.shape[0]
    cdef int mi = len(b_in)
    if mi:
        a_arr = np.ascontiguousarray(a_in, dtype=np.float64).reshape(mi, n)
        b_arr = np.ascontiguousarray(b_in, dtype=np.float64).ravel()
    else:
        a_arr = np.zeros((0, n))
        b_arr = np.zeros(0)
    cdef double[:, ::1] h = np.ascontiguousarray(h_in, dtype=np.float64)
    cdef double[::1] f = f_arr
    cdef double[:, ::1] a = a_arr
    cdef double[::1] b = b_arr

    z_arr = np.array(z0_in, dtype=np.float64).ravel()
    cdef double[::1] z = z_arr
    lam_arr = np.zeros(mi)
    cdef double[::1] lam_full = lam_arr

    cdef double[:, :] l = np.array(h_in, dtype=np.float64, order="C")
    if _chol(l, n) != 0:
        return z_arr, lam_arr, np.zeros(0, dtype=np.intp), NUMERICAL, 0

    # hinv_at[:, j] = H^{-1} a_j for every row j, reused all through the loop.
    cdef double[:, ::1] hinv_at = np.zeros((n, max(mi, 1)))
    cdef double[::1] col = np.zeros(n)
    cdef int i, j, k, it
    for j in range(mi):
        for i in range(n):
            col[i] = a[j, i]
        _chol_solve(l, col, n)
        for i in range(n):
            hinv_at[i, j] = col[i]

    cdef int[::1] w = np.zeros(mi + 1, dtype=np.intc)
    cdef unsigned char[::1] in_w = np.zeros(mi + 1, dtype=np.uint8)
    cdef unsigned char[::1] excluded = np.zeros(mi + 1, dtype=np.uint8)
    cdef int nw = 0
    for j in range(len(w0_in)):
        k = int(w0_in[j])
        if 0 <= k < mi and not in_w[k]:
            w[nw] = k
            in_w[k] = 1
            nw += 1

    cdef double[::1] g = np.zeros(n)
    cdef double[::1] hg = np.zeros(n)
    cdef double[::1] p = np.zeros(n)
    sfac_arr = np.zeros((mi + 1, mi + 1))
    cdef double[:, ::1] sfac_full = sfac_arr
    cdef double[::1] lam_w = np.zeros(mi + 1)
    cdef double[::1] work_k = np.zeros(mi + 1)
    cdef double[::1] vbuf = np.zeros(mi + 1)
    cdef double[::1] work_n = np.zeros(n)

    cdef double s, pmax, zmax, dual_scale, lam_min, alpha, d, slack, r, amax
    cdef double q_new, rho
    cdef int drop, blocker, status, dependent
    cdef int stall = 0
    cdef int full_step = 0

    for it in range(1, max_iter + 1):
        for i in range(n):
            s = f[i]
            for j in range(n):
                s += h[i, j] * z[j]
            g[i] = s
            hg[i] = s
        _chol_solve(l, hg, n)

        if nw > 0:
            for i in range(nw):
                for j in range(i + 1):
                    s = 0.0
                    for k in range(n):
                        s += a[w[i], k] * hinv_at[k, w[j]]
                    sfac_full[i, j] = s
                    sfac_full[j, i] = s
            if _chol(sfac_full[:nw, :nw], nw) != 0:
                return (z_arr, lam_arr, np.array(w[:nw], dtype=np.intp),
                        NUMERICAL, it)
            for i in range(nw):
                lam_w[i] = -_dot_row(a, w[i], hg, n)
            _chol_solve(sfac_full[:nw, :nw], lam_w[:nw], nw)
            for i in range(n):
                s = -hg[i]
                for j in range(nw):
                    s -= hinv_at[i, w[j]] * lam_w[j]
                p[i] = s
        else:
            for i in range(n):
                p[i] = -hg[i]

        pmax = 0.0
        zmax = 0.0
        for i in range(n):
            if fabs(p[i]) > pmax:
                pmax = fabs(p[i])
            if fabs(z[i]) > zmax:
                zmax = fabs(z[i])

        # After an unblocked full step the iterate already minimizes over
        # the current working set, so go straight to the multiplier test: the
        # recomputed step there is pure roundoff and can sit above the
        # stationarity tolerance when the multipliers are large.
        if full_step or pmax <= 1e-11 * (1.0 + zmax):
            full_step = 0
            dual_scale = 1.0
            lam_min = 0.0
            drop = -1
            for i in range(nw):
                if fabs(lam_w[i]) + 1.0 > dual_scale:
                    dual_scale = 1.0 + fabs(lam_w[i])
                if lam_w[i] < lam_min:
                    lam_min = lam_w[i]
                    drop = i
            if stall > mi + n + 10 and lam_min < -1e-9 * dual_scale:
                # Bland's rule after a degenerate stall: lowest constraint
                # index among the negative multipliers.
                drop = -1
                for i in range(nw):
                    if lam_w[i] < -1e-9 * dual_scale and (
                            drop < 0 or w[i] < w[drop]):
                        drop = i
            if nw == 0 or lam_min >= -1e-9 * dual_scale:
                status = _polish(h, l, a, b, f, hinv_at,
                                 sfac_full[:nw, :nw], w, nw, z, lam_w, hg,
                                 work_k, work_n, n)
                if status != 0:
                    return (z_arr, lam_arr, np.array(w[:nw], dtype=np.intp),
                            NUMERICAL, it)
                for i in range(nw):
                    lam_full[w[i]] = lam_w[i] if lam_w[i] > 0.0 else 0.0
                return (z_arr, lam_arr, np.array(w[:nw], dtype=np.intp),
                        OPTIMAL, it)
            in_w[w[drop]] = 0
            for i in range(drop, nw - 1):
                w[i] = w[i + 1]
            nw -= 1
            continue

        # Blocking scan. A blocker in the span of the working rows cannot
        # truly block: A_w p = 0 forces its slack derivative to zero, so
        # any measured step ratio is roundoff. Adding it would also make
        # the KKT system singular; exclude it and rescan. The next Schur
        # pivot rho reuses the factor left in sfac_full.
        for i in range(mi):
            excluded[i] = 0
        while True:
            alpha = 1.0
            blocker = -1
            for i in range(mi):
                if in_w[i] or excluded[i]:
                    continue
                d = _dot_row(a, i, p, n)
                amax = 0.0
                for j in range(n):
                    if fabs(a[i, j]) > amax:
                        amax = fabs(a[i, j])
                if d <= 1e-13 * (1.0 + pmax * amax):
                    continue
                slack = b[i] - _dot_row(a, i, z, n)
                if slack < 0.0:
                    slack = 0.0
                r = slack / d
                if r < alpha:
                    alpha = r
                    blocker = i
            if blocker >= 0:
                q_new = 0.0
                for i in range(n):
                    q_new += a[blocker, i] * hinv_at[i, blocker]
                dependent = 0
                if nw > 0:
                    for i in range(nw):
                        s = 0.0
                        for j in range(n):
                            s += a[w[i], j] * hinv_at[j, blocker]
                        vbuf[i] = s
                        work_k[i] = s
                    _chol_solve(sfac_full[:nw, :nw], work_k[:nw], nw)
                    rho = q_new
                    for i in range(nw):
                        rho -= vbuf[i] * work_k[i]
                    if rho <= 1e-12 * q_new:
                        dependent = 1
                elif q_new <= 0.0:
                    dependent = 1
                if dependent:
                    excluded[blocker] = 1
                    continue
            break
        for i in range(n):
            z[i] = z[i] + alpha * p[i]
        stall = stall + 1 if alpha <= 1e-14 else 0
        full_step = 1 if blocker < 0 else 0
        if blocker >= 0:
            w[nw] = blocker
            in_w[blocker] = 1
            nw += 1

    return z_arr, lam_arr, np.array(w[:nw], dtype=np.intp), ITERATION_CAP, max_iter
