# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log1p, log2, sqrt, INFINITY

cnp.import_array()

cdef double LN2 = 0.6931471805599453
cdef double RHO_EPS = 1e-12

CONVERGED = 0
MAX_INNER = 1


cdef inline double _h(double alpha, double L_tilde, double L0) nogil:
    cdef double x = alpha * L_tilde
    cdef double t
    if x <= 1.0:
        return 0.0
    t = x - 1.0
    return (L_tilde / L0) * (log1p(t) - t / x) / LN2


def h_value(double alpha, double L_tilde, double L0):
    return _h(alpha, L_tilde, L0)


cdef double _takeover(double alpha, double target, double L0) nogil:
    cdef double c = target * alpha * L0 * LN2
    cdef double t, f, step
    cdef int i
    if c <= 0.0:
        return 1.0 / alpha
    t = sqrt(2.0 * c) + c
    while (1.0 + t) * log1p(t) - t < c:
        t *= 2.0
    for i in range(200):
        f = (1.0 + t) * log1p(t) - t - c
        step = f / log1p(t)
        if step <= 1e-16 * t:
            break
        t -= step
    return (1.0 + t) / alpha


def takeover_level(double alpha, double target, double L0):
    return _takeover(alpha, target, L0)


cdef double _dc_level(double[::1] alpha_row, double[::1] weights, double R):
    cdef Py_ssize_t N = alpha_row.shape[0]
    cdef Py_ssize_t n, j, cnt = 0
    cdef double cw = 0.0, cl = 0.0, la, log2L, best = INFINITY
    keys = np.empty(N)
    cdef double[::1] kv = keys
    idx_buf = np.empty(N, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_buf
    for n in range(N):
        if weights[n] > RHO_EPS:
            idx[cnt] = n
            kv[cnt] = -alpha_row[n]
            cnt += 1
    if cnt == 0:
        return INFINITY
    cdef Py_ssize_t[::1] order = np.argsort(keys[:cnt], kind="stable")
    for j in range(cnt):
        n = idx[order[j]]
        la = log2(alpha_row[n])
        cw += weights[n]
        cl += weights[n] * la
        log2L = (R - cl) / cw
        if la + log2L > 0.0:
            best = log2L
    return 2.0 ** best


def dc_level(alpha_row, weights, double R):
    return _dc_level(np.ascontiguousarray(alpha_row, dtype=float),
                     np.ascontiguousarray(weights, dtype=float), R)


cdef inline double _rate(double[:, ::1] alpha, double[:, ::1] rho, Py_ssize_t k, double L) nogil:
    cdef Py_ssize_t n, N = alpha.shape[1]
    cdef double tot = 0.0, x
    for n in range(N):
        if rho[k, n] > 0.0:
            x = L * alpha[k, n]
            if x > 1.0:
                tot += rho[k, n] * log2(x)
    return tot


cdef inline void _h_row(double[:, ::1] alpha, double[:, ::1] hdc, Py_ssize_t k,
                        double L, double L0) nogil:
    cdef Py_ssize_t n
    for n in range(alpha.shape[1]):
        hdc[k, n] = _h(alpha[k, n], L, L0)


cdef inline Py_ssize_t _owner(Py_ssize_t n, Py_ssize_t exclude, Py_ssize_t K1,
                              double[:, ::1] hdc, double[::1] h_ndc,
                              Py_ssize_t[::1] ndc_best, double* bestv_out) nogil:
    cdef Py_ssize_t best = -1, k
    cdef double bestv = 0.0
    for k in range(K1):
        if k != exclude and hdc[k, n] > bestv:
            best = k
            bestv = hdc[k, n]
    if ndc_best[n] >= 0 and h_ndc[n] > bestv:
        best = ndc_best[n]
        bestv = h_ndc[n]
    if best < 0:
        if ndc_best[n] >= 0:
            best = ndc_best[n]
        else:
            for k in range(K1):
                if k != exclude:
                    best = k
                    break
    bestv_out[0] = bestv
    return best


def inner_solve(alpha_in, Py_ssize_t K1, R_in, double L0, double delta,
                double rate_tol, long max_inner, long trim_passes):
    cdef double[:, ::1] alpha = np.ascontiguousarray(alpha_in, dtype=float)
    cdef double[::1] R = np.ascontiguousarray(R_in, dtype=float)
    cdef Py_ssize_t K = alpha.shape[0], N = alpha.shape[1]
    cdef Py_ssize_t n, k, ks, j, m, c, w, navail, jbest
    cdef double d, worst, hc, x, r_m, rest, f, lbest, tmp

    nb = np.full(N, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] ndc_best = nb
    hn = np.zeros(N)
    cdef double[::1] h_ndc = hn
    if K > K1:
        nb[:] = K1 + np.argmax(np.asarray(alpha)[K1:], axis=0)
        for n in range(N):
            h_ndc[n] = _h(alpha[ndc_best[n], n], L0, L0)

    Larr = np.empty(K1)
    cdef double[::1] L = Larr
    ones = np.ones(N)
    for k in range(K1):
        L[k] = _dc_level(alpha[k], ones, R[k])
    harr = np.empty((K1, N))
    cdef double[:, ::1] hdc = harr
    for k in range(K1):
        _h_row(alpha, hdc, k, L[k], L0)
    rarr = np.zeros((K, N))
    cdef double[:, ::1] rho = rarr
    for n in range(N):
        w = _owner(n, -1, K1, hdc, h_ndc, ndc_best, &tmp)
        rho[w, n] = 1.0
    if K1 == 0:
        return Larr, rarr, 0, CONVERGED

    Rp_arr = np.zeros(K1)
    cdef double[::1] Rp = Rp_arr
    tol_arr = rate_tol * np.asarray(R)
    cdef double[::1] tol = tol_arr
    avail_buf = np.empty(N, dtype=np.intp)
    cdef Py_ssize_t[::1] avail = avail_buf
    comp_buf = np.empty(N, dtype=np.intp)
    cdef Py_ssize_t[::1] comp = comp_buf
    Ln_buf = np.empty(N)
    cdef double[::1] Ln = Ln_buf
    col_buf = np.empty(K)
    cdef double[::1] col_old = col_buf
    cdef double sw
    cdef long iterations = 0
    status = CONVERGED

    while True:
        for k in range(K1):
            Rp[k] = _rate(alpha, rho, k, L[k])
            if iterations < trim_passes and Rp[k] > R[k] + tol[k]:
                L[k] = _dc_level(alpha[k], rho[k], R[k])
                _h_row(alpha, hdc, k, L[k], L0)
                Rp[k] = _rate(alpha, rho, k, L[k])
        ks = -1
        worst = 0.0
        for k in range(K1):
            d = Rp[k] - R[k]
            if d < -tol[k] and (ks < 0 or d < worst):
                ks = k
                worst = d
        if ks < 0:
            # settle any overshoot once rho is final
            for k in range(K1):
                if Rp[k] > R[k] + tol[k]:
                    L[k] = _dc_level(alpha[k], rho[k], R[k])
            break
        iterations += 1
        if iterations > max_inner:
            status = MAX_INNER
            break

        navail = 0
        for n in range(N):
            if rho[ks, n] < 1.0:
                avail[navail] = n
                c = _owner(n, ks, K1, hdc, h_ndc, ndc_best, &hc)
                comp[n] = c
                Ln[n] = _takeover(alpha[ks, n], (1.0 + delta) * hc, L0)
                if Ln[n] < L[ks]:
                    Ln[n] = L[ks]
                navail += 1

        m = -1
        while Rp[ks] < R[ks] - tol[ks] and navail > 0:
            jbest = 0
            lbest = Ln[avail[0]]
            for j in range(1, navail):
                if Ln[avail[j]] < lbest:
                    lbest = Ln[avail[j]]
                    jbest = j
            m = avail[jbest]
            for j in range(jbest, navail - 1):
                avail[j] = avail[j + 1]
            navail -= 1
            L[ks] = Ln[m]
            for k in range(K):
                col_old[k] = rho[k, m]
                rho[k, m] = 0.0
            rho[ks, m] = 1.0
            Rp[ks] = _rate(alpha, rho, ks, L[ks])

        if Rp[ks] < R[ks] - tol[ks]:
            L[ks] = _dc_level(alpha[ks], rho[ks], R[ks])
        elif m >= 0 and Rp[ks] > R[ks] + tol[ks]:
            x = L[ks] * alpha[ks, m]
            r_m = log2(x) if x > 1.0 else 0.0
            rest = Rp[ks] - r_m
            c = comp[m]
            # the rest of the subcarrier goes back to its previous holders
            # pro rata, or to the competitor if k* owned all of it
            col_old[ks] = 0.0
            sw = 0.0
            for k in range(K):
                sw += col_old[k]
            if sw <= 0.0 and c >= 0:
                col_old[c] = 1.0
                sw = 1.0
            if rest < R[ks] - tol[ks] and c >= 0:
                f = (R[ks] - rest) / r_m
                for k in range(K):
                    rho[k, m] = col_old[k] * ((1.0 - f) / sw)
                rho[ks, m] = f
            elif c >= 0:
                for k in range(K):
                    rho[k, m] = col_old[k] / sw
                L[ks] = _dc_level(alpha[ks], rho[ks], R[ks])
            else:
                L[ks] = _dc_level(alpha[ks], rho[ks], R[ks])
        _h_row(alpha, hdc, ks, L[ks], L0)
    return Larr, rarr, int(iterations), status


def consumed_power(alpha_in, rho_in, L_in, double L0, Py_ssize_t K1):
    cdef double[:, ::1] alpha = np.ascontiguousarray(alpha_in, dtype=float)
    cdef double[:, ::1] rho = np.ascontiguousarray(rho_in, dtype=float)
    cdef double[::1] L = np.ascontiguousarray(L_in, dtype=float)
    cdef Py_ssize_t K = alpha.shape[0], N = alpha.shape[1], k, n
    cdef double total = 0.0, lev, p
    for k in range(K):
        lev = L[k] if k < K1 else L0
        for n in range(N):
            if rho[k, n] > 0.0:
                p = lev - 1.0 / alpha[k, n]
                if p > 0.0:
                    total += rho[k, n] * p
    return total


def subcarrier_max(alpha_in, Py_ssize_t K1, beta_in, double mu):
    cdef double[:, ::1] alpha = np.ascontiguousarray(alpha_in, dtype=float)
    cdef double[::1] beta = np.ascontiguousarray(beta_in, dtype=float)
    cdef Py_ssize_t K = alpha.shape[0], N = alpha.shape[1], k, n, best
    cdef double bt, lev, x, val, bestv, bestp, bestr, lx
    w_arr = np.zeros(N, dtype=np.intp)
    p_arr = np.zeros(N)
    g_arr = np.zeros(N)
    r_arr = np.zeros(N)
    cdef Py_ssize_t[::1] win = w_arr
    cdef double[::1] P = p_arr
    cdef double[::1] g = g_arr
    cdef double[::1] r = r_arr
    for n in range(N):
        best = 0
        bestv = 0.0
        bestp = 0.0
        bestr = 0.0
        for k in range(K):
            bt = beta[k] if k < K1 else 1.0
            lev = bt / (mu * LN2)
            x = alpha[k, n] * lev
            if x > 1.0:
                lx = log2(x)
                val = bt * lx - mu * (lev - 1.0 / alpha[k, n])
                if val > bestv:
                    best = k
                    bestv = val
                    bestp = lev - 1.0 / alpha[k, n]
                    bestr = lx
        win[n] = best
        P[n] = bestp
        g[n] = bestv
        r[n] = bestr
    return w_arr, p_arr, g_arr, r_arr
