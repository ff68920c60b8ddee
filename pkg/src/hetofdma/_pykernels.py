"""Pure-Python versions of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable. Semantics
(tie rules, tolerances, iteration counting) match the extension exactly.
"""

import math

import numpy as np

LN2 = math.log(2.0)
RHO_EPS = 1e-12

# inner_solve status codes
CONVERGED = 0
MAX_INNER = 1


def h_value(alpha, L_tilde, L0):
    x = alpha * L_tilde
    if x <= 1.0:
        return 0.0
    t = x - 1.0
    return (L_tilde / L0) * (math.log1p(t) - t / x) / LN2


def _h_row(alpha_row, L_tilde, L0):
    x = alpha_row * L_tilde
    t = np.maximum(x - 1.0, 0.0)
    return (L_tilde / L0) * (np.log1p(t) - t / np.maximum(x, 1.0)) / LN2


def takeover_level(alpha, target, L0):
    """Smallest level L >= 1/alpha with h_value(alpha, L, L0) == target.

    h = psi(alpha L) / (alpha L0 ln2) with psi(x) = x ln x - x + 1, which is
    convex and increasing on x >= 1, so Newton from the right is monotone.
    """
    c = target * alpha * L0 * LN2
    if c <= 0.0:
        return 1.0 / alpha
    t = math.sqrt(2.0 * c) + c
    while (1.0 + t) * math.log1p(t) - t < c:
        t *= 2.0
    for _ in range(200):
        f = (1.0 + t) * math.log1p(t) - t - c
        step = f / math.log1p(t)
        if step <= 1e-16 * t:
            break
        t -= step
    return (1.0 + t) / alpha


def dc_level(alpha_row, weights, R):
    """Weighted DC water level on the subcarriers with weight > RHO_EPS."""
    idx = np.flatnonzero(weights > RHO_EPS)
    if idx.size == 0:
        return math.inf
    a = alpha_row[idx]
    w = weights[idx]
    order = np.argsort(-a, kind="stable")
    cw = 0.0
    cl = 0.0
    best = math.inf
    for j in order:
        la = math.log2(a[j])
        cw += w[j]
        cl += w[j] * la
        log2L = (R - cl) / cw
        if la + log2L > 0.0:
            best = log2L
    return 2.0 ** best


def _rate(alpha_row, rho_row, L):
    tot = 0.0
    for n in np.flatnonzero(rho_row > 0.0):
        x = L * alpha_row[n]
        if x > 1.0:
            tot += rho_row[n] * math.log2(x)
    return tot


def _owner(n, exclude, K1, hdc, h_ndc, ndc_best):
    best = -1
    bestv = 0.0
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
    return best, bestv


def _trim(alpha, rho, L, Rp, R, tol):
    # settle any overshoot once rho is final
    for k in range(L.size):
        if Rp[k] > R[k] + tol[k]:
            L[k] = dc_level(alpha[k], rho[k], R[k])


def inner_solve(alpha, K1, R, L0, delta, rate_tol, max_inner, trim_passes):
    """DC water levels and sharing factors at a fixed NDC level ``L0``.

    Returns ``(L_dc, rho, iterations, status)``; ``iterations`` counts the
    passes through the deficit-repair step. For the first ``trim_passes``
    passes users above target also drop back to their exact level; after
    that levels only rise, which rules out cycling.
    """
    alpha = np.ascontiguousarray(alpha, dtype=float)
    R = np.asarray(R, dtype=float)
    K, N = alpha.shape
    if K > K1:
        ndc_best = K1 + np.argmax(alpha[K1:], axis=0)
        h_ndc = _h_row(alpha[ndc_best, np.arange(N)], L0, L0)
    else:
        ndc_best = np.full(N, -1)
        h_ndc = np.zeros(N)
    ones = np.ones(N)
    L = np.array([dc_level(alpha[k], ones, R[k]) for k in range(K1)], dtype=float)
    hdc = np.empty((K1, N))
    for k in range(K1):
        hdc[k] = _h_row(alpha[k], L[k], L0)
    rho = np.zeros((K, N))
    for n in range(N):
        w, _ = _owner(n, -1, K1, hdc, h_ndc, ndc_best)
        rho[w, n] = 1.0
    if K1 == 0:
        return L, rho, 0, CONVERGED

    Rp = np.zeros(K1)
    tol = rate_tol * R
    iterations = 0
    status = CONVERGED
    while True:
        for k in range(K1):
            Rp[k] = _rate(alpha[k], rho[k], L[k])
            if iterations < trim_passes and Rp[k] > R[k] + tol[k]:
                L[k] = dc_level(alpha[k], rho[k], R[k])
                hdc[k] = _h_row(alpha[k], L[k], L0)
                Rp[k] = _rate(alpha[k], rho[k], L[k])
        ks = -1
        worst = 0.0
        for k in range(K1):
            d = Rp[k] - R[k]
            if d < -tol[k] and (ks < 0 or d < worst):
                ks = k
                worst = d
        if ks < 0:
            _trim(alpha, rho, L, Rp, R, tol)
            break
        iterations += 1
        if iterations > max_inner:
            status = MAX_INNER
            break

        avail = [n for n in range(N) if rho[ks, n] < 1.0]
        Ln = {}
        comp = {}
        for n in avail:
            c, hc = _owner(n, ks, K1, hdc, h_ndc, ndc_best)
            comp[n] = c
            Ln[n] = max(L[ks], takeover_level(alpha[ks, n], (1.0 + delta) * hc, L0))

        m = -1
        while Rp[ks] < R[ks] - tol[ks] and avail:
            j = min(range(len(avail)), key=lambda i: (Ln[avail[i]], avail[i]))
            m = avail.pop(j)
            col_old = rho[:, m].copy()
            L[ks] = Ln[m]
            rho[:, m] = 0.0
            rho[ks, m] = 1.0
            Rp[ks] = _rate(alpha[ks], rho[ks], L[ks])

        if Rp[ks] < R[ks] - tol[ks]:
            L[ks] = dc_level(alpha[ks], rho[ks], R[ks])
        elif m >= 0 and Rp[ks] > R[ks] + tol[ks]:
            x = L[ks] * alpha[ks, m]
            r_m = math.log2(x) if x > 1.0 else 0.0
            rest = Rp[ks] - r_m
            c = comp[m]
            # the rest of the subcarrier goes back to its previous holders
            # pro rata, or to the competitor if k* owned all of it
            others = col_old
            others[ks] = 0.0
            sw = others.sum()
            if sw <= 0.0 and c >= 0:
                others[c] = 1.0
                sw = 1.0
            if rest < R[ks] - tol[ks] and c >= 0:
                f = (R[ks] - rest) / r_m
                rho[:, m] = others * ((1.0 - f) / sw)
                rho[ks, m] = f
            elif c >= 0:
                rho[:, m] = others / sw
                L[ks] = dc_level(alpha[ks], rho[ks], R[ks])
            else:
                L[ks] = dc_level(alpha[ks], rho[ks], R[ks])
        hdc[ks] = _h_row(alpha[ks], L[ks], L0)
    return L, rho, iterations, status


def consumed_power(alpha, rho, L_dc, L0, K1):
    K, N = alpha.shape
    total = 0.0
    for k in range(K):
        lev = L_dc[k] if k < K1 else L0
        p = np.maximum(lev - 1.0 / alpha[k], 0.0)
        total += float(np.dot(rho[k], p))
    return total


def subcarrier_max(alpha, K1, beta, mu):
    """Per-subcarrier maximisation of the dual Lagrangian.

    Returns ``(winner, power, g_n, rate)`` arrays of length N. Ties go to the
    lowest user index, including the all-zero case.
    """
    alpha = np.asarray(alpha, dtype=float)
    K, N = alpha.shape
    bt = np.ones(K)
    bt[:K1] = beta
    lev = bt / (mu * LN2)
    x = alpha * lev[:, None]
    active = x > 1.0
    logx = np.log2(np.where(active, x, 1.0))
    P = np.where(active, lev[:, None] - 1.0 / alpha, 0.0)
    val = bt[:, None] * logx - mu * P
    val = np.where(active, val, 0.0)
    winner = np.argmax(val, axis=0)
    cols = np.arange(N)
    g = val[winner, cols]
    zero = g <= 0.0
    winner = np.where(zero, 0, winner)
    g = np.where(zero, 0.0, g)
    return (winner.astype(np.intp), np.where(zero, 0.0, P[winner, cols]), g,
            np.where(zero, 0.0, logx[winner, cols]))
