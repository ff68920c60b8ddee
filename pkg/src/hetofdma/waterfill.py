"""Closed-form multi-level water-filling for a fixed subcarrier assignment.

Every DC user gets its own water level, fixed by its rate target; all NDC
users share one level fixed by whatever power the DC users leave over.
"""

from __future__ import annotations

import numpy as np

from .model import (
    AllocationReport,
    ConfigError,
    PowerSolution,
    PowerUnassignableError,
    SystemConfig,
    check_alpha,
    check_sharing,
    user_rates,
)

RHO_EPS = 1e-12


def dc_water_level(cnrs, R_k: float, weights=None):
    """Water level that gives a DC user exactly ``R_k`` bits on its subcarriers.

    Parameters
    ----------
    cnrs : array_like
        CNRs of the subcarriers assigned to the user.
    R_k : float
        Rate target in bits per OFDM symbol.
    weights : array_like, optional
        Time-sharing factors of those subcarriers (all ones when exclusive).

    Returns
    -------
    (L, g, powers)
        The water level, the number of active subcarriers and the
        conditional powers ``(L - 1/alpha)^+`` in the input order.
    """
    a = np.asarray(cnrs, dtype=float).ravel()
    if a.size == 0:
        raise ConfigError("a DC user needs at least one subcarrier")
    if not R_k > 0:
        raise ConfigError(f"rate target must be positive, got {R_k}")
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=float).ravel()
    order = np.argsort(-a, kind="stable")
    a_s, w_s = a[order], w[order]
    la = np.log2(a_s)
    log2L = (R_k - np.cumsum(w_s * la)) / np.cumsum(w_s)
    # g = 1 always passes: log2(a_1) + log2(L_1) = R_k / w_1 > 0
    g = int(np.flatnonzero(la + log2L > 0)[-1]) + 1
    L = float(2.0 ** log2L[g - 1])
    powers = np.zeros_like(a)
    powers[order[:g]] = L - 1.0 / a_s[:g]
    return L, g, powers


def ndc_water_level(cnrs, P_residual: float, weights=None):
    """Common NDC water level that spends exactly ``P_residual``.

    With time-sharing weights the spent power is ``sum(w * (L0 - 1/alpha)^+)``.
    Returns ``(L0, powers)`` with conditional powers in input order.
    """
    if P_residual < 0:
        raise ConfigError(f"residual power must be non-negative, got {P_residual}")
    a = np.asarray(cnrs, dtype=float).ravel()
    if a.size == 0:
        if P_residual > 0:
            raise PowerUnassignableError(f"{P_residual} power left with no NDC subcarrier")
        return 0.0, a.copy()
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=float).ravel()
    order = np.argsort(-a, kind="stable")
    a_s, w_s = a[order], w[order]
    levels = (P_residual + np.cumsum(w_s / a_s)) / np.cumsum(w_s)
    ok = np.flatnonzero(a_s * levels > 1.0)
    powers = np.zeros_like(a)
    if ok.size == 0:
        return float(1.0 / a_s[0]), powers
    g = int(ok[-1]) + 1
    L0 = float(levels[g - 1])
    powers[order[:g]] = L0 - 1.0 / a_s[:g]
    return L0, powers


def allocate_given_assignment(cfg: SystemConfig, alpha, rho, solver_id: str = "fixed"):
    """Optimal powers for a given sharing matrix.

    DC levels come first; if their total power exceeds ``P_T`` the report
    flags an outage and no NDC power is assigned. Otherwise the remainder is
    water-filled over the NDC-held subcarriers.
    """
    alpha = check_alpha(cfg, alpha)
    K, K1, N = cfg.K, cfg.K1, cfg.N
    rho = check_sharing(rho, K, N, allow_idle=(K1 == K))
    P_cond = np.zeros((K, N))
    L_dc = np.full(K1, np.inf)
    outage = False
    extras = {}
    thin = []
    for k in range(K1):
        mask = rho[k] > RHO_EPS
        if not mask.any():
            outage = True
            continue
        if rho[k, mask].sum() < 1e-6:
            thin.append(k)
        L, _, _ = dc_water_level(alpha[k, mask], cfg.R[k], weights=rho[k, mask])
        L_dc[k] = L
        P_cond[k] = np.maximum(L - 1.0 / alpha[k], 0.0)
    if thin:
        extras["thin_dc_share"] = thin
    P_dc_total = float(np.sum(rho[:K1] * P_cond[:K1])) if K1 else 0.0
    if outage or not np.isfinite(P_dc_total) or P_dc_total > cfg.P_T:
        outage = True
        L0 = float("nan")
    else:
        P_res = cfg.P_T - P_dc_total
        sub = rho[K1:]
        mask = sub > RHO_EPS
        if mask.any():
            L0, _ = ndc_water_level(alpha[K1:][mask], P_res, weights=sub[mask])
            P_cond[K1:] = np.maximum(L0 - 1.0 / alpha[K1:], 0.0)
        else:
            L0 = float("nan")
            if P_res > 0:
                extras["unassigned_power"] = P_res
    rates = user_rates(alpha, rho, P_cond)
    ndc_sum = 0.0 if outage else float(rates[K1:].sum())
    sol = PowerSolution(s=rho * P_cond, P_cond=P_cond, rho=rho, L_dc=L_dc, L0=L0,
                        P_dc_total=P_dc_total)
    report = AllocationReport(rates=rates, ndc_sum_rate=ndc_sum, outage=outage,
                              solver_id=solver_id, extras=extras)
    return sol, report
