"""Exhaustive search over exclusive assignments, for small instances only.

Used as ground truth in tests. Rows of candidate assignments are scored in
bulk: DC power is looked up per (user, subcarrier subset) from a cache, and
the NDC water-filling runs vectorised across rows. The winner is re-scored
with ``allocate_given_assignment`` so the reported rate goes through the
same code path as every solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ConfigError, SystemConfig, assignment_to_rho, check_alpha
from .waterfill import allocate_given_assignment, dc_water_level

MAX_ASSIGNMENTS = 10_000_000
_CHUNK = 1 << 15


@dataclass
class OracleResult:
    best_assignment: np.ndarray
    best_ndc_sum_rate: float
    feasible: bool
    enumerated: int


def candidate_sets(cfg: SystemConfig, alpha, restrict: bool):
    """Per-subcarrier candidate users.

    With ``restrict`` the candidates are the DC users plus the best-CNR NDC
    user on that subcarrier; otherwise every user.
    """
    K, K1, N = cfg.K, cfg.K1, cfg.N
    if not restrict:
        return [np.arange(K)] * N
    if K == K1:
        return [np.arange(K1)] * N
    best = K1 + np.argmax(alpha[K1:], axis=0)
    return [np.append(np.arange(K1), b) for b in best]


def _dc_cost_table(alpha_row, R_k, N):
    """Power needed by a DC user for every subset of subcarriers (bitmask)."""
    cost = np.full(1 << N, np.inf)
    for mask in range(1, 1 << N):
        idx = [n for n in range(N) if mask >> n & 1]
        _, _, p = dc_water_level(alpha_row[idx], R_k)
        cost[mask] = p.sum()
    return cost


def _ndc_rates(a, P_res):
    """Water-filling sum-rate per row. ``a`` holds CNRs, 0 where not NDC."""
    a = -np.sort(-a, axis=1)
    valid = a > 0
    inv = np.where(valid, 1.0 / np.where(valid, a, 1.0), 0.0)
    j = np.arange(1, a.shape[1] + 1)
    levels = (P_res[:, None] + np.cumsum(inv, axis=1)) / j
    ok = valid & (a * levels > 1.0)
    # the active set is a prefix of the sorted row
    g = np.where(ok.any(axis=1), a.shape[1] - np.argmax(ok[:, ::-1], axis=1), 0)
    rows = np.arange(a.shape[0])
    L0 = np.where(g > 0, levels[rows, np.maximum(g - 1, 0)], 0.0)
    active = j[None, :] <= g[:, None]
    x = np.where(active, a * L0[:, None], 1.0)
    return np.sum(np.log2(np.maximum(x, 1.0)), axis=1)


def exhaustive_solve(cfg: SystemConfig, alpha, restrict: bool = True) -> OracleResult:
    """Best feasible exclusive assignment by full enumeration.

    Raises ``ConfigError`` when the enumeration would exceed
    ``MAX_ASSIGNMENTS`` rows.
    """
    alpha = check_alpha(cfg, alpha)
    K, K1, N = cfg.K, cfg.K1, cfg.N
    cands = candidate_sets(cfg, alpha, restrict)
    radix = np.array([c.size for c in cands])
    total = int(np.prod(radix.astype(object)))
    if total > MAX_ASSIGNMENTS:
        raise ConfigError(f"{total} assignments exceeds the limit of {MAX_ASSIGNMENTS}")
    cand = np.full((N, int(radix.max())), -1)
    for n, c in enumerate(cands):
        cand[n, :c.size] = c
    cost = [_dc_cost_table(alpha[k], cfg.R[k], N) for k in range(K1)]
    bits = 1 << np.arange(N)
    cols = np.arange(N)
    strides = np.cumprod(np.append(1, radix[:-1]))

    best_val, best_row = -np.inf, None
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        digits = (idx[:, None] // strides[None, :]) % radix[None, :]
        users = cand[cols[None, :], digits]
        P_dc = np.zeros(idx.size)
        for k in range(K1):
            masks = ((users == k) * bits).sum(axis=1)
            P_dc += cost[k][masks]
        feas = P_dc <= cfg.P_T
        if K1 == K or not feas.any():
            vals = np.where(feas, 0.0, -np.inf)
        else:
            a = np.where(users >= K1, alpha[users, cols[None, :]], 0.0)
            vals = np.full(idx.size, -np.inf)
            vals[feas] = _ndc_rates(a[feas], cfg.P_T - P_dc[feas])
        r = int(np.argmax(vals))
        if vals[r] > best_val:
            best_val, best_row = vals[r], users[r].copy()

    if best_row is None:
        return OracleResult(np.full(N, -1), float("nan"), False, total)
    _, rep = allocate_given_assignment(cfg, alpha, assignment_to_rho(best_row, K), "oracle")
    return OracleResult(best_row, float(rep.ndc_sum_rate), not rep.outage, total)


def oracle_allocation(cfg: SystemConfig, alpha, restrict: bool = True):
    """``exhaustive_solve`` packaged as ``(PowerSolution, AllocationReport)``.

    With no feasible assignment every subcarrier goes to its best DC user and
    the report flags an outage.
    """
    alpha = check_alpha(cfg, alpha)
    res = exhaustive_solve(cfg, alpha, restrict)
    owner = res.best_assignment
    if not res.feasible:
        owner = np.argmax(alpha[:max(cfg.K1, 1)], axis=0)
    sol, rep = allocate_given_assignment(cfg, alpha, assignment_to_rho(owner, cfg.K), "oracle")
    if not res.feasible:
        rep.outage, rep.ndc_sum_rate = True, 0.0
    rep.extras["enumerated"] = res.enumerated
    return sol, rep
