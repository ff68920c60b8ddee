"""Optimal allocation under the time-sharing relaxation.

Each subcarrier goes to whichever candidate has the largest H score
(``h_value``). DC water levels are raised in an inner loop until every DC
rate target holds at a fixed NDC level ``L0``. An outer doubling and
bisection search then moves ``L0`` until the total power matches ``P_T``.

The hot inner loop lives in the compiled kernel (see ``_backend``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _pykernels
from ._backend import kernels
from .model import (
    AllocationReport,
    ConfigError,
    NonConvergenceError,
    PowerSolution,
    SystemConfig,
    check_alpha,
)
from .waterfill import allocate_given_assignment


@dataclass(frozen=True)
class SolverSettings:
    """Tuning knobs for the optimal solver.

    ``epsilon`` is the bisection accuracy relative to the initial bracket
    width. ``delta`` is the H margin used when a DC user takes over a
    subcarrier. ``delta_init`` sets how far below ``min 1/alpha`` over NDC
    entries the search starts, as a relative offset. Users above target
    may lower their level during the first ``trim_per_subcarrier * N``
    inner passes only.
    """

    epsilon: float = 1e-7
    delta: float = 0.005
    delta_init: float = 1e-9
    max_outer: int = 200
    max_inner: int = 10_000
    rate_tol: float = 1e-6
    power_tol: float = 1e-6
    trim_per_subcarrier: int = 4

    def __post_init__(self):
        for name in ("epsilon", "delta", "delta_init", "max_outer", "max_inner",
                     "rate_tol", "power_tol", "trim_per_subcarrier"):
            v = getattr(self, name)
            if not v > 0:
                raise ConfigError(f"{name} must be positive, got {v!r}")


@dataclass
class WaterLevelState:
    L0: float
    L_dc: np.ndarray
    rho: np.ndarray
    consumed_power: float
    dc_rates: np.ndarray
    iterations: int = 0


def h_value(alpha_kn: float, L_tilde: float, L0: float) -> float:
    """Score of one user on one subcarrier at water level ``L_tilde``.

    Zero whenever ``alpha_kn * L_tilde <= 1``.
    """
    return kernels.h_value(float(alpha_kn), float(L_tilde), float(L0))


def assign_by_h(alpha, L0: float, L_dc) -> np.ndarray:
    """Exclusive sharing matrix that gives each subcarrier to its top H score.

    Candidates are the DC users plus the best-CNR NDC user on the
    subcarrier. Ties go to the lowest index with DC users first; a column of
    all-zero scores goes to the best-CNR NDC user.
    """
    alpha = np.asarray(alpha, dtype=float)
    L_dc = np.atleast_1d(np.asarray(L_dc, dtype=float))
    K, N = alpha.shape
    K1 = L_dc.size
    cols = np.arange(N)
    scores = [_pykernels._h_row(alpha[k], L_dc[k], L0) for k in range(K1)]
    if K > K1:
        ndc_best = K1 + np.argmax(alpha[K1:], axis=0)
        scores.append(_pykernels._h_row(alpha[ndc_best, cols], L0, L0))
    H = np.vstack(scores)
    pick = np.argmax(H, axis=0)
    owner = np.where(pick < K1, pick, 0)
    if K > K1:
        owner = np.where(pick == K1, ndc_best, owner)
        owner = np.where(H.max(axis=0) <= 0.0, ndc_best, owner)
    rho = np.zeros((K, N))
    rho[owner, cols] = 1.0
    return rho


def _inner(alpha, K1, R, L0, settings):
    L, rho, iters, status = kernels.inner_solve(
        alpha, K1, R, float(L0), settings.delta, settings.rate_tol, settings.max_inner,
        settings.trim_per_subcarrier * alpha.shape[1])
    L = np.asarray(L)
    rho = np.asarray(rho)
    P = kernels.consumed_power(alpha, rho, L, float(L0), K1)
    rates = np.array([_pykernels._rate(alpha[k], rho[k], L[k]) for k in range(K1)])
    state = WaterLevelState(L0=float(L0), L_dc=L, rho=rho, consumed_power=float(P),
                            dc_rates=rates, iterations=int(iters))
    if status != kernels.CONVERGED:
        raise NonConvergenceError(
            f"inner loop hit max_inner={settings.max_inner} at L0={L0!r}", state)
    return state


def inner_solve(cfg: SystemConfig, alpha, L0: float,
                settings: SolverSettings | None = None) -> WaterLevelState:
    """DC water levels and sharing factors at a fixed NDC level ``L0``.

    Raises ``NonConvergenceError`` (carrying the last state) if the deficit
    repair loop exceeds ``settings.max_inner`` passes.
    """
    settings = settings or SolverSettings()
    alpha = check_alpha(cfg, alpha)
    if not L0 > 0:
        raise ConfigError(f"L0 must be positive, got {L0!r}")
    return _inner(alpha, cfg.K1, cfg.rates, L0, settings)


@dataclass
class _Trace:
    evaluations: int = 0
    doublings: int = 0
    updates: int = 0
    inner_total: int = 0
    inner_bisection: int = 0
    per_update: list = field(default_factory=list)

    def record(self, state):
        self.evaluations += 1
        self.inner_total += state.iterations
        self.per_update.append(state.iterations)


def _candidates(states):
    # each converged sharing matrix plus its exclusive rounding; the margin
    # delta can leave a sliver of sharing that costs a little rate
    for st in states:
        yield st, st.rho
        excl = np.zeros_like(st.rho)
        excl[np.argmax(st.rho, axis=0), np.arange(st.rho.shape[1])] = 1.0
        excl[:, st.rho.sum(axis=0) <= 0.0] = 0.0
        if not np.array_equal(excl, st.rho):
            yield st, excl


def _finish(cfg, alpha, states, trace, converged=True):
    best = None
    for st, rho in _candidates(states):
        sol, rep = allocate_given_assignment(cfg, alpha, rho, solver_id="optimal_ts")
        if best is None or (best[1].outage and not rep.outage) or (
                rep.outage == best[1].outage and rep.ndc_sum_rate > best[1].ndc_sum_rate):
            best = (sol, rep, st)
    sol, rep, st = best
    rep.outer_iterations = trace.updates
    rep.inner_iterations = trace.inner_total
    rep.converged = converged
    rep.extras.update(doublings=trace.doublings, L0_search=st.L0,
                      inner_bisection=trace.inner_bisection,
                      inner_per_update=list(trace.per_update))
    return sol, rep


def outer_solve(cfg: SystemConfig, alpha, settings: SolverSettings | None = None):
    """Optimal time-sharing allocation.

    Returns ``(PowerSolution, AllocationReport)``. ``outer_iterations``
    counts bisection updates of ``L0``; ``inner_iterations`` is the summed
    deficit-repair passes over every ``L0`` tried, and
    ``extras["inner_bisection"]`` the part spent on the bisection updates. The final powers come
    from exact water-filling on the converged sharing matrix, so DC targets
    and the power budget hold to rounding.
    """
    settings = settings or SolverSettings()
    alpha = check_alpha(cfg, alpha)
    K1, R, P_T = cfg.K1, cfg.rates, cfg.P_T
    trace = _Trace()

    if K1 == 0:
        return _finish(cfg, alpha, [_inner(alpha, 0, R, 1.0, settings)], trace)
    if K1 == cfg.K:
        # no NDC level to search: DC users alone on the whole band
        st = _inner(alpha, K1, R, 1.0, settings)
        trace.record(st)
        return _finish(cfg, alpha, [st], trace)

    L_lb = float(np.min(1.0 / alpha[K1:])) * (1.0 - settings.delta_init)
    st = _inner(alpha, K1, R, L_lb, settings)
    trace.record(st)
    if st.consumed_power > P_T:
        sol, rep = _finish(cfg, alpha, [st], trace)
        rep.outage = True
        rep.ndc_sum_rate = 0.0
        return sol, rep

    L_ub = L_lb
    lo_state = hi_state = st
    while st.consumed_power < P_T:
        if trace.doublings >= settings.max_outer:
            raise NonConvergenceError("no upper bound on L0 within max_outer doublings", st)
        L_ub *= 2.0
        trace.doublings += 1
        st = _inner(alpha, K1, R, L_ub, settings)
        trace.record(st)
        if st.consumed_power < P_T:
            lo_state = st
    hi_state = st

    lo, hi = L_lb, L_ub
    width0 = hi - lo
    tol_P = settings.power_tol * P_T
    while abs(st.consumed_power - P_T) > tol_P and hi - lo > settings.epsilon * width0:
        if trace.updates >= settings.max_outer:
            raise NonConvergenceError("bisection on L0 exceeded max_outer", st)
        mid = 0.5 * (lo + hi)
        st = _inner(alpha, K1, R, mid, settings)
        trace.record(st)
        trace.updates += 1
        trace.inner_bisection += st.iterations
        if st.consumed_power > P_T:
            hi, hi_state = mid, st
        else:
            lo, lo_state = mid, st
    return _finish(cfg, alpha, [lo_state, hi_state], trace)


def outage_only(cfg: SystemConfig, alpha, settings: SolverSettings | None = None) -> bool:
    """Outage decision alone: one inner solve at the initial ``L0``."""
    settings = settings or SolverSettings()
    alpha = check_alpha(cfg, alpha)
    K1 = cfg.K1
    if K1 == 0:
        return False
    L0 = (float(np.min(1.0 / alpha[K1:])) * (1.0 - settings.delta_init)
          if K1 < cfg.K else 1.0)
    st = _inner(alpha, K1, cfg.rates, L0, settings)
    return st.consumed_power > cfg.P_T
