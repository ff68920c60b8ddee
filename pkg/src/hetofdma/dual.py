"""Dual decomposition solver for the exclusive-assignment problem.

The Lagrangian separates per subcarrier, so the dual function is a sum of
N small maximisations over users. It is minimised with a central-cut
ellipsoid method started from the box that must contain the optimum.
A primal allocation is recovered from the winner maps seen along the way
by exact water-filling on each candidate assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .model import ConfigError, SystemConfig, assignment_to_rho, check_alpha
from .waterfill import allocate_given_assignment, dc_water_level

LN2 = math.log(2.0)


@dataclass(frozen=True)
class DualSettings:
    shrink_tol: float = 1e-9      # geometric-mean axis shrink of the ellipsoid
    max_iter_factor: int = 500    # cap = factor * (K1 + 1)^2
    mu_floor: float = 1e-12       # relative to mu_max
    bisect_tol: float = 1e-12     # K1 == 0 only
    repair_evals: int = 2000      # budget for the local repair of recovered maps
    repair_starts: int = 3
    stop_at_feasible: bool = False  # outage decision only: quit at the first feasible map


@dataclass
class DualPoint:
    beta: np.ndarray
    mu: float

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.mu = float(self.mu)
        if np.any(self.beta < 0) or self.mu < 0:
            raise ConfigError("dual variables must be non-negative")

    @property
    def vector(self) -> np.ndarray:
        return np.append(self.beta, self.mu)


@dataclass
class EllipsoidState:
    center: np.ndarray
    shape: np.ndarray
    iteration: int = 0


@dataclass
class DualEvaluation:
    g_value: float
    per_subcarrier_winner: np.ndarray
    powers: np.ndarray
    subgrad_beta: np.ndarray
    subgrad_mu: float
    g_n: np.ndarray


def per_subcarrier_max(alpha_column, dual: DualPoint):
    """Best user on one subcarrier at the given dual point.

    Returns ``(winner, power, g_n)``. When no user gains anything the
    winner is user 0 with zero power.
    """
    if not dual.mu > 0:
        raise ConfigError("mu must be positive; the dual function is unbounded at mu = 0")
    a = np.asarray(alpha_column, dtype=float).reshape(-1, 1)
    w, P, g, _ = kernels.subcarrier_max(a, dual.beta.size, dual.beta, dual.mu)
    return int(w[0]), float(P[0]), float(g[0])


def eval_dual(cfg: SystemConfig, alpha, dual: DualPoint) -> DualEvaluation:
    """Dual function value and a subgradient at ``dual``."""
    if not dual.mu > 0:
        raise ConfigError("mu must be positive; the dual function is unbounded at mu = 0")
    if dual.beta.size != cfg.K1:
        raise ConfigError(f"expected {cfg.K1} DC multipliers, got {dual.beta.size}")
    alpha = np.ascontiguousarray(alpha, dtype=float)
    return _eval(alpha, cfg.K1, cfg.rates, cfg.P_T, dual.beta, dual.mu)


def _eval(alpha, K1, R, P_T, beta, mu):
    K, N = alpha.shape
    w, P, g_n, r = kernels.subcarrier_max(alpha, K1, beta, mu)
    w, P, g_n, r = map(np.asarray, (w, P, g_n, r))
    powers = np.zeros((K, N))
    powers[w, np.arange(N)] = P
    rate_k = np.bincount(w, weights=r, minlength=K)
    g = float(g_n.sum() - beta @ R + mu * P_T)
    return DualEvaluation(g_value=g, per_subcarrier_winner=w, powers=powers,
                          subgrad_beta=rate_k[:K1] - R, subgrad_mu=float(P_T - P.sum()),
                          g_n=g_n)


def dual_bounds(cfg: SystemConfig, alpha):
    """Upper bounds ``(beta_max, mu_max)`` on the optimal multipliers.

    ``mu_max`` uses the largest NDC CNR. For ``beta_max`` the reciprocal
    term uses the smallest CNR over the DC user's own row and all NDC rows,
    which can only enlarge the box.
    """
    alpha = np.asarray(alpha, dtype=float)
    K1 = cfg.K1
    ndc = alpha[K1:] if cfg.K > K1 else alpha
    mu_max = float(ndc.max()) / LN2
    low = float(ndc.min())
    beta_max = np.array([mu_max * LN2 * (cfg.P_T + 1.0 / min(alpha[k].min(), low))
                         for k in range(K1)])
    return beta_max, mu_max


def initial_ellipsoid(cfg: SystemConfig, alpha) -> EllipsoidState:
    if cfg.K1 < 1:
        raise ConfigError("the ellipsoid search needs at least one DC user")
    beta_max, mu_max = dual_bounds(cfg, alpha)
    b = np.append(beta_max, mu_max)
    return EllipsoidState(center=b / 2.0, shape=np.diag((1 + cfg.K1) * (b / 2.0) ** 2))


class _Recovery:
    """Best primal allocation over the winner maps seen so far."""

    def __init__(self, cfg, alpha):
        self.cfg, self.alpha = cfg, alpha
        K1 = cfg.K1
        self.ndc_best = K1 + np.argmax(alpha[K1:], axis=0) if cfg.K > K1 else None
        self.seen = {}
        self.dc_cache = {}
        self.evals = 0
        self.feasible = False

    def _dc_power(self, k, idx):
        key = (k, idx.tobytes())
        P = self.dc_cache.get(key)
        if P is None:
            _, _, p = dc_water_level(self.alpha[k, idx], self.cfg.R[k])
            P = self.dc_cache[key] = float(p.sum())
        return P

    def _ndc_rate(self, cnrs, P_res):
        if cnrs.size == 0:
            return 0.0
        a = -np.sort(-cnrs)
        levels = (P_res + np.cumsum(1.0 / a)) / np.arange(1, a.size + 1)
        g = int(np.flatnonzero(a * levels > 1.0)[-1]) + 1 if np.any(a * levels > 1.0) else 0
        return float(np.sum(np.log2(a[:g] * levels[g - 1]))) if g else 0.0

    def score(self, owner):
        """Feasible maps rank by NDC sum-rate; infeasible ones by how many DC
        users lack a subcarrier, then by DC power."""
        key = owner.tobytes()
        hit = self.seen.get(key)
        if hit is not None:
            return hit[0]
        self.evals += 1
        K1 = self.cfg.K1
        missing, P_dc = 0, 0.0
        for k in range(K1):
            idx = np.flatnonzero(owner == k)
            if idx.size == 0:
                missing += 1
            else:
                P_dc += self._dc_power(k, idx)
        if missing or P_dc > self.cfg.P_T:
            sc = (0, -missing, -P_dc)
        else:
            ndc = np.flatnonzero(owner >= K1)
            sc = (1, 0, self._ndc_rate(self.alpha[owner[ndc], ndc], self.cfg.P_T - P_dc))
        self.seen[key] = (sc, owner.copy())
        self.feasible = self.feasible or sc[0] == 1
        return sc

    def offer(self, winner, g_n):
        owner = winner.copy()
        zero = g_n <= 0.0
        owner[zero] = self.ndc_best[zero] if self.ndc_best is not None else -1
        self.score(owner)

    def ranked(self):
        return sorted(self.seen.values(), key=lambda e: e[0], reverse=True)

    def _moves(self, owner):
        K1, N = self.cfg.K1, self.cfg.N
        for n in range(N):
            cands = list(range(K1))
            if self.ndc_best is not None:
                cands.append(int(self.ndc_best[n]))
            for u in cands:
                if u != owner[n]:
                    new = owner.copy()
                    new[n] = u
                    yield new
        for i in range(N):
            for j in range(i + 1, N):
                if owner[i] == owner[j] or (owner[i] >= K1 and owner[j] >= K1):
                    continue
                new = owner.copy()
                new[i] = owner[j] if owner[j] < K1 else self.ndc_best[i]
                new[j] = owner[i] if owner[i] < K1 else self.ndc_best[j]
                yield new

    quick = False

    def repair(self, starts, budget):
        """First-improvement hill climb over single reassignments and
        pairwise swaps, from the best few maps found by the dual search."""
        stop = self.evals + budget
        for entry in self.ranked()[:starts]:
            owner, cur = entry[1].copy(), entry[0]
            improved = True
            while improved and self.evals < stop and not (self.quick and self.feasible):
                improved = False
                for new in self._moves(owner):
                    if self.evals >= stop:
                        break
                    sc = self.score(new)
                    if sc > cur:
                        owner, cur, improved = new, sc, True
                        break

    @property
    def best(self):
        """Exact allocation for the top-ranked map, or None if none is feasible."""
        top = self.ranked()
        if not top or top[0][0][0] == 0:
            return None
        owner = top[0][1]
        sol, rep = allocate_given_assignment(self.cfg, self.alpha,
                                             assignment_to_rho(owner, self.cfg.K), "dual")
        return sol, rep, owner


def _outage_result(cfg, alpha, owner):
    sol, rep = allocate_given_assignment(cfg, alpha, assignment_to_rho(owner, cfg.K), "dual")
    rep.outage = True
    rep.ndc_sum_rate = 0.0
    return sol, rep


def solve_dual(cfg: SystemConfig, alpha, settings: DualSettings | None = None,
               record: bool = False):
    """Dual-optimal multipliers and a recovered exclusive allocation.

    Returns ``(PowerSolution, AllocationReport)``. ``report.dual_bound`` is
    the smallest dual value found, an upper bound on the optimum.
    ``report.extras["dual_point"]`` holds the best multipliers. With
    ``record`` the visited points and values are kept in ``extras["history"]``.
    """
    settings = settings or DualSettings()
    alpha = check_alpha(cfg, alpha)
    K1, R, P_T = cfg.K1, cfg.rates, cfg.P_T
    beta_max, mu_max = dual_bounds(cfg, alpha)
    mu_lo = settings.mu_floor * mu_max
    rec = _Recovery(cfg, alpha)
    history = []
    best_g, best_x = math.inf, None
    last_winner = None

    def visit(beta, mu):
        nonlocal best_g, best_x, last_winner
        ev = _eval(alpha, K1, R, P_T, beta, max(mu, mu_lo))
        rec.offer(ev.per_subcarrier_winner, ev.g_n)
        last_winner = (ev.per_subcarrier_winner, ev.g_n)
        if record:
            history.append((np.append(beta, mu), ev.g_value))
        if ev.g_value < best_g:
            best_g, best_x = ev.g_value, np.append(beta, mu)
        return ev

    converged = True
    iterations = 0
    if K1 == 0:
        lo, hi = 0.0, mu_max
        while hi - lo > settings.bisect_tol * mu_max:
            mid = 0.5 * (lo + hi)
            iterations += 1
            if visit(np.zeros(0), mid).subgrad_mu > 0:
                hi = mid
            else:
                lo = mid
        visit(np.zeros(0), 0.5 * (lo + hi))
    else:
        state = initial_ellipsoid(cfg, alpha)
        x, A = state.center.copy(), state.shape.copy()
        n = K1 + 1
        bound = np.append(beta_max, mu_max)
        cap = settings.max_iter_factor * n * n
        # log of (det A / det A0) and the per-step change for a central cut
        log_det, step = 0.0, n * math.log(n * n / (n * n - 1.0)) + math.log((n - 1.0) / (n + 1.0))
        stop = 2 * n * math.log(settings.shrink_tol)
        while log_det > stop:
            if iterations >= cap:
                converged = False
                break
            iterations += 1
            neg = np.flatnonzero(x < 0)
            over = np.flatnonzero(x > bound)
            if settings.stop_at_feasible and rec.feasible:
                break
            if neg.size:
                cut = np.zeros(n)
                cut[neg[0]] = -1.0
            elif over.size:
                cut = np.zeros(n)
                cut[over[0]] = 1.0
            else:
                ev = visit(x[:K1], x[K1])
                cut = np.append(ev.subgrad_beta, ev.subgrad_mu)
            Ag = A @ cut
            norm = math.sqrt(max(float(cut @ Ag), 0.0))
            if norm == 0.0:
                break  # zero subgradient: x is optimal
            Ag /= norm
            x = x - Ag / (n + 1)
            A = (n * n / (n * n - 1.0)) * (A - (2.0 / (n + 1)) * np.outer(Ag, Ag))
            A = 0.5 * (A + A.T)
            log_det += step

    rec.quick = settings.stop_at_feasible
    rec.repair(settings.repair_starts, settings.repair_evals)
    best = rec.best
    if best is None:
        owner = last_winner[0].copy() if last_winner is not None else np.zeros(cfg.N, int)
        sol, rep = _outage_result(cfg, alpha, owner)
    else:
        sol, rep, _ = best
    rep.outer_iterations = iterations
    rep.converged = converged
    rep.dual_bound = best_g
    rep.extras["dual_point"] = best_x
    rep.extras["candidates"] = len(rec.seen)
    if not converged:
        rep.extras["warning"] = "ellipsoid iteration cap reached"
    if record:
        rep.extras["history"] = history
    return sol, rep
