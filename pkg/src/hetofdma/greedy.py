"""Low-complexity greedy allocator.

DC users grab subcarriers one at a time under an equal-power guess, then
each user's power is refined by exact water-filling. Subcarriers that end
up unused go to the best NDC user on each of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import SystemConfig, assignment_to_rho, check_alpha
from .waterfill import allocate_given_assignment, dc_water_level


@dataclass
class GreedyState:
    omega: list
    available: list
    provisional_rates: np.ndarray
    iterations: int = 0
    returned: list = field(default_factory=list)


def greedy_dc_assign(cfg: SystemConfig, alpha) -> GreedyState:
    """Equal-power greedy grabbing by the DC user furthest from its target.

    Each pick credits ``log2(1 + alpha * P_T / N)``. Ties go to the lowest
    user index, then the lowest subcarrier index.
    """
    alpha = check_alpha(cfg, alpha)
    K1, N = cfg.K1, cfg.N
    R = cfg.rates
    share = cfg.P_T / N
    omega = [[] for _ in range(K1)]
    free = np.ones(N, dtype=bool)
    Rp = np.zeros(K1)
    it = 0
    while K1 and free.any():
        deficit = R - Rp
        k = int(np.argmax(deficit))
        if deficit[k] <= 0:
            break
        n = int(np.argmax(np.where(free, alpha[k], -np.inf)))
        free[n] = False
        omega[k].append(n)
        Rp[k] += math.log2(1.0 + alpha[k, n] * share)
        it += 1
    return GreedyState(omega=omega, available=list(np.flatnonzero(free)),
                       provisional_rates=Rp, iterations=it)


def refine_and_handover(cfg: SystemConfig, alpha, state: GreedyState):
    """Water-fill each DC user on its set, free the idle subcarriers, and
    hand every free subcarrier to its best-CNR NDC user."""
    alpha = check_alpha(cfg, alpha)
    K, K1 = cfg.K, cfg.K1
    owner = np.full(cfg.N, -1)
    returned = []
    for k, om in enumerate(state.omega):
        if not om:
            continue
        _, _, p = dc_water_level(alpha[k, om], cfg.R[k])
        om = np.asarray(om)
        owner[om[p > 0]] = k
        returned.extend(int(n) for n in om[p <= 0])
    state.returned = sorted(returned)
    pool = np.array(sorted(state.available + state.returned), dtype=int)
    if K > K1 and pool.size:
        owner[pool] = K1 + np.argmax(alpha[K1:, pool], axis=0)
    sol, rep = allocate_given_assignment(cfg, alpha, assignment_to_rho(owner, K), "greedy")
    rep.outer_iterations = state.iterations
    return sol, rep


def solve_greedy(cfg: SystemConfig, alpha):
    state = greedy_dc_assign(cfg, alpha)
    return refine_and_handover(cfg, alpha, state)
