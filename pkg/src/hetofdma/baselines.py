"""Fixed comb assignments with optimal power on top."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ConfigError, SystemConfig, assignment_to_rho, check_alpha
from .waterfill import allocate_given_assignment


@dataclass(frozen=True)
class CombPattern:
    assignment: np.ndarray
    counts: np.ndarray


def _pattern(cycle, K, N):
    cycle = np.asarray(cycle, dtype=int)
    if N % cycle.size:
        raise ConfigError(f"N={N} is not a multiple of the comb cycle length {cycle.size}")
    a = np.tile(cycle, N // cycle.size)
    return CombPattern(assignment=a, counts=np.bincount(a, minlength=K))


def fsa_pattern(K: int, N: int) -> CombPattern:
    """Equal comb: subcarrier n goes to user n mod K."""
    if K < 1 or N % K:
        raise ConfigError(f"equal comb needs K dividing N, got K={K}, N={N}")
    return _pattern(np.arange(K), K, N)


def fsap_cycle(K: int, K1: int) -> np.ndarray:
    """Priority comb cycle: DC and NDC users interleaved once, then two
    more DC rounds, so each DC user gets three slots per NDC slot."""
    K0 = K - K1
    first = []
    for i in range(max(K1, K0)):
        if i < K1:
            first.append(i)
        if i < K0:
            first.append(K1 + i)
    return np.array(first + list(range(K1)) * 2, dtype=int)


def fsap_pattern(cfg: SystemConfig) -> CombPattern:
    if cfg.K1 == 0:
        return fsa_pattern(cfg.K, cfg.N)
    return _pattern(fsap_cycle(cfg.K, cfg.K1), cfg.K, cfg.N)


def single_ndc(pattern: CombPattern, K1: int, user: int, K: int) -> CombPattern:
    """Hand every NDC slot of ``pattern`` to one NDC ``user``."""
    if not K1 <= user < K:
        raise ConfigError(f"user {user} is not an NDC user")
    a = np.where(pattern.assignment >= K1, user, pattern.assignment)
    return CombPattern(assignment=a, counts=np.bincount(a, minlength=K))


def allocate_fixed(cfg: SystemConfig, alpha, pattern: CombPattern, solver_id: str = "fixed"):
    alpha = check_alpha(cfg, alpha)
    if pattern.assignment.shape != (cfg.N,) or pattern.assignment.max() >= cfg.K:
        raise ConfigError("pattern does not fit the configuration")
    return allocate_given_assignment(cfg, alpha, assignment_to_rho(pattern.assignment, cfg.K),
                                     solver_id)


def solve_fsa(cfg: SystemConfig, alpha):
    return allocate_fixed(cfg, alpha, fsa_pattern(cfg.K, cfg.N), "fsa")


def solve_fsap(cfg: SystemConfig, alpha):
    return allocate_fixed(cfg, alpha, fsap_pattern(cfg), "fsap")
