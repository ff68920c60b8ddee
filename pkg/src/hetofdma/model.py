"""System configuration, solution containers and error types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration or argument."""


class PowerUnassignableError(ValueError):
    """Positive power was left over with no subcarrier to carry it."""


class NonConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    The last iterate is kept on ``state`` for diagnostics.
    """

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class SystemConfig:
    """User counts, DC rate targets and power budget.

    The first ``K1`` of the ``K`` users carry delay-constrained traffic with
    rate targets ``R`` (bits per OFDM symbol); the rest are best effort.
    """

    K: int
    K1: int
    N: int
    P_T: float
    R: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "R", tuple(float(r) for r in self.R))
        if self.K < 1 or not 0 <= self.K1 <= self.K:
            raise ConfigError(f"need 0 <= K1 <= K and K >= 1, got K={self.K}, K1={self.K1}")
        if self.N < 1:
            raise ConfigError(f"need N >= 1, got {self.N}")
        if not (self.P_T > 0 and np.isfinite(self.P_T)):
            raise ConfigError(f"total power must be positive and finite, got {self.P_T}")
        if len(self.R) != self.K1:
            raise ConfigError(f"expected {self.K1} DC rate targets, got {len(self.R)}")
        if any(not (r > 0 and np.isfinite(r)) for r in self.R):
            raise ConfigError(f"DC rate targets must be positive, got {self.R}")

    @classmethod
    def equal_split(cls, K: int, K1: int, N: int, P_T: float, R_DC: float) -> "SystemConfig":
        """DC targets all equal to ``R_DC / K1``."""
        R = (R_DC / K1,) * K1 if K1 else ()
        return cls(K=K, K1=K1, N=N, P_T=P_T, R=R)

    @property
    def ndc_users(self) -> int:
        return self.K - self.K1

    @property
    def rates(self) -> np.ndarray:
        return np.asarray(self.R, dtype=float)

    def with_power(self, P_T: float) -> "SystemConfig":
        return SystemConfig(self.K, self.K1, self.N, P_T, self.R)


def check_alpha(cfg: SystemConfig, alpha) -> np.ndarray:
    a = np.ascontiguousarray(alpha, dtype=float)
    if a.shape != (cfg.K, cfg.N):
        raise ConfigError(f"CNR matrix shape {a.shape} does not match (K, N) = {(cfg.K, cfg.N)}")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ConfigError("CNR entries must be positive and finite")
    return a


def check_sharing(rho, K: int, N: int, exclusive: bool = False, allow_idle: bool = False,
                  tol: float = 1e-9) -> np.ndarray:
    """Validate a K x N time-sharing matrix and return it as a float array.

    Columns must sum to one; ``allow_idle`` also accepts all-zero columns
    (only meaningful when there is nobody to hand a spare subcarrier to).
    """
    r = np.asarray(rho, dtype=float)
    if r.shape != (K, N):
        raise ConfigError(f"sharing matrix shape {r.shape} does not match {(K, N)}")
    if np.any(r < -tol) or np.any(r > 1 + tol):
        raise ConfigError("sharing factors must lie in [0, 1]")
    sums = r.sum(axis=0)
    ok = np.abs(sums - 1.0) <= tol
    if allow_idle:
        ok |= np.abs(sums) <= tol
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise ConfigError(f"sharing factors on subcarrier {bad} sum to {sums[bad]!r}, not 1")
    if exclusive and np.any((r > tol) & (r < 1 - tol)):
        raise ConfigError("exclusive assignment expected, found a fractional sharing factor")
    return np.clip(r, 0.0, 1.0)


def assignment_to_rho(assignment: Sequence[int], K: int) -> np.ndarray:
    """Exclusive sharing matrix from a per-subcarrier owner list (-1 = idle)."""
    a = np.asarray(assignment, dtype=int)
    rho = np.zeros((K, a.size))
    used = a >= 0
    rho[a[used], np.flatnonzero(used)] = 1.0
    return rho


@dataclass
class PowerSolution:
    """Actual powers ``s``, conditional powers ``P_cond`` and water levels."""

    s: np.ndarray
    P_cond: np.ndarray
    rho: np.ndarray
    L_dc: np.ndarray
    L0: float
    P_dc_total: float

    @property
    def total_power(self) -> float:
        return float(self.s.sum())


@dataclass
class AllocationReport:
    rates: np.ndarray
    ndc_sum_rate: float
    outage: bool
    solver_id: str
    outer_iterations: int = 0
    inner_iterations: int = 0
    converged: bool = True
    dual_bound: Optional[float] = None
    extras: dict = field(default_factory=dict)

    @property
    def iterations(self) -> tuple:
        return (self.outer_iterations, self.inner_iterations)


def user_rates(alpha: np.ndarray, rho: np.ndarray, P_cond: np.ndarray) -> np.ndarray:
    """Per-user rate sum of rho * log2(1 + P * alpha)."""
    return np.sum(rho * np.log2(1.0 + P_cond * alpha), axis=1)
