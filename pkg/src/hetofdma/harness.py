"""Monte Carlo experiment driver.

Every experiment is a deterministic function of its ``ExperimentSpec``.
Trial ``t`` sees the same channel in every algorithm and at every grid
point (common random numbers), work is farmed out per trial, and rows are
sorted before writing so the CSV does not depend on worker scheduling.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import channel
from .baselines import CombPattern, allocate_fixed, fsa_pattern, fsap_pattern, single_ndc
from .dual import DualSettings, solve_dual
from .greedy import solve_greedy
from .model import ConfigError, SystemConfig
from .optimal import SolverSettings, outage_only, outer_solve
from .oracle import oracle_allocation

KINDS = ("outage_sweep", "min_snr", "rate_region", "diversity", "convergence", "solve_one")
ALGOS = ("optimal_ts", "dual", "greedy", "fsa", "fsap")
# highest R_DC each scheme is run at in the rate region (its 1%-outage limit at 20 dB)
RDC_CAPS = {"optimal_ts": 176.0, "dual": 176.0, "greedy": 176.0, "fsap": 112.0, "fsa": 80.0}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    K: int = 8
    K1: int = 4
    N: int = 64
    snr_grid: tuple = (20.0,)
    rdc_grid: tuple = (80.0,)
    ndc_grid: tuple = (4,)
    dc_grid: tuple = (4,)
    n_grid: tuple = (64,)
    trials: int = 500
    seed: int = 0
    algos: tuple = ALGOS
    gap: float = channel.DEFAULT_GAP
    target_outage: float = 0.01
    snr_range: tuple = (0.0, 60.0)
    snr_resolution: float = 0.1
    rate_per_dc: float = 16.0       # convergence study only
    power: float = 100.0            # convergence study only
    max_attempts: int = 10          # convergence study: draws per wanted realization
    rdc_caps: dict = field(default_factory=lambda: dict(RDC_CAPS))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        for name in ("snr_grid", "rdc_grid", "ndc_grid", "dc_grid", "n_grid", "algos"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} must not be empty")
        bad = [a for a in self.algos if a not in ALGOS]
        if bad:
            raise ConfigError(f"unknown algorithms {bad}; choose from {list(ALGOS)}")
        if not 0.0 < self.target_outage < 1.0:
            raise ConfigError("target outage must lie in (0, 1)")


@dataclass
class ResultRow:
    experiment: str
    algo: str
    snr_db: float
    rdc: float
    ndc_users: int
    outage_prob: float
    avg_ndc_rate: float
    avg_iterations: float
    trials_used: int
    dc_users: int = 0
    subcarriers: int = 0
    outage_count: int = 0
    ci_low: float = 0.0
    ci_high: float = 1.0
    avg_outer_iterations: float = float("nan")
    avg_search_iterations: float = float("nan")
    rate_stderr: float = float("nan")
    flag: str = ""

    def sort_key(self):
        return (self.experiment, self.algo, self.dc_users, self.subcarriers, self.ndc_users,
                self.rdc, self.snr_db)


FIELDS = [f.name for f in fields(ResultRow)]


def wilson(k: int, n: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, dest) -> None:
    """Rows in a fixed order to a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_rows(rows, dest)
    else:
        with open(dest, "w", newline="") as fh:
            _write_rows(rows, fh)


def _write_rows(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FIELDS)
    for r in sorted(rows, key=ResultRow.sort_key):
        d = asdict(r)
        w.writerow([_fmt(d[f]) for f in FIELDS])


def read_csv(path):
    conv = {f.name: f.type for f in fields(ResultRow)}
    out = []
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            kw = {}
            for k, v in d.items():
                t = conv[k]
                kw[k] = float(v) if t in ("float", float) else int(v) if t in ("int", int) else v
            out.append(ResultRow(**kw))
    return out


# -- per-trial work -------------------------------------------------------

_MODEL = channel.build_model()
_FAST_DUAL = DualSettings(stop_at_feasible=True)


def _alpha(spec: ExperimentSpec, K: int, N: int, trial: int) -> np.ndarray:
    real = channel.draw_realization(_MODEL, K, N, spec.seed, trial)
    cnr, _ = channel.to_cnr(real, spec.gap, 0.0)
    return cnr.alpha


def _base_patterns(K1: int, N: int):
    base = SystemConfig.equal_split(8, K1, N, 1.0, 1.0) if K1 else SystemConfig(8, 0, N, 1.0, ())
    return {"fsa": fsa_pattern(8, N), "fsap": fsap_pattern(base)}


def run_algo(algo: str, cfg: SystemConfig, alpha, pattern: CombPattern | None = None):
    """Full solve with one scheme; returns ``(PowerSolution, AllocationReport)``."""
    if algo == "optimal_ts":
        return outer_solve(cfg, alpha)
    if algo == "dual":
        return solve_dual(cfg, alpha)
    if algo == "greedy":
        return solve_greedy(cfg, alpha)
    if algo in ("fsa", "fsap"):
        if pattern is None:
            pattern = fsa_pattern(cfg.K, cfg.N) if algo == "fsa" else fsap_pattern(cfg)
        return allocate_fixed(cfg, alpha, pattern, algo)
    if algo == "oracle":
        return oracle_allocation(cfg, alpha)
    raise ConfigError(f"unknown algorithm {algo!r}")


def in_outage(algo: str, cfg: SystemConfig, alpha) -> bool:
    """Outage decision alone, with the cheapest exact route per scheme.

    The optimal scheme decides outage at the first ``L0`` of its search and
    the dual search may stop at the first feasible map, so both agree with
    their full solves.
    """
    if algo == "optimal_ts":
        return outage_only(cfg, alpha)
    if algo == "dual":
        return solve_dual(cfg, alpha, _FAST_DUAL)[1].outage
    return run_algo(algo, cfg, alpha)[1].outage


def _outage_trial(args):
    spec, trial, snrs, rdcs = args
    alpha = _alpha(spec, spec.K, spec.N, trial)
    out = {}
    for rdc in rdcs:
        for snr in snrs:
            cfg = SystemConfig.equal_split(spec.K, spec.K1, spec.N, 10 ** (snr / 10), rdc)
            for a in spec.algos:
                out[(a, rdc, snr)] = in_outage(a, cfg, alpha)
    return out


def _rate_trial(args):
    spec, trial, K, K1, snr, rdcs, fixed_user = args
    alpha = _alpha(spec, K, spec.N, trial)
    pats = _base_patterns(K1, spec.N) if fixed_user is not None else {}
    out = {}
    for rdc in rdcs:
        if rdc > 0:
            cfg = SystemConfig.equal_split(K, K1, spec.N, 10 ** (snr / 10), rdc)
        else:
            # no DC demand: every user is best effort
            cfg = SystemConfig(K, 0, spec.N, 10 ** (snr / 10), ())
        for a in spec.algos:
            if rdc > spec.rdc_caps.get(a, math.inf):
                continue
            pat = None
            if a in pats:
                pat = single_ndc(pats[a], cfg.K1, fixed_user, K) if cfg.K1 else None
            _, rep = run_algo(a, cfg, alpha, pat)
            out[(a, rdc)] = (rep.outage, rep.ndc_sum_rate,
                             rep.outer_iterations + rep.inner_iterations, rep.outer_iterations)
    return out


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


def _outage_row(exp, algo, snr, rdc, spec, flags, K1=None, N=None):
    k = int(sum(flags))
    n = len(flags)
    lo, hi = wilson(k, n)
    return ResultRow(experiment=exp, algo=algo, snr_db=float(snr), rdc=float(rdc),
                     ndc_users=spec.K - spec.K1, outage_prob=k / n, avg_ndc_rate=float("nan"),
                     avg_iterations=float("nan"), trials_used=n,
                     dc_users=spec.K1 if K1 is None else K1,
                     subcarriers=spec.N if N is None else N, outage_count=k,
                     ci_low=lo, ci_high=hi)


# -- experiments ------------------------------------------------------------

def run_outage_sweep(spec: ExperimentSpec, workers: int = 1):
    jobs = [(spec, t, tuple(spec.snr_grid), (spec.rdc_grid[0],)) for t in range(spec.trials)]
    res = _map(_outage_trial, jobs, workers)
    rdc = spec.rdc_grid[0]
    return [_outage_row("outage_sweep", a, s, rdc, spec, [r[(a, rdc, s)] for r in res])
            for a in spec.algos for s in spec.snr_grid]


def _outage_at(spec, snr, rdcs, workers):
    jobs = [(spec, t, (snr,), rdcs) for t in range(spec.trials)]
    return _map(_outage_trial, jobs, workers)


def run_min_snr(spec: ExperimentSpec, workers: int = 1):
    """Smallest SNR (to ``snr_resolution``) at which the estimated outage is at
    most ``target_outage``, per R_DC and scheme."""
    lo0, hi0 = spec.snr_range
    rows = []
    for a in spec.algos:
        sub = replace(spec, algos=(a,))
        for rdc in spec.rdc_grid:
            def frac(snr):
                res = _outage_at(sub, snr, (rdc,), workers)
                return [r[(a, rdc, snr)] for r in res]
            top = frac(hi0)
            if np.mean(top) > spec.target_outage:
                row = _outage_row("min_snr", a, hi0, rdc, spec, top)
                row.flag = "unreachable"
                rows.append(row)
                continue
            lo, hi, at_hi = lo0, hi0, top
            bottom = frac(lo0)
            if np.mean(bottom) <= spec.target_outage:
                hi, at_hi = lo0, bottom
            else:
                while hi - lo > spec.snr_resolution + 1e-12:
                    mid = round(0.5 * (lo + hi), 10)
                    f = frac(mid)
                    if np.mean(f) > spec.target_outage:
                        lo = mid
                    else:
                        hi, at_hi = mid, f
            rows.append(_outage_row("min_snr", a, hi, rdc, spec, at_hi))
    return rows


def _rate_rows(exp, spec, res, K, K1, snr, rdcs, ndc):
    rows = []
    for a in spec.algos:
        for rdc in rdcs:
            vals = [r[(a, rdc)] for r in res if (a, rdc) in r]
            if not vals:
                continue
            out = [v[0] for v in vals]
            good = [v for v in vals if not v[0]]
            k, n = sum(out), len(vals)
            lo, hi = wilson(k, n)
            rows.append(ResultRow(
                experiment=exp, algo=a, snr_db=float(snr), rdc=float(rdc), ndc_users=ndc,
                outage_prob=k / n,
                avg_ndc_rate=float(np.mean([v[1] for v in good])) if good else float("nan"),
                avg_iterations=float(np.mean([v[2] for v in vals])),
                trials_used=len(good), dc_users=K1, subcarriers=spec.N, outage_count=k,
                ci_low=lo, ci_high=hi,
                avg_outer_iterations=float(np.mean([v[3] for v in vals])),
                rate_stderr=(float(np.std([v[1] for v in good], ddof=1) / math.sqrt(len(good)))
                             if len(good) > 1 else float("nan")),
                flag="" if good else "all_outage"))
    return rows


def run_rate_region(spec: ExperimentSpec, workers: int = 1):
    """Average NDC sum-rate over the non-outage trials, per R_DC and scheme."""
    snr = spec.snr_grid[0]
    jobs = [(spec, t, spec.K, spec.K1, snr, tuple(spec.rdc_grid), None)
            for t in range(spec.trials)]
    res = _map(_rate_trial, jobs, workers)
    return _rate_rows("rate_region", spec, res, spec.K, spec.K1, snr, spec.rdc_grid,
                      spec.K - spec.K1)


def run_diversity(spec: ExperimentSpec, workers: int = 1):
    """NDC sum-rate against the number of NDC users.

    Comb schemes keep the eight-user pattern and hand all its NDC slots to a
    single NDC user chosen round-robin by trial index.
    """
    snr, rdc, K1 = spec.snr_grid[0], spec.rdc_grid[0], spec.K1
    rows = []
    for n_ndc in spec.ndc_grid:
        K = K1 + n_ndc
        jobs = [(spec, t, K, K1, snr, (rdc,), K1 + t % n_ndc) for t in range(spec.trials)]
        res = _map(_rate_trial, jobs, workers)
        rows += _rate_rows("diversity", spec, res, K, K1, snr, (rdc,), n_ndc)
    return rows


def _convergence_trial(args):
    spec, K1, N, idx = args
    K = K1 + 2
    cfg = SystemConfig(K=K, K1=K1, N=N, P_T=spec.power, R=(spec.rate_per_dc,) * K1)
    # realization idx tries a fixed block of draws and keeps the first feasible one
    for j in range(spec.max_attempts):
        trial = idx * spec.max_attempts + j
        alpha = channel.iid_cnr(K, N, spec.seed + 7919 * K1 + 104729 * N, trial)
        _, rep = outer_solve(cfg, alpha)
        if not rep.outage:
            return rep.outer_iterations, rep.extras["inner_bisection"], rep.inner_iterations
    return None


def run_convergence(spec: ExperimentSpec, workers: int = 1):
    """Iterations of the optimal solver on feasible i.i.d. Rayleigh draws.

    ``avg_outer_iterations`` is the mean number of ``L0`` bisection updates
    and ``avg_iterations`` the mean total of inner passes over those
    updates; the passes spent bracketing ``L0`` go to ``avg_search_iterations``
    (an extra column only this experiment fills). Grid points where
    fewer than ``trials`` feasible draws turn up are flagged ``sparse``.
    """
    rows = []
    jobs = [(spec, K1, N, i) for K1 in spec.dc_grid for N in spec.n_grid
            for i in range(spec.trials)]
    res = _map(_convergence_trial, jobs, workers)
    for K1 in spec.dc_grid:
        for N in spec.n_grid:
            got = [r for (s, k, n, _), r in zip(jobs, res) if k == K1 and n == N and r]
            rows.append(ResultRow(
                experiment="convergence", algo="optimal_ts", snr_db=10 * math.log10(spec.power),
                rdc=spec.rate_per_dc * K1, ndc_users=2, outage_prob=float("nan"),
                avg_ndc_rate=float("nan"),
                avg_iterations=float(np.mean([g[1] for g in got])) if got else float("nan"),
                trials_used=len(got), dc_users=K1, subcarriers=N,
                outage_count=spec.trials - len(got), ci_low=float("nan"), ci_high=float("nan"),
                avg_outer_iterations=float(np.mean([g[0] for g in got])) if got else float("nan"),
                avg_search_iterations=(float(np.mean([g[2] - g[1] for g in got]))
                                       if got else float("nan")),
                flag="" if len(got) == spec.trials else "sparse"))
    return rows


def solve_one(cfg: SystemConfig, freq_response, algo: str, gap: float = channel.DEFAULT_GAP,
              snr_db: float | None = None):
    """Run one scheme on a stored channel.

    ``snr_db`` overrides ``cfg.P_T`` when given. Returns a JSON-ready dict
    with sharing factors, powers, water levels, rates and the outage flag.
    """
    h = np.asarray(freq_response, dtype=complex)
    if h.shape != (cfg.K, cfg.N):
        raise ConfigError(f"channel is {h.shape[0]} x {h.shape[1]}, expected {cfg.K} x {cfg.N}")
    real = channel.ChannelRealization(cfg.K, cfg.N, h, 0)
    cnr, P_T = channel.to_cnr(real, gap, 0.0 if snr_db is None else snr_db)
    if snr_db is not None:
        cfg = cfg.with_power(P_T)
    sol, rep = run_algo(algo, cfg, cnr.alpha)
    return {
        "algo": algo, "K": cfg.K, "K1": cfg.K1, "N": cfg.N, "P_T": cfg.P_T,
        "R": list(cfg.R), "outage": bool(rep.outage),
        "ndc_sum_rate": float(rep.ndc_sum_rate),
        "rates": [float(x) for x in rep.rates],
        "rho": sol.rho.tolist(), "s": sol.s.tolist(),
        "L_dc": [float(x) if np.isfinite(x) else None for x in sol.L_dc],
        "L0": float(sol.L0) if np.isfinite(sol.L0) else None,
        "outer_iterations": int(rep.outer_iterations),
        "inner_iterations": int(rep.inner_iterations),
        "converged": bool(rep.converged),
    }


RUNNERS = {
    "outage_sweep": run_outage_sweep,
    "min_snr": run_min_snr,
    "rate_region": run_rate_region,
    "diversity": run_diversity,
    "convergence": run_convergence,
}


def run(spec: ExperimentSpec, workers: int = 1):
    if spec.kind == "solve_one":
        raise ConfigError("solve_one needs a channel file; call solve_one directly")
    return RUNNERS[spec.kind](spec, workers)
