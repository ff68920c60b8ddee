import json

import numpy as np
import pytest

from hetofdma import channel, harness
from hetofdma.harness import ExperimentSpec, ResultRow, read_csv, run, solve_one, wilson, write_csv
from hetofdma.model import ConfigError, SystemConfig
from hetofdma.oracle import exhaustive_solve
from hetofdma.waterfill import allocate_given_assignment


def test_wilson_against_scipy():
    stats = pytest.importorskip("scipy.stats")
    for k, n in [(0, 10), (5, 20), (500, 500), (3, 1000)]:
        ci = stats.binomtest(k, n).proportion_ci(method="wilson")
        assert wilson(k, n) == pytest.approx((ci.low, ci.high), abs=1e-12)
    assert wilson(0, 0) == (0.0, 1.0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec("nope")
    with pytest.raises(ConfigError):
        ExperimentSpec("outage_sweep", trials=0)
    with pytest.raises(ConfigError):
        ExperimentSpec("outage_sweep", snr_grid=())
    with pytest.raises(ConfigError):
        ExperimentSpec("outage_sweep", algos=("magic",))
    with pytest.raises(ConfigError):
        ExperimentSpec("min_snr", target_outage=1.0)


def _csv(rows, tmp_path, name):
    p = tmp_path / name
    write_csv(rows, p)
    return p.read_bytes()


def test_outage_sweep_deterministic_and_parallel_safe(tmp_path):
    spec = ExperimentSpec("outage_sweep", snr_grid=(8.0, 12.0), trials=12, seed=3)
    a = _csv(run(spec), tmp_path, "a.csv")
    b = _csv(run(spec), tmp_path, "b.csv")
    c = _csv(run(spec, workers=2), tmp_path, "c.csv")
    assert a == b == c
    header = a.decode().splitlines()[0].split(",")
    assert header == harness.FIELDS
    assert header[:9] == ["experiment", "algo", "snr_db", "rdc", "ndc_users", "outage_prob",
                          "avg_ndc_rate", "avg_iterations", "trials_used"]


def test_outage_monotone_per_trial():
    model = channel.build_model()
    for t in range(6):
        alpha, _ = channel.realization_cnr(model, 8, 64, 1, t, 0.0)
        seen = [harness.in_outage("optimal_ts", SystemConfig.equal_split(8, 4, 64, 10 ** (s / 10), 80.0),
                                  alpha) for s in np.arange(4, 18, 1.0)]
        assert all(not (b and not a) for a, b in zip(seen, seen[1:]))


def test_outage_decisions_match_full_solves():
    model = channel.build_model()
    for t in range(4):
        alpha, P_T = channel.realization_cnr(model, 8, 64, 2, t, 10.0)
        cfg = SystemConfig.equal_split(8, 4, 64, P_T, 80.0)
        for a in ("optimal_ts", "dual"):
            assert harness.in_outage(a, cfg, alpha) == harness.run_algo(a, cfg, alpha)[1].outage


def test_csv_roundtrip(tmp_path):
    rows = run(ExperimentSpec("rate_region", rdc_grid=(0.0, 40.0), trials=4, seed=1,
                              algos=("greedy", "fsa")))
    p = tmp_path / "r.csv"
    write_csv(rows, p)
    back = read_csv(p)
    assert [r.sort_key() for r in back] == sorted(r.sort_key() for r in rows)
    assert isinstance(back[0], ResultRow) and isinstance(back[0].trials_used, int)


def test_rate_region_properties():
    spec = ExperimentSpec("rate_region", rdc_grid=(0.0, 32.0, 96.0, 144.0), trials=6, seed=4,
                          algos=("optimal_ts", "dual", "greedy", "fsap"))
    rows = {(r.algo, r.rdc): r for r in run(spec)}
    # no DC demand: the adaptive schemes all reduce to best-CNR water-filling
    base = rows[("optimal_ts", 0.0)].avg_ndc_rate
    for a in ("dual", "greedy"):
        assert rows[(a, 0.0)].avg_ndc_rate == pytest.approx(base, rel=1e-12)
    for a in ("optimal_ts", "greedy"):
        vals = [rows[(a, r)].avg_ndc_rate for r in (0.0, 32.0, 96.0, 144.0)]
        assert all(x >= y for x, y in zip(vals, vals[1:]))
    assert ("fsap", 144.0) not in rows  # above the priority comb's R_DC cap


def test_min_snr_is_monotone_in_rdc():
    spec = ExperimentSpec("min_snr", rdc_grid=(16.0, 48.0, 80.0), trials=25, seed=2,
                          algos=("optimal_ts",))
    rows = sorted(run(spec), key=lambda r: r.rdc)
    snr = [r.snr_db for r in rows]
    assert snr == sorted(snr)
    assert all(r.outage_prob <= 0.01 for r in rows)


def test_min_snr_flags_unreachable():
    spec = ExperimentSpec("min_snr", rdc_grid=(4000.0,), trials=2, algos=("fsa",), seed=0)
    (row,) = run(spec)
    assert row.flag == "unreachable"


def test_convergence_rows():
    spec = ExperimentSpec("convergence", dc_grid=(1, 2), n_grid=(16,), trials=3, seed=5)
    rows = run(spec)
    assert [r.dc_users for r in rows] == [1, 2]
    for r in rows:
        assert r.trials_used == 3 and r.avg_outer_iterations > 0 and r.avg_iterations > 0


def test_diversity_round_robin_keeps_comb_counts():
    spec = ExperimentSpec("diversity", rdc_grid=(32.0,), ndc_grid=(4, 6), trials=3, seed=1,
                          algos=("fsap",))
    rows = run(spec)
    assert {r.ndc_users for r in rows} == {4, 6}
    assert all(r.trials_used == 3 for r in rows)


def test_solve_one_roundtrip(tmp_path):
    h = channel.draw_realization(channel.build_model(), 8, 64, 9).freq_response
    p = tmp_path / "h.csv"
    channel.dump_csv(p, h)
    cfg = SystemConfig.equal_split(8, 4, 64, 1.0, 80.0)
    out = solve_one(cfg, channel.load_csv(p), "optimal_ts", snr_db=16.0)
    out = json.loads(json.dumps(out))
    cnr, P_T = channel.to_cnr(channel.ChannelRealization(8, 64, h, 0), channel.DEFAULT_GAP, 16.0)
    rho, s = np.array(out["rho"]), np.array(out["s"])
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.where(rho > 0, s / rho, 0.0)
    rates = (rho * np.log2(1 + P * cnr.alpha)).sum(axis=1)
    np.testing.assert_allclose(rates, out["rates"], atol=1e-9)
    _, rep = allocate_given_assignment(cfg.with_power(P_T), cnr.alpha, rho)
    np.testing.assert_allclose(rep.rates, out["rates"], atol=1e-9)


def test_solve_one_k1_zero_and_oracle():
    rng = np.random.default_rng(3)
    h = (rng.standard_normal((3, 8)) + 1j * rng.standard_normal((3, 8))) / np.sqrt(2)
    out = solve_one(SystemConfig(3, 0, 8, 1.0, ()), h, "dual", snr_db=10.0)
    np.testing.assert_array_equal(np.array(out["rho"]).argmax(axis=0), np.abs(h).argmax(axis=0))
    cfg = SystemConfig(3, 1, 8, 1.0, (6.0,))
    out = solve_one(cfg, h, "oracle", snr_db=15.0)
    cnr, P_T = channel.to_cnr(channel.ChannelRealization(3, 8, h, 0), channel.DEFAULT_GAP, 15.0)
    res = exhaustive_solve(cfg.with_power(P_T), cnr.alpha)
    assert out["ndc_sum_rate"] == pytest.approx(res.best_ndc_sum_rate, abs=1e-12)
    with pytest.raises(ConfigError):
        solve_one(SystemConfig(2, 0, 8, 1.0, ()), h, "dual")
