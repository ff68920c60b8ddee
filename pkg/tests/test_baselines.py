import numpy as np
import pytest

from hetofdma import channel
from hetofdma.baselines import (allocate_fixed, fsa_pattern, fsap_cycle, fsap_pattern,
                                single_ndc, solve_fsa, solve_fsap)
from hetofdma.model import ConfigError, SystemConfig


def test_fsa_patterns():
    p = fsa_pattern(8, 64)
    assert p.counts.tolist() == [8] * 8
    assert np.flatnonzero(p.assignment == 3).tolist() == list(range(3, 64, 8))
    assert fsa_pattern(1, 4).assignment.tolist() == [0, 0, 0, 0]
    assert fsa_pattern(2, 4).assignment.tolist() == [0, 1, 0, 1]
    with pytest.raises(ConfigError):
        fsa_pattern(3, 4)


def test_fsap_pattern():
    cfg = SystemConfig.equal_split(8, 4, 64, 10.0, 80.0)
    p = fsap_pattern(cfg)
    assert p.counts.tolist() == [12] * 4 + [4] * 4
    assert fsap_cycle(8, 4).tolist() == [0, 4, 1, 5, 2, 6, 3, 7, 0, 1, 2, 3, 0, 1, 2, 3]
    for k in range(8):
        idx = np.flatnonzero(p.assignment == k)
        gaps = np.diff(np.append(idx, idx[0] + 64))
        assert gaps.max() <= 16
    np.testing.assert_array_equal(fsap_pattern(cfg).assignment, fsap_pattern(cfg).assignment)
    k0 = SystemConfig(K=8, K1=0, N=64, P_T=1.0, R=())
    np.testing.assert_array_equal(fsap_pattern(k0).assignment, fsa_pattern(8, 64).assignment)
    with pytest.raises(ConfigError):
        fsap_pattern(SystemConfig.equal_split(8, 4, 40, 1.0, 8.0))


def test_single_ndc_and_one_user_waterfill():
    cfg = SystemConfig.equal_split(8, 4, 64, 10.0, 80.0)
    p = single_ndc(fsap_pattern(cfg), 4, 6, 8)
    assert p.counts.tolist() == [12] * 4 + [0, 0, 16, 0]
    with pytest.raises(ConfigError):
        single_ndc(p, 4, 2, 8)
    one = SystemConfig(K=2, K1=0, N=4, P_T=2.0, R=())
    alpha = np.array([[1.0, 2.0, 3.0, 4.0], [9.0] * 4])
    pat = single_ndc(fsa_pattern(2, 4), 0, 0, 2)
    _, rep = allocate_fixed(one, alpha, pat)
    from hetofdma.waterfill import ndc_water_level
    _, pw = ndc_water_level(alpha[0], 2.0)
    assert rep.ndc_sum_rate == pytest.approx(np.log2(1 + pw * alpha[0]).sum())


def test_priority_supports_more_dc_rate():
    model = channel.build_model()
    for t in range(10):
        alpha, P_T = channel.realization_cnr(model, 8, 64, 21, t, 20.0)

        def max_rdc(solver):
            lo, hi = 0.0, 400.0
            while hi - lo > 0.5:
                mid = (lo + hi) / 2
                cfg = SystemConfig.equal_split(8, 4, 64, P_T, mid)
                lo, hi = (mid, hi) if not solver(cfg, alpha)[1].outage else (lo, mid)
            return lo
        assert max_rdc(solve_fsap) >= max_rdc(solve_fsa)
