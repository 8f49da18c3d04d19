import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensorsel.channel import (
    ChannelConfig, ChannelRealization, check_qos, db_to_linear, draw_channel, pathloss_db,
    qos_threshold, sinr, sinr_all,
)
from sensorsel.instances import case_study

THETA = math.sqrt(2) - 1


@pytest.mark.parametrize("d, expected", [(1.0, -147.3), (10.0, -190.6),
                                         (2.0, -147.3 - 43.3 * math.log10(2))])
def test_pathloss(d, expected):
    assert pathloss_db(d) == pytest.approx(expected, abs=1e-12)


def test_pathloss_rejects_nonpositive():
    with pytest.raises(ValueError):
        pathloss_db(0.0)


def test_qos_threshold_values():
    assert qos_threshold(1e6, 1e6) == pytest.approx(1.0)
    assert qos_threshold(50e6, 100e6) == pytest.approx(THETA, abs=1e-15)
    assert qos_threshold(50e6, 1e15) < 1e-7


@given(st.floats(1e3, 1e8), st.floats(1e6, 1e10), st.floats(1.01, 3.0))
def test_qos_threshold_monotone(r, B, k):
    assert qos_threshold(r, B * k) < qos_threshold(r, B)
    assert qos_threshold(r * k, B) > qos_threshold(r, B)


def _cfg(**kw):
    base = dict(distance_km=(0.5, 1.0, 1.5), noise_power_db=-100.0, rate=50e6, bandwidth=1e8)
    base.update(kw)
    return ChannelConfig(**base)


def test_draw_channel_deterministic_pieces():
    cfg = _cfg(shadowing_std_db=0.0, unit_small_scale=True, path_gain=(1.0, 2.0, 3.0))
    h = draw_channel(cfg, 1).h
    expected = np.array([1.0, 2.0, 3.0]) * db_to_linear(pathloss_db(np.array([0.5, 1.0, 1.5])))
    np.testing.assert_allclose(h, expected, rtol=1e-14)


def test_draw_channel_seeded():
    a, b = draw_channel(_cfg(), 7), draw_channel(_cfg(), 7)
    np.testing.assert_array_equal(a.h, b.h)
    assert not np.array_equal(a.h, draw_channel(_cfg(), 8).h)


def test_draw_channel_scale_consistency():
    a = draw_channel(_cfg(path_gain=1.0), 3)
    b = draw_channel(_cfg(path_gain=2.0), 3)
    np.testing.assert_allclose(b.h, 2 * a.h, rtol=1e-15)


def test_small_scale_unit_mean():
    cfg = ChannelConfig((1.0,) * 100_000, -100.0, shadowing_std_db=0.0, theta=1.0)
    h = draw_channel(cfg, 0).h / db_to_linear(pathloss_db(1.0))
    assert 0.99 <= h.mean() <= 1.01


def test_channel_config_validation():
    with pytest.raises(ValueError, match="exactly one"):
        ChannelConfig((1.0,), -100.0)
    with pytest.raises(ValueError, match="exactly one"):
        ChannelConfig((1.0,), -100.0, rate=1.0, bandwidth=1.0, theta=1.0)
    with pytest.raises(ValueError):
        ChannelConfig((1.0,), -100.0, p_max_mw=0.0, theta=1.0)
    with pytest.raises(ValueError):
        ChannelRealization([1.0], 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ChannelRealization([-1.0], 1.0, 1.0, 1.0)


def test_sinr_values():
    real = case_study(1).real
    p = np.array([0, 0.7741, 0, 0.7741, 0.7741])
    assert sinr(1, p, real) == pytest.approx(0.7741 / 1.5582, rel=1e-12)
    assert sinr(1, p, real) >= THETA
    assert sinr(0, np.zeros(5), real) == 0.0
    single = ChannelRealization([2.0], 1.0, 1.0, 1.0)
    assert sinr(0, [0.5], single) == pytest.approx(1.0)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_sinr_monotonicity(seed, N):
    rng = np.random.default_rng(seed)
    real = ChannelRealization(rng.uniform(0.01, 3, N), 0.01, 1.0, 0.5)
    p = rng.uniform(0, 1, N)
    i, j = rng.choice(N, 2, replace=False)
    up_i, up_j = p.copy(), p.copy()
    up_i[i] += 0.1
    up_j[j] += 0.1
    assert sinr(i, up_i, real) > sinr(i, p, real)
    assert sinr(i, up_j, real) <= sinr(i, p, real)
    np.testing.assert_allclose(sinr_all(p, real)[i], sinr(i, p, real))


def test_check_qos_cases():
    r1, r2 = case_study(1).real, case_study(2).real
    assert check_qos([], np.zeros(5), r1)
    assert check_qos([0, 2], np.array([0.0055, 0, 0.9588, 0, 0]), r2)
    assert not check_qos([0], np.array([2.0, 0, 0, 0, 0]), r2)   # above cap
    rng = np.random.default_rng(0)
    for _ in range(2000):
        p = np.zeros(5)
        p[1:] = rng.uniform(0, 1, 4)
        assert not check_qos([1, 2, 3, 4], p, r1)


def test_scaled_realization_keeps_sinr():
    real = ChannelRealization([1e-12, 3e-12], 1e-16, 1.0, 0.3)
    s = real.scaled(0.01)
    p = np.array([0.4, 0.7])
    np.testing.assert_allclose(sinr_all(p, s), sinr_all(p, real), rtol=1e-12)
    assert s.sigma2 == 0.01


def test_assumption():
    real = case_study(1).real
    assert real.single_link_ok().all()
    weak = ChannelRealization([1e-3, 1.0], 0.01, 1.0, THETA)
    np.testing.assert_array_equal(weak.single_link_ok(), [False, True])
    assert not weak.assumption_holds([0])
    assert weak.assumption_holds([0, 1])
    assert not weak.assumption_holds([])
