import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_channel, make_instance
from sensorsel.channel import ChannelRealization, check_qos, sinr_all
from sensorsel.feasibility import (
    Reason, interference_matrix, is_feasible, min_power_vector, spectral_radius_estimate,
)
from sensorsel.instances import case_study
from sensorsel.sca import RelaxedInstance, constraint_residuals

THETA = math.sqrt(2) - 1
seeds = st.integers(0, 2**32 - 1)


def test_case2_pair_closed_form():
    v = min_power_vector([0, 2], case_study(2).real)
    assert v.feasible and v.reason is Reason.OK
    # a = theta (b + s), b = theta (a + s) with a = 2 p1, b = 0.01 p3
    a = THETA * 0.01 / (1 - THETA)
    np.testing.assert_allclose(v.p_min[[0, 2]], [a / 2, a / 0.01], rtol=1e-12)
    np.testing.assert_allclose(v.p_min[[0, 2]], [0.003536, 0.7071], atol=5e-5)
    assert v.p_min[1] == 0


def test_singleton():
    real = case_study(1).real
    v = min_power_vector([1], real)
    assert v.feasible
    assert v.p_min[1] == pytest.approx(THETA * 0.01 / 1.0)


def test_case1_infeasible_quadruple():
    v = min_power_vector([1, 2, 3, 4], case_study(1).real)
    assert not v.feasible and v.reason is Reason.SPECTRAL_RADIUS_GE_ONE
    assert 4 * THETA / (1 + THETA) > 1


def test_case1_triple_feasible():
    real = case_study(1).real
    assert is_feasible([1, 3, 4], real)
    p = min_power_vector([1, 3, 4], real).p_min
    np.testing.assert_allclose(p[[1, 3, 4]], THETA * 0.01 / (1 - 2 * THETA), rtol=1e-12)
    assert p[1] == pytest.approx(0.0241, abs=5e-5)


def test_case2_power_cap():
    v = min_power_vector([0, 2, 4], case_study(2).real)
    assert not v.feasible and v.reason is Reason.POWER_CAP_EXCEEDED
    assert v.p_min[2] > 1.0


def test_empty_and_bad_subsets():
    real = case_study(1).real
    assert is_feasible([], real)
    with pytest.raises(ValueError):
        min_power_vector([], real)
    with pytest.raises(ValueError):
        min_power_vector([7], real)


def test_zero_gain_is_infeasible():
    real = ChannelRealization([0.0, 1.0], 0.01, 1.0, 0.5)
    assert not is_feasible([0], real)


def test_spectral_radius_estimate():
    rng = np.random.default_rng(0)
    for _ in range(50):
        F = rng.uniform(0, 1, (4, 4))
        np.fill_diagonal(F, 0)
        rho = max(abs(np.linalg.eigvals(F)))
        est = spectral_radius_estimate(F)
        assert est >= rho - 1e-12 and est <= rho * (1 + 1e-6)
    assert spectral_radius_estimate(np.array([[0, 1.0], [1.0, 0]])) == pytest.approx(1.0)


@settings(max_examples=200)
@given(seeds, st.integers(1, 6))
def test_p_min_tight_and_minimal(seed, N):
    rng = np.random.default_rng(seed)
    real = make_channel(rng, N, theta=rng.uniform(0.05, 0.5, N))
    S = sorted(rng.choice(N, rng.integers(1, N + 1), replace=False).tolist())
    v = min_power_vector(S, real)
    if not v.feasible:
        return
    assert check_qos(S, v.p_min, real)
    assert np.all(v.p_min >= 0) and np.all(v.p_min <= real.p_max + 1e-9)
    np.testing.assert_allclose(sinr_all(v.p_min, real)[S], real.theta[S], rtol=0, atol=1e-10)
    # independently sampled feasible powers dominate p_min
    for _ in range(100):
        q = v.p_min * rng.uniform(1.0, 3.0) + rng.uniform(0, 0.05, N)
        q[[i for i in range(N) if i not in S]] = 0
        q = np.minimum(q, real.p_max)
        if check_qos(S, q, real, tol=0):
            assert np.all(q[S] >= v.p_min[S] - 1e-12)


@pytest.mark.parametrize("seed", range(12))
def test_superset_of_infeasible_is_infeasible(seed):
    rng = np.random.default_rng(seed)
    N = 6
    real = make_channel(rng, N)
    infeasible = [set(c) for k in range(1, N + 1) for c in itertools.combinations(range(N), k)
                  if not is_feasible(c, real)]
    for k in range(1, N + 1):
        for c in itertools.combinations(range(N), k):
            if any(bad <= set(c) for bad in infeasible):
                assert not is_feasible(c, real)


@settings(max_examples=50)
@given(seeds)
def test_feasible_subset_admits_relaxed_point(seed):
    rng = np.random.default_rng(seed)
    N = 4
    real = make_channel(rng, N)
    inst = make_instance(rng, n=2, N=N, m=1)
    for k in range(1, N + 1):
        for c in itertools.combinations(range(N), k):
            v = min_power_vector(c, real)
            if not v.feasible:
                continue
            r = RelaxedInstance(inst, np.eye(2), real, c)
            g = np.zeros(N)
            g[list(c)] = 1.0
            rx = real.h * v.p_min
            eta = rx.sum() - rx + real.sigma2
            assert constraint_residuals(g, eta, v.p_min, r).max() <= 1e-9


def test_interference_matrix_shape():
    F, u = interference_matrix([0, 2], case_study(2).real)
    assert F.shape == (2, 2) and F[0, 0] == 0
    assert F[0, 1] == pytest.approx(THETA * 0.01 / 2)
    assert u[1] == pytest.approx(THETA * 0.01 / 0.01)
