"""Built-in case studies and random instance generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, ChannelRealization, draw_channel, qos_threshold
from .estimation import LtiInstance, SensorModel

# 5-state plant used for the bandwidth experiments
FIVE_STATE_A = np.array([
    [0.9416, -0.0180, 0.0715, 0.0262, -0.0196],
    [-0.0559, 0.9948, 0.0544, 0.0251, -0.0148],
    [-0.0564, -0.0176, 1.0686, 0.0255, -0.0162],
    [-0.0631, -0.0090, 0.0652, 1.0284, -0.0179],
    [-0.0197, -0.0046, 0.0200, 0.0096, 1.0049],
])

CASE_GAINS = (2.0, 1.0, 0.01, 1.0, 1.0)
CASE_NOISE = 0.01          # -20 dB(mW)
CASE_RATE = 50e6
CASE_BANDWIDTH = 100e6     # gives theta = sqrt(2) - 1
CASE_R = {
    1: (0.5, 0.2, 0.15, 0.2, 0.2),
    2: (0.5, 1.0, 0.15, 1.0, 1.0),
}


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything a selection strategy needs for one time step."""

    inst: LtiInstance
    P_prev: np.ndarray
    real: ChannelRealization


def case_study(which: int) -> Problem:
    """Scalar plant ``A = 1.005, Q = 1`` with five unit-gain sensors and literal channel gains."""
    if which not in CASE_R:
        raise ValueError(f"case study must be 1 or 2, got {which}")
    sensors = tuple(SensorModel(1.0, r, i) for i, r in enumerate(CASE_R[which]))
    inst = LtiInstance(1.005, 1.0, sensors)
    theta = qos_threshold(CASE_RATE, CASE_BANDWIDTH)
    real = ChannelRealization(np.array(CASE_GAINS), CASE_NOISE, 1.0, theta)
    return Problem(inst, np.array([[1.0]]), real)


def random_sensor(rng: np.random.Generator, n: int, m: int, r_max: float, idx: int,
                  ridge: float = 0.1) -> SensorModel:
    """``C`` with entries uniform in [-1, 1]; ``R = D^T D + ridge I`` rescaled so ``R <= r_max I``."""
    C = rng.uniform(-1.0, 1.0, (m, n))
    D = rng.uniform(-1.0, 1.0, (m, m))
    R = D.T @ D + ridge * np.eye(m)
    R *= r_max / np.linalg.eigvalsh(R).max()
    return SensorModel(C, R, idx)


def random_distances(rng: np.random.Generator, N: int, radius_km: float, min_km: float) -> np.ndarray:
    """Distances of points drawn uniformly over a disc (uniform in r^2)."""
    d = radius_km * np.sqrt(rng.uniform(0.0, 1.0, N))
    return np.maximum(d, min_km)


@dataclass(frozen=True)
class RandomSpec:
    """Parameters of the random experiment generator."""

    n_sensors: int = 8
    state_dim: int = 5
    meas_dim: int = 5
    r_max: float = 5.0
    A: tuple | None = None        # defaults to FIVE_STATE_A when state_dim == 5, else 1.0 * I
    Q: tuple | None = None        # defaults to I
    P_prev: tuple | None = None   # defaults to I
    noise_power_db: float = -165.0
    p_max_mw: float = 1.0
    rate: float = 50e6
    area_radius_km: float = 2.0
    min_distance_km: float = 0.01
    shadowing_std_db: float = 8.0
    normalize_noise: float | None = 0.01

    def matrices(self):
        n = self.state_dim
        if self.A is not None:
            A = np.asarray(self.A, dtype=float)
        elif n == 5:
            A = FIVE_STATE_A.copy()
        else:
            A = np.eye(n)
        Q = np.eye(n) if self.Q is None else np.asarray(self.Q, dtype=float)
        P = np.eye(n) if self.P_prev is None else np.asarray(self.P_prev, dtype=float)
        return A, Q, P


def random_problem(spec: RandomSpec, bandwidth: float, seed) -> Problem:
    """One random deployment: sensors, positions and a fading draw, all from ``seed``."""
    rng = np.random.default_rng(seed)
    A, Q, P_prev = spec.matrices()
    sensors = tuple(random_sensor(rng, spec.state_dim, spec.meas_dim, spec.r_max, i)
                    for i in range(spec.n_sensors))
    inst = LtiInstance(A, Q, sensors)
    d = random_distances(rng, spec.n_sensors, spec.area_radius_km, spec.min_distance_km)
    cfg = ChannelConfig(tuple(float(x) for x in d), spec.noise_power_db, spec.p_max_mw,
                        shadowing_std_db=spec.shadowing_std_db,
                        area_radius_km=spec.area_radius_km, rate=spec.rate, bandwidth=bandwidth)
    real = draw_channel(cfg, rng)
    if spec.normalize_noise is not None:
        real = real.scaled(spec.normalize_noise)
    return Problem(inst, P_prev, real)
