"""Channel realizations, SINR and QoS checks.

Gains and powers are linear (mW scale) everywhere inside the package; dB
values are accepted only by :class:`ChannelConfig` and :func:`db_to_linear`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

QOS_TOL = 1e-9


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def pathloss_db(d_km) -> float:
    """Large-scale pathloss ``-147.3 - 43.3 log10(d)`` in dB, ``d`` in km."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = -147.3 - 43.3 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def qos_threshold(rate: float, bandwidth: float) -> float:
    """Linear SINR threshold needed to sustain ``rate`` bit/s over ``bandwidth`` Hz."""
    if rate <= 0 or bandwidth <= 0:
        raise ValueError("rate and bandwidth must be positive")
    return float(np.expm1(rate / bandwidth * np.log(2.0)))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    h: np.ndarray
    sigma2: float
    p_max: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float).reshape(-1)
        N = h.size
        p_max = np.broadcast_to(np.asarray(self.p_max, dtype=float), (N,)).copy()
        theta = np.broadcast_to(np.asarray(self.theta, dtype=float), (N,)).copy()
        if np.any(h < 0):
            raise ValueError("channel gains must be nonnegative")
        if np.any(theta <= 0):
            raise ValueError("SINR thresholds must be positive")
        if np.any(p_max <= 0):
            raise ValueError("power caps must be positive")
        if not self.sigma2 > 0:
            raise ValueError("noise power must be positive")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "p_max", p_max)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def N(self) -> int:
        return self.h.size

    def scaled(self, noise_ref: float) -> "ChannelRealization":
        """Same SINR geometry with noise power rescaled to ``noise_ref``."""
        k = noise_ref / self.sigma2
        return ChannelRealization(self.h * k, noise_ref, self.p_max, self.theta)

    def single_link_ok(self) -> np.ndarray:
        """Per sensor: can it meet its threshold alone at full power?"""
        return self.h * self.p_max / self.sigma2 >= self.theta * (1 - QOS_TOL)

    def assumption_holds(self, subset: Iterable[int] | None = None) -> bool:
        ok = self.single_link_ok()
        if subset is not None:
            idx = list(subset)
            ok = ok[idx] if idx else np.zeros(0, bool)
        return bool(np.any(ok))


@dataclass(frozen=True)
class ChannelConfig:
    """Per-sensor large-scale parameters plus shared link budget.

    Exactly one of ``(rate, bandwidth)`` or ``theta`` must be given.
    """

    distance_km: tuple[float, ...]
    noise_power_db: float
    p_max_mw: float | tuple[float, ...] = 1.0
    path_gain: float | tuple[float, ...] = 1.0
    shadowing_std_db: float = 8.0
    area_radius_km: float = 2.0
    rate: float | None = None
    bandwidth: float | None = None
    theta: float | tuple[float, ...] | None = None
    unit_small_scale: bool = False

    def __post_init__(self):
        has_rb = self.rate is not None and self.bandwidth is not None
        if has_rb == (self.theta is not None):
            raise ValueError("give exactly one of (rate, bandwidth) or theta")
        if np.any(np.asarray(self.p_max_mw) <= 0):
            raise ValueError("p_max must be positive")
        if np.any(np.asarray(self.distance_km) <= 0):
            raise ValueError("distances must be positive")

    @property
    def N(self) -> int:
        return len(self.distance_km)

    @property
    def sigma2(self) -> float:
        return float(db_to_linear(self.noise_power_db))

    def thresholds(self) -> np.ndarray:
        if self.theta is not None:
            return np.broadcast_to(np.asarray(self.theta, dtype=float), (self.N,)).copy()
        return np.full(self.N, qos_threshold(self.rate, self.bandwidth))


def draw_channel(cfg: ChannelConfig, seed) -> ChannelRealization:
    """Large-scale ``c * f * l`` times an exponential(1) small-scale power gain.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(seed)
    N = cfg.N
    c = np.broadcast_to(np.asarray(cfg.path_gain, dtype=float), (N,))
    shadow_db = rng.normal(0.0, cfg.shadowing_std_db, N) if cfg.shadowing_std_db > 0 else np.zeros(N)
    small = np.ones(N) if cfg.unit_small_scale else rng.exponential(1.0, N)
    large = c * db_to_linear(shadow_db) * db_to_linear(pathloss_db(np.asarray(cfg.distance_km)))
    return ChannelRealization(large * small, cfg.sigma2, cfg.p_max_mw, cfg.thresholds())


def interference(p, real: ChannelRealization) -> np.ndarray:
    """Per receiver: ``sum_{j != i} h_j p_j + sigma2``."""
    rx = real.h * np.asarray(p, dtype=float)
    return rx.sum() - rx + real.sigma2


def sinr(i: int, p, real: ChannelRealization) -> float:
    p = np.asarray(p, dtype=float)
    return float(real.h[i] * p[i] / interference(p, real)[i])


def sinr_all(p, real: ChannelRealization) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return real.h * p / interference(p, real)


def check_qos(selected: Iterable[int], p, real: ChannelRealization, tol: float = QOS_TOL) -> bool:
    """All selected sensors meet their threshold and every power is within its cap."""
    p = np.asarray(p, dtype=float)
    if np.any(p < -tol) or np.any(p > real.p_max + tol):
        return False
    idx = sorted(set(selected))
    if not idx:
        return True
    s = sinr_all(p, real)[idx]
    return bool(np.all(s >= real.theta[idx] - tol))
