"""Exact QoS feasibility for a fixed subset via the minimal power vector.

For a subset S the QoS constraints read ``p >= F p + u`` with
``F_ij = theta_i h_j / h_i`` (i != j) and ``u_i = theta_i sigma2 / h_i``. The
set of feasible powers is nonempty iff the spectral radius of the nonnegative
matrix F is below one, in which case ``(I - F)^{-1} u`` is its componentwise
minimum and meets every constraint with equality.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .channel import ChannelRealization

FEAS_TOL = 1e-9
_POWER_ITERS = 200


class Reason(str, enum.Enum):
    OK = "ok"
    SPECTRAL_RADIUS_GE_ONE = "spectral_radius_ge_one"
    POWER_CAP_EXCEEDED = "power_cap_exceeded"


@dataclass(frozen=True, eq=False)
class FeasibilityVerdict:
    feasible: bool
    p_min: np.ndarray | None  # length N, zero outside the subset
    reason: Reason


def interference_matrix(subset, real: ChannelRealization):
    """``(F, u)`` restricted to ``subset`` (sorted)."""
    S = np.asarray(subset, dtype=int)
    h, th = real.h[S], real.theta[S]
    F = (th / h)[:, None] * h[None, :]
    np.fill_diagonal(F, 0.0)
    u = th * real.sigma2 / h
    return F, u


def spectral_radius_estimate(F: np.ndarray, iters: int = _POWER_ITERS) -> float:
    """Power iteration for a nonnegative matrix (Collatz-Wielandt upper bound)."""
    k = F.shape[0]
    if k == 0:
        return 0.0
    x = np.ones(k)
    upper = np.inf
    for _ in range(iters):
        y = F @ x
        ratios = y / x
        upper = min(upper, float(ratios.max()))
        s = y.sum()
        if s == 0.0:
            return 0.0
        # a positive shift keeps the iteration from cycling on periodic F
        x = (y + x) / (s + x.sum())
    return upper


def min_power_vector(subset: Iterable[int], real: ChannelRealization) -> FeasibilityVerdict:
    S = sorted(set(int(i) for i in subset))
    if not S:
        raise ValueError("subset must be nonempty")
    N = real.N
    if any(i < 0 or i >= N for i in S):
        raise ValueError("subset index out of range")
    if np.any(real.h[S] <= 0):
        # a zero-gain link can never reach a positive threshold
        return FeasibilityVerdict(False, None, Reason.SPECTRAL_RADIUS_GE_ONE)
    F, u = interference_matrix(S, real)
    try:
        q = np.linalg.solve(np.eye(len(S)) - F, u)
    except np.linalg.LinAlgError:
        return FeasibilityVerdict(False, None, Reason.SPECTRAL_RADIUS_GE_ONE)
    if not np.all(np.isfinite(q)) or np.any(q <= 0) or spectral_radius_estimate(F) >= 1.0 - FEAS_TOL:
        return FeasibilityVerdict(False, None, Reason.SPECTRAL_RADIUS_GE_ONE)
    p = np.zeros(N)
    p[S] = q
    if np.any(q > real.p_max[S] + FEAS_TOL):
        return FeasibilityVerdict(False, p, Reason.POWER_CAP_EXCEEDED)
    return FeasibilityVerdict(True, p, Reason.OK)


def is_feasible(subset: Iterable[int], real: ChannelRealization) -> bool:
    S = list(subset)
    if not S:
        return True
    return min_power_vector(S, real).feasible
