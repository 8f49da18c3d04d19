"""Successive convex approximation for the relaxed selection problem.

The relaxed problem over a candidate set S is

    min_{gamma, eta, p}  f(gamma) = Tr((P_prior^{-1} + sum_i gamma_i J_i)^{-1})
    s.t.  sum_{j != i} h_j p_j + sigma2 <= eta_i
          eta_i gamma_i theta_i <= h_i p_i
          0 <= p <= p_max,  0 <= gamma <= 1

The bilinear term is replaced by the convex upper bound
``((eta + gamma)^2 - 2 b (eta - gamma) + b^2) / 4``, tight at ``b = eta - gamma``,
and the resulting convex program is solved by a log-barrier Newton method
(see :mod:`._ipm`). With ``ScaConfig(scaling="balanced")`` the bound is
applied to ``(alpha * eta, gamma / alpha)`` with ``alpha`` chosen per sensor
to even out the two factors; it is still tight at the current iterate and
usually needs far fewer outer iterations, but it follows a different path.
The posterior covariance is eliminated analytically; it is rebuilt from
gamma where needed.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _ipm
from .channel import ChannelRealization, interference
from .estimation import LtiInstance, predict, posterior_info_form

log = logging.getLogger(__name__)

GAMMA_ONE_TOL = 1e-4
_EPS = np.finfo(float).eps


class InnerSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScaConfig:
    tol: float = 1e-6
    max_outer: int = 200
    t0: float = 1.0
    mu: float = 10.0
    gap_tol: float = 1e-8
    newton_tol: float = 1e-10
    max_newton: int = 200
    interior_shift: float = 1e-3
    gamma_start: float = 1e-6
    scaling: str = "unit"
    balance_floor: float = 1e-2

    def __post_init__(self):
        for name in ("tol", "max_outer", "t0", "gap_tol", "newton_tol", "max_newton",
                     "interior_shift", "gamma_start"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ScaConfig.{name} must be positive")
        if self.scaling not in ("unit", "balanced"):
            raise ValueError("ScaConfig.scaling must be 'unit' or 'balanced'")
        if not self.balance_floor > 0:
            raise ValueError("ScaConfig.balance_floor must be positive")
        if self.mu <= 1:
            raise ValueError("ScaConfig.mu must exceed 1")
        if self.tol >= 1:
            raise ValueError("ScaConfig.tol must be below 1")


@dataclass(frozen=True, eq=False)
class RelaxedInstance:
    inst: LtiInstance
    P_prev: np.ndarray
    real: ChannelRealization
    candidates: tuple[int, ...] = ()

    def __post_init__(self):
        cand = tuple(sorted(set(int(i) for i in self.candidates))) or tuple(range(self.inst.N))
        if self.real.N != self.inst.N:
            raise ValueError(f"channel has {self.real.N} sensors, instance has {self.inst.N}")
        if any(i < 0 or i >= self.inst.N for i in cand):
            raise ValueError("candidate index out of range")
        object.__setattr__(self, "candidates", cand)
        object.__setattr__(self, "P_prev", np.atleast_2d(np.asarray(self.P_prev, dtype=float)))

    @property
    def P_prior(self) -> np.ndarray:
        return predict(self.P_prev, self.inst)

    def with_candidates(self, candidates: Sequence[int]) -> "RelaxedInstance":
        return replace(self, candidates=tuple(candidates))


@dataclass(frozen=True, eq=False)
class SurrogateState:
    gamma: np.ndarray
    eta: np.ndarray
    p: np.ndarray
    P: np.ndarray
    b: np.ndarray
    objective: float
    duals: np.ndarray | None = None
    alpha: np.ndarray | None = None


@dataclass(eq=False)
class ScaResult:
    state: SurrogateState
    history: list[float]
    iterations: int
    converged: bool
    residuals: list[float] = field(default_factory=list)

    @property
    def gamma(self) -> np.ndarray:
        return self.state.gamma

    def all_selected(self, candidates: Sequence[int], tol: float = GAMMA_ONE_TOL) -> bool:
        return bool(np.all(self.state.gamma[list(candidates)] >= 1.0 - tol))

    def write_trace(self, path) -> None:
        """CSV with one row per outer iteration (0 is the starting point)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "objective", "max_residual"])
            for t, (obj, res) in enumerate(zip(self.history, self.residuals)):
                w.writerow([t, repr(float(obj)), repr(float(res))])


def surrogate_bound(eta, gamma, b, alpha=1.0):
    """Convex upper bound on ``eta * gamma``, tight when ``b == alpha * eta - gamma / alpha``.

    ``alpha`` rescales the pair to ``(alpha * eta, gamma / alpha)`` before
    bounding; the product is unchanged, only the curvature is redistributed.
    """
    u = alpha * eta
    v = gamma / alpha
    return ((u + v) ** 2 - 2.0 * b * (u - v) + b ** 2) / 4.0


def linearize(state: SurrogateState, cfg: ScaConfig) -> SurrogateState:
    """Move the tangent point of every QoS bound to ``state``."""
    if cfg.scaling == "balanced":
        alpha = np.sqrt(np.maximum(state.gamma, cfg.balance_floor) / state.eta)
    else:
        alpha = np.ones_like(state.eta)
    return replace(state, b=alpha * state.eta - state.gamma / alpha, alpha=alpha)


def constraint_residuals(gamma, eta, p, rinst: RelaxedInstance, b=None, alpha=None) -> np.ndarray:
    """Signed residuals (<= 0 means satisfied) over the candidate set.

    With ``b`` given, the bilinear QoS constraint is replaced by its surrogate
    (scaled by ``alpha`` when given).
    """
    real = rinst.real
    S = list(rinst.candidates)
    g, e, pp = (np.asarray(v, dtype=float) for v in (gamma, eta, p))
    interf = interference(pp, real)[S]
    if b is None:
        prod = e[S] * g[S]
    else:
        a = np.ones(len(S)) if alpha is None else np.asarray(alpha, dtype=float)[S]
        prod = surrogate_bound(e[S], g[S], np.asarray(b)[S], a)
    return np.concatenate([
        interf - e[S],
        prod * real.theta[S] - real.h[S] * pp[S],
        -g[S], g[S] - 1.0,
        -pp[S], pp[S] - real.p_max[S],
    ])


def _full_state(rinst: RelaxedInstance, g_S, e_S, p_S, b_S=None) -> SurrogateState:
    N = rinst.inst.N
    S = list(rinst.candidates)
    gamma = np.zeros(N)
    p = np.zeros(N)
    gamma[S] = g_S
    p[S] = p_S
    eta = interference(p, rinst.real)
    eta[S] = e_S
    b = eta - gamma
    if b_S is not None:
        b[S] = b_S
    P = posterior_info_form(rinst.P_prior, gamma, rinst.inst)
    return SurrogateState(gamma, eta, p, P, b, float(np.trace(P)))


def initialize(rinst: RelaxedInstance) -> SurrogateState:
    """Trivially feasible start: nobody selected, nobody transmits, eta = sigma2."""
    N = rinst.inst.N
    sigma2 = rinst.real.sigma2
    P = rinst.P_prior
    return SurrogateState(np.zeros(N), np.full(N, sigma2), np.zeros(N), P,
                          np.full(N, sigma2), float(np.trace(P)))


def _interior_start(rinst: RelaxedInstance, cfg: ScaConfig) -> SurrogateState:
    """Push the trivial start strictly inside every constraint.

    Each candidate gets a tiny gamma and just enough power that its
    (tight) surrogate QoS constraint holds with a factor-2 margin, while the
    total interference stays inside the eta slack.
    """
    real = rinst.real
    S = np.array(rinst.candidates)
    h, th, pm = real.h[S], real.theta[S], real.p_max[S]
    delta = cfg.interior_shift
    eta0 = real.sigma2 * (1.0 + delta)
    cap_interf = 0.25 * delta / ((1.0 + delta) * th.sum())
    g0 = np.minimum.reduce([np.full(S.size, cfg.gamma_start),
                            h * pm / (4.0 * th * eta0),
                            np.full(S.size, cap_interf)])
    p0 = 2.0 * g0 * th * eta0 / h
    e0 = np.full(S.size, eta0)
    return _full_state(rinst, g0, e0, p0)


def _solver_data(rinst: RelaxedInstance):
    S = list(rinst.candidates)
    real = rinst.real
    M0 = np.ascontiguousarray(np.linalg.inv(rinst.P_prior))
    J = np.ascontiguousarray(rinst.inst.informations[S])
    return M0, J, real.h[S].copy(), real.theta[S].copy(), real.p_max[S].copy(), real.sigma2


def solve_surrogate(state: SurrogateState, rinst: RelaxedInstance, cfg: ScaConfig = ScaConfig()
                    ) -> SurrogateState:
    """Interior-point solve of the convex surrogate linearized at ``state.b``.

    ``state`` must be strictly feasible for that surrogate. The returned state
    carries central-path multiplier estimates in ``duals``.
    """
    S = list(rinst.candidates)
    M0, J, h, th, pm, sigma2 = _solver_data(rinst)
    b = np.ascontiguousarray(np.asarray(state.b, dtype=float)[S])
    a = np.ones(len(S)) if state.alpha is None else np.ascontiguousarray(state.alpha[S])
    x = np.concatenate([state.gamma[S], state.eta[S], state.p[S]])
    if np.any(_ipm.constraints(x, h, th, pm, b, a, sigma2) >= 0):
        raise InnerSolverError("starting point is not strictly feasible for the surrogate")
    x, lam, its, status = _ipm.solve(x, M0, J, h, th, pm, b, a, sigma2, cfg.t0, cfg.mu,
                                     cfg.gap_tol, cfg.newton_tol, cfg.max_newton)
    if status != _ipm.OK:
        raise InnerSolverError(f"centering step did not converge within {cfg.max_newton} Newton steps")
    k = len(S)
    out = _full_state(rinst, x[:k], x[k:2 * k], x[2 * k:], b)
    return replace(out, duals=lam, alpha=state.alpha)


def sca_solve(rinst: RelaxedInstance, cfg: ScaConfig = ScaConfig()) -> ScaResult:
    """Iterate linearize-and-solve until the relative objective decrease drops below ``cfg.tol``."""
    if not rinst.real.assumption_holds(rinst.candidates):
        raise ValueError("no candidate sensor can meet its QoS threshold alone")
    start = initialize(rinst)
    state = _interior_start(rinst, cfg)
    history = [start.objective]
    residuals = [_max_residual(start, rinst)]
    converged = False
    for _ in range(cfg.max_outer):
        # tangent point for this iteration is the current iterate
        lin = linearize(state, cfg)
        new = solve_surrogate(lin, rinst, cfg)
        prev_obj = history[-1]
        if new.objective > state.objective:
            # barrier output is only gap_tol-optimal; the current iterate is
            # feasible for this surrogate and no worse, so keep it
            new = state
        state = new
        history.append(state.objective)
        residuals.append(_max_residual(state, rinst))
        if abs(prev_obj - state.objective) / max(1.0, abs(prev_obj)) < cfg.tol:
            converged = True
            break
    return ScaResult(state, history, len(history) - 1, converged, residuals)


def _max_residual(state: SurrogateState, rinst: RelaxedInstance) -> float:
    return float(constraint_residuals(state.gamma, state.eta, state.p, rinst).max())
