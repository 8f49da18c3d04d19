"""LTI plant model and covariance arithmetic for the remote estimator.

The posterior covariance after assimilating the sensors flagged in ``gamma``
can be computed two ways: the masked gain form with a pseudo-inverse, and the
information form

    P = (P_prior^{-1} + sum_i gamma_i C_i^T R_i^{-1} C_i)^{-1}.

The two agree for binary ``gamma``; only the information form is defined for
relaxed ``gamma`` in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

PSD_TOL = 1e-10
PINV_RCOND = 1e-12


class DimensionError(ValueError):
    """Raised when matrix shapes disagree with the instance."""


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class SensorModel:
    """Observation model ``y = C x + v`` with ``v ~ N(0, R)``."""

    C: np.ndarray
    R: np.ndarray
    id: int = 0

    def __post_init__(self):
        C = _as_matrix(self.C, "C")
        R = _as_matrix(self.R, "R")
        if R.shape != (C.shape[0], C.shape[0]):
            raise DimensionError(
                f"sensor {self.id}: R has shape {R.shape}, expected {(C.shape[0],) * 2}")
        R = symmetrize(R)
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError(f"sensor {self.id}: R is not positive definite") from None
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "R", R)

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @cached_property
    def information(self) -> np.ndarray:
        """``C^T R^{-1} C``."""
        return symmetrize(self.C.T @ np.linalg.solve(self.R, self.C))

    @cached_property
    def precision_trace(self) -> float:
        return float(np.trace(self.information))


@dataclass(frozen=True, eq=False)
class LtiInstance:
    A: np.ndarray
    Q: np.ndarray
    sensors: tuple[SensorModel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        Q = _as_matrix(self.Q, "Q")
        n = A.shape[0]
        if A.shape != (n, n) or Q.shape != (n, n):
            raise DimensionError(f"A {A.shape} and Q {Q.shape} must both be {n}x{n}")
        Q = symmetrize(Q)
        if np.linalg.eigvalsh(Q).min() < -PSD_TOL:
            raise ValueError("Q is not positive semidefinite")
        sensors = tuple(self.sensors)
        for s in sensors:
            if s.C.shape[1] != n:
                raise DimensionError(
                    f"sensor {s.id}: C has {s.C.shape[1]} columns, state dimension is {n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "sensors", sensors)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return len(self.sensors)

    @cached_property
    def informations(self) -> np.ndarray:
        """Stacked ``C_i^T R_i^{-1} C_i``, shape (N, n, n)."""
        if not self.sensors:
            return np.zeros((0, self.n, self.n))
        return np.stack([s.information for s in self.sensors])

    @cached_property
    def precision_traces(self) -> np.ndarray:
        return np.array([s.precision_trace for s in self.sensors])


@dataclass(frozen=True, eq=False)
class EstimatorState:
    x_hat: np.ndarray
    P: np.ndarray


def _check_cov(P, n: int, name: str = "P") -> np.ndarray:
    P = _as_matrix(P, name)
    if P.shape != (n, n):
        raise DimensionError(f"{name} has shape {P.shape}, expected {(n, n)}")
    return P


def _check_gamma(gamma, N: int) -> np.ndarray:
    g = np.asarray(gamma, dtype=float).reshape(-1)
    if g.shape != (N,):
        raise DimensionError(f"gamma has length {g.size}, expected {N}")
    return g


def predict(P_prev, inst: LtiInstance) -> np.ndarray:
    """Prior covariance ``A P A^T + Q``."""
    P_prev = _check_cov(P_prev, inst.n, "P_prev")
    return symmetrize(inst.A @ P_prev @ inst.A.T + inst.Q)


def information_matrix(gamma, P_prior, inst: LtiInstance) -> np.ndarray:
    """``P_prior^{-1} + sum_i gamma_i C_i^T R_i^{-1} C_i``."""
    g = _check_gamma(gamma, inst.N)
    P_prior = _check_cov(P_prior, inst.n, "P_prior")
    M = np.linalg.inv(P_prior)
    if inst.N:
        M = M + np.tensordot(g, inst.informations, axes=1)
    return symmetrize(M)


def posterior_info_form(P_prior, gamma, inst: LtiInstance) -> np.ndarray:
    try:
        M = information_matrix(gamma, P_prior, inst)
    except np.linalg.LinAlgError:
        raise ValueError("prior covariance is singular") from None
    return symmetrize(np.linalg.inv(M))


def pinv_psd(S: np.ndarray, rcond: float = PINV_RCOND) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix by eigendecomposition."""
    w, V = np.linalg.eigh(symmetrize(S))
    if w.size == 0:
        return S.copy()
    cutoff = rcond * max(np.abs(w).max(), 0.0)
    inv_w = np.zeros_like(w)
    keep = np.abs(w) > cutoff
    inv_w[keep] = 1.0 / w[keep]
    return (V * inv_w) @ V.T


def posterior_gain_form(P_prior, gamma, inst: LtiInstance) -> np.ndarray:
    """Masked-stack Kalman update ``P - K C P`` with a pseudo-inverse gain.

    Unselected sensors contribute zero rows to the stacked C and zero
    blocks to the block-diagonal R, so the innovation covariance is singular
    unless every sensor is selected.
    """
    g = _check_gamma(gamma, inst.N)
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("gain-form update requires binary gamma")
    P = _check_cov(P_prior, inst.n, "P_prior")
    if inst.N == 0 or not g.any():
        return symmetrize(P.copy())
    C_t = np.vstack([gi * s.C for gi, s in zip(g, inst.sensors)])
    m_tot = C_t.shape[0]
    R_t = np.zeros((m_tot, m_tot))
    off = 0
    for gi, s in zip(g, inst.sensors):
        R_t[off:off + s.m, off:off + s.m] = gi * s.R
        off += s.m
    S = C_t @ P @ C_t.T + R_t
    K = P @ C_t.T @ pinv_psd(S)
    return symmetrize(P - K @ C_t @ P)


def kalman_step(state: EstimatorState, measurements: Mapping[int, np.ndarray] | Sequence,
                gamma, inst: LtiInstance) -> EstimatorState:
    """One predict + update cycle using only the selected sensors' measurements.

    ``measurements`` maps sensor position (0-based) to its measurement vector;
    a sequence indexed by position also works, with ``None`` for missing ones.
    """
    g = _check_gamma(gamma, inst.N)
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("kalman_step requires binary gamma")
    x = np.asarray(state.x_hat, dtype=float).reshape(-1)
    if x.shape != (inst.n,):
        raise DimensionError(f"x_hat has length {x.size}, expected {inst.n}")
    x_pred = inst.A @ x
    P_pred = predict(state.P, inst)
    sel = np.flatnonzero(g)
    if sel.size == 0:
        return EstimatorState(x_pred, P_pred)

    ys = []
    for i in sel:
        try:
            y = measurements[i]
        except (KeyError, IndexError):
            y = None
        if y is None:
            raise ValueError(f"missing measurement for selected sensor {i}")
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.shape != (inst.sensors[i].m,):
            raise DimensionError(f"sensor {i}: measurement has length {y.size}")
        ys.append(y)
    C_h = np.vstack([inst.sensors[i].C for i in sel])
    R_h = _block_diag([inst.sensors[i].R for i in sel])
    S = symmetrize(C_h @ P_pred @ C_h.T + R_h)
    K = np.linalg.solve(S, C_h @ P_pred).T
    x_post = x_pred + K @ (np.concatenate(ys) - C_h @ x_pred)
    return EstimatorState(x_post, posterior_info_form(P_pred, g, inst))


def _block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    m = sum(b.shape[0] for b in blocks)
    out = np.zeros((m, m))
    off = 0
    for b in blocks:
        k = b.shape[0]
        out[off:off + k, off:off + k] = b
        off += k
    return out


def objective_trace(gamma, P_prev, inst: LtiInstance) -> float:
    """Trace of the posterior covariance for relaxed ``gamma``, starting from ``P_prev``."""
    return float(np.trace(posterior_info_form(predict(P_prev, inst), gamma, inst)))


def objective_gradient(gamma, P_prev, inst: LtiInstance) -> np.ndarray:
    """d/dgamma_i Tr(M^{-1}) = -Tr(M^{-1} J_i M^{-1}), J_i = C_i^T R_i^{-1} C_i."""
    M_inv = posterior_info_form(predict(P_prev, inst), gamma, inst)
    return -np.einsum("ab,iba->i", M_inv @ M_inv, inst.informations)


class TraceObjective:
    """``f(gamma) = Tr((P_prior^{-1} + sum gamma_i J_i)^{-1})`` with cached prior inverse.

    Evaluates value, gradient and Hessian together; used by the inner solver
    where the same prior is evaluated many times.
    """

    def __init__(self, P_prior: np.ndarray, informations: np.ndarray):
        self.M0 = symmetrize(np.linalg.inv(P_prior))
        self.J = informations

    def value(self, gamma: np.ndarray) -> float:
        M = self.M0 + np.tensordot(gamma, self.J, axes=1)
        return float(np.trace(np.linalg.inv(M)))

    def derivatives(self, gamma: np.ndarray):
        M = self.M0 + np.tensordot(gamma, self.J, axes=1)
        W = np.linalg.inv(M)
        W2 = W @ W
        # B_i = W J_i ; grad_i = -Tr(W2 J_i); H_ij = 2 Tr(W2 J_i W J_j)
        grad = -np.einsum("ab,iba->i", W2, self.J)
        WJ = np.einsum("ab,ibc->iac", W, self.J)
        W2J = np.einsum("ab,ibc->iac", W2, self.J)
        H = 2.0 * np.einsum("iab,jba->ij", W2J, WJ)
        return float(np.trace(W)), grad, symmetrize(H)
