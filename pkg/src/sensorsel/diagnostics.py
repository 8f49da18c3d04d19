"""Independent optimality and feasibility checks for relaxed solutions.

Nothing here shares code with the inner solver: constraints and gradients of
the bilinear relaxed problem are rebuilt from scratch, and multipliers are
recovered by nonnegative least squares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .estimation import LtiInstance, information_matrix, objective_gradient


@dataclass(frozen=True)
class KktReport:
    residual: float          # norm of the Lagrangian gradient at the best multipliers
    scaled_residual: float   # residual / max(1, |grad f|)
    max_violation: float     # largest constraint value (<= 0 when feasible)
    multipliers: np.ndarray  # one per constraint row, see relaxed_constraints


def relaxed_constraints(gamma, eta, p, h, theta, p_max, sigma2):
    """Constraint values and Jacobian of the bilinear relaxed problem over one candidate set.

    All inputs are restricted to the candidate set (length k). Rows, each ``<= 0``::

        interference, bilinear QoS, -gamma, gamma - 1, -p, p - p_max

    Columns are ``[gamma, eta, p]``.
    """
    g, e, pp = (np.asarray(v, dtype=float) for v in (gamma, eta, p))
    k = g.size
    rx = h * pp
    interf = rx.sum() - rx + sigma2
    c = np.concatenate([interf - e, theta * e * g - h * pp, -g, g - 1.0, -pp, pp - p_max])
    D = np.zeros((6 * k, 3 * k))
    I = np.eye(k)
    D[:k, k:2 * k] = -I
    D[:k, 2 * k:] = np.tile(h, (k, 1)) * (1.0 - I)
    D[k:2 * k, :k] = np.diag(theta * e)
    D[k:2 * k, k:2 * k] = np.diag(theta * g)
    D[k:2 * k, 2 * k:] = -np.diag(h)
    D[2 * k:3 * k, :k] = -I
    D[3 * k:4 * k, :k] = I
    D[4 * k:5 * k, 2 * k:] = -I
    D[5 * k:, 2 * k:] = I
    return c, D


def kkt_residual(gamma, eta, p, P_prev, inst: LtiInstance, real, candidates) -> KktReport:
    """First-order stationarity of the relaxed problem at a given point.

    Sensors outside ``candidates`` are pinned to ``gamma = p = 0``. Multipliers
    for every constraint are chosen by NNLS to minimize the stacked residual
    ``[grad f + D^T lam ; lam * c]``, so stationarity and complementary
    slackness are measured together without guessing an active set.
    """
    S = np.asarray(sorted(candidates), dtype=int)
    gamma = np.asarray(gamma, dtype=float)
    grad_full = objective_gradient(gamma, P_prev, inst)
    c, D = relaxed_constraints(gamma[S], np.asarray(eta)[S], np.asarray(p)[S],
                               real.h[S], real.theta[S], real.p_max[S], real.sigma2)
    k = S.size
    g0 = np.concatenate([grad_full[S], np.zeros(2 * k)])
    A = np.vstack([D.T, np.diag(c)])
    rhs = np.concatenate([-g0, np.zeros(c.size)])
    # column-normalize so NNLS is not dominated by large channel gains
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = 1.0
    mu, res = nnls(A / norms, rhs, maxiter=50 * A.shape[1])
    lam = mu / norms
    gnorm = float(np.linalg.norm(grad_full[S]))
    return KktReport(float(res), float(res) / max(1.0, gnorm), float(c.max()), lam)


def lmi_min_eigenvalue(P, gamma, P_prior, inst: LtiInstance) -> float:
    """Smallest eigenvalue of ``[[M, I], [I, P]]`` with ``M`` the information matrix at ``gamma``.

    Nonnegative exactly when ``P >= M^{-1}``; zero (up to rounding) when ``P`` is
    the reconstructed posterior.
    """
    M = information_matrix(gamma, P_prior, inst)
    n = M.shape[0]
    I = np.eye(n)
    block = np.block([[M, I], [I, np.asarray(P, dtype=float)]])
    return float(np.linalg.eigvalsh(0.5 * (block + block.T)).min())
