"""Sensor selection strategies.

* :func:`heuristic_select` relaxes the binary choice, solves the relaxation by
  successive convex approximation and drops the sensor contributing the least
  assimilated precision until every remaining relaxed choice is 1.
* :func:`snm_select` picks a largest jointly feasible set.
* :func:`pmf_select` admits sensors greedily in order of measurement precision.
* :func:`brute_force_select` enumerates every subset (exact, small N only).

Indices are 0-based throughout; reports add 1 for display.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelRealization, check_qos
from .estimation import LtiInstance, SensorModel, posterior_info_form, predict
from .feasibility import is_feasible, min_power_vector
from .sca import GAMMA_ONE_TOL, RelaxedInstance, ScaConfig, sca_solve

TIE_RTOL = 1e-6
BRUTE_FORCE_MAX_N = 20


@dataclass(frozen=True, eq=False)
class RemovalStep:
    iteration: int
    candidates: tuple[int, ...]
    gamma: np.ndarray          # relaxed solution, length N (zero outside candidates)
    p: np.ndarray
    removed: int | None        # None on the terminating iteration
    sca_iters: int


@dataclass(frozen=True, eq=False)
class SelectionDecision:
    strategy: str
    selected: tuple[int, ...]
    gamma: np.ndarray
    p: np.ndarray
    P_post: np.ndarray
    objective: float
    removals: tuple[RemovalStep, ...] = field(default_factory=tuple)
    sca_iters: int = 0
    power_source: str = "p_min"

    @property
    def removal_order(self) -> tuple[int, ...]:
        return tuple(s.removed for s in self.removals if s.removed is not None)


def selection_metric(gamma_i: float, sensor: SensorModel) -> float:
    """Trace of the assimilated precision ``gamma_i C^T R^{-1} C``."""
    return float(gamma_i) * sensor.precision_trace


def _argmin_smallest_index(values: Sequence[float], rtol: float = TIE_RTOL) -> int:
    """Position of the minimum; values within ``rtol * max|values|`` of it count as tied."""
    v = np.asarray(values, dtype=float)
    lo = v.min()
    slack = rtol * float(np.abs(v).max())
    return int(np.flatnonzero(v <= lo + slack)[0])


def _decision(strategy, selected, p, inst: LtiInstance, P_prev, **extra) -> SelectionDecision:
    sel = tuple(sorted(int(i) for i in selected))
    gamma = np.zeros(inst.N)
    gamma[list(sel)] = 1.0
    P = posterior_info_form(predict(P_prev, inst), gamma, inst)
    return SelectionDecision(strategy, sel, gamma, np.asarray(p, dtype=float), P,
                             float(np.trace(P)), **extra)


def _min_powers(subset, real: ChannelRealization) -> np.ndarray:
    if not subset:
        return np.zeros(real.N)
    v = min_power_vector(subset, real)
    if not v.feasible:
        raise AssertionError(f"subset {subset} was expected to be feasible")
    return v.p_min


def heuristic_select(inst: LtiInstance, P_prev, real: ChannelRealization,
                     cfg: ScaConfig = ScaConfig(), prune: bool = True) -> SelectionDecision:
    """Relax, solve, remove the least useful sensor, repeat.

    A candidate set is accepted once every relaxed choice is within
    ``GAMMA_ONE_TOL`` of 1 and the set passes the exact feasibility check. The
    reported powers are the relaxation's own when they satisfy QoS exactly,
    otherwise the minimal powers of the accepted set.

    With ``prune`` (the default) sensors that cannot meet their threshold
    even alone at full power are dropped before the first solve. No feasible
    selection can contain them, and without them every nonempty candidate set
    has a member able to transmit. With ``prune=False`` the loop starts from
    all sensors and returns the empty selection if the candidate set runs
    out of such members.
    """
    base = RelaxedInstance(inst, P_prev, real)
    S = list(np.flatnonzero(real.single_link_ok())) if prune else list(range(inst.N))
    S = [int(i) for i in S]
    steps: list[RemovalStep] = []
    total_iters = 0
    traces = inst.precision_traces
    while S and real.assumption_holds(S):
        res = sca_solve(base.with_candidates(S), cfg)
        total_iters += res.iterations
        g = res.gamma
        if res.all_selected(S, GAMMA_ONE_TOL) and is_feasible(S, real):
            steps.append(RemovalStep(len(steps) + 1, tuple(S), g, res.state.p, None, res.iterations))
            p = np.zeros(inst.N)
            p[S] = res.state.p[S]
            source = "sca"
            if not check_qos(S, p, real):
                p, source = _min_powers(S, real), "p_min"
            return _decision("proposed", S, p, inst, P_prev, removals=tuple(steps),
                             sca_iters=total_iters, power_source=source)
        pos = _argmin_smallest_index(g[S] * traces[S])
        steps.append(RemovalStep(len(steps) + 1, tuple(S), g, res.state.p, S[pos], res.iterations))
        del S[pos]
    return _decision("proposed", (), np.zeros(inst.N), inst, P_prev, removals=tuple(steps),
                     sca_iters=total_iters)


def snm_select(inst: LtiInstance, P_prev, real: ChannelRealization) -> SelectionDecision:
    """Largest feasible subset; ties by smallest total minimal power, then lexicographic."""
    N = inst.N
    if N > BRUTE_FORCE_MAX_N:
        raise ValueError(f"exhaustive search limited to N <= {BRUTE_FORCE_MAX_N}")
    for k in range(N, 0, -1):
        best = None
        for combo in itertools.combinations(range(N), k):
            v = min_power_vector(combo, real)
            if not v.feasible:
                continue
            key = (float(v.p_min.sum()), combo)
            if best is None or key < best[0]:
                best = (key, v.p_min)
        if best is not None:
            return _decision("snm", best[0][1], best[1], inst, P_prev)
    return _decision("snm", (), np.zeros(N), inst, P_prev)


def pmf_select(inst: LtiInstance, P_prev, real: ChannelRealization) -> SelectionDecision:
    """Admit sensors by decreasing precision trace while the set stays feasible."""
    order = sorted(range(inst.N), key=lambda i: (-inst.precision_traces[i], i))
    chosen: list[int] = []
    for s in order:
        if is_feasible(chosen + [s], real):
            chosen.append(s)
    return _decision("pmf", chosen, _min_powers(sorted(chosen), real), inst, P_prev)


def brute_force_select(inst: LtiInstance, P_prev, real: ChannelRealization) -> SelectionDecision:
    """Exact optimum over all feasible subsets.

    Objective ties (relative 1e-12) go to the smaller set, then the
    lexicographically smaller one.
    """
    N = inst.N
    if N > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to N <= {BRUTE_FORCE_MAX_N}, got {N}")
    M0 = np.linalg.inv(predict(P_prev, inst))
    J = inst.informations
    best_obj = float(np.trace(np.linalg.inv(M0)))
    best: tuple[int, ...] = ()
    for k in range(1, N + 1):
        for combo in itertools.combinations(range(N), k):
            if not is_feasible(combo, real):
                continue
            obj = float(np.trace(np.linalg.inv(M0 + J[list(combo)].sum(axis=0))))
            # enumeration order is (size, lexicographic), so only a strict win replaces
            if obj < best_obj - 1e-12 * abs(best_obj):
                best_obj, best = obj, combo
    return _decision("brute_force", best, _min_powers(best, real), inst, P_prev)


STRATEGIES = ("proposed", "snm", "pmf", "brute_force")


def run_strategy(name: str, inst: LtiInstance, P_prev, real: ChannelRealization,
                 cfg: ScaConfig = ScaConfig()) -> SelectionDecision:
    if name == "proposed":
        return heuristic_select(inst, P_prev, real, cfg)
    if name == "snm":
        return snm_select(inst, P_prev, real)
    if name == "pmf":
        return pmf_select(inst, P_prev, real)
    if name == "brute_force":
        return brute_force_select(inst, P_prev, real)
    raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}")
