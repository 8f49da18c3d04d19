"""Experiment runners, result records and persistence.

Every random trial draws its instance from a seed derived from
``(master seed, bandwidth index, trial index)`` alone, so results do not
depend on execution order or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .channel import check_qos
from .config import ExperimentConfig, dump_config
from .estimation import objective_trace
from .feasibility import min_power_vector
from .instances import CASE_BANDWIDTH, Problem, case_study, random_problem
from .sca import RelaxedInstance, ScaConfig, ScaResult, sca_solve
from .selection import SelectionDecision, heuristic_select, run_strategy

CSV_COLUMNS = ("trial", "seed", "bandwidth_hz", "strategy", "selected", "objective",
               "n_selected", "sca_iters", "wall_ms")
SUMMARY_COLUMNS = ("bandwidth_hz", "strategy", "trials", "mean_objective", "std_objective",
                   "mean_selected", "mean_gap", "min_gap", "max_gap")
GAP_MAX_N = 12
OBJECTIVE_TOL = 5e-4

STRATEGY_LABELS = {"proposed": "Proposed", "snm": "SNM", "pmf": "PMF", "brute_force": "Optimal"}

# Reference outcomes of the two built-in case studies (1-based sensor labels).
REFERENCE_CASES = {
    1: {"proposed": ((2, 4, 5), 0.06453), "pmf": ((2, 3), 0.08221),
        "brute_force": ((2, 4, 5), 0.06453)},
    2: {"proposed": ((1, 3), 0.10912), "pmf": ((1, 3), 0.10912),
        "brute_force": ((1, 3), 0.10912)},
}
REFERENCE_REMOVALS = {1: (1, 3), 2: (2, 4, 5)}
REFERENCE_SUBSETS = {2: ((2, 4, 5), 0.28592)}


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    bandwidth_hz: float | None
    strategy: str
    selected: tuple[int, ...]      # 0-based
    objective: float
    n_selected: int
    sca_iters: int
    wall_ms: float | None = None

    def row(self) -> list[str]:
        return [
            str(self.trial),
            str(self.seed),
            "" if self.bandwidth_hz is None else repr(float(self.bandwidth_hz)),
            self.strategy,
            _labels(self.selected),
            repr(float(self.objective)),
            str(self.n_selected),
            str(self.sca_iters),
            "" if self.wall_ms is None else f"{self.wall_ms:.3f}",
        ]


@dataclass(eq=False)
class RunResult:
    records: list[TrialRecord] = field(default_factory=list)
    removals: list[dict] = field(default_factory=list)
    decisions: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    report: str = ""


def _labels(idx: Iterable[int]) -> str:
    return " ".join(str(i + 1) for i in idx)


def derive_seed(master: int, trial: int, bw_index: int = 0) -> int:
    """Stable 32-bit seed from the run coordinates (SeedSequence hashing)."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, int(bw_index), int(trial)])
    return int(ss.generate_state(1, np.uint32)[0])


def _jsonable(x):
    return [float(v) for v in np.asarray(x, dtype=float).ravel()]


def _solve_problem(problem: Problem, strategies: Sequence[str], sca_cfg: ScaConfig, prune: bool,
                   timing: bool, trial: int, seed: int, bw: float | None) -> RunResult:
    out = RunResult()
    for name in strategies:
        t0 = time.perf_counter()
        if name == "proposed":
            d = heuristic_select(problem.inst, problem.P_prev, problem.real, sca_cfg, prune=prune)
        else:
            d = run_strategy(name, problem.inst, problem.P_prev, problem.real, sca_cfg)
        ms = (time.perf_counter() - t0) * 1e3 if timing else None
        out.records.append(TrialRecord(trial, seed, bw, name, d.selected, d.objective,
                                       len(d.selected), d.sca_iters, ms))
        out.decisions.append({"trial": trial, "seed": seed, "bandwidth_hz": bw, "strategy": name,
                              "selected": [i + 1 for i in d.selected], "p": _jsonable(d.p),
                              "objective": d.objective})
        for step in d.removals:
            S = list(step.candidates)
            out.removals.append({
                "trial": trial, "bandwidth_hz": bw, "strategy": name,
                "iteration": step.iteration,
                "candidate_set": [i + 1 for i in S],
                "gamma": _jsonable(step.gamma[S]),
                "p": _jsonable(step.p[S]),
                "removed": None if step.removed is None else step.removed + 1,
            })
    return out


def _trial_task(args) -> RunResult:
    cfg, bw_index, bw, trial, timing = args
    seed = derive_seed(cfg.seed, trial, bw_index)
    problem = random_problem(cfg.random, bw, seed)
    return _solve_problem(problem, cfg.strategies, cfg.sca, cfg.prune, timing, trial, seed, bw)


def _merge(parts: Iterable[RunResult]) -> RunResult:
    out = RunResult()
    for p in parts:
        out.records += p.records
        out.removals += p.removals
        out.decisions += p.decisions
    return out


def _run_tasks(tasks: list, jobs: int) -> RunResult:
    if jobs <= 1 or len(tasks) <= 1:
        return _merge(map(_trial_task, tasks))
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        # map preserves task order, so the merge is independent of scheduling
        return _merge(ex.map(_trial_task, tasks, chunksize=chunk))


def summarize(records: Sequence[TrialRecord], n_sensors: int) -> list[dict]:
    """Per (bandwidth, strategy) statistics, plus relative gap to the exact optimum when available."""
    optimum = {(r.bandwidth_hz, r.trial): r.objective for r in records if r.strategy == "brute_force"}
    use_gap = bool(optimum) and n_sensors <= GAP_MAX_N
    rows = []
    keyfn = lambda r: (r.bandwidth_hz if r.bandwidth_hz is not None else -1.0)
    bws = sorted({keyfn(r) for r in records})
    strategies = list(dict.fromkeys(r.strategy for r in records))
    for bw in bws:
        for s in strategies:
            sel = [r for r in records if keyfn(r) == bw and r.strategy == s]
            if not sel:
                continue
            obj = np.array([r.objective for r in sel])
            row = {"bandwidth_hz": None if bw < 0 else bw, "strategy": s, "trials": len(sel),
                   "mean_objective": float(obj.mean()), "std_objective": float(obj.std()),
                   "mean_selected": float(np.mean([r.n_selected for r in sel])),
                   "mean_gap": None, "min_gap": None, "max_gap": None}
            if use_gap:
                gaps = np.array([(r.objective - optimum[(r.bandwidth_hz, r.trial)])
                                 / optimum[(r.bandwidth_hz, r.trial)] for r in sel])
                row.update(mean_gap=float(gaps.mean()), min_gap=float(gaps.min()),
                           max_gap=float(gaps.max()))
            rows.append(row)
    return rows


def run_bandwidth_sweep(cfg: ExperimentConfig, jobs: int = 1, timing: bool = False) -> RunResult:
    if not cfg.bandwidths_hz:
        raise ValueError("bandwidth grid is empty")
    tasks = [(cfg, b, bw, t, timing) for b, bw in enumerate(cfg.bandwidths_hz)
             for t in range(cfg.trials)]
    res = _run_tasks(tasks, jobs)
    res.summary = summarize(res.records, cfg.random.n_sensors)
    return res


def run_monte_carlo(cfg: ExperimentConfig, jobs: int = 1, timing: bool = False) -> RunResult:
    tasks = [(cfg, 0, cfg.bandwidth_hz, t, timing) for t in range(cfg.trials)]
    res = _run_tasks(tasks, jobs)
    res.summary = summarize(res.records, cfg.random.n_sensors)
    return res


def run_solve(cfg: ExperimentConfig, timing: bool = False) -> RunResult:
    problem = cfg.problem()
    bw = cfg.instance.get("channel", {}).get("bandwidth_hz") if cfg.instance else None
    bw = None if bw is None else float(bw)
    res = _solve_problem(problem, cfg.strategies, cfg.sca, cfg.prune, timing, 0, cfg.seed, bw)
    res.summary = summarize(res.records, problem.inst.N)
    res.report = format_decisions(problem, res)
    return res


def _max_cardinality_subsets(problem: Problem) -> list[tuple[tuple[int, ...], float]]:
    N = problem.inst.N
    for k in range(N, 0, -1):
        found = []
        for combo in itertools.combinations(range(N), k):
            if min_power_vector(combo, problem.real).feasible:
                g = np.zeros(N)
                g[list(combo)] = 1.0
                found.append((combo, objective_trace(g, problem.P_prev, problem.inst)))
        if found:
            return found
    return []


def run_case_study(which: int, cfg: ExperimentConfig | None = None,
                   timing: bool = False) -> RunResult:
    """Run every strategy on a built-in case study and format the comparison tables."""
    from .config import default_config
    cfg = cfg if cfg is not None else default_config("case-study", case=which)
    problem = case_study(which)
    res = _solve_problem(problem, cfg.strategies, cfg.sca, cfg.prune, timing, 0, cfg.seed,
                         CASE_BANDWIDTH)
    res.summary = summarize(res.records, problem.inst.N)
    lines = [f"Case {which}", ""]
    lines.append(format_decisions(problem, res))
    lines.append("Maximum-cardinality feasible subsets:")
    for combo, obj in _max_cardinality_subsets(problem):
        lines.append(f"  {{{_labels(combo).replace(' ', ',')}}}  {obj:.5f}")
    res.report = "\n".join(lines) + "\n"
    return res


def format_decisions(problem: Problem, res: RunResult) -> str:
    out = io.StringIO()
    out.write(f"{'strategy':<10} {'selected':<18} {'objective':>10}  powers (mW)\n")
    for d in res.decisions:
        sel = "{" + ",".join(str(i) for i in d["selected"]) + "}"
        pw = ", ".join(f"{d['p'][i - 1]:.4f}" for i in d["selected"])
        label = STRATEGY_LABELS.get(d["strategy"], d["strategy"])
        out.write(f"{label:<10} {sel:<18} {d['objective']:>10.5f}  {pw}\n")
    rem = [r for r in res.removals if r["strategy"] == "proposed"]
    if rem:
        out.write("\nRelaxation iterations (Proposed):\n")
        out.write(f"{'iter':>4}  {'candidates':<18} {'gamma':<40} {'p':<40} removed\n")
        for r in rem:
            cand = "{" + ",".join(map(str, r["candidate_set"])) + "}"
            g = " ".join(f"{v:.4f}" for v in r["gamma"])
            p = " ".join(f"{v:.4f}" for v in r["p"])
            removed = "-" if r["removed"] is None else str(r["removed"])
            out.write(f"{r['iteration']:>4}  {cand:<18} {g:<40} {p:<40} {removed}\n")
    out.write("\n")
    return out.getvalue()


def _fmt_opt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(res: RunResult, out_dir, cfg: ExperimentConfig | None = None) -> list[Path]:
    """Write records.csv, summary.csv, removals.jsonl and decisions.jsonl (plus report/config)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e.strerror}") from None
    paths = []

    def _write(name: str, text: str):
        p = out / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(p)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in res.records:
        w.writerow(r.row())
    _write("records.csv", buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in res.summary:
        w.writerow([_fmt_opt(row[c]) for c in SUMMARY_COLUMNS])
    _write("summary.csv", buf.getvalue())

    _write("removals.jsonl", "".join(json.dumps(r) + "\n" for r in res.removals))
    _write("decisions.jsonl", "".join(json.dumps(r) + "\n" for r in res.decisions))
    if res.report:
        _write("report.txt", res.report)
    if cfg is not None:
        _write("config.yaml", dump_config(cfg))
    return paths


def read_records(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _problem_for(cfg: ExperimentConfig, d: dict) -> Problem:
    if cfg.mode == "case-study":
        return case_study(cfg.case)
    if cfg.mode == "solve":
        return cfg.problem()
    return random_problem(cfg.random, d["bandwidth_hz"], d["seed"])


def verify_results(cfg: ExperimentConfig, out_dir) -> list[str]:
    """Re-check persisted decisions; returns a list of failure messages (empty when all pass).

    Every decision must meet QoS with its stored powers on the regenerated
    channel and reproduce its stored objective. Case studies are also compared
    with the reference outcomes.
    """
    out = Path(out_dir)
    failures = []
    with open(out / "decisions.jsonl", encoding="utf-8") as fh:
        decisions = [json.loads(line) for line in fh if line.strip()]
    for d in decisions:
        problem = _problem_for(cfg, d)
        sel = [i - 1 for i in d["selected"]]
        tag = f"trial {d['trial']} bandwidth {d['bandwidth_hz']} {d['strategy']}"
        if not check_qos(sel, np.asarray(d["p"]), problem.real):
            failures.append(f"{tag}: stored powers violate QoS")
        g = np.zeros(problem.inst.N)
        g[sel] = 1.0
        obj = objective_trace(g, problem.P_prev, problem.inst)
        if abs(obj - d["objective"]) > 1e-9 * max(1.0, abs(obj)):
            failures.append(f"{tag}: objective {d['objective']} does not reproduce ({obj})")
    if cfg.mode == "case-study":
        failures += _check_case(cfg.case, decisions, out)
    return failures


def _check_case(which: int, decisions: list[dict], out: Path) -> list[str]:
    failures = []
    by = {d["strategy"]: d for d in decisions}
    for strat, (subset, obj) in REFERENCE_CASES[which].items():
        if strat not in by:
            continue
        d = by[strat]
        if tuple(d["selected"]) != subset:
            failures.append(f"case {which} {strat}: selected {d['selected']}, expected {list(subset)}")
        if abs(d["objective"] - obj) > OBJECTIVE_TOL:
            failures.append(f"case {which} {strat}: objective {d['objective']:.5f}, expected {obj}")
    if "proposed" in by:
        with open(out / "removals.jsonl", encoding="utf-8") as fh:
            rem = [json.loads(line) for line in fh if line.strip()]
        order = tuple(r["removed"] for r in rem if r["strategy"] == "proposed" and r["removed"] is not None)
        if order != REFERENCE_REMOVALS[which]:
            failures.append(f"case {which}: removal order {order}, expected {REFERENCE_REMOVALS[which]}")
    if which in REFERENCE_SUBSETS:
        subset, obj = REFERENCE_SUBSETS[which]
        problem = case_study(which)
        g = np.zeros(problem.inst.N)
        g[[i - 1 for i in subset]] = 1.0
        val = objective_trace(g, problem.P_prev, problem.inst)
        if abs(val - obj) > OBJECTIVE_TOL:
            failures.append(f"case {which}: subset {subset} objective {val:.5f}, expected {obj}")
    return failures


def trace_solve(problem: Problem, sca_cfg: ScaConfig, prune: bool = True) -> ScaResult:
    """Relaxed solve over the full candidate set (pruned like the heuristic's first step)."""
    real = problem.real
    cand = tuple(int(i) for i in np.flatnonzero(real.single_link_ok())) if prune else ()
    if prune and not cand:
        raise ValueError("no sensor can meet its QoS threshold alone")
    rinst = RelaxedInstance(problem.inst, problem.P_prev, real, cand)
    return sca_solve(rinst, sca_cfg)
