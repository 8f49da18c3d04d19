"""Command-line interface.

Exit status: 0 when every requested run completed (and, with ``--verify``,
every check passed); 1 when verification fails; 2 for configuration or
usage errors; 3 when a run could not complete.
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import click

from . import harness
from .config import ConfigError, ExperimentConfig, default_config, load_config
from .instances import case_study, random_problem
from .sca import InnerSolverError
from .selection import STRATEGIES

EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_RUN = 3


def _strategies(value: str | None):
    if value is None:
        return None
    names = tuple(s.strip() for s in value.split(",") if s.strip())
    bad = [s for s in names if s not in STRATEGIES]
    if not names or bad:
        raise click.BadParameter(f"choose from {', '.join(STRATEGIES)}", param_hint="--strategies")
    return names


def _load(mode: str, config: str | None, seed, out, strategies, **defaults) -> ExperimentConfig:
    try:
        cfg = load_config(config) if config else default_config(mode, **defaults)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    if cfg.mode != mode:
        click.echo(f"config error: mode: file declares {cfg.mode!r}, command expects {mode!r}", err=True)
        sys.exit(EXIT_CONFIG)
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["output_dir"] = out
    if strategies is not None:
        changes["strategies"] = strategies
    return replace(cfg, **changes) if changes else cfg


def _finish(cfg: ExperimentConfig, res: harness.RunResult, verify: bool, quiet: bool = False):
    try:
        paths = harness.write_results(res, cfg.output_dir, cfg)
    except OSError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_RUN)
    if res.report and not quiet:
        click.echo(res.report, nl=False)
    for row in res.summary if not res.report else ():
        gap = "" if row["mean_gap"] is None else f"  gap {row['mean_gap']:.4%}"
        bw = "-" if row["bandwidth_hz"] is None else f"{row['bandwidth_hz'] / 1e6:g} MHz"
        click.echo(f"{bw:>10}  {row['strategy']:<12} mean {row['mean_objective']:.6g}"
                   f"  selected {row['mean_selected']:.2f}{gap}")
    click.echo(f"wrote {len(paths)} files to {cfg.output_dir}")
    if verify:
        failures = harness.verify_results(cfg, cfg.output_dir)
        for f in failures:
            click.echo(f"FAIL {f}", err=True)
        if failures:
            sys.exit(EXIT_VERIFY)
        click.echo("verify: all checks passed")


def _run(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (InnerSolverError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_RUN)


_common = [
    click.option("--config", "config", type=click.Path(dir_okay=False), help="YAML experiment file."),
    click.option("--seed", type=int, help="Master seed (overrides the file)."),
    click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
    click.option("--strategies", callback=lambda c, p, v: _strategies(v),
                 help=f"Comma-separated subset of {','.join(STRATEGIES)}."),
    click.option("--verify", is_flag=True, help="Re-validate written results; nonzero exit on failure."),
    click.option("--timing", is_flag=True, help="Fill wall_ms (output is then not reproducible)."),
]


def common(f):
    for opt in reversed(_common):
        f = opt(f)
    return f


jobs_option = click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                           help="Worker processes for independent trials.")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Sensor selection under SINR constraints for remote state estimation."""


@main.command("case-study")
@click.argument("which", type=click.IntRange(1, 2), required=False)
@common
@jobs_option
def case_study_cmd(which, config, seed, out, strategies, verify, timing, jobs):
    """Run every strategy on built-in case study WHICH (1 or 2)."""
    cfg = _load("case-study", config, seed, out, strategies,
                **({"case": which} if which is not None else {}))
    if which is not None and config and cfg.case != which:
        cfg = replace(cfg, case=which)
    res = _run(harness.run_case_study, cfg.case, cfg, timing=timing)
    _finish(cfg, res, verify)


@main.command()
@common
@jobs_option
def sweep(config, seed, out, strategies, verify, timing, jobs):
    """Trials at every bandwidth of the grid."""
    cfg = _load("sweep", config, seed, out, strategies)
    res = _run(harness.run_bandwidth_sweep, cfg, jobs=jobs, timing=timing)
    _finish(cfg, res, verify)


@main.command("monte-carlo")
@common
@jobs_option
@click.option("--trials", type=click.IntRange(min=1), help="Trial count (overrides the file).")
def monte_carlo(config, seed, out, strategies, verify, timing, jobs, trials):
    """Independent trials at a single bandwidth."""
    cfg = _load("monte-carlo", config, seed, out, strategies)
    if trials is not None:
        cfg = replace(cfg, trials=trials)
    res = _run(harness.run_monte_carlo, cfg, jobs=jobs, timing=timing)
    _finish(cfg, res, verify)


@main.command()
@common
def solve(config, seed, out, strategies, verify, timing):
    """Solve one instance described in a config file (mode: solve)."""
    if not config:
        click.echo("config error: --config: required for solve", err=True)
        sys.exit(EXIT_CONFIG)
    cfg = _load("solve", config, seed, out, strategies)
    res = _run(harness.run_solve, cfg, timing=timing)
    _finish(cfg, res, verify)


@main.command()
@click.option("--config", "config", type=click.Path(dir_okay=False),
              help="Any experiment file; random modes use trial 0 at the first bandwidth.")
@click.option("--case", "case", type=click.IntRange(1, 2), default=1, show_default=True,
              help="Case study to trace when no config is given.")
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(), default="trace.csv", show_default=True,
              help="CSV file (or directory, receiving trace.csv).")
def trace(config, case, seed, out):
    """Write the objective history of one relaxed solve over all candidates."""
    if config:
        try:
            cfg = load_config(config)
        except ConfigError as e:
            click.echo(f"config error: {e}", err=True)
            sys.exit(EXIT_CONFIG)
    else:
        cfg = default_config("case-study", case=case)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if cfg.mode == "case-study":
        problem = case_study(cfg.case)
    elif cfg.mode == "solve":
        problem = cfg.problem()
    else:
        bw = cfg.bandwidths_hz[0] if cfg.mode == "sweep" else cfg.bandwidth_hz
        problem = random_problem(cfg.random, bw, harness.derive_seed(cfg.seed, 0, 0))
    result = _run(harness.trace_solve, problem, cfg.sca, cfg.prune)
    path = Path(out)
    if path.is_dir():
        path = path / "trace.csv"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        result.write_trace(path)
    except OSError as e:
        click.echo(f"error: cannot write {path}: {e.strerror}", err=True)
        sys.exit(EXIT_RUN)
    click.echo(f"{result.iterations} iterations, objective {result.history[-1]:.6g}, "
               f"converged={result.converged}; wrote {path}")


if __name__ == "__main__":
    main()
