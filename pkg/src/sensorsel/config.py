"""YAML experiment configuration.

Schema (all keys optional unless marked required for a mode)::

    mode: case-study | sweep | monte-carlo | solve      # required
    seed: 0                     # master seed
    trials: 1                   # per bandwidth; >= 1
    strategies: [proposed, snm, pmf, brute_force]
    output_dir: results
    case: 1                     # case-study: 1 or 2 (required)
    sweep:
      bandwidths_hz: [2.0e7, 5.0e7, 1.0e8, 2.0e8, 5.0e8, 1.0e9, 5.0e9]
    monte_carlo:
      bandwidth_hz: 1.0e8
    system:                     # random generator (sweep, monte-carlo)
      n_sensors: 8
      state_dim: 5
      meas_dim: 5
      r_max: 5.0                # R_i <= r_max * I
      A: [[...]]                # default: built-in 5-state plant (state_dim 5) or I
      Q: [[...]]                # default I
      P_prev: [[...]]           # default I
    channel:                    # random generator (sweep, monte-carlo)
      noise_power_db: -165      # required; dB(mW)
      p_max_mw: 1.0
      rate_bps: 5.0e7
      area_radius_km: 2.0
      min_distance_km: 0.01
      shadowing_std_db: 8.0
      normalize_noise: 0.01     # rescale gains so noise is this value; null to keep
    instance:                   # solve: one explicit problem (required)
      A: ...                    # scalar or matrix
      Q: ...
      P_prev: ...
      sensors: [{C: ..., R: ...}, ...]
      channel:
        h: [...]                # linear power gains
        noise_power: 0.01       # linear mW; or noise_power_db
        p_max_mw: 1.0
        theta: 0.414            # or rate_bps + bandwidth_hz
    sca: {tol, max_outer, t0, mu, gap_tol, newton_tol, max_newton, scaling, balance_floor}
    heuristic:
      prune: true
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .channel import ChannelRealization, db_to_linear, qos_threshold
from .estimation import LtiInstance, SensorModel
from .instances import Problem, RandomSpec
from .sca import ScaConfig
from .selection import STRATEGIES

MODES = ("case-study", "sweep", "monte-carlo", "solve")
DEFAULT_BANDWIDTHS = (2e7, 5e7, 1e8, 2e8, 5e8, 1e9, 5e9)
CASE_STUDY_SCA = ScaConfig(tol=1e-4)


class ConfigError(ValueError):
    """Malformed configuration; the message starts with the offending field."""

    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    mode: str
    seed: int = 0
    trials: int = 1
    strategies: tuple[str, ...] = STRATEGIES
    output_dir: str = "results"
    case: int | None = None
    bandwidths_hz: tuple[float, ...] = DEFAULT_BANDWIDTHS
    bandwidth_hz: float = 1e8
    random: RandomSpec = field(default_factory=RandomSpec)
    instance: dict | None = None          # raw mapping, parsed by problem()
    sca: ScaConfig = field(default_factory=ScaConfig)
    prune: bool = True

    def problem(self) -> Problem:
        if self.instance is None:
            raise ConfigError("instance", "required for mode 'solve'")
        return parse_instance(self.instance)


def _get(d: dict, key: str, path: str, kind, default=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"{path}{key}", "is required")
        return default
    val = d[key]
    try:
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if kind is int:
            if isinstance(val, bool) or float(val) != int(val):
                raise TypeError
            return int(val)
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}{key}", f"expected {kind.__name__}, got {val!r}") from None


def _mapping(d: dict, key: str, path: str = "") -> dict:
    v = d.get(key) or {}
    if not isinstance(v, dict):
        raise ConfigError(f"{path}{key}", "expected a mapping")
    return v


def _matrix(val, name: str) -> np.ndarray:
    try:
        a = np.atleast_2d(np.asarray(val, dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(name, "expected a number or a list of lists of numbers") from None
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(name, f"expected a square matrix, got shape {a.shape}")
    return a


def _tuple_matrix(a: np.ndarray | None):
    return None if a is None else tuple(tuple(float(x) for x in row) for row in a)


def _parse_sca(d: dict) -> ScaConfig:
    base = ScaConfig()
    kw = {}
    for f in dataclasses.fields(ScaConfig):
        if f.name in d:
            kind = type(getattr(base, f.name))
            kw[f.name] = _get(d, f.name, "sca.", kind)
    unknown = set(d) - {f.name for f in dataclasses.fields(ScaConfig)}
    if unknown:
        raise ConfigError(f"sca.{sorted(unknown)[0]}", "unknown field")
    try:
        return ScaConfig(**kw)
    except ValueError as e:
        raise ConfigError("sca", str(e)) from None


def _noise_db(channel: dict) -> float:
    if channel.get("noise_power_db") is None:
        raise ConfigError("channel.noise_power_db", "noise power is required (dB(mW))")
    return _get(channel, "noise_power_db", "channel.", float)


def _parse_random(system: dict, channel: dict) -> RandomSpec:
    n = _get(system, "state_dim", "system.", int, 5)
    mats = {}
    for key in ("A", "Q", "P_prev"):
        if system.get(key) is not None:
            m = _matrix(system[key], f"system.{key}")
            if m.shape != (n, n):
                raise ConfigError(f"system.{key}", f"expected {n}x{n}, got {m.shape}")
            mats[key] = _tuple_matrix(m)
    spec = RandomSpec(
        n_sensors=_get(system, "n_sensors", "system.", int, 8),
        state_dim=n,
        meas_dim=_get(system, "meas_dim", "system.", int, 5),
        r_max=_get(system, "r_max", "system.", float, 5.0),
        noise_power_db=_noise_db(channel),
        p_max_mw=_get(channel, "p_max_mw", "channel.", float, 1.0),
        rate=_get(channel, "rate_bps", "channel.", float, 50e6),
        area_radius_km=_get(channel, "area_radius_km", "channel.", float, 2.0),
        min_distance_km=_get(channel, "min_distance_km", "channel.", float, 0.01),
        shadowing_std_db=_get(channel, "shadowing_std_db", "channel.", float, 8.0),
        normalize_noise=(_get(channel, "normalize_noise", "channel.", float)
                         if "normalize_noise" in channel else 0.01),
        **mats,
    )
    if spec.n_sensors < 1:
        raise ConfigError("system.n_sensors", "must be at least 1")
    if spec.state_dim < 1 or spec.meas_dim < 1:
        raise ConfigError("system.state_dim", "dimensions must be positive")
    if spec.r_max <= 0:
        raise ConfigError("system.r_max", "must be positive")
    if spec.p_max_mw <= 0:
        raise ConfigError("channel.p_max_mw", "must be positive")
    if spec.rate <= 0:
        raise ConfigError("channel.rate_bps", "must be positive")
    if spec.normalize_noise is not None and spec.normalize_noise <= 0:
        raise ConfigError("channel.normalize_noise", "must be positive or null")
    return spec


def parse_instance(d: dict) -> Problem:
    """Explicit problem from the ``instance`` mapping."""
    p = "instance."
    for key in ("A", "sensors", "channel"):
        if d.get(key) is None:
            raise ConfigError(p + key, "is required")
    A = _matrix(d["A"], p + "A")
    n = A.shape[0]
    Q = _matrix(d.get("Q", np.zeros((n, n))), p + "Q")
    P_prev = _matrix(d.get("P_prev", np.eye(n)), p + "P_prev")
    if not isinstance(d["sensors"], list) or not d["sensors"]:
        raise ConfigError(p + "sensors", "expected a nonempty list")
    sensors = []
    for i, s in enumerate(d["sensors"]):
        name = f"{p}sensors[{i}]"
        if not isinstance(s, dict) or "C" not in s or "R" not in s:
            raise ConfigError(name, "each sensor needs C and R")
        try:
            sensors.append(SensorModel(np.atleast_2d(np.asarray(s["C"], dtype=float)),
                                       np.atleast_2d(np.asarray(s["R"], dtype=float)), i))
        except ValueError as e:
            raise ConfigError(name, str(e)) from None
    try:
        inst = LtiInstance(A, Q, tuple(sensors))
    except ValueError as e:
        raise ConfigError(p + "A", str(e)) from None
    ch = d["channel"]
    cp = p + "channel."
    if not isinstance(ch, dict):
        raise ConfigError(cp[:-1], "expected a mapping")
    if ch.get("h") is None:
        raise ConfigError(cp + "h", "channel gains are required")
    h = np.asarray(ch["h"], dtype=float).reshape(-1)
    if h.size != inst.N:
        raise ConfigError(cp + "h", f"expected {inst.N} gains, got {h.size}")
    if ch.get("noise_power") is not None:
        sigma2 = _get(ch, "noise_power", cp, float)
    elif ch.get("noise_power_db") is not None:
        sigma2 = float(db_to_linear(_get(ch, "noise_power_db", cp, float)))
    else:
        raise ConfigError(cp + "noise_power", "noise power is required (noise_power or noise_power_db)")
    if ch.get("theta") is not None:
        theta = np.asarray(ch["theta"], dtype=float)
    elif ch.get("rate_bps") is not None and ch.get("bandwidth_hz") is not None:
        theta = qos_threshold(_get(ch, "rate_bps", cp, float), _get(ch, "bandwidth_hz", cp, float))
    else:
        raise ConfigError(cp + "theta", "give theta, or rate_bps and bandwidth_hz")
    p_max = np.asarray(ch.get("p_max_mw", 1.0), dtype=float)
    try:
        real = ChannelRealization(h, sigma2, p_max, theta)
    except ValueError as e:
        raise ConfigError(cp[:-1], str(e)) from None
    return Problem(inst, P_prev, real)


def config_from_dict(d: Any) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>", "expected a mapping at the top level")
    known = {"mode", "seed", "trials", "strategies", "output_dir", "case", "sweep", "monte_carlo",
             "system", "channel", "instance", "sca", "heuristic"}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    mode = _get(d, "mode", "", str, required=True)
    if mode not in MODES:
        raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
    trials = _get(d, "trials", "", int, 1)
    if trials < 1:
        raise ConfigError("trials", "trial count must be at least 1")
    strategies = d.get("strategies", list(STRATEGIES))
    if isinstance(strategies, str):
        strategies = [s.strip() for s in strategies.split(",") if s.strip()]
    if not isinstance(strategies, list) or not strategies:
        raise ConfigError("strategies", "expected a nonempty list")
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError("strategies", f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
    kw: dict[str, Any] = dict(
        mode=mode,
        seed=_get(d, "seed", "", int, 0),
        trials=trials,
        strategies=tuple(strategies),
        output_dir=_get(d, "output_dir", "", str, "results"),
        sca=_parse_sca(_mapping(d, "sca")),
        prune=_get(_mapping(d, "heuristic"), "prune", "heuristic.", bool, True),
    )
    if mode == "case-study":
        case = _get(d, "case", "", int, required=True)
        if case not in (1, 2):
            raise ConfigError("case", "must be 1 or 2")
        kw["case"] = case
        if "sca" not in d:
            kw["sca"] = CASE_STUDY_SCA
    if mode in ("sweep", "monte-carlo"):
        kw["random"] = _parse_random(_mapping(d, "system"), _mapping(d, "channel"))
    if mode == "sweep":
        bws = _mapping(d, "sweep").get("bandwidths_hz", list(DEFAULT_BANDWIDTHS))
        if not isinstance(bws, list) or not bws:
            raise ConfigError("sweep.bandwidths_hz", "bandwidth grid must be a nonempty list")
        try:
            bws = tuple(float(b) for b in bws)
        except (TypeError, ValueError):
            raise ConfigError("sweep.bandwidths_hz", "expected numbers") from None
        if any(b <= 0 for b in bws):
            raise ConfigError("sweep.bandwidths_hz", "bandwidths must be positive")
        kw["bandwidths_hz"] = bws
    if mode == "monte-carlo":
        bw = _get(_mapping(d, "monte_carlo"), "bandwidth_hz", "monte_carlo.", float, 1e8)
        if bw <= 0:
            raise ConfigError("monte_carlo.bandwidth_hz", "must be positive")
        kw["bandwidth_hz"] = bw
    if mode == "solve":
        inst = d.get("instance")
        if not isinstance(inst, dict):
            raise ConfigError("instance", "required for mode 'solve'")
        parse_instance(inst)  # validate now so errors surface at load time
        kw["instance"] = inst
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("<file>", f"cannot read {path}: {e.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("<file>", f"invalid YAML: {e}") from None
    return config_from_dict(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain mapping that :func:`config_from_dict` turns back into an equal config."""
    d: dict[str, Any] = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "strategies": list(cfg.strategies),
        "output_dir": cfg.output_dir,
        "sca": dataclasses.asdict(cfg.sca),
        "heuristic": {"prune": cfg.prune},
    }
    if cfg.mode == "case-study":
        d["case"] = cfg.case
    if cfg.mode in ("sweep", "monte-carlo"):
        r = cfg.random
        d["system"] = {"n_sensors": r.n_sensors, "state_dim": r.state_dim, "meas_dim": r.meas_dim,
                       "r_max": r.r_max}
        for key in ("A", "Q", "P_prev"):
            if getattr(r, key) is not None:
                d["system"][key] = [list(row) for row in getattr(r, key)]
        d["channel"] = {"noise_power_db": r.noise_power_db, "p_max_mw": r.p_max_mw,
                        "rate_bps": r.rate, "area_radius_km": r.area_radius_km,
                        "min_distance_km": r.min_distance_km,
                        "shadowing_std_db": r.shadowing_std_db,
                        "normalize_noise": r.normalize_noise}
    if cfg.mode == "sweep":
        d["sweep"] = {"bandwidths_hz": list(cfg.bandwidths_hz)}
    if cfg.mode == "monte-carlo":
        d["monte_carlo"] = {"bandwidth_hz": cfg.bandwidth_hz}
    if cfg.mode == "solve":
        d["instance"] = cfg.instance
    return d


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def default_config(mode: str, **overrides) -> ExperimentConfig:
    """Built-in configuration used by the CLI when no file is given."""
    base: dict[str, Any] = {"mode": mode}
    if mode == "case-study":
        base["case"] = 1
    if mode in ("sweep", "monte-carlo"):
        base["channel"] = {"noise_power_db": RandomSpec().noise_power_db}
        base["trials"] = 200 if mode == "sweep" else 500
    base.update(overrides)
    return config_from_dict(base)
