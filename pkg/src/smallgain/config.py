"""Run-file parsing: a strict TOML schema covering the cascade, the
simulation settings, and optional input/history/gain-check sections.

Unknown keys are rejected outright: a silently ignored typo in a
feedback strength or a delay would invalidate every certificate derived
from the file.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .behaviors import (
    Affine,
    CascadeSpec,
    Delay,
    Feedback,
    Hill,
    Identity,
    Inhibition,
    Scale,
    ScalarMonotoneOde,
    Table,
    TableLookup,
)
from .errors import ConfigError
from .gains import Composed, GainFunction, Linear, PiecewiseLinear, PowerLaw
from .signals import Signal
from .simulate import History, SimConfig

__all__ = ["RunConfig", "GainCheckSettings", "load_config", "ENV_OUT_DIR"]

ENV_OUT_DIR = "SMALLGAIN_OUT_DIR"


@dataclass(frozen=True)
class GainCheckSettings:
    input_range: tuple[float, float]
    n_inputs: int = 100
    n_pairs: int | None = None
    claimed: GainFunction | None = None
    horizon: float | None = None


@dataclass(frozen=True)
class RunConfig:
    cascade: CascadeSpec
    sim: SimConfig
    seed: int
    out_dir: str | None = None
    input_constant: float | None = None
    input_csv: str | None = None
    histories: History | None = None
    gain_check: GainCheckSettings | None = None
    digest: str = ""
    base_dir: Path = Path(".")

    def resolve_out_dir(self, override: str | None = None) -> Path:
        if override:
            return Path(override)
        if self.out_dir:
            return self.base_dir / self.out_dir
        env = os.environ.get(ENV_OUT_DIR)
        if env:
            return Path(env)
        return Path(".")

    def make_input_signal(self) -> Signal:
        """External input covering [0, horizon] at the simulation step."""
        if self.input_csv is not None:
            return Signal.from_csv(self.base_dir / self.input_csv)
        if self.input_constant is None:
            raise ConfigError("open-loop simulation needs an [input] section")
        n = self.sim.n_steps + 1
        return Signal(0.0, self.sim.dt, np.full(n, self.input_constant))


def _check_keys(mapping: dict, allowed: set[str], context: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"{context}: unknown key {key!r}")


def _need(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _as_number(value, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{context}: expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(f"{context}: value must be finite")
    return v


def _as_pair(value, context: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{context}: expected a two-element list")
    return (_as_number(value[0], context), _as_number(value[1], context))


def _parse_fn(node, context: str):
    if not isinstance(node, dict) or len(node) != 1:
        raise ConfigError(f"{context}: expected exactly one function form")
    (form, body), = node.items()
    if form == "affine":
        _check_keys(body, {"offset", "slope"}, context)
        return Affine(_as_number(_need(body, "offset", context), context),
                      _as_number(_need(body, "slope", context), context))
    if form == "hill":
        _check_keys(body, {"scale", "threshold", "exponent", "root", "direction"}, context)
        return Hill(
            scale=_as_number(_need(body, "scale", context), context),
            threshold=_as_number(_need(body, "threshold", context), context),
            exponent=_as_number(_need(body, "exponent", context), context),
            root=_as_number(body.get("root", 0.0), context),
            direction=body.get("direction", "up"),
        )
    if form == "table":
        _check_keys(body, {"x", "y"}, context)
        return Table(tuple(_need(body, "x", context)), tuple(_need(body, "y", context)))
    raise ConfigError(f"{context}: unknown function form {form!r}")


def _parse_map(node, context: str):
    if not isinstance(node, dict) or len(node) != 1:
        raise ConfigError(f"{context}: expected exactly one map form")
    (form, body), = node.items()
    if form == "identity":
        return Identity()
    if form == "scale":
        return Scale(_as_number(body, context))
    if form == "inhibition":
        _check_keys(body, {"mu", "k"}, context)
        return Inhibition(_as_number(_need(body, "mu", context), context),
                          _as_number(_need(body, "k", context), context))
    if form == "table":
        _check_keys(body, {"x", "y"}, context)
        return TableLookup(Table(tuple(_need(body, "x", context)), tuple(_need(body, "y", context))))
    raise ConfigError(f"{context}: unknown map form {form!r}")


def _parse_gain(node, context: str) -> GainFunction:
    if not isinstance(node, dict) or len(node) != 1:
        raise ConfigError(f"{context}: expected exactly one gain form")
    (form, body), = node.items()
    if form == "linear":
        return Linear(_as_number(body, context))
    if form == "power_law":
        _check_keys(body, {"coeff", "exponent"}, context)
        return PowerLaw(_as_number(_need(body, "coeff", context), context),
                        _as_number(_need(body, "exponent", context), context))
    if form == "piecewise_linear":
        if not isinstance(body, list):
            raise ConfigError(f"{context}: expected a list of [r, value] pairs")
        return PiecewiseLinear(tuple((_as_number(p[0], context), _as_number(p[1], context))
                                     for p in body))
    if form == "composed":
        return Composed(tuple(_parse_gain(part, context) for part in body))
    raise ConfigError(f"{context}: unknown gain form {form!r}")


def _parse_stage(node: dict, context: str):
    kind = _need(node, "kind", context)
    if kind == "delay":
        _check_keys(node, {"kind", "tau"}, context)
        return Delay(_as_number(_need(node, "tau", context), context))
    if kind == "memoryless":
        _check_keys(node, {"kind", "map"}, context)
        return _parse_map(_need(node, "map", context), context)
    if kind == "ode":
        _check_keys(node, {"kind", "interval", "alpha", "beta"}, context)
        return ScalarMonotoneOde(
            alpha=_parse_fn(_need(node, "alpha", context), f"{context}.alpha"),
            beta=_parse_fn(_need(node, "beta", context), f"{context}.beta"),
            interval=_as_pair(_need(node, "interval", context), context),
        )
    raise ConfigError(f"{context}: unknown stage kind {kind!r}")


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a run file; raises ConfigError with the offending
    key on any schema violation."""
    path = Path(path)
    try:
        raw_bytes = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = tomllib.loads(raw_bytes.decode())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    _check_keys(doc, {"seed", "out_dir", "sim", "cascade", "input", "histories", "gain_check"}, str(path))

    cascade_node = _need(doc, "cascade", str(path))
    _check_keys(cascade_node, {"stages", "feedback"}, "cascade")
    stage_nodes = _need(cascade_node, "stages", "cascade")
    if not isinstance(stage_nodes, list) or not stage_nodes:
        raise ConfigError("cascade.stages must be a nonempty list")
    stages = tuple(
        _parse_stage(node, f"cascade.stages[{i}]") for i, node in enumerate(stage_nodes)
    )
    feedback = None
    if "feedback" in cascade_node:
        fb = cascade_node["feedback"]
        _check_keys(fb, {"mu", "k", "tau"}, "cascade.feedback")
        feedback = Feedback(
            mu=_as_number(_need(fb, "mu", "cascade.feedback"), "cascade.feedback.mu"),
            k=_as_number(_need(fb, "k", "cascade.feedback"), "cascade.feedback.k"),
            tau=_as_number(fb.get("tau", 0.0), "cascade.feedback.tau"),
        )
    cascade = CascadeSpec(stages, feedback)

    sim_node = doc.get("sim", {})
    _check_keys(sim_node, {"dt", "horizon", "clamp_tol"}, "sim")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")
    sim = SimConfig(
        dt=_as_number(sim_node.get("dt", 0.01), "sim.dt"),
        horizon=_as_number(sim_node.get("horizon", 200.0), "sim.horizon"),
        clamp_tol=_as_number(sim_node.get("clamp_tol", 1e-9), "sim.clamp_tol"),
        seed=seed,
    )

    input_constant = None
    input_csv = None
    if "input" in doc:
        inp = doc["input"]
        _check_keys(inp, {"constant", "csv"}, "input")
        if ("constant" in inp) == ("csv" in inp):
            raise ConfigError("input: give exactly one of 'constant' or 'csv'")
        if "constant" in inp:
            input_constant = _as_number(inp["constant"], "input.constant")
        else:
            input_csv = str(inp["csv"])

    histories = None
    if "histories" in doc:
        h = doc["histories"]
        _check_keys(h, {"states", "input"}, "histories")
        states = _need(h, "states", "histories")
        if not isinstance(states, list):
            raise ConfigError("histories.states must be a list of numbers")
        values = [_as_number(v, "histories.states") for v in states]
        n_odes = cascade.n_odes
        if len(values) != n_odes:
            raise ConfigError(
                f"histories.states has {len(values)} entries, cascade has {n_odes} "
                "dynamic stages"
            )
        input_hist = None
        if "input" in h:
            input_hist = _as_number(h["input"], "histories.input")
        histories = History.constant(values, input_hist)

    gain_check = None
    if "gain_check" in doc:
        gc = doc["gain_check"]
        _check_keys(gc, {"input_range", "n_inputs", "n_pairs", "claimed", "horizon"}, "gain_check")
        gain_check = GainCheckSettings(
            input_range=_as_pair(_need(gc, "input_range", "gain_check"), "gain_check.input_range"),
            n_inputs=int(gc.get("n_inputs", 100)),
            n_pairs=int(gc["n_pairs"]) if "n_pairs" in gc else None,
            claimed=_parse_gain(gc["claimed"], "gain_check.claimed") if "claimed" in gc else None,
            horizon=_as_number(gc["horizon"], "gain_check.horizon") if "horizon" in gc else None,
        )

    out_dir = doc.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir: expected a string")

    return RunConfig(
        cascade=cascade,
        sim=sim,
        seed=seed,
        out_dir=out_dir,
        input_constant=input_constant,
        input_csv=input_csv,
        histories=histories,
        gain_check=gain_check,
        digest="sha256:" + hashlib.sha256(raw_bytes).hexdigest(),
        base_dir=path.parent,
    )
