"""Run configuration files (TOML, or the same structure as JSON).

See ``docs/config-format.md`` for the grammar and units. Every error raised
here is a :class:`ConfigError` whose message starts with the offending key,
written as ``[section].key``.
"""

from __future__ import annotations

import copy
import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .cell import DEFAULT_OCV_CURVE, CellParams, default_cell_params
from .controller import EqualizerConfig
from .converter import DEFAULT_EFF_CURVE, ConverterParams
from .scenarios import spread_cells
from .sim import ConstantCurrent, ConstantVoltage, Rest, Scenario, Segment, StepSchedule

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

MAX_GRID_POINTS = 10_000


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# value coercion
# ---------------------------------------------------------------------------
def _where(section: str, key: str) -> str:
    return f"[{section}].{key}"


def _number(where: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite, got {value}")
    return value


def _positive(where: str, value: Any) -> float:
    value = _number(where, value)
    if not value > 0:
        raise ConfigError(f"{where}: must be > 0, got {value:g}")
    return value


def _non_negative(where: str, value: Any) -> float:
    value = _number(where, value)
    if value < 0:
        raise ConfigError(f"{where}: must be >= 0, got {value:g}")
    return value


def _integer(where: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return value


def _boolean(where: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("on", "off", "true", "false"):
        return value.lower() in ("on", "true")
    raise ConfigError(f"{where}: expected true/false or on/off, got {value!r}")


def _string(where: str, value: Any) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _pairs(where: str, value: Any) -> tuple[tuple[float, float], ...]:
    if not isinstance(value, list) or not all(isinstance(p, list) and len(p) == 2 for p in value):
        raise ConfigError(f"{where}: expected a list of [x, y] pairs")
    return tuple((_number(where, a), _number(where, b)) for a, b in value)


def _number_list(where: str, value: Any) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a non-empty list of numbers")
    return [_number(where, v) for v in value]


def _scalar_or_list(where: str, value: Any, n: int, check: Callable) -> list[float]:
    if isinstance(value, list):
        if len(value) != n:
            raise ConfigError(f"{where}: expected {n} values, got {len(value)}")
        return [check(where, v) for v in value]
    return [check(where, value)] * n


def _table(where: str, value: Any) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{where}: expected a table")
    return value


def _reject_unknown(section: str, table: dict, allowed: set[str]) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(
                f"{_where(section, key)}: unknown key (allowed: {', '.join(sorted(allowed))})"
            )


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------
SECTIONS = {"stack", "cells", "equalizer", "converter", "profile", "sim", "grid"}
_CELL_KEYS = {
    "capacity", "r0", "r1", "c1", "tau", "ocv_curve",
    "capacity_spread", "r0_spread", "initial_voltages", "initial_soc",
}
_EQ_KEYS = {"v_tol", "delta_t", "time_gap", "i_eq", "compensation", "max_round_duration"}
_CONV_KEYS = {"i_eq", "rated_power", "eff_curve"}
_SIM_KEYS = {"dt", "duration", "seed", "name", "stop_on_clamp"}
_SEGMENT_KEYS = {
    "rest": {"kind", "duration"},
    "cc": {"kind", "current", "duration", "v_limit"},
    "cv": {"kind", "v_cell", "current_limit", "cutoff_current", "gain", "duration"},
    "steps": {"kind", "steps", "duration"},
}


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    equalizer: EqualizerConfig
    converter: ConverterParams
    stop_on_clamp: bool = True
    raw: dict = field(default_factory=dict, compare=False, repr=False)


def _cells(raw: dict, n_declared: int | None, seed: int) -> tuple[list[CellParams], list[float] | None, list[float] | None]:
    sec = "cells"
    table = _table("[cells]", raw.get(sec, {}))
    _reject_unknown(sec, table, _CELL_KEYS)
    v0 = table.get("initial_voltages")
    s0 = table.get("initial_soc")
    if (v0 is None) == (s0 is None):
        raise ConfigError("[cells].initial_voltages: give exactly one of initial_voltages or initial_soc")
    key = "initial_voltages" if v0 is not None else "initial_soc"
    init = _number_list(_where(sec, key), table[key])
    n = len(init)
    if n_declared is not None and n_declared != n:
        raise ConfigError(f"{_where(sec, key)}: {n} values but [stack].n = {n_declared}")
    if n < 2:
        raise ConfigError(f"{_where(sec, key)}: need at least 2 cells")
    if "c1" in table and "tau" in table:
        raise ConfigError("[cells].tau: give either c1 or tau, not both")

    base = default_cell_params()
    capacity = _scalar_or_list(_where(sec, "capacity"), table.get("capacity", base.capacity), n, _positive)
    r0 = _scalar_or_list(_where(sec, "r0"), table.get("r0", base.r0), n, _non_negative)
    r1 = _scalar_or_list(_where(sec, "r1"), table.get("r1", base.r1), n, _positive)
    if "tau" in table:
        tau = _scalar_or_list(_where(sec, "tau"), table["tau"], n, _positive)
        c1 = [t / r for t, r in zip(tau, r1)]
    else:
        c1 = _scalar_or_list(_where(sec, "c1"), table.get("c1", base.c1), n, _positive)
    curve = _pairs(_where(sec, "ocv_curve"), table["ocv_curve"]) if "ocv_curve" in table else DEFAULT_OCV_CURVE
    cap_spread = _non_negative(_where(sec, "capacity_spread"), table.get("capacity_spread", 0.0))
    r0_spread = _non_negative(_where(sec, "r0_spread"), table.get("r0_spread", 0.0))

    cells = []
    for j in range(n):
        try:
            cells.append(CellParams(capacity=capacity[j], r0=r0[j], r1=r1[j], c1=c1[j], ocv_curve=curve))
        except ValueError as exc:
            raise ConfigError(f"[cells]: {exc}") from None
    if cap_spread or r0_spread:
        scatter = spread_cells(n, seed, cap_spread, r0_spread)
        cells = [
            CellParams(
                capacity=c.capacity * s.capacity / base.capacity,
                r0=c.r0 * s.r0 / base.r0,
                r1=c.r1,
                c1=c.c1,
                ocv_curve=c.ocv_curve,
            )
            for c, s in zip(cells, scatter)
        ]
    if v0 is not None:
        return cells, init, None
    return cells, None, init


def _segment(idx: int, table: Any) -> Segment:
    label = f"profile.{idx}"
    table = _table(f"[{label}]", table)
    kind = table.get("kind")
    if kind not in _SEGMENT_KEYS:
        raise ConfigError(f"{_where(label, 'kind')}: expected one of {sorted(_SEGMENT_KEYS)}, got {kind!r}")
    _reject_unknown(label, table, _SEGMENT_KEYS[kind])

    def get(key, check, default=None, required=False):
        if key not in table:
            if required:
                raise ConfigError(f"{_where(label, key)}: required for kind = {kind!r}")
            return default
        return check(_where(label, key), table[key])

    if kind == "rest":
        return Rest(get("duration", _positive, required=True))
    if kind == "cc":
        seg = ConstantCurrent(
            current=get("current", _number, required=True),
            duration=get("duration", _positive),
            v_limit=get("v_limit", _positive),
        )
        if seg.duration is None and seg.v_limit is None:
            raise ConfigError(f"{_where(label, 'duration')}: cc needs a duration or a v_limit")
        if seg.v_limit is not None and seg.current == 0:
            raise ConfigError(f"{_where(label, 'current')}: a voltage limit needs a nonzero current")
        return seg
    if kind == "cv":
        return ConstantVoltage(
            v_cell=get("v_cell", _positive, required=True),
            current_limit=get("current_limit", _positive, required=True),
            cutoff_current=get("cutoff_current", _non_negative, required=True),
            gain=get("gain", _positive, 1.0),
            duration=get("duration", _positive),
        )
    steps = get("steps", _pairs, required=True)
    duration = get("duration", _positive, required=True)
    times = [t for t, _ in steps]
    if not steps or times[0] != 0:
        raise ConfigError(f"{_where(label, 'steps')}: schedule must start at t = 0")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError(f"{_where(label, 'steps')}: times must be strictly increasing")
    if duration <= times[-1]:
        raise ConfigError(f"{_where(label, 'duration')}: must exceed the last step time")
    return StepSchedule(steps, duration)


def parse_config(raw: dict) -> RunConfig:
    """Build a validated run configuration from a parsed config document."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a table")
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(f"[{key}]: unknown section (allowed: {', '.join(sorted(SECTIONS))})")

    stack = _table("[stack]", raw.get("stack", {}))
    _reject_unknown("stack", stack, {"n"})
    n_declared = None
    if "n" in stack:
        n_declared = _integer("[stack].n", stack["n"])
        if n_declared < 2:
            raise ConfigError(f"[stack].n: need at least 2 cells, got {n_declared}")

    sim = _table("[sim]", raw.get("sim", {}))
    _reject_unknown("sim", sim, _SIM_KEYS)
    dt = _positive("[sim].dt", sim.get("dt", 0.5))
    if "duration" not in sim:
        raise ConfigError("[sim].duration: required")
    duration = _positive("[sim].duration", sim["duration"])
    seed = _integer("[sim].seed", sim.get("seed", 0))
    name = _string("[sim].name", sim.get("name", "scenario"))
    stop_on_clamp = _boolean("[sim].stop_on_clamp", sim.get("stop_on_clamp", True))

    eq = _table("[equalizer]", raw.get("equalizer", {}))
    _reject_unknown("equalizer", eq, _EQ_KEYS)
    defaults = EqualizerConfig()
    eq_kwargs = {}
    for key in ("v_tol", "delta_t", "time_gap", "i_eq", "max_round_duration"):
        eq_kwargs[key] = _positive(_where("equalizer", key), eq.get(key, getattr(defaults, key)))
    eq_kwargs["compensation"] = _boolean("[equalizer].compensation", eq.get("compensation", True))
    equalizer = EqualizerConfig(**eq_kwargs)

    conv = _table("[converter]", raw.get("converter", {}))
    _reject_unknown("converter", conv, _CONV_KEYS)
    i_eq = _positive("[converter].i_eq", conv.get("i_eq", equalizer.i_eq))
    if not math.isclose(i_eq, equalizer.i_eq, rel_tol=1e-12):
        raise ConfigError(
            f"[converter].i_eq: {i_eq:g} A disagrees with [equalizer].i_eq = {equalizer.i_eq:g} A"
        )
    rated = _positive("[converter].rated_power", conv.get("rated_power", 2.0))
    curve = _pairs("[converter].eff_curve", conv["eff_curve"]) if "eff_curve" in conv else DEFAULT_EFF_CURVE
    try:
        converter = ConverterParams(i_eq=i_eq, rated_power=rated, eff_curve=curve)
    except ValueError as exc:
        raise ConfigError(f"[converter].eff_curve: {exc}") from None

    limit = min(equalizer.time_gap, equalizer.delta_t) / 10.0
    if dt > limit + 1e-12:
        raise ConfigError(
            f"[sim].dt: {dt:g} s is too coarse, must be <= min(time_gap, delta_t)/10 = {limit:g} s"
        )

    cells, volts, socs = _cells(raw, n_declared, seed)
    profile_raw = raw.get("profile", [])
    if not isinstance(profile_raw, list):
        raise ConfigError("[profile]: expected an array of tables ([[profile]])")
    profile = tuple(_segment(i, seg) for i, seg in enumerate(profile_raw, start=1))

    common = dict(profile=profile, dt=dt, duration=duration, seed=seed, name=name)
    if volts is not None:
        try:
            scenario = Scenario.from_voltages(cells, volts, **common)
        except ValueError as exc:
            raise ConfigError(f"[cells].initial_voltages: {exc}") from None
    else:
        if any(not 0 <= s <= 1 for s in socs):
            raise ConfigError("[cells].initial_soc: values must lie in [0, 1]")
        scenario = Scenario(cells=tuple(cells), initial_soc=tuple(socs), **common)
    return RunConfig(scenario, equalizer, converter, stop_on_clamp, raw)


def read_document(path: str | Path) -> dict:
    """Parse a TOML file, or JSON when the suffix is ``.json``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(text)
        else:
            doc = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return doc


def load_config(path: str | Path) -> RunConfig:
    return parse_config(read_document(path))


# ---------------------------------------------------------------------------
# parameter grids
# ---------------------------------------------------------------------------
def _grid_key(key: str) -> tuple[str, str]:
    section, _, name = key.partition(".")
    allowed = {"stack": {"n"}, "cells": _CELL_KEYS, "equalizer": _EQ_KEYS, "converter": _CONV_KEYS, "sim": _SIM_KEYS}
    if section not in allowed or name not in allowed[section]:
        raise ConfigError(f"[grid].{key}: not a sweepable key (use section.key, e.g. equalizer.v_tol)")
    return section, name


def grid_size(grid: dict) -> int:
    size = 1
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"[grid].{key}: expected a non-empty list of values")
        size *= len(values)
    return size


def expand_grid(raw: dict, grid: dict | None = None) -> list[tuple[dict, dict]]:
    """Cartesian product of the grid, as ``(point, document)`` pairs.

    ``grid`` defaults to the document's own ``[grid]`` table. An empty grid
    yields the base document once.
    """
    base = {k: v for k, v in raw.items() if k != "grid"}
    if grid is None:
        grid = raw.get("grid", {})
    grid = _table("[grid]", grid)
    keys = list(grid)
    for key in keys:
        _grid_key(key)
    size = grid_size(grid)
    if size > MAX_GRID_POINTS:
        raise ConfigError(f"[grid]: {size} points exceeds the limit of {MAX_GRID_POINTS}")
    points = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        doc = copy.deepcopy(base)
        point = dict(zip(keys, combo))
        for key, value in point.items():
            section, name = _grid_key(key)
            doc.setdefault(section, {})[name] = copy.deepcopy(value)
        points.append((point, doc))
    return points
