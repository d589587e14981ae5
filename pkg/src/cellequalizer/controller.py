"""Round-based equalization controller.

One round: pick the highest and lowest cell, close the selection switches
with the converter off, run the converter for ``delta_t`` and store the
voltage step of each selected cell as its recovery estimate ``v_imp``, keep
transferring until a stop threshold is crossed, then open the switches and
wait ``time_gap`` before looking at the voltages again.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

from .network import SwitchState, ordered_pair, select_pair

_EPS = 1e-9


class Phase(str, enum.Enum):
    IDLE = "idle"
    SETTLING = "settling"
    MEASURING = "measuring"
    EQUALIZING = "equalizing"


class Role(str, enum.Enum):
    SINK = "sink"  # charged
    SOURCE = "source"  # discharged


@dataclass(frozen=True)
class EqualizerConfig:
    v_tol: float = 0.010  # V, half-width of the acceptance band
    delta_t: float = 20.0  # s, v_imp measurement window
    time_gap: float = 20.0  # s, settle time between switching transitions
    i_eq: float = 0.5  # A
    compensation: bool = True
    max_round_duration: float = 600.0  # s of converter-on time per round

    def __post_init__(self):
        for name in ("v_tol", "delta_t", "time_gap", "i_eq", "max_round_duration"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")


@dataclass(frozen=True)
class ControllerState:
    n: int
    phase: Phase = Phase.IDLE
    active_pair: tuple[int, int] | None = None  # (source, sink), 1-based
    v_avg: float | None = None
    v_start: tuple[float, float] | None = None  # (source, sink) at current start
    v_imp: tuple[float, float] | None = None  # (source, sink)
    phase_time: float = 0.0
    on_time: float = 0.0  # converter-on time in the current round
    since_switch: float = math.inf
    switches: SwitchState | None = None
    rounds: int = 0

    def __post_init__(self):
        if self.switches is None:
            object.__setattr__(self, "switches", SwitchState.all_off(self.n))


@dataclass(frozen=True)
class Commands:
    switches: SwitchState
    converter_on: bool
    source: int | None = None
    sink: int | None = None
    switched: bool = False
    thresholds: tuple[float, float] | None = None  # (source, sink)
    round_started: bool = False


def check_band(voltages: Sequence[float], v_tol: float) -> tuple[float, frozenset[int]]:
    """Mean voltage and the 1-based indices of cells outside ``mean +/- v_tol``."""
    if len(voltages) < 2:
        raise ValueError("need at least 2 cell voltages")
    v_avg = math.fsum(voltages) / len(voltages)
    out = frozenset(
        j for j, v in enumerate(voltages, start=1) if v < v_avg - v_tol or v > v_avg + v_tol
    )
    return v_avg, out


def choose_pair(voltages: Sequence[float]) -> tuple[int, int]:
    """(most charged, least charged) as 1-based indices, ties to the lowest index."""
    if len(voltages) < 2:
        raise ValueError("need at least 2 cell voltages")
    hi = max(range(len(voltages)), key=lambda j: (voltages[j], -j))
    lo = min(range(len(voltages)), key=lambda j: (voltages[j], j))
    if voltages[hi] == voltages[lo]:
        raise ValueError("all cell voltages are equal; nothing to equalize")
    return hi + 1, lo + 1


def measure_vimp(v_start: float, v_after_delta_t: float) -> float:
    return abs(v_after_delta_t - v_start)


def stop_threshold(role: Role | str, v_avg: float, v_imp: float, compensation: bool = True) -> float:
    if v_imp < 0:
        raise ValueError(f"v_imp must be >= 0, got {v_imp}")
    comp = v_imp if compensation else 0.0
    role = Role(role)
    return v_avg + comp if role is Role.SINK else v_avg - comp


def _validate(voltages: Sequence[float], n: int) -> None:
    if len(voltages) != n:
        raise ValueError(f"expected {n} cell voltages, got {len(voltages)}")
    if not all(math.isfinite(v) for v in voltages):
        raise ValueError("cell voltages must be finite")


def controller_step(
    state: ControllerState,
    voltages: Sequence[float],
    config: EqualizerConfig,
    dt: float,
) -> tuple[ControllerState, Commands]:
    """Advance the controller by one sample.

    ``voltages`` are the terminal voltages measured at the start of the step;
    the returned commands hold for the following ``dt`` seconds.
    """
    _validate(voltages, state.n)
    s = state

    if s.phase is Phase.MEASURING:
        if s.on_time >= config.delta_t - _EPS:
            src, snk = s.active_pair
            v_imp = (
                measure_vimp(s.v_start[0], voltages[src - 1]),
                measure_vimp(s.v_start[1], voltages[snk - 1]),
            )
            s = replace(s, phase=Phase.EQUALIZING, v_imp=v_imp, phase_time=0.0)
        else:
            src, snk = s.active_pair
            cmd = Commands(s.switches, True, src, snk)
            return _advance(s, dt, converter_on=True), cmd

    if s.phase is Phase.EQUALIZING:
        src, snk = s.active_pair
        thr = (
            stop_threshold(Role.SOURCE, s.v_avg, s.v_imp[0], config.compensation),
            stop_threshold(Role.SINK, s.v_avg, s.v_imp[1], config.compensation),
        )
        done = (
            voltages[src - 1] <= thr[0]
            or voltages[snk - 1] >= thr[1]
            or s.on_time >= config.max_round_duration - _EPS
        )
        if not done:
            return _advance(s, dt, converter_on=True), Commands(s.switches, True, src, snk, thresholds=thr)
        s = replace(s, phase=Phase.SETTLING, phase_time=0.0, active_pair=None)

    if s.phase is Phase.SETTLING:
        switched = False
        if s.switches.closed():
            if s.since_switch < config.time_gap - _EPS:
                # minimum dwell not met yet: converter is already off
                return _advance(s, dt), Commands(s.switches, False)
            s = replace(s, switches=SwitchState.all_off(s.n), since_switch=0.0, phase_time=0.0)
            switched = True
        if switched or s.since_switch < config.time_gap - _EPS:
            return _advance(s, dt), Commands(s.switches, False, switched=switched)
        s = replace(s, phase=Phase.IDLE, phase_time=0.0)

    # IDLE
    v_avg, out = check_band(voltages, config.v_tol)
    if not out:
        return _advance(s, dt), Commands(s.switches, False)
    src, snk = choose_pair(voltages)
    k, l = ordered_pair(src, snk)
    s = replace(
        s,
        phase=Phase.MEASURING,
        active_pair=(src, snk),
        v_avg=v_avg,
        v_start=(voltages[src - 1], voltages[snk - 1]),
        v_imp=None,
        phase_time=0.0,
        on_time=0.0,
        since_switch=0.0,
        switches=select_pair(k, l, s.n),
        rounds=s.rounds + 1,
    )
    # switches move while the converter is still off
    return _advance(s, dt), Commands(s.switches, False, src, snk, switched=True, round_started=True)


def _advance(s: ControllerState, dt: float, converter_on: bool = False) -> ControllerState:
    return replace(
        s,
        phase_time=s.phase_time + dt,
        on_time=s.on_time + dt if converter_on else s.on_time,
        since_switch=s.since_switch + dt,
    )
