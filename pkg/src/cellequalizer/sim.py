"""Fixed-step simulation of a series stack with the equalizer in the loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .cell import CellParams, CellState, terminal_voltage
from .controller import Commands, ControllerState, EqualizerConfig, Phase, controller_step
from .converter import ConverterParams, capacitor_voltages, transfer
from .network import SwitchState, TransitionCounter, ordered_pair, switch_names

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# load profile
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Rest:
    duration: float


@dataclass(frozen=True)
class ConstantCurrent:
    """Stack current (charging positive) until ``duration`` or ``v_limit``.

    A discharge stops when any cell falls to ``v_limit``, a charge when any
    cell rises to it.
    """

    current: float
    duration: float | None = None
    v_limit: float | None = None


@dataclass(frozen=True)
class ConstantVoltage:
    v_cell: float  # per-cell setpoint, V
    current_limit: float
    cutoff_current: float
    gain: float = 1.0  # A per V of stack error
    duration: float | None = None


@dataclass(frozen=True)
class StepSchedule:
    steps: tuple[tuple[float, float], ...]  # (time into segment, current)
    duration: float


Segment = Union[Rest, ConstantCurrent, ConstantVoltage, StepSchedule]

# CV ends only after the commanded current has stayed below cutoff this long
_CV_CUTOFF_STEPS = 5


def cv_charge_current(
    v_cell_setpoint: float,
    cell_voltages: Sequence[float],
    current_limit: float,
    gain: float = 1.0,
) -> float:
    """Proportional stack-voltage loop, clamped to ``[0, current_limit]``."""
    if not (v_cell_setpoint > 0 and current_limit > 0):
        raise ValueError("setpoint and current limit must be positive")
    error = v_cell_setpoint * len(cell_voltages) - math.fsum(cell_voltages)
    return min(current_limit, max(0.0, gain * error))


def _validate_segment(seg: Segment, idx: int) -> None:
    where = f"profile segment {idx}"
    if isinstance(seg, Rest):
        if not seg.duration > 0:
            raise ValueError(f"{where}: duration must be > 0")
    elif isinstance(seg, ConstantCurrent):
        if seg.duration is None and seg.v_limit is None:
            raise ValueError(f"{where}: needs a duration or a v_limit")
        if seg.duration is not None and not seg.duration > 0:
            raise ValueError(f"{where}: duration must be > 0")
        if seg.v_limit is not None and seg.current == 0:
            raise ValueError(f"{where}: a voltage limit needs a nonzero current")
    elif isinstance(seg, ConstantVoltage):
        if not (seg.v_cell > 0 and seg.current_limit > 0 and seg.cutoff_current >= 0 and seg.gain > 0):
            raise ValueError(f"{where}: v_cell, current_limit, gain must be > 0, cutoff >= 0")
    elif isinstance(seg, StepSchedule):
        times = [t for t, _ in seg.steps]
        if not times or times[0] != 0:
            raise ValueError(f"{where}: schedule must start at t=0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"{where}: schedule times must be strictly increasing")
        if not seg.duration > times[-1]:
            raise ValueError(f"{where}: duration must exceed the last schedule time")
    else:
        raise TypeError(f"{where}: unknown segment type {type(seg).__name__}")


class _ProfileRunner:
    """Walks the segment list; segments follow each other without gaps."""

    def __init__(self, segments: Sequence[Segment]):
        self.segments = list(segments)
        self.idx = 0
        self.start = 0.0
        self.low_count = 0
        self.transitions: list[tuple[float, int]] = [(0.0, 0)] if self.segments else []

    def current(self, t: float, voltages: Sequence[float]) -> float:
        while self.idx < len(self.segments):
            seg = self.segments[self.idx]
            elapsed = t - self.start
            value = self._evaluate(seg, elapsed, voltages)
            if value is not None:
                return value
            self.idx += 1
            self.start = t
            self.low_count = 0
            self.transitions.append((t, self.idx))
        return 0.0

    def _evaluate(self, seg: Segment, elapsed: float, v: Sequence[float]) -> float | None:
        eps = 1e-9
        if isinstance(seg, Rest):
            return 0.0 if elapsed < seg.duration - eps else None
        if isinstance(seg, StepSchedule):
            if elapsed >= seg.duration - eps:
                return None
            value = seg.steps[0][1]
            for ts, cur in seg.steps:
                if ts <= elapsed + eps:
                    value = cur
            return value
        if seg.duration is not None and elapsed >= seg.duration - eps:
            return None
        if isinstance(seg, ConstantCurrent):
            if seg.v_limit is not None:
                if seg.current < 0 and min(v) <= seg.v_limit:
                    return None
                if seg.current > 0 and max(v) >= seg.v_limit:
                    return None
            return seg.current
        # ConstantVoltage
        i = cv_charge_current(seg.v_cell, v, seg.current_limit, seg.gain)
        self.low_count = self.low_count + 1 if i <= seg.cutoff_current else 0
        if self.low_count >= _CV_CUTOFF_STEPS:
            return None
        return i


# --------------------------------------------------------------------------
# scenario / results
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Scenario:
    cells: tuple[CellParams, ...]
    initial_soc: tuple[float, ...]
    profile: tuple[Segment, ...] = ()
    dt: float = 0.5
    duration: float = 3600.0
    seed: int = 0
    name: str = "scenario"

    @property
    def n(self) -> int:
        return len(self.cells)

    @classmethod
    def from_voltages(cls, cells: Sequence[CellParams], voltages: Sequence[float], **kw) -> "Scenario":
        """Start from rested terminal voltages, inverted through each OCV curve."""
        if len(cells) != len(voltages):
            raise ValueError("one initial voltage per cell required")
        socs = tuple(p.soc_for_ocv(v) for p, v in zip(cells, voltages))
        return cls(cells=tuple(cells), initial_soc=socs, **kw)

    def validate(self, config: EqualizerConfig | None = None) -> None:
        if self.n < 2:
            raise ValueError("scenario needs at least 2 cells")
        if len(self.initial_soc) != self.n:
            raise ValueError("one initial soc per cell required")
        if any(not 0 <= s <= 1 for s in self.initial_soc):
            raise ValueError("initial soc must lie in [0, 1]")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.duration > 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if config is not None:
            limit = min(config.time_gap, config.delta_t) / 10.0
            if self.dt > limit + 1e-12:
                raise ValueError(
                    f"dt={self.dt} s is too coarse for the controller, must be <= {limit} s"
                )
        for i, seg in enumerate(self.profile):
            _validate_segment(seg, i)


@dataclass
class Telemetry:
    n: int
    switch_names: list[str]
    t: np.ndarray
    v: np.ndarray  # (rows, n) measured terminal voltages
    soc: np.ndarray  # (rows, n) soc at the sample instant
    i_cell: np.ndarray  # (rows, n) current applied over the following step
    i_stack: np.ndarray
    src: np.ndarray  # 1-based, 0 when no pair is selected
    sink: np.ndarray
    i_src: np.ndarray
    i_sink: np.ndarray
    p_loss: np.ndarray
    converter_on: np.ndarray
    phase: list[str]
    vc1: np.ndarray  # nan when no pair is selected
    vc2: np.ndarray
    transitions: np.ndarray  # (rows, n_switches) cumulative
    off_time: np.ndarray  # seconds since the converter was last on
    round_started: np.ndarray
    dt: float
    early_stop: str | None = None
    clamp_events: list[tuple[float, int]] = field(default_factory=list)
    segment_starts: list[tuple[float, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class Summary:
    convergence_time: float | None
    max_switch_transitions: int
    total_transitions: int
    switch_transitions: dict[str, int]
    energy_out_J: float  # drawn from source cells
    energy_in_J: float  # delivered to sink cells
    energy_lost_J: float
    final_spread: float
    rounds: int
    first_convergence_time: float | None
    reactivations: int
    max_settled_spread_after_convergence: float | None
    duration: float
    early_stop: str | None = None
    # settled out-of-band samples after first convergence that the controller
    # left alone (did not start a round on)
    unhandled_excursions: int = 0

    def as_dict(self) -> dict:
        return {
            "convergence_time_s": self.convergence_time,
            "first_convergence_time_s": self.first_convergence_time,
            "max_switch_transitions": self.max_switch_transitions,
            "total_transitions": self.total_transitions,
            "switch_transitions": dict(self.switch_transitions),
            "energy_out_J": self.energy_out_J,
            "energy_in_J": self.energy_in_J,
            "energy_lost_J": self.energy_lost_J,
            "final_spread_V": self.final_spread,
            "rounds": self.rounds,
            "reactivations": self.reactivations,
            "max_settled_spread_after_convergence_V": self.max_settled_spread_after_convergence,
            "duration_s": self.duration,
            "early_stop": self.early_stop,
            "unhandled_excursions": self.unhandled_excursions,
        }


# --------------------------------------------------------------------------
# engine
# --------------------------------------------------------------------------
class _Stack:
    """Array form of the cell model. Same update as ``step_cell`` per cell."""

    def __init__(self, cells: Sequence[CellParams], soc: Sequence[float], dt: float):
        self.cells = list(cells)
        self.soc = np.array(soc, dtype=float)
        self.v_rc = np.zeros(len(cells))
        self.cap_as = np.array([3600.0 * p.capacity for p in cells])
        self.r0 = np.array([p.r0 for p in cells])
        self.r1 = np.array([p.r1 for p in cells])
        self.decay = np.array([math.exp(-dt / p.tau) for p in cells])
        self.dt = dt
        groups: dict[tuple, list[int]] = {}
        for j, p in enumerate(cells):
            groups.setdefault(p.ocv_curve, []).append(j)
        self._groups = [
            (np.array(idx), np.array([s for s, _ in curve]), np.array([v for _, v in curve]))
            for curve, idx in groups.items()
        ]

    def ocv(self) -> np.ndarray:
        out = np.empty_like(self.soc)
        for idx, xs, ys in self._groups:
            out[idx] = np.interp(self.soc[idx], xs, ys)
        return out

    def terminal(self, i: np.ndarray) -> np.ndarray:
        return self.ocv() + i * self.r0 + self.v_rc

    def step(self, i: np.ndarray) -> np.ndarray:
        soc = self.soc + i * self.dt / self.cap_as
        clamped = (soc < 0.0) | (soc > 1.0)
        self.soc = np.clip(soc, 0.0, 1.0)
        self.v_rc = self.v_rc * self.decay + i * self.r1 * (1.0 - self.decay)
        return clamped

    def states(self) -> list[CellState]:
        return [CellState(float(s), float(v)) for s, v in zip(self.soc, self.v_rc)]


def run(
    scenario: Scenario,
    config: EqualizerConfig | None = None,
    converter: ConverterParams | None = None,
    stop_on_clamp: bool = True,
) -> tuple[Telemetry, Summary]:
    config = config or EqualizerConfig()
    converter = converter or ConverterParams(i_eq=config.i_eq)
    if not math.isclose(config.i_eq, converter.i_eq, rel_tol=1e-12):
        raise ValueError(
            f"equalizer i_eq={config.i_eq} A disagrees with converter i_eq={converter.i_eq} A"
        )
    scenario.validate(config)

    n, dt = scenario.n, scenario.dt
    rows = int(math.ceil(scenario.duration / dt - 1e-9))
    names = switch_names(n)
    stack = _Stack(scenario.cells, scenario.initial_soc, dt)
    profile = _ProfileRunner(scenario.profile)
    ctrl = ControllerState(n=n)
    counter = TransitionCounter(names)

    t_arr = np.arange(rows) * dt
    v_arr = np.empty((rows, n))
    soc_arr = np.empty((rows, n))
    icell_arr = np.empty((rows, n))
    istack_arr = np.empty(rows)
    src_arr = np.zeros(rows, dtype=int)
    sink_arr = np.zeros(rows, dtype=int)
    isrc_arr = np.zeros(rows)
    isink_arr = np.zeros(rows)
    ploss_arr = np.zeros(rows)
    on_arr = np.zeros(rows, dtype=bool)
    vc1_arr = np.full(rows, np.nan)
    vc2_arr = np.full(rows, np.nan)
    trans_arr = np.empty((rows, len(names)), dtype=int)
    off_arr = np.empty(rows)
    started_arr = np.zeros(rows, dtype=bool)
    phases: list[str] = []

    i_prev = np.zeros(n)
    off_time = math.inf
    clamp_events: list[tuple[float, int]] = []
    early_stop = None
    prev_switches = ctrl.switches
    last = rows

    for r in range(rows):
        t = t_arr[r]
        v_meas = stack.terminal(i_prev)
        v_list = v_meas.tolist()
        i_stack = profile.current(t, v_list)
        ctrl, cmd = controller_step(ctrl, v_list, config, dt)
        if cmd.switches != prev_switches:
            counter.add(prev_switches, cmd.switches)
            prev_switches = cmd.switches

        i_cells = np.full(n, i_stack)
        if cmd.source is not None:
            k, l = ordered_pair(cmd.source, cmd.sink)
            vc1_arr[r], vc2_arr[r] = capacitor_voltages(k, l, v_list)
            src_arr[r], sink_arr[r] = cmd.source, cmd.sink
        if cmd.converter_on:
            res = transfer(v_list[cmd.source - 1], v_list[cmd.sink - 1], converter)
            i_cells[cmd.source - 1] -= res.i_src
            i_cells[cmd.sink - 1] += res.i_sink
            isrc_arr[r], isink_arr[r], ploss_arr[r] = res.i_src, res.i_sink, res.p_loss
            off_time = 0.0
        on_arr[r] = cmd.converter_on

        v_arr[r] = v_meas
        soc_arr[r] = stack.soc
        icell_arr[r] = i_cells
        istack_arr[r] = i_stack
        phases.append(ctrl.phase.value)
        trans_arr[r] = [counter.counts[name] for name in names]
        off_arr[r] = off_time
        started_arr[r] = cmd.round_started

        clamped = stack.step(i_cells)
        i_prev = i_cells
        if not cmd.converter_on:
            off_time += dt
        if clamped.any():
            for j in np.flatnonzero(clamped):
                clamp_events.append((float(t + dt), int(j) + 1))
                logger.warning("cell %d soc clamped at t=%.1f s", j + 1, t + dt)
            if stop_on_clamp:
                early_stop = "soc_exhausted"
                last = r + 1
                break

    sl = slice(0, last)
    tel = Telemetry(
        n=n,
        switch_names=names,
        t=t_arr[sl],
        v=v_arr[sl],
        soc=soc_arr[sl],
        i_cell=icell_arr[sl],
        i_stack=istack_arr[sl],
        src=src_arr[sl],
        sink=sink_arr[sl],
        i_src=isrc_arr[sl],
        i_sink=isink_arr[sl],
        p_loss=ploss_arr[sl],
        converter_on=on_arr[sl],
        phase=phases[:last],
        vc1=vc1_arr[sl],
        vc2=vc2_arr[sl],
        transitions=trans_arr[sl],
        off_time=off_arr[sl],
        round_started=started_arr[sl],
        dt=dt,
        early_stop=early_stop,
        clamp_events=clamp_events,
        segment_starts=list(profile.transitions),
    )
    return tel, summarize(tel, config)


def settled_mask(tel: Telemetry, config: EqualizerConfig) -> np.ndarray:
    """Samples taken after the converter has been off for at least ``time_gap``."""
    return tel.off_time >= config.time_gap - 1e-9


def in_band_mask(tel: Telemetry, config: EqualizerConfig) -> np.ndarray:
    dev = np.abs(tel.v - tel.v.mean(axis=1, keepdims=True))
    return np.all(dev <= config.v_tol, axis=1)


def summarize(tel: Telemetry, config: EqualizerConfig) -> Summary:
    rows = len(tel)
    settled = settled_mask(tel, config)
    ok = in_band_mask(tel, config)

    convergence = None
    if rows:
        bad = np.flatnonzero(settled & ~ok)
        after = bad[-1] + 1 if bad.size else 0
        good = np.flatnonzero(settled[after:] & ok[after:])
        if good.size:
            convergence = float(tel.t[after + good[0]])

    first = np.flatnonzero(settled & ok)
    first_conv = float(tel.t[first[0]]) if first.size else None
    reactivations = 0
    max_spread_after = None
    unhandled = 0
    if first.size:
        start = first[0]
        reactivations = int(tel.round_started[start:].sum())
        unhandled = int(np.sum(settled[start:] & ~ok[start:] & ~tel.round_started[start:]))
        sm = settled[start:]
        if sm.any():
            spread = np.ptp(tel.v[start:][sm], axis=1)
            max_spread_after = float(spread.max())

    dt = tel.dt
    src_idx = np.flatnonzero(tel.converter_on)
    v_src = tel.v[src_idx, tel.src[src_idx] - 1]
    v_sink = tel.v[src_idx, tel.sink[src_idx] - 1]
    e_out = float(np.sum(v_src * tel.i_src[src_idx]) * dt)
    e_in = float(np.sum(v_sink * tel.i_sink[src_idx]) * dt)
    e_loss = float(np.sum(tel.p_loss[src_idx]) * dt)

    final = tel.transitions[-1] if rows else np.zeros(len(tel.switch_names), dtype=int)
    per_switch = {name: int(c) for name, c in zip(tel.switch_names, final)}
    return Summary(
        convergence_time=convergence,
        max_switch_transitions=int(final.max()) if final.size else 0,
        total_transitions=int(final.sum()),
        switch_transitions=per_switch,
        energy_out_J=e_out,
        energy_in_J=e_in,
        energy_lost_J=e_loss,
        final_spread=float(np.ptp(tel.v[-1])) if rows else 0.0,
        rounds=int(tel.round_started.sum()),
        first_convergence_time=first_conv,
        reactivations=reactivations,
        max_settled_spread_after_convergence=max_spread_after,
        duration=float(tel.t[-1] + dt) if rows else 0.0,
        early_stop=tel.early_stop,
        unhandled_excursions=unhandled,
    )
