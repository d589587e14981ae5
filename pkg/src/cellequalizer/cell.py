"""Thevenin (one RC branch) cell model with coulomb counting.

Sign convention: charging current is positive everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CellParams:
    capacity: float  # Ah
    r0: float  # ohm
    r1: float  # ohm
    c1: float  # F
    ocv_curve: tuple[tuple[float, float], ...]  # (soc, volts)
    _soc: np.ndarray = field(init=False, repr=False, compare=False)
    _volts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        curve = tuple((float(s), float(v)) for s, v in self.ocv_curve)
        object.__setattr__(self, "ocv_curve", curve)
        if not self.capacity > 0:
            raise ValueError(f"capacity must be > 0, got {self.capacity}")
        if self.r0 < 0:
            raise ValueError(f"r0 must be >= 0, got {self.r0}")
        if not self.r1 > 0:
            raise ValueError(f"r1 must be > 0, got {self.r1}")
        if not self.c1 > 0:
            raise ValueError(f"c1 must be > 0, got {self.c1}")
        if len(curve) < 2:
            raise ValueError("ocv_curve needs at least 2 points")
        socs = np.array([p[0] for p in curve])
        volts = np.array([p[1] for p in curve])
        if np.any(np.diff(socs) <= 0):
            raise ValueError("ocv_curve soc values must be strictly increasing")
        if np.any(np.diff(volts) < 0):
            raise ValueError("ocv_curve voltages must be non-decreasing")
        object.__setattr__(self, "_soc", socs)
        object.__setattr__(self, "_volts", volts)

    @property
    def tau(self) -> float:
        return self.r1 * self.c1

    def soc_for_ocv(self, volts: float) -> float:
        """Invert the OCV curve. Flat stretches resolve to their lowest soc."""
        lo, hi = self._volts[0], self._volts[-1]
        if not lo <= volts <= hi:
            raise ValueError(f"{volts} V is outside the OCV curve range [{lo}, {hi}] V")
        idx = int(np.searchsorted(self._volts, volts, side="left"))
        if idx == 0:
            return float(self._soc[0])
        v0, v1 = self._volts[idx - 1], self._volts[idx]
        s0, s1 = self._soc[idx - 1], self._soc[idx]
        return float(s0 + (volts - v0) * (s1 - s0) / (v1 - v0))


@dataclass(frozen=True)
class CellState:
    soc: float
    v_rc: float = 0.0


# Reference 3.6 V / 2.6 Ah cell. Impedances are calibration values, not
# measured data. OCV is linear 3.4 -> 3.8 V over soc 0.2 -> 0.9, with steeper
# tails so that voltage-limited charge/discharge segments can terminate.
DEFAULT_OCV_CURVE = ((0.0, 3.0), (0.2, 3.4), (0.9, 3.8), (1.0, 4.1))


def default_cell_params(**overrides) -> CellParams:
    tau = overrides.pop("tau", 15.0)
    kwargs = dict(capacity=2.6, r0=0.060, r1=0.030, ocv_curve=DEFAULT_OCV_CURVE)
    kwargs.update(overrides)
    kwargs.setdefault("c1", tau / kwargs["r1"])
    return CellParams(**kwargs)


def ocv(params: CellParams, soc: float) -> float:
    """Piecewise-linear OCV lookup, flat beyond the curve endpoints."""
    return float(np.interp(soc, params._soc, params._volts))


def terminal_voltage(state: CellState, params: CellParams, i: float) -> float:
    return ocv(params, state.soc) + i * params.r0 + state.v_rc


def step_cell(
    state: CellState, params: CellParams, i: float, dt: float
) -> tuple[CellState, bool]:
    """Advance one step of constant current ``i`` for ``dt`` seconds.

    Returns the new state and whether soc had to be clamped to [0, 1].
    The RC update is the exact zero-order-hold solution, so it does not
    depend on how a constant-current interval is split into steps.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    soc = state.soc + i * dt / (3600.0 * params.capacity)
    clamped = soc < 0.0 or soc > 1.0
    soc = min(1.0, max(0.0, soc))
    decay = math.exp(-dt / params.tau)
    v_rc = state.v_rc * decay + i * params.r1 * (1.0 - decay)
    return CellState(soc=soc, v_rc=v_rc), clamped
