"""Reference scenarios for the 8-cell, 2.6 Ah stack."""

from __future__ import annotations

import numpy as np

from .cell import CellParams, default_cell_params
from .sim import ConstantCurrent, ConstantVoltage, Rest, Scenario, StepSchedule

CAPACITY_AH = 2.6
HALF_C = 0.5 * CAPACITY_AH  # 1.3 A

# 200 mV spread; cell 7 highest and cell 2 lowest.
REST_VOLTAGES = (3.58, 3.50, 3.62, 3.55, 3.66, 3.60, 3.70, 3.64)
# 160 mV spread near the top of the charge.
CYCLE_VOLTAGES = (3.70, 3.78, 3.66, 3.74, 3.62, 3.72, 3.68, 3.76)
# near 80 % SOC so the stepped discharge stays above the lower knee
LOAD_VOLTAGES = (3.74, 3.71, 3.76, 3.73, 3.72, 3.75, 3.73, 3.74)


def spread_cells(
    n: int,
    seed: int,
    capacity_spread: float = 0.0,
    r0_spread: float = 0.0,
    base: CellParams | None = None,
) -> list[CellParams]:
    """Cells with seeded relative scatter on capacity and series resistance."""
    base = base or default_cell_params()
    rng = np.random.default_rng(seed)
    cap = base.capacity * (1.0 + capacity_spread * rng.standard_normal(n))
    r0 = base.r0 * (1.0 + r0_spread * rng.standard_normal(n))
    return [
        CellParams(capacity=float(c), r0=float(max(r, 0.0)), r1=base.r1, c1=base.c1, ocv_curve=base.ocv_curve)
        for c, r in zip(cap, r0)
    ]


def rest_scenario(duration: float = 8 * 3600.0, dt: float = 0.5) -> Scenario:
    cells = [default_cell_params()] * len(REST_VOLTAGES)
    return Scenario.from_voltages(
        cells, REST_VOLTAGES, profile=(Rest(duration),), dt=dt, duration=duration, name="rest"
    )


def cycle_scenario(seed: int = 7, dt: float = 0.5) -> Scenario:
    """0.5 C discharge to 3 V, 0.5 C charge to 4 V, CV at 4 V, 0.5 C discharge."""
    cells = spread_cells(len(CYCLE_VOLTAGES), seed, capacity_spread=0.02, r0_spread=0.10)
    profile = (
        ConstantCurrent(-HALF_C, v_limit=3.0),
        Rest(600.0),
        ConstantCurrent(HALF_C, v_limit=4.0),
        ConstantVoltage(4.0, current_limit=HALF_C, cutoff_current=0.1 * HALF_C, gain=1.0),
        Rest(600.0),
        ConstantCurrent(-HALF_C, duration=3600.0, v_limit=3.0),
    )
    duration = 6.0 * 3600.0
    return Scenario.from_voltages(
        cells, CYCLE_VOLTAGES, profile=profile, dt=dt, duration=duration, seed=seed, name="cycle"
    )


def load_step_scenario(seed: int = 11, dt: float = 0.5) -> Scenario:
    """Stepped discharge load with rests in between."""
    cells = spread_cells(len(LOAD_VOLTAGES), seed, capacity_spread=0.02, r0_spread=0.10)
    steps = (
        (0.0, 0.0),
        (600.0, -0.5),
        (1500.0, -1.3),
        (2400.0, -0.8),
        (3300.0, -2.0),
        (3900.0, 0.0),
        (4500.0, -1.0),
    )
    profile = (StepSchedule(steps, duration=5400.0),)
    return Scenario.from_voltages(
        cells, LOAD_VOLTAGES, profile=profile, dt=dt, duration=5400.0, seed=seed, name="load_steps"
    )
