"""Averaged charge-transfer model of the level-shifted Cuk converter."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

# Peak (92.9 %) and rated-power (90.1 % at 2 W) points are fixed; the peak
# location and the light-load point are approximate.
DEFAULT_EFF_CURVE = ((0.2, 0.905), (0.9, 0.929), (2.0, 0.901))


@dataclass(frozen=True)
class ConverterParams:
    i_eq: float = 0.5  # A, regulated source-port current
    rated_power: float = 2.0  # W
    eff_curve: tuple[tuple[float, float], ...] = DEFAULT_EFF_CURVE

    def __post_init__(self):
        curve = tuple((float(p), float(e)) for p, e in self.eff_curve)
        object.__setattr__(self, "eff_curve", curve)
        if not self.i_eq > 0:
            raise ValueError(f"i_eq must be > 0, got {self.i_eq}")
        if not self.rated_power > 0:
            raise ValueError(f"rated_power must be > 0, got {self.rated_power}")
        if not curve:
            raise ValueError("eff_curve needs at least one point")
        powers = [p for p, _ in curve]
        if any(b <= a for a, b in zip(powers, powers[1:])):
            raise ValueError("eff_curve powers must be strictly increasing")
        if any(not 0 < e <= 1 for _, e in curve):
            raise ValueError("eff_curve efficiencies must lie in (0, 1]")


@dataclass(frozen=True)
class TransferResult:
    i_src: float
    i_sink: float
    p_loss: float
    efficiency: float
    iterations: int = 0
    converged: bool = True


class ConvergenceError(RuntimeError):
    pass


def capacitor_voltages(k: int, l: int, cell_voltages: Sequence[float]) -> tuple[float, float]:
    """Blocking-capacitor voltages for cell ``k`` on port 1 and ``l`` on port 2.

    ``cell_voltages[0]`` is cell 1. C1 carries cells l..k, C2 cells l+1..k-1.
    """
    n = len(cell_voltages)
    if not (1 <= l < k <= n):
        raise ValueError(f"expected 1 <= l < k <= n, got k={k}, l={l}, n={n}")
    v_c1 = float(sum(cell_voltages[l - 1 : k]))
    v_c2 = float(sum(cell_voltages[l : k - 1]))
    return v_c1, v_c2


def efficiency(p_out: float, params: ConverterParams) -> float:
    if p_out < 0:
        raise ValueError(f"output power must be >= 0, got {p_out}")
    powers = [p for p, _ in params.eff_curve]
    effs = [e for _, e in params.eff_curve]
    return float(np.interp(p_out, powers, effs))


def transfer(
    v_src: float,
    v_sink: float,
    params: ConverterParams,
    max_iter: int = 50,
    tol: float = 1e-9,
    strict: bool = False,
) -> TransferResult:
    """Source-regulated transfer between two cells.

    The source delivers ``i_eq``; the efficiency is looked up at the output
    power, which itself depends on the efficiency, so the operating point is
    found by fixed-point iteration on the output power.
    """
    if not (v_src > 0 and v_sink > 0):
        raise ValueError(f"cell voltages must be positive, got {v_src}, {v_sink}")
    p_in = v_src * params.i_eq
    eta = efficiency(p_in, params)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nxt = efficiency(eta * p_in, params)
        step = abs(nxt - eta) * p_in
        eta = nxt
        if step < tol:
            converged = True
            break
    if not converged:
        if strict:
            raise ConvergenceError(f"efficiency fixed point did not converge in {max_iter} iterations")
        logger.warning("efficiency fixed point did not converge (p_in=%.4g W)", p_in)
    return TransferResult(
        i_src=params.i_eq,
        i_sink=eta * p_in / v_sink,
        p_loss=(1.0 - eta) * p_in,
        efficiency=eta,
        iterations=it,
        converged=converged,
    )


def converter_enabled(voltages: Sequence[float], v_tol: float) -> bool:
    """True when any cell sits outside ``mean +/- v_tol``."""
    if len(voltages) < 2:
        raise ValueError("need at least 2 cell voltages")
    if v_tol < 0:
        raise ValueError(f"v_tol must be >= 0, got {v_tol}")
    v = np.asarray(voltages, dtype=float)
    return bool(np.any(np.abs(v - v.mean()) > v_tol))
