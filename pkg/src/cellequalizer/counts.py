"""Closed-form component counts for the compared equalizer topologies.

Rows ``transformer_1sw``, ``transformer_2sw``, ``soft_switched`` and
``bipolar_rail`` are the low-frequency selective cell-to-cell equalizers; the
remaining rows are other equalizer classes. Counts are functions
of the cell count ``n``. ``None`` marks a value that was not reported.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable


@dataclass(frozen=True)
class ComponentCounts:
    topology: str
    impl: str
    n: int
    selection_mosfet: int
    selection_dpdt: int
    selection_spst: int
    converter_mosfet: int
    capacitor: int
    inductor: int
    transformer: float  # dual_active_bridge uses n/2 transformers
    diode: int
    hf_drivers: int | None
    lf_drivers: int | None
    efficiency: tuple[float, float] | None  # percent, (min, max)
    transformer_windings: int | None = None
    family: str = "lfsscc"

    @property
    def selection_switches(self) -> int:
        return self.selection_mosfet + self.selection_dpdt + self.selection_spst

    @property
    def total_mosfet(self) -> int:
        return self.selection_mosfet + self.converter_mosfet

    def as_dict(self) -> dict:
        return asdict(self)


def _lfsscc(name, conv_mosfet, cap, ind, trans, diode, eff, sel_mosfet, sel_dpdt, sel_spst):
    def build(impl: str, n: int) -> ComponentCounts:
        if impl == "mosfet":
            sel = (sel_mosfet(n), 0, 0)
        else:
            sel = (0, sel_dpdt(n), sel_spst(n))
        return ComponentCounts(
            topology=name,
            impl=impl,
            n=n,
            selection_mosfet=sel[0],
            selection_dpdt=sel[1],
            selection_spst=sel[2],
            converter_mosfet=conv_mosfet,
            capacitor=cap,
            inductor=ind,
            transformer=trans,
            diode=diode,
            hf_drivers=None,
            lf_drivers=None,
            efficiency=eff,
        )

    return build


def _two_n(n):
    return 2 * n


def _eight_n(n):
    return 8 * n


def _zero(n):
    return 0


_LFSSCC: dict[str, Callable[[str, int], ComponentCounts]] = {
    "transformer_1sw": _lfsscc("transformer_1sw", 1, 2, 0, 1, 1, (59.4, 59.4), _eight_n, _two_n, _zero),
    "transformer_2sw": _lfsscc("transformer_2sw", 2, 2, 0, 1, 2, (85.3, 89.5), _eight_n, _two_n, _zero),
    "soft_switched": _lfsscc("soft_switched", 5, 2, 2, 0, 5, (98.6, 99.5), _eight_n, _two_n, _zero),
    "bipolar_rail": _lfsscc(
        "bipolar_rail", 2, 2, 2, 0, 0, (90.1, 92.9),
        lambda n: 4 * n + 10, lambda n: n + 2, lambda n: 2,
    ),
}


def _other(name, mosfet, diode, cap, ind, trans, hf, lf, eff, windings=None):
    def build(impl: str, n: int) -> ComponentCounts:
        return ComponentCounts(
            topology=name,
            impl=impl,
            n=n,
            selection_mosfet=mosfet(n),
            selection_dpdt=0,
            selection_spst=0,
            converter_mosfet=0,
            capacitor=cap(n),
            inductor=ind(n),
            transformer=trans(n),
            diode=diode,
            hf_drivers=hf(n),
            lf_drivers=lf(n),
            efficiency=eff,
            transformer_windings=None if windings is None else windings(n),
            family="other",
        )

    return build


# Other equalizer classes report semiconductor totals only; they are stored in
# selection_mosfet so that total_mosfet reads the reported total directly.
_OTHER: dict[str, Callable[[str, int], ComponentCounts]] = {
    "adjacent_resonant": _other(
        "adjacent_resonant", lambda n: 2 * n, 0, lambda n: 2 * n - 1, lambda n: n - 1,
        lambda n: 0, lambda n: 2 * n, lambda n: 0, (98.2, 98.2),
    ),
    "multiwinding": _other(
        "multiwinding", lambda n: n + 1, 0, lambda n: n, lambda n: 0, lambda n: 1,
        lambda n: n + 1, lambda n: 0, (84.8, 84.8), windings=lambda n: n + 1,
    ),
    "switched_capacitor": _other(
        "switched_capacitor", lambda n: 2 * n, 0, lambda n: 2 * n, lambda n: 0,
        lambda n: 0, lambda n: 2 * n, lambda n: 0, None,
    ),
    "dual_active_bridge": _other(
        "dual_active_bridge", lambda n: 3 * n, 0, lambda n: n, lambda n: 0, lambda n: n / 2,
        lambda n: 3 * n, lambda n: 0, (84.5, 84.5),
    ),
    "stack_mosfet": _other(
        "stack_mosfet", lambda n: 4 * n + 2, 2, lambda n: 2, lambda n: 0, lambda n: 2,
        lambda n: 2, lambda n: 4 * n, (92.0, 92.0),
    ),
}


def _stack_relay(impl: str, n: int) -> ComponentCounts:
    # relay based cell-to-stack: 2n SPST relays, one converter MOSFET
    return ComponentCounts(
        topology="stack_relay", impl=impl, n=n,
        selection_mosfet=0, selection_dpdt=0, selection_spst=2 * n,
        converter_mosfet=1, capacitor=2, inductor=2, transformer=0, diode=1,
        hf_drivers=1, lf_drivers=2 * n, efficiency=None, family="other",
    )


_OTHER["stack_relay"] = _stack_relay

TOPOLOGIES = tuple(_LFSSCC) + tuple(_OTHER)
IMPLS = ("mosfet", "relay")


def component_counts(topology: str, impl: str, n: int) -> ComponentCounts:
    if n < 2:
        raise ValueError(f"need at least 2 cells, got n={n}")
    if impl not in IMPLS:
        raise ValueError(f"unknown implementation {impl!r}, expected one of {IMPLS}")
    key = topology.lower()
    if key in _LFSSCC:
        c = _LFSSCC[key](impl, n)
        if key == "bipolar_rail":
            # driver counts of the bipolar-rail equalizer (2 high-frequency for the
            # converter, one low-frequency driver per selection device)
            lf = 4 * n + 10 if impl == "mosfet" else n + 2
            c = ComponentCounts(**{**c.as_dict(), "hf_drivers": 2, "lf_drivers": lf})
        return c
    if key in _OTHER:
        return _OTHER[key](impl, n)
    raise ValueError(f"unknown topology {topology!r}, expected one of {TOPOLOGIES}")


def dpdt_ratio(n: int) -> float:
    """Bipolar-rail over full-selection DPDT count for relay realizations."""
    return component_counts("bipolar_rail", "relay", n).selection_dpdt / component_counts(
        "transformer_1sw", "relay", n
    ).selection_dpdt


def comparison_rows(n: int) -> list[ComponentCounts]:
    rows = []
    for t in _LFSSCC:
        rows += [component_counts(t, impl, n) for impl in IMPLS]
    for t in _OTHER:
        rows.append(component_counts(t, "mosfet", n))
    return rows
