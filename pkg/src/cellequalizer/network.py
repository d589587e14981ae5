"""Cell selection networks and their connectivity oracle.

Two networks are modelled:

* the bipolar-rail network: ``n`` cell DPDTs ``S1..Sn``, two polarity
  reversal DPDTs ``POL1``/``POL2`` and two ganged SPSTs ``SHORT_A``/``SHORT_B``;
* the fixed-polarity baseline: two DPDTs per cell, ``A<j>`` (to port 1 rails)
  and ``C<j>`` (to port 2 rails).

Switch commands come from a rule table (:func:`select_pair`). Whether those
commands actually connect the right cells is checked independently by
flattening a :class:`Netlist` into closed conductor edges and taking connected
components (:func:`resolve_connectivity`).

Default bipolar-rail wiring
---------------------------
Stack node ``Nj`` sits above cell ``j``; ``N0`` is the stack negative. Nodes
are split by parity into an odd chain (rails ``X1``/``X2``) and an even chain
(``Y1``/``Y2``). Each chain is a wire running down from its port-1 rail,
broken at every node of that parity by the node's DPDT:

* pole 1: common = chain segment above the node, off-throw = segment below
  (pass-through), on-throw = the node. A closed switch takes the segment
  above and cuts the chain.
* pole 2: common = segment below, on-throw = the port-2 rail of the chain.
  A closed switch therefore hands the rest of the chain to the port-2 rail,
  so the next closed node further down lands on port 2.

``N0`` has no switch. It reaches the port-2 negative through the spare pole
of ``S1`` (on-throw ``N0``, off-throw ``Y2``, common ``Y2G``) and the
``POL2`` throw that selects ``Y2G``. ``S1`` is closed only for ``l <= 2`` and
``POL2`` only for even ``l``, so ``N0`` is live exactly when ``l == 1``.

``POL1``/``POL2`` cross the rail pairs onto the port terminals. The SPST pair
ties ``P1-`` to ``P2+`` through a midpoint for adjacent cells.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from networkx.utils import UnionFind

PORT_TERMINALS = ("P1+", "P1-", "P2+", "P2-")


class NetlistError(ValueError):
    pass


class Polarity(str, enum.Enum):
    CORRECT = "correct"
    REVERSED = "reversed"


# --------------------------------------------------------------------------
# switch states
# --------------------------------------------------------------------------
class _HasSwitches(Protocol):
    def as_dict(self) -> dict[str, bool]: ...


@dataclass(frozen=True)
class SwitchState:
    s: tuple[bool, ...]
    s_pol1: bool = False
    s_pol2: bool = False
    s_short_a: bool = False
    s_short_b: bool = False

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(bool(x) for x in self.s))
        if self.s_short_a != self.s_short_b:
            raise ValueError("SHORT_A and SHORT_B are actuated together")

    @property
    def n(self) -> int:
        return len(self.s)

    @classmethod
    def all_off(cls, n: int) -> "SwitchState":
        return cls(s=(False,) * n)

    def as_dict(self) -> dict[str, bool]:
        d = {f"S{j}": v for j, v in enumerate(self.s, start=1)}
        d.update(
            POL1=self.s_pol1,
            POL2=self.s_pol2,
            SHORT_A=self.s_short_a,
            SHORT_B=self.s_short_b,
        )
        return d

    def closed(self) -> set[str]:
        return {name for name, on in self.as_dict().items() if on}


@dataclass(frozen=True)
class BaselineSwitchState:
    to_port1: tuple[bool, ...]
    to_port2: tuple[bool, ...]

    @property
    def n(self) -> int:
        return len(self.to_port1)

    def as_dict(self) -> dict[str, bool]:
        d = {f"A{j}": v for j, v in enumerate(self.to_port1, start=1)}
        d.update({f"C{j}": v for j, v in enumerate(self.to_port2, start=1)})
        return d

    def closed(self) -> set[str]:
        return {name for name, on in self.as_dict().items() if on}


def switch_names(n: int) -> list[str]:
    """Column order used for transition counters and telemetry."""
    return [f"S{j}" for j in range(1, n + 1)] + ["POL1", "POL2", "SHORT_A", "SHORT_B"]


def _check_pair(k: int, l: int, n: int) -> None:
    if n < 2:
        raise ValueError(f"need at least 2 cells, got n={n}")
    if k == l:
        raise ValueError(f"cannot select cell {k} against itself")
    if not (1 <= l < k <= n):
        raise ValueError(f"expected 1 <= l < k <= n, got k={k}, l={l}, n={n}")


def select_pair(k: int, l: int, n: int) -> SwitchState:
    """Switch commands connecting cell ``k`` to port 1 and cell ``l`` to port 2."""
    _check_pair(k, l, n)
    on = [False] * n
    for j in (k, k - 1, l, l - 1):
        if j >= 1:  # N0 is hard-wired, there is no S0
            on[j - 1] = True
    adjacent = k == l + 1
    return SwitchState(
        s=tuple(on),
        s_pol1=k % 2 == 0,
        s_pol2=l % 2 == 0,
        s_short_a=adjacent,
        s_short_b=adjacent,
    )


def ordered_pair(a: int, b: int) -> tuple[int, int]:
    """(upper, lower) cell indices; the upper cell always lands on port 1."""
    return (a, b) if a > b else (b, a)


def baseline_select_pair(k: int, l: int, n: int) -> BaselineSwitchState:
    _check_pair(k, l, n)
    p1 = [False] * n
    p2 = [False] * n
    p1[k - 1] = True
    p2[l - 1] = True
    return BaselineSwitchState(tuple(p1), tuple(p2))


def transition_count(prev: _HasSwitches, nxt: _HasSwitches) -> dict[str, int]:
    """Per-switch flips between two commanded states (elementwise XOR)."""
    a, b = prev.as_dict(), nxt.as_dict()
    if a.keys() != b.keys():
        raise ValueError("switch states belong to different networks")
    return {name: int(a[name] != b[name]) for name in a}


class TransitionCounter:
    """Accumulates :func:`transition_count` over a run."""

    def __init__(self, names: Iterable[str]):
        self.counts = {name: 0 for name in names}

    def add(self, prev: _HasSwitches, nxt: _HasSwitches) -> dict[str, int]:
        inc = transition_count(prev, nxt)
        for name, v in inc.items():
            self.counts[name] += v
        return inc

    @property
    def max(self) -> int:
        return max(self.counts.values(), default=0)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


# --------------------------------------------------------------------------
# netlists
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Pole:
    common: str
    off: str | None
    on: str | None


@dataclass(frozen=True)
class SwitchElement:
    name: str
    kind: str  # "dpdt" | "spst"
    poles: tuple[Pole, ...]

    def edges(self, on: bool) -> list[tuple[str, str]]:
        out = []
        for p in self.poles:
            throw = p.on if on else p.off
            if throw is not None:
                out.append((p.common, throw))
        return out


@dataclass
class Netlist:
    n: int
    elements: list[SwitchElement] = field(default_factory=list)
    wires: list[tuple[str, str]] = field(default_factory=list)

    def stack_nodes(self) -> list[str]:
        return [f"N{j}" for j in range(self.n + 1)]

    def nodes(self) -> set[str]:
        found = set(self.stack_nodes()) | set(PORT_TERMINALS)
        for a, b in self.wires:
            found.update((a, b))
        for el in self.elements:
            for p in el.poles:
                found.update(x for x in (p.common, p.off, p.on) if x is not None)
        return found

    def element_names(self) -> list[str]:
        return [el.name for el in self.elements]

    def closed_edges(self, state: Mapping[str, bool]) -> list[tuple[str, str]]:
        edges = list(self.wires)
        for el in self.elements:
            edges.extend(el.edges(bool(state[el.name])))
        return edges

    def replace(self, element: SwitchElement) -> "Netlist":
        """Copy with one switch element swapped out (fault injection)."""
        els = [element if el.name == element.name else el for el in self.elements]
        return Netlist(self.n, els, list(self.wires))

    # -- text format ---------------------------------------------------------
    def dumps(self) -> str:
        lines = [f"netlist {self.n}"]
        for a, b in self.wires:
            lines.append(f"wire {a} {b}")
        for el in self.elements:
            parts = [el.kind, el.name]
            if el.kind == "spst":
                parts += [el.poles[0].common, el.poles[0].on]
            else:
                for p in el.poles:
                    parts += [p.common, p.off or "-", p.on or "-"]
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"


def parse_netlist(text: str) -> Netlist:
    """Parse the line-based netlist format.

    ::

        netlist <n>
        wire <node> <node>
        dpdt <name> <common> <off> <on> <common> <off> <on>
        spst <name> <node> <node>

    ``#`` starts a comment; ``-`` marks an unconnected throw.
    """
    netlist: Netlist | None = None
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0].lower()

        def bad(msg: str) -> NetlistError:
            return NetlistError(f"line {lineno}: {msg}: {raw.strip()!r}")

        if head == "netlist":
            if netlist is not None or len(tok) != 2:
                raise bad("expected a single 'netlist <n>' header")
            try:
                n = int(tok[1])
            except ValueError:
                raise bad("cell count must be an integer") from None
            if n < 2:
                raise bad("cell count must be >= 2")
            netlist = Netlist(n)
            continue
        if netlist is None:
            raise bad("'netlist <n>' header must come first")
        if head == "wire":
            if len(tok) != 3:
                raise bad("wire takes two nodes")
            netlist.wires.append((tok[1], tok[2]))
        elif head in ("dpdt", "spst"):
            want = 8 if head == "dpdt" else 4
            if len(tok) != want:
                raise bad(f"{head} takes {want - 1} fields")
            name = tok[1]
            if name in seen:
                raise bad(f"switch {name} defined twice")
            seen.add(name)
            if head == "spst":
                poles = (Pole(tok[2], None, tok[3]),)
            else:
                f = [None if t == "-" else t for t in tok[2:]]
                if f[0] is None or f[3] is None:
                    raise bad("pole commons cannot be '-'")
                poles = (Pole(f[0], f[1], f[2]), Pole(f[3], f[4], f[5]))
            netlist.elements.append(SwitchElement(name, head, poles))
        else:
            raise bad(f"unknown record {tok[0]!r}")
    if netlist is None:
        raise NetlistError("empty netlist")
    return netlist


def load_netlist(path: str | Path) -> Netlist:
    return parse_netlist(Path(path).read_text())


def _chain_segments(n: int, parity: int) -> dict[int, tuple[str, str]]:
    """(segment above, segment below) for every switched node of one parity."""
    rail = "X1" if parity == 1 else "Y1"
    tag = "XC" if parity == 1 else "YC"
    nodes = [j for j in range(n, 0, -1) if j % 2 == parity]
    out = {}
    above = rail
    for j in nodes:
        below = f"{tag}{j}"
        out[j] = (above, below)
        above = below
    return out


def default_netlist(n: int) -> Netlist:
    if n < 2:
        raise ValueError(f"need at least 2 cells, got n={n}")
    segs = {**_chain_segments(n, 1), **_chain_segments(n, 0)}
    elements = []
    for j in range(1, n + 1):
        above, below = segs[j]
        tap = Pole(above, below, f"N{j}")
        if j == 1:
            feed = Pole("Y2G", "Y2", "N0")
        else:
            feed = Pole(below, None, "X2" if j % 2 else "Y2")
        elements.append(SwitchElement(f"S{j}", "dpdt", (tap, feed)))
    elements += [
        SwitchElement("POL1", "dpdt", (Pole("P1+", "X1", "Y1"), Pole("P1-", "Y1", "X1"))),
        SwitchElement("POL2", "dpdt", (Pole("P2+", "X2", "Y2"), Pole("P2-", "Y2G", "X2"))),
        SwitchElement("SHORT_A", "spst", (Pole("P1-", None, "SM"),)),
        SwitchElement("SHORT_B", "spst", (Pole("SM", None, "P2+"),)),
    ]
    return Netlist(n, elements)


def baseline_netlist(n: int) -> Netlist:
    if n < 2:
        raise ValueError(f"need at least 2 cells, got n={n}")
    elements = []
    for port, tag in ((1, "A"), (2, "C")):
        for j in range(1, n + 1):
            poles = (Pole(f"N{j}", None, f"P{port}+"), Pole(f"N{j - 1}", None, f"P{port}-"))
            elements.append(SwitchElement(f"{tag}{j}", "dpdt", poles))
    return Netlist(n, elements)


# --------------------------------------------------------------------------
# connectivity
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Fault:
    kind: str  # cell_short | multi_cell_path | floating_port | port_short
    detail: str


@dataclass(frozen=True)
class PortConnection:
    port1: tuple[int, Polarity] | None
    port2: tuple[int, Polarity] | None
    faults: tuple[Fault, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.faults


def resolve_connectivity(netlist: Netlist, state: _HasSwitches, n: int | None = None) -> PortConnection:
    """Union all closed edges and read off what each converter port sees."""
    n = netlist.n if n is None else n
    if n != netlist.n:
        raise NetlistError(f"netlist is for n={netlist.n}, asked to resolve n={n}")
    sw = state.as_dict()
    if set(sw) != set(netlist.element_names()):
        missing = sorted(set(sw) - set(netlist.element_names()))
        extra = sorted(set(netlist.element_names()) - set(sw))
        raise NetlistError(f"netlist/switch mismatch: missing {missing}, unknown {extra}")

    uf = UnionFind(netlist.nodes())
    for a, b in netlist.closed_edges(sw):
        uf.union(a, b)

    stack = {f"N{j}": j for j in range(n + 1)}
    members: dict[str, list[int]] = {}
    for name, j in stack.items():
        members.setdefault(uf[name], []).append(j)

    faults: list[Fault] = []
    for nodes in members.values():
        if len(nodes) > 1:
            nodes = sorted(nodes)
            if len(nodes) == 2 and nodes[1] - nodes[0] == 1:
                faults.append(Fault("cell_short", f"cell {nodes[1]} terminals joined"))
            else:
                joined = ", ".join(f"N{j}" for j in nodes)
                faults.append(Fault("multi_cell_path", f"nodes {joined} joined"))

    ports = []
    for p in (1, 2):
        plus, minus = uf[f"P{p}+"], uf[f"P{p}-"]
        if plus == minus:
            faults.append(Fault("port_short", f"port {p} terminals joined"))
            ports.append(None)
            continue
        hi, lo = members.get(plus, []), members.get(minus, [])
        if not hi or not lo:
            faults.append(Fault("floating_port", f"port {p} has an open terminal"))
            ports.append(None)
            continue
        if len(hi) != 1 or len(lo) != 1:
            ports.append(None)  # already reported as multi_cell_path
            continue
        a, b = hi[0], lo[0]
        if abs(a - b) != 1:
            faults.append(Fault("multi_cell_path", f"port {p} spans N{min(a, b)}-N{max(a, b)}"))
            ports.append(None)
            continue
        ports.append((max(a, b), Polarity.CORRECT if a > b else Polarity.REVERSED))
    return PortConnection(ports[0], ports[1], tuple(faults))


@dataclass(frozen=True)
class Violation:
    k: int
    l: int
    got: PortConnection

    def describe(self) -> str:
        def fmt(p):
            return "open" if p is None else f"cell {p[0]} ({p[1].value})"

        parts = [f"port1={fmt(self.got.port1)}", f"port2={fmt(self.got.port2)}"]
        parts += [f"{f.kind}: {f.detail}" for f in self.got.faults]
        return f"(k={self.k}, l={self.l}) " + "; ".join(parts)


@dataclass(frozen=True)
class VerifyReport:
    n: int
    pairs: int
    violations: tuple[Violation, ...]
    rows: tuple[tuple[int, int, PortConnection], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return f"n={self.n} pairs={self.pairs} violations={len(self.violations)}"


def verify_network(n: int, netlist: Netlist | None = None, baseline: bool = False) -> VerifyReport:
    """Exhaustively check every unordered cell pair against the port contract."""
    if n < 2:
        raise ValueError(f"need at least 2 cells, got n={n}")
    if netlist is None:
        netlist = baseline_netlist(n) if baseline else default_netlist(n)
    select = baseline_select_pair if baseline else select_pair
    violations = []
    rows = []
    for k in range(2, n + 1):
        for l in range(1, k):
            got = resolve_connectivity(netlist, select(k, l, n), n)
            rows.append((k, l, got))
            expected = ((k, Polarity.CORRECT), (l, Polarity.CORRECT))
            if got.faults or (got.port1, got.port2) != expected:
                violations.append(Violation(k, l, got))
    return VerifyReport(n, len(rows), tuple(violations), tuple(rows))
