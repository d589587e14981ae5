"""Command-line front end.

Exit codes: 0 success, 1 invalid input (config, netlist, arguments),
2 network verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from .config import ConfigError, expand_grid, parse_config, read_document
from .counts import comparison_rows, dpdt_ratio
from .network import NetlistError, load_netlist, verify_network
from .output import dumps_json, summary_document, write_summary, write_telemetry
from .sim import run

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_VERIFY_FAILED = 2
OUT_ENV = "CELLEQUALIZER_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are input errors, not verification failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "out")


def _meta(cfg) -> dict:
    sc = cfg.scenario
    return {"scenario": sc.name, "n": sc.n, "seed": sc.seed, "dt_s": sc.dt}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_simulate(config_path: str, out_dir: str | None = None) -> int:
    cfg = parse_config(read_document(config_path))
    out = _out_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tel, summary = run(cfg.scenario, cfg.equalizer, cfg.converter, stop_on_clamp=cfg.stop_on_clamp)
    write_telemetry(tel, out / "telemetry.csv")
    write_summary(summary, out / "summary.json", **_meta(cfg))
    conv = summary.convergence_time
    print(
        f"{cfg.scenario.name}: rounds={summary.rounds} "
        f"max_transitions={summary.max_switch_transitions} "
        f"convergence_time={'none' if conv is None else f'{conv:.1f} s'} "
        f"final_spread={summary.final_spread * 1e3:.2f} mV"
    )
    if summary.early_stop:
        print(f"warning: run stopped early ({summary.early_stop})", file=sys.stderr)
    return EXIT_OK


def cmd_verify_network(n: int | None, netlist_path: str | None = None, verbose: bool = False) -> int:
    netlist = None
    if netlist_path is not None:
        netlist = load_netlist(netlist_path)
        if n is None:
            n = netlist.n
        elif n != netlist.n:
            raise NetlistError(f"{netlist_path}: netlist is for n={netlist.n}, --n is {n}")
    if n is None:
        raise ValueError("--n is required without --netlist")
    if n < 2:
        raise ValueError(f"--n must be >= 2, got {n}")
    report = verify_network(n, netlist)
    if verbose:
        failed = {(v.k, v.l) for v in report.violations}
        print(f"{'k':>4} {'l':>4}  {'port1':<16} {'port2':<16} status")
        for k, l, got in report.rows:
            p1 = "open" if got.port1 is None else f"cell {got.port1[0]} {got.port1[1].value}"
            p2 = "open" if got.port2 is None else f"cell {got.port2[0]} {got.port2[1].value}"
            status = "VIOLATION" if (k, l) in failed else "ok"
            print(f"{k:>4} {l:>4}  {p1:<16} {p2:<16} {status}")
    for v in report.violations:
        print(f"violation {v.describe()}")
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_VERIFY_FAILED


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:g}"
    if isinstance(value, tuple):
        lo, hi = value
        return f"{lo:g}" if lo == hi else f"{lo:g}-{hi:g}"
    return str(value)


def cmd_compare(n: int) -> int:
    if n < 2:
        raise ValueError(f"--n must be >= 2, got {n}")
    header = (
        "topology", "impl", "sel_mosfet", "dpdt", "spst", "conv_mosfet",
        "C", "L", "T", "D", "hf_drv", "lf_drv", "eff_%",
    )
    rows = [header]
    for c in comparison_rows(n):
        rows.append(tuple(_fmt(x) for x in (
            c.topology, c.impl if c.family == "lfsscc" else "-", c.selection_mosfet,
            c.selection_dpdt, c.selection_spst, c.converter_mosfet, c.capacitor,
            c.inductor, c.transformer, c.diode, c.hf_drivers, c.lf_drivers, c.efficiency,
        )))
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    print(f"n = {n}")
    for r in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    print(f"bipolar_rail/transformer_1sw DPDT ratio: {dpdt_ratio(n):.2f}")
    return EXIT_OK


def _run_point(doc: dict) -> str:
    cfg = parse_config(doc)
    _, summary = run(cfg.scenario, cfg.equalizer, cfg.converter, stop_on_clamp=cfg.stop_on_clamp)
    return dumps_json(summary_document(summary, **_meta(cfg)))


def cmd_sweep(config_path: str, out_dir: str | None = None, grid_path: str | None = None, jobs: int = 1) -> int:
    raw = read_document(config_path)
    grid = None
    if grid_path is not None:
        gdoc = read_document(grid_path)
        grid = gdoc.get("grid", gdoc)
    points = expand_grid(raw, grid)
    docs = [doc for _, doc in points]
    for doc in docs:  # reject bad points before any run starts
        parse_config(doc)

    out = _out_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(docs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, docs))
    else:
        results = [_run_point(doc) for doc in docs]

    keys = list(points[0][0]) if points else []
    rows = []
    for idx, ((point, _), text) in enumerate(zip(points, results)):
        pdir = out / f"point_{idx:04d}"
        pdir.mkdir(exist_ok=True)
        (pdir / "summary.json").write_text(text, encoding="utf-8")
        s = json.loads(text)
        rows.append((idx, point, s))

    base_max = rows[0][2]["max_switch_transitions"] if rows else 0
    header = ["point"] + keys + [
        "convergence_time_s", "max_switch_transitions", "total_transitions",
        "rounds", "final_spread_V", "transition_ratio",
    ]
    lines = [",".join(header)]
    for idx, point, s in rows:
        conv = s["convergence_time_s"]
        ratio = s["max_switch_transitions"] / base_max if base_max else float("nan")
        vals = [f"point_{idx:04d}"] + [_grid_value(point[k]) for k in keys] + [
            "" if conv is None else f"{conv:.6g}",
            str(s["max_switch_transitions"]),
            str(s["total_transitions"]),
            str(s["rounds"]),
            f"{s['final_spread_V']:.6g}",
            f"{ratio:.6g}",
        ]
        lines.append(",".join(vals))
    table = "\n".join(lines) + "\n"
    (out / "aggregate.csv").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def _grid_value(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, list):
        return '"' + " ".join(_grid_value(v) for v in value) + '"'
    return str(value)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cellequalizer", description="Selection-switch cell equalizer simulator and verifier.")
    p.add_argument("--verbose", "-v", action="store_true", help="more logging / per-pair tables")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one scenario, write telemetry.csv and summary.json")
    s.add_argument("--config", required=True, help="TOML or JSON run config")
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")

    v = sub.add_parser("verify-network", help="check every cell pair of the selection network")
    v.add_argument("--n", type=int, help="cell count (taken from --netlist if omitted)")
    v.add_argument("--netlist", help="netlist file to verify instead of the built-in one")
    v.add_argument("--verbose", "-v", action="store_true", dest="table", help="print the pair table")

    c = sub.add_parser("compare", help="component counts of the modeled topologies")
    c.add_argument("--n", type=int, required=True)

    w = sub.add_parser("sweep", help="run a parameter grid")
    w.add_argument("--config", required=True, help="base config; may hold a [grid] table")
    w.add_argument("--grid", help="file with a [grid] table (overrides the config's)")
    w.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    w.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    verbose = args.verbose or getattr(args, "table", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out)
        if args.command == "verify-network":
            return cmd_verify_network(args.n, args.netlist, verbose)
        if args.command == "compare":
            return cmd_compare(args.n)
        if args.jobs < 1:
            raise ValueError(f"--jobs must be >= 1, got {args.jobs}")
        return cmd_sweep(args.config, args.out, args.grid, args.jobs)
    except (ConfigError, NetlistError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
