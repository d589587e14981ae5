"""Telemetry CSV and summary JSON writers.

Column order is fixed::

    t_s, vb_1..vb_n, i_stack_A, src_idx, sink_idx, i_src_A, i_sink_A,
    phase, vc1_V, vc2_V, trans_<switch>...

Floats use 6 significant digits. ``src_idx``/``sink_idx`` are 0 and
``vc1_V``/``vc2_V`` are ``nan`` when no pair is selected.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .sim import Summary, Telemetry

FLOAT_FMT = "%.6g"


def csv_columns(tel: Telemetry) -> list[str]:
    return (
        ["t_s"]
        + [f"vb_{j}" for j in range(1, tel.n + 1)]
        + ["i_stack_A", "src_idx", "sink_idx", "i_src_A", "i_sink_A", "phase", "vc1_V", "vc2_V"]
        + [f"trans_{name}" for name in tel.switch_names]
    )


def _floats(a: np.ndarray) -> np.ndarray:
    # +0.0 folds negative zero so reruns and platforms agree byte for byte
    return np.char.mod(FLOAT_FMT, np.asarray(a, dtype=float) + 0.0)


def _ints(a: np.ndarray) -> np.ndarray:
    return np.char.mod("%d", np.asarray(a, dtype=np.int64))


def telemetry_csv(tel: Telemetry) -> str:
    cols = [_floats(tel.t)]
    cols += [_floats(tel.v[:, j]) for j in range(tel.n)]
    cols += [
        _floats(tel.i_stack),
        _ints(tel.src),
        _ints(tel.sink),
        _floats(tel.i_src),
        _floats(tel.i_sink),
        np.array(tel.phase, dtype=str),
        _floats(tel.vc1),
        _floats(tel.vc2),
    ]
    cols += [_ints(tel.transitions[:, j]) for j in range(len(tel.switch_names))]
    lines = [",".join(csv_columns(tel))]
    if len(tel):
        lines += [",".join(row) for row in zip(*(c.tolist() for c in cols))]
    return "\n".join(lines) + "\n"


def write_telemetry(tel: Telemetry, path: str | Path) -> None:
    Path(path).write_text(telemetry_csv(tel), encoding="utf-8", newline="")


def summary_document(summary: Summary, **meta) -> dict:
    doc = dict(meta)
    doc.update(summary.as_dict())
    return doc


def dumps_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_summary(summary: Summary, path: str | Path, **meta) -> None:
    Path(path).write_text(dumps_json(summary_document(summary, **meta)), encoding="utf-8")
