"""Iterations-to-threshold tables across runs of the same instance."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..trace import ConvergenceTrace

__all__ = ["THRESHOLDS", "METRICS", "INFINITY", "FingerprintMismatch", "CompareTable",
           "iterations_to", "compare_report"]

THRESHOLDS = (1e-2, 1e-4, 1e-6)
METRICS = ("consensus_gap", "dist_to_ref", "violation", "primal_gap")
INFINITY = "∞"


class FingerprintMismatch(ValueError):
    """Traces from different problem instances cannot be compared."""


def iterations_to(trace: ConvergenceTrace, column: str, threshold: float) -> Optional[int]:
    """First ``k`` with ``column <= threshold``, or None if never reached."""
    v = trace.column(column)
    hit = np.flatnonzero(np.isfinite(v) & (v <= threshold))
    return int(trace.column("k")[hit[0]]) if hit.size else None


@dataclass
class CompareTable:
    header: list
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [self.header] + [[str(c) for c in r] for r in self.rows]
        widths = [max(len(r[j]) for r in cells) for j in range(len(self.header))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.csv").write_text(self.to_csv(), encoding="utf-8")
        (out / "compare.txt").write_text(self.to_text(), encoding="utf-8")
        return out


def _fmt(v) -> str:
    if v is None:
        return INFINITY
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def compare_report(traces: Sequence[ConvergenceTrace], labels: Sequence[str],
                   f_star: float, fingerprints: Optional[Sequence[str]] = None,
                   stalled: Optional[Sequence[Optional[bool]]] = None) -> CompareTable:
    """One row per trace with iterations to each threshold on each metric.

    Columns are ``<metric>@<threshold>`` for ``METRICS`` x ``THRESHOLDS``,
    then the final objective gap ``f^K - f*`` and the stall flag.  Cells of
    thresholds that are never reached hold ``"∞"``.

    Raises
    ------
    FingerprintMismatch
        If ``fingerprints`` are given and not all equal.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("at least one trace is required")
    if len(labels) != len(traces):
        raise ValueError("one label per trace is required")
    if fingerprints is not None:
        fps = {str(f) for f in fingerprints}
        if len(fps) > 1:
            raise FingerprintMismatch(f"traces come from different instances: {sorted(fps)}")
    stalled = list(stalled) if stalled is not None else [None] * len(traces)
    header = ["run"] + [f"{m}@{t:g}" for m in METRICS for t in THRESHOLDS] + [
        "iterations", "objective_gap", "stalled"]
    rows = []
    for lab, tr, st in zip(labels, traces, stalled):
        row = [str(lab)]
        for m in METRICS:
            row += [_fmt(iterations_to(tr, m, t)) for t in THRESHOLDS]
        gap = tr[-1].objective - f_star if len(tr) else float("nan")
        row += [str(len(tr)), _fmt(float(gap)), "n/a" if st is None else str(bool(st)).lower()]
        rows.append(row)
    return CompareTable(header, rows)
