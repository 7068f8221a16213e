"""Per-iteration convergence records shared by both engines."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["COLUMNS", "ConvergenceTrace", "IterationRecord"]

COLUMNS = ("k", "consensus_gap", "objective", "dist_to_ref", "violation", "primal_gap",
           "local_ms", "coord_ms")


@dataclass(frozen=True)
class IterationRecord:
    """Metrics of iteration ``k``.

    ``consensus_gap`` and ``objective`` are taken at the local solutions
    ``x^k``, ``violation`` at the consensus variables ``z^k`` and
    ``primal_gap`` is ``max_i ||A_i (x_i^k - z_i^k)||_inf``.
    ``dist_to_ref`` is NaN when no reference point is known.
    """

    k: int
    consensus_gap: float
    objective: float
    dist_to_ref: float
    violation: float
    primal_gap: float
    local_ms: float = 0.0
    coord_ms: float = 0.0

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in COLUMNS)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


@dataclass
class ConvergenceTrace:
    """Ordered list of :class:`IterationRecord` with CSV round trip.

    Floats are written with ``repr`` so that parsing the CSV reproduces the
    trace exactly.
    """

    records: list = field(default_factory=list)

    def append(self, rec: IterationRecord):
        if self.records and rec.k <= self.records[-1].k:
            raise ValueError("iteration counter must increase strictly")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(name)
        return np.array([getattr(r, name) for r in self.records],
                        dtype=int if name == "k" else float)

    def metrics_equal(self, other: "ConvergenceTrace") -> bool:
        """Bitwise equality of every column except the wall-clock timings."""
        if len(self) != len(other):
            return False
        for a, b in zip(self, other):
            for c in COLUMNS[:6]:
                x, y = getattr(a, c), getattr(b, c)
                if not (x == y or (math.isnan(x) and math.isnan(y))):
                    return False
        return True

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.records:
            w.writerow([_fmt(v) for v in r.values()])
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTrace":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != COLUMNS:
            raise ValueError(f"trace header must be {','.join(COLUMNS)}")
        out = cls()
        for ln, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != len(COLUMNS):
                raise ValueError(f"line {ln}: expected {len(COLUMNS)} fields, got {len(row)}")
            out.append(IterationRecord(int(row[0]), *(float(v) for v in row[1:])))
        return out

    @classmethod
    def read_csv(cls, path) -> "ConvergenceTrace":
        return cls.from_csv(Path(path).read_text())
