"""Region partitions of a network.

Partition files hold one region per line::

    # comment
    region 1: 1 2 3 4
    region 2: 5 6 7
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from ..errors import CaseFormatError

__all__ = ["RegionSpec", "parse_partition", "load_partition", "single_region"]

_LINE = re.compile(r"^\s*region\s+(\S+)\s*:\s*(.*)$")


@dataclass(frozen=True)
class RegionSpec:
    """Bus-id to region-id map.  ``regions`` fixes the region order."""

    assignment: dict
    regions: tuple

    def __post_init__(self):
        missing = set(self.assignment.values()) - set(self.regions)
        if missing:
            raise ValueError(f"assignment uses undeclared regions {sorted(missing)}")

    @property
    def count(self) -> int:
        return len(self.regions)

    def buses_of(self, region) -> list:
        return sorted(b for b, r in self.assignment.items() if r == region)

    def to_text(self) -> str:
        return "".join(f"region {r}: {' '.join(map(str, self.buses_of(r)))}\n" for r in self.regions)


def parse_partition(text: str) -> RegionSpec:
    assignment, order = {}, []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise CaseFormatError(f"expected 'region <id>: <bus ids>', got {raw.strip()!r}", line=ln)
        rid = m.group(1)
        rid = int(rid) if rid.lstrip("-").isdigit() else rid
        if rid in order:
            raise CaseFormatError(f"region {rid} declared twice", line=ln)
        order.append(rid)
        for tok in m.group(2).replace(",", " ").split():
            try:
                bus = int(tok)
            except ValueError:
                raise CaseFormatError(f"bad bus id {tok!r}", line=ln) from None
            if bus in assignment:
                raise CaseFormatError(f"bus {bus} assigned twice", line=ln)
            assignment[bus] = rid
    if not order:
        raise CaseFormatError("partition declares no regions")
    return RegionSpec(assignment=assignment, regions=tuple(order))


def load_partition(path) -> RegionSpec:
    return parse_partition(Path(path).read_text())


def single_region(case) -> RegionSpec:
    """Trivial partition placing every bus in region 1."""
    return RegionSpec(assignment={int(b): 1 for b in case.bus_ids}, regions=(1,))
