"""AC optimal power flow frontend."""

from pathlib import Path

from .matpower import CaseData, load_case, parse_case
from .model import OpfVariableLayout, build_partitioned_opf
from .partition import RegionSpec, load_partition, parse_partition, single_region

#: bundled case57 and its default 4-region partition
DATA_DIR = Path(__file__).resolve().parent.parent / "data"

__all__ = ["DATA_DIR", "CaseData", "load_case", "parse_case", "OpfVariableLayout", "build_partitioned_opf",
           "RegionSpec", "load_partition", "parse_partition", "single_region"]
