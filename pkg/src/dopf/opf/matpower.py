"""Reader for the textual MATPOWER case format (version 2 subset)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CaseFormatError, UnsupportedFeatureError

__all__ = ["CaseData", "parse_case", "load_case"]

PQ, PV, REF, ISOLATED = 1, 2, 3, 4

_NCOLS = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4}


@dataclass(eq=False)
class CaseData:
    """Network data in per unit on ``base_mva``.

    Bus arrays are indexed by position (``bus_ids[k]`` is the MATPOWER id of
    position ``k``).  Angles are in radians.  ``gen_cost[g] = (c2, c1, c0)``
    are the cost coefficients with respect to the per-unit active power, so
    that the cost is ``c2 * Pg**2 + c1 * Pg + c0`` in the case's currency
    per hour.
    """

    base_mva: float
    bus_ids: np.ndarray
    bus_type: np.ndarray
    Pd: np.ndarray
    Qd: np.ndarray
    Gs: np.ndarray
    Bs: np.ndarray
    Vmin: np.ndarray
    Vmax: np.ndarray
    Vm: np.ndarray
    Va: np.ndarray
    br_from: np.ndarray
    br_to: np.ndarray
    br_r: np.ndarray
    br_x: np.ndarray
    br_b: np.ndarray
    br_tap: np.ndarray
    br_shift: np.ndarray
    br_status: np.ndarray
    gen_bus: np.ndarray
    Pg: np.ndarray
    Qg: np.ndarray
    Qmax: np.ndarray
    Qmin: np.ndarray
    Vg: np.ndarray
    gen_status: np.ndarray
    Pmax: np.ndarray
    Pmin: np.ndarray
    gen_cost: np.ndarray
    name: str = ""

    @property
    def n_bus(self) -> int:
        return self.bus_ids.size

    @property
    def n_branch(self) -> int:
        return self.br_from.size

    @property
    def n_gen(self) -> int:
        return self.gen_bus.size

    def bus_index(self) -> dict:
        return {int(b): k for k, b in enumerate(self.bus_ids)}

    @property
    def ref_bus(self) -> int:
        return int(self.bus_ids[np.flatnonzero(self.bus_type == REF)[0]])

    def replace(self, **changes) -> "CaseData":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return CaseData(**kw)


_NUM = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|^[+-]?(Inf|inf|NaN)$")


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        if ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _parse_matrices(text: str):
    """Return ``{name: (rows, first_line_numbers)}`` and scalar assignments."""
    mats, scalars = {}, {}
    lines = text.splitlines()
    i = 0
    assign_mat = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
    assign_scalar = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^\[;]+);?\s*$")
    while i < len(lines):
        raw = _strip_comment(lines[i])
        m = assign_mat.match(raw)
        if m:
            name, rest = m.group(1), m.group(2)
            rows, linenos = [], []
            buf, lineno = rest, i + 1
            while True:
                closed = "]" in buf
                body = buf.split("]")[0]
                for chunk in body.split(";"):
                    tokens = [t for t in re.split(r"[\s,]+", chunk.strip()) if t]
                    if tokens:
                        rows.append(tokens)
                        linenos.append(lineno)
                if closed:
                    break
                i += 1
                if i >= len(lines):
                    raise CaseFormatError(f"unterminated matrix mpc.{name}", line=lineno)
                buf, lineno = _strip_comment(lines[i]), i + 1
            mats[name] = (rows, linenos)
        else:
            m = assign_scalar.match(raw)
            if m:
                scalars[m.group(1)] = (m.group(2).strip().strip("'"), i + 1)
        i += 1
    return mats, scalars


def _to_array(name, rows, linenos, min_cols):
    width = None
    out = []
    for toks, ln in zip(rows, linenos):
        for t in toks:
            if not _NUM.match(t):
                raise CaseFormatError(f"mpc.{name}: non-numeric entry {t!r}", line=ln)
        if len(toks) < min_cols:
            raise CaseFormatError(f"mpc.{name}: row has {len(toks)} columns, need at least {min_cols}",
                                  line=ln)
        if name != "gencost":
            if width is None:
                width = len(toks)
            elif len(toks) != width:
                raise CaseFormatError(f"mpc.{name}: row has {len(toks)} columns, expected {width}",
                                      line=ln)
        out.append([float(t) for t in toks])
    return out


def parse_case(text: str, name: str = "") -> CaseData:
    """Parse MATPOWER case text into per-unit :class:`CaseData`.

    Raises
    ------
    CaseFormatError
        Malformed rows (with line number) or inconsistent references.
    UnsupportedFeatureError
        Piecewise-linear or higher than quadratic generator costs.
    """
    mats, scalars = _parse_matrices(text)
    if "baseMVA" not in scalars:
        raise CaseFormatError("missing mpc.baseMVA")
    try:
        base = float(scalars["baseMVA"][0])
    except ValueError:
        raise CaseFormatError("mpc.baseMVA is not a number", line=scalars["baseMVA"][1]) from None
    for key in ("bus", "gen", "branch", "gencost"):
        if key not in mats:
            raise CaseFormatError(f"missing matrix mpc.{key}")

    bus = np.array(_to_array("bus", *mats["bus"], _NCOLS["bus"]))
    gen = np.array(_to_array("gen", *mats["gen"], _NCOLS["gen"]))
    branch = np.array(_to_array("branch", *mats["branch"], _NCOLS["branch"]))
    cost_rows = _to_array("gencost", *mats["gencost"], _NCOLS["gencost"])
    gen_lines = mats["gen"][1]
    cost_lines = mats["gencost"][1]
    bus_lines = mats["bus"][1]
    br_lines = mats["branch"][1]

    ids = bus[:, 0].astype(int)
    seen = {}
    for k, b in enumerate(ids):
        if b in seen:
            raise CaseFormatError(f"duplicate bus id {b}", line=bus_lines[k])
        seen[b] = k
    btype = bus[:, 1].astype(int)
    if np.any(btype == ISOLATED):
        k = int(np.flatnonzero(btype == ISOLATED)[0])
        raise UnsupportedFeatureError(f"isolated bus {ids[k]} (type 4)", line=bus_lines[k])
    if np.sum(btype == REF) != 1:
        raise CaseFormatError(f"expected exactly one reference bus, found {int(np.sum(btype == REF))}")

    for k, (f, t) in enumerate(branch[:, :2].astype(int)):
        for b in (f, t):
            if b not in seen:
                raise CaseFormatError(f"branch {k + 1} references unknown bus {b}", line=br_lines[k])
    for k, b in enumerate(gen[:, 0].astype(int)):
        if b not in seen:
            raise CaseFormatError(f"generator {k + 1} references unknown bus {b}", line=gen_lines[k])

    if len(cost_rows) < gen.shape[0]:
        raise CaseFormatError(f"mpc.gencost has {len(cost_rows)} rows for {gen.shape[0]} generators")
    cost = np.zeros((gen.shape[0], 3))
    for g in range(gen.shape[0]):
        row, ln = cost_rows[g], cost_lines[g]
        model, ncoef = int(row[0]), int(row[3])
        if model == 1:
            raise UnsupportedFeatureError("piecewise-linear generator cost", line=ln)
        if model != 2:
            raise CaseFormatError(f"unknown cost model {model}", line=ln)
        coefs = row[4:4 + ncoef]
        if len(coefs) != ncoef:
            raise CaseFormatError(f"expected {ncoef} cost coefficients", line=ln)
        # strip leading zero coefficients before judging the degree
        while len(coefs) > 3 and coefs[0] == 0.0:
            coefs = coefs[1:]
        if len(coefs) > 3:
            raise UnsupportedFeatureError(f"cost polynomial of degree {len(coefs) - 1}", line=ln)
        c = [0.0] * (3 - len(coefs)) + list(coefs)
        # per-unit power variable: cost(base * p)
        cost[g] = (c[0] * base ** 2, c[1] * base, c[2])

    tap = branch[:, 8].copy()
    tap[tap == 0] = 1.0
    deg = np.pi / 180.0
    gen_status = gen[:, 7].astype(int) > 0
    br_status = branch[:, 10].astype(int) > 0

    case = CaseData(
        base_mva=base, bus_ids=ids, bus_type=btype,
        Pd=bus[:, 2] / base, Qd=bus[:, 3] / base, Gs=bus[:, 4] / base, Bs=bus[:, 5] / base,
        Vm=bus[:, 7].copy(), Va=bus[:, 8] * deg, Vmax=bus[:, 11].copy(), Vmin=bus[:, 12].copy(),
        br_from=branch[:, 0].astype(int), br_to=branch[:, 1].astype(int),
        br_r=branch[:, 2].copy(), br_x=branch[:, 3].copy(), br_b=branch[:, 4].copy(),
        br_tap=tap, br_shift=branch[:, 9] * deg, br_status=br_status,
        gen_bus=gen[:, 0].astype(int), Pg=gen[:, 1] / base, Qg=gen[:, 2] / base,
        Qmax=gen[:, 3] / base, Qmin=gen[:, 4] / base, Vg=gen[:, 5].copy(), gen_status=gen_status,
        Pmax=gen[:, 8] / base, Pmin=gen[:, 9] / base, gen_cost=cost, name=name,
    )
    _check_connected(case)
    return case


def _check_connected(case: CaseData):
    idx = case.bus_index()
    parent = list(range(case.n_bus))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for f, t, on in zip(case.br_from, case.br_to, case.br_status):
        if on:
            parent[find(idx[int(f)])] = find(idx[int(t)])
    roots = {find(k) for k in range(case.n_bus)}
    if len(roots) > 1:
        raise CaseFormatError(f"network is not connected ({len(roots)} islands)")


def load_case(path) -> CaseData:
    path = Path(path)
    return parse_case(path.read_text(), name=path.stem)
