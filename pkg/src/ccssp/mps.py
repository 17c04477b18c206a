"""MPS and LP-format export of a :class:`ModelIR`, and an MPS reader.

Column names follow the model's scheme ``x[j][k][i][a]`` / ``z[k][i][a]``
(``i`` the node ordinal in layer ``k``), so exports are byte-stable for a
given problem. Those names exceed the 8-character fields of fixed MPS, so
files are written in free MPS: whitespace-separated fields, ``OBJSENSE``
section for maximization, binaries between ``MARKER INTORG``/``INTEND``
lines and bounded with ``BV``. Coefficients are written with ``repr`` and
read back bit-exactly.
"""

from __future__ import annotations

import re
from collections import defaultdict

import numpy as np
import scipy.sparse as sp

from .ilp import ModelIR
from .model import Sense

OBJ_ROW = "obj"
_REL_CODE = {"=": "E", "<": "L", ">": "G"}


class MPSFormatError(ValueError):
    """Unsupported or malformed MPS input."""


def _check_names(names):
    for n in names:
        if not n or any(ch.isspace() for ch in n):
            raise MPSFormatError(f"name {n!r} cannot be written to free MPS")


def _num(v: float) -> str:
    v = float(v)
    return repr(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def write_mps(model: ModelIR, fh, name: str = "CCSSP") -> None:
    """Write ``model`` as free MPS to the text stream ``fh``."""
    _check_names(model.names)
    _check_names(model.row_names)
    lines = [f"NAME {name}"]
    if model.sense == Sense.MAX:
        lines += ["OBJSENSE", "    MAX"]
    lines.append("ROWS")
    lines.append(f" N  {OBJ_ROW}")
    lines += [f" {_REL_CODE[r]}  {n}" for r, n in zip(model.rel, model.row_names)]
    lines.append("COLUMNS")
    A = sp.csc_matrix(model.A)
    in_int = False
    for v in range(model.n_vars):
        if model.integer[v] != in_int:
            tag = "INTORG" if model.integer[v] else "INTEND"
            lines.append(f"    MARKER  'MARKER'  '{tag}'")
            in_int = bool(model.integer[v])
        col = model.names[v]
        if model.c[v] != 0:
            lines.append(f"    {col}  {OBJ_ROW}  {_num(model.c[v])}")
        for p in range(A.indptr[v], A.indptr[v + 1]):
            lines.append(f"    {col}  {model.row_names[A.indices[p]]}  {_num(A.data[p])}")
        if A.indptr[v] == A.indptr[v + 1] and model.c[v] == 0:
            lines.append(f"    {col}  {OBJ_ROW}  0")
    if in_int:
        lines.append("    MARKER  'MARKER'  'INTEND'")
    lines.append("RHS")
    lines += [f"    RHS  {n}  {_num(b)}" for n, b in zip(model.row_names, model.rhs) if b != 0]
    lines.append("BOUNDS")
    for v in range(model.n_vars):
        lo, hi, col = model.lb[v], model.ub[v], model.names[v]
        if model.integer[v] and lo == 0 and hi == 1:
            lines.append(f" BV BND  {col}")
            continue
        if lo == hi:
            lines.append(f" FX BND  {col}  {_num(lo)}")
            continue
        if lo == -np.inf:
            lines.append(f" MI BND  {col}")
        elif lo != 0:
            lines.append(f" LO BND  {col}  {_num(lo)}")
        if hi != np.inf:
            lines.append(f" UP BND  {col}  {_num(hi)}")
    lines.append("ENDATA")
    fh.write("\n".join(lines) + "\n")


def save_mps(model: ModelIR, path, name: str = "CCSSP") -> None:
    with open(path, "w") as fh:
        write_mps(model, fh, name)


def _lp_name(n: str) -> str:
    # LP format does not admit brackets in identifiers
    return n.replace("][", "_").replace("[", "_").replace("]", "")


def write_lp(model: ModelIR, fh) -> None:
    """Minimal CPLEX-LP export; brackets in names become underscores
    (``x[0][2][5][1]`` -> ``x_0_2_5_1``)."""
    names = [_lp_name(n) for n in model.names]

    def expr(idx, vals):
        terms = []
        for v, c in zip(idx, vals):
            sign = "-" if c < 0 else "+"
            terms.append(f"{sign} {_num(abs(c))} {names[v]}")
        text = " ".join(terms) if terms else "0 " + names[0]
        return text[2:] if text.startswith("+ ") else text

    out = ["\\ CC-SSP model", "Maximize" if model.sense == Sense.MAX else "Minimize"]
    nz = np.flatnonzero(model.c)
    out.append(f" {OBJ_ROW}: {expr(nz, model.c[nz])}")
    out.append("Subject To")
    A = sp.csr_matrix(model.A)
    op = {"=": "=", "<": "<=", ">": ">="}
    for r in range(model.n_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        out.append(f" {_lp_name(model.row_names[r])}: {expr(A.indices[lo:hi], A.data[lo:hi])} "
                   f"{op[model.rel[r]]} {_num(model.rhs[r])}")
    out.append("Bounds")
    for v in np.flatnonzero(~model.integer):
        out.append(f" {_num(model.lb[v])} <= {names[v]} <= {_num(model.ub[v])}")
    if model.integer.any():
        out.append("Binary")
        out += [f" {names[v]}" for v in np.flatnonzero(model.integer)]
    out.append("End")
    fh.write("\n".join(out) + "\n")


# -- reader ------------------------------------------------------------------------

_X = re.compile(r"x\[(\d+)\]\[(\d+)\]\[(\d+)\]\[(\d+)\]$")
_Z = re.compile(r"z\[(\d+)\]\[(\d+)\]\[(\d+)\]$")


def _structure(names):
    """Rebuild x/z index tables from the naming scheme; empty when the
    names do not follow it (the solver then treats the model generically)."""
    xs, zs = {}, {}
    for v, n in enumerate(names):
        m = _X.match(n)
        if m:
            xs[tuple(int(t) for t in m.groups())] = v
            continue
        m = _Z.match(n)
        if not m:
            return [], [], []
        zs[tuple(int(t) for t in m.groups())] = v
    if not zs:
        return [], [], []
    h = 1 + max(k for k, _, _ in zs)
    keys = [[(i, a) for k2, i, a in zs if k2 == k] for k in range(h)]   # column order
    z_index = [np.array([zs[(k, i, a)] for i, a in keys[k]], dtype=np.int64) for k in range(h)]
    q1 = 1 + max((j for j, *_ in xs), default=-1)
    try:
        x_index = [[np.array([xs[(j, k, i, a)] for i, a in keys[k]], dtype=np.int64) for k in range(h)]
                   for j in range(q1)]
    except KeyError:
        return [], [], []
    pair_node = [np.array([i for i, _ in keys[k]], dtype=np.int64) for k in range(h)]
    return x_index, z_index, pair_node


def read_mps(fh) -> ModelIR:
    """Parse free MPS (the subset :func:`write_mps` emits plus ``G`` rows,
    ``LO/UP/FX/FR/MI/PL/BV`` bounds). ``RANGES`` are not supported."""
    section = None
    sense = Sense.MIN
    obj = None
    rows: list[str] = []
    rel: list[str] = []
    row_id: dict[str, int] = {}
    cols: list[str] = []
    col_id: dict[str, int] = {}
    integer: list[bool] = []
    entries: list[tuple[int, int, float]] = []
    cost: dict[int, float] = defaultdict(float)
    rhs: dict[int, float] = {}
    bounds: list[tuple[str, str, float | None]] = []
    in_int = False
    for lineno, raw in enumerate(fh, 1):
        line = raw.rstrip()
        if not line or line.startswith("*"):
            continue
        if not line[0].isspace():
            head = line.split()
            section = head[0].upper()
            if section == "OBJSENSE" and len(head) > 1:
                sense = Sense.MAX if head[1].upper().startswith("MAX") else Sense.MIN
            elif section == "RANGES":
                raise MPSFormatError("RANGES section is not supported")
            elif section not in ("NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
                raise MPSFormatError(f"line {lineno}: unknown section {section!r}")
            continue
        f = line.split()
        try:
            if section == "OBJSENSE":
                sense = Sense.MAX if f[0].upper().startswith("MAX") else Sense.MIN
            elif section == "ROWS":
                code, n = f[0].upper(), f[1]
                if code == "N":
                    if obj is None:
                        obj = n
                    continue
                row_id[n] = len(rows)
                rows.append(n)
                rel.append({"E": "=", "L": "<", "G": ">"}[code])
            elif section == "COLUMNS":
                if len(f) >= 3 and f[1].strip("'\"").upper() == "MARKER":
                    in_int = f[2].strip("'\"").upper() == "INTORG"
                    continue
                c = f[0]
                if c not in col_id:
                    col_id[c] = len(cols)
                    cols.append(c)
                    integer.append(in_int)
                v = col_id[c]
                for r, val in zip(f[1::2], f[2::2]):
                    if r == obj:
                        cost[v] += float(val)
                    else:
                        entries.append((row_id[r], v, float(val)))
            elif section == "RHS":
                rest = f[1:] if len(f) % 2 == 1 else f
                for r, val in zip(rest[0::2], rest[1::2]):
                    if r != obj:
                        rhs[row_id[r]] = float(val)
            elif section == "BOUNDS":
                kind, col = f[0].upper(), f[2]
                bounds.append((kind, col, float(f[3]) if len(f) > 3 else None))
        except (KeyError, IndexError, ValueError) as exc:
            raise MPSFormatError(f"line {lineno}: cannot parse {line.strip()!r} ({exc!r})") from exc
    n = len(cols)
    lb, ub = np.zeros(n), np.full(n, np.inf)
    is_int = np.array(integer, dtype=bool)
    for kind, col, val in bounds:
        if col not in col_id:
            raise MPSFormatError(f"bound on unknown column {col!r}")
        v = col_id[col]
        if kind == "UP":
            ub[v] = val
        elif kind == "LO":
            lb[v] = val
        elif kind == "FX":
            lb[v] = ub[v] = val
        elif kind == "FR":
            lb[v], ub[v] = -np.inf, np.inf
        elif kind == "MI":
            lb[v] = -np.inf
        elif kind == "PL":
            ub[v] = np.inf
        elif kind == "BV":
            lb[v], ub[v], is_int[v] = 0.0, 1.0, True
        else:
            raise MPSFormatError(f"unsupported bound type {kind!r}")
    r_, c_, d_ = zip(*entries) if entries else ((), (), ())
    A = sp.csr_matrix((np.array(d_, dtype=float), (np.array(r_, dtype=np.int64), np.array(c_, dtype=np.int64))),
                      shape=(len(rows), n))
    A.sum_duplicates()
    A.eliminate_zeros()
    relations = np.array(rel) if rel else np.array([], dtype="<U1")
    b = np.array([rhs.get(i, 0.0) for i in range(len(rows))])
    if (relations == ">").any():
        # the model form has only '=' and '<' rows
        g = relations == ">"
        A = sp.csr_matrix(sp.diags(np.where(g, -1.0, 1.0)) @ A)
        b = np.where(g, -b, b)
        relations = np.where(g, "<", relations)
    c = np.zeros(n)
    for v, val in cost.items():
        c[v] = val
    x_index, z_index, pair_node = _structure(cols)
    return ModelIR(cols, lb, ub, is_int, A, relations, b, c, sense, rows, x_index, z_index,
                   not is_int.any(), pair_node)


def load_mps(path) -> ModelIR:
    with open(path) as fh:
        return read_mps(fh)
