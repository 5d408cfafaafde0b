"""Solver-agnostic cone-program intermediate representation.

A program collects constraint *blocks*.  Each block is a sparse affine map
``w = F x + g`` together with a cone tag; feasibility means ``w`` lies in the
cone.  Supported cones:

``zero``      w = 0 componentwise.
``nonneg``    w >= 0 componentwise.
``soc``       w = (t, u) with ||u||_2 <= t.
``psd``       w is the scaled lower-triangle vectorization (row-major, with
              off-diagonal entries multiplied by sqrt(2)) of a symmetric
              matrix required to be positive semidefinite.  With this scaling
              the euclidean inner product of two vectorized matrices equals
              their Frobenius pairing tr(XY).

Binary variables are recorded as an ``integrality`` index set; the blocks of
a mixed-integer program describe its continuous relaxation.

Text serialization is JSON-lines: one header record for the objective and
variable metadata, then one record per block.  Round-tripping is exact for
finite doubles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
PSD = "psd"
CONES = (ZERO, NONNEG, SOC, PSD)

#: feasibility tolerance quoted on Optimal solutions (PSD blocks: min eigenvalue)
FEAS_TOL = 1e-7


def svec_dim(order: int) -> int:
    return order * (order + 1) // 2


def svec_entries(order: int):
    """(i, j) pairs of the lower triangle in row-major order."""
    for i in range(order):
        for j in range(i + 1):
            yield i, j


def svec(mat: np.ndarray) -> np.ndarray:
    """Scaled lower-triangle vectorization of a symmetric matrix."""
    order = mat.shape[0]
    out = np.empty(svec_dim(order))
    for k, (i, j) in enumerate(svec_entries(order)):
        out[k] = mat[i, j] * (1.0 if i == j else np.sqrt(2.0))
    return out


def smat(vec: np.ndarray, order: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    mat = np.zeros((order, order))
    for k, (i, j) in enumerate(svec_entries(order)):
        val = vec[k] if i == j else vec[k] / np.sqrt(2.0)
        mat[i, j] = val
        mat[j, i] = val
    return mat


class Aff:
    """Sparse affine expression c^T x_subset + const used while building rows."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: dict[int, float] | None = None, const: float = 0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @staticmethod
    def var(idx: int, coeff: float = 1.0) -> "Aff":
        return Aff({int(idx): float(coeff)})

    @staticmethod
    def const_(value: float) -> "Aff":
        return Aff({}, value)

    @staticmethod
    def dot(idx: np.ndarray, coeffs: np.ndarray, const: float = 0.0) -> "Aff":
        terms: dict[int, float] = {}
        for j, c in zip(np.asarray(idx).ravel(), np.asarray(coeffs, dtype=float).ravel()):
            if c != 0.0:
                terms[int(j)] = terms.get(int(j), 0.0) + float(c)
        return Aff(terms, const)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return Aff(self.terms, self.const + other)
        terms = dict(self.terms)
        for j, c in other.terms.items():
            terms[j] = terms.get(j, 0.0) + c
        return Aff(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Aff({j: -c for j, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return Aff(self.terms, self.const - other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar: float):
        return Aff({j: c * scalar for j, c in self.terms.items()}, self.const * scalar)

    __rmul__ = __mul__

    def compact(self) -> tuple[np.ndarray, np.ndarray, float]:
        cols = np.array(sorted(j for j, c in self.terms.items() if c != 0.0), dtype=np.int64)
        vals = np.array([self.terms[j] for j in cols], dtype=float)
        return cols, vals, self.const


@dataclass(frozen=True)
class Block:
    """One cone constraint ``F x + g in cone`` in sparse triplet storage."""

    cone: str
    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    offset: np.ndarray
    order: int = 0  # matrix order for psd blocks
    name: str = ""

    def matrix(self, n_vars: int) -> sp.csr_matrix:
        # blocks are immutable and shared across node programs; memoize
        cached = getattr(self, "_matrix_cache", None)
        if cached is not None and cached.shape == (self.dim, n_vars):
            return cached
        mat = sp.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.dim, n_vars)
        )
        object.__setattr__(self, "_matrix_cache", mat)
        return mat

    def affine_value(self, x: np.ndarray) -> np.ndarray:
        w = self.offset.copy()
        np.add.at(w, self.rows, self.vals * x[self.cols])
        return w


@dataclass(frozen=True)
class Residual:
    """Signed feasibility residual of one block; >= 0 means satisfied."""

    block: int
    name: str
    cone: str
    value: float


@dataclass(frozen=True)
class ConeProgram:
    n_vars: int
    sense: str  # "min" | "max"
    obj_cols: np.ndarray
    obj_vals: np.ndarray
    obj_const: float
    blocks: tuple[Block, ...]
    integrality: frozenset[int] = frozenset()
    variable_names: tuple[str, ...] | None = None

    def objective_dense(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        c[self.obj_cols] = self.obj_vals
        return c

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.obj_vals @ x[self.obj_cols] + self.obj_const)

    @property
    def n_rows(self) -> int:
        return sum(b.dim for b in self.blocks)

    def with_fixings(self, idx, vals, name: str = "fix") -> "ConeProgram":
        """New program sharing all blocks plus a zero-cone block fixing x[idx]=vals."""
        idx = np.asarray(idx, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        blk = Block(
            cone=ZERO,
            dim=len(idx),
            rows=np.arange(len(idx), dtype=np.int64),
            cols=idx,
            vals=np.ones(len(idx)),
            offset=-vals,
            name=name,
        )
        return ConeProgram(
            self.n_vars,
            self.sense,
            self.obj_cols,
            self.obj_vals,
            self.obj_const,
            self.blocks + (blk,),
            frozenset(),
            self.variable_names,
        )

    def without_integrality(self) -> "ConeProgram":
        if not self.integrality:
            return self
        return ConeProgram(
            self.n_vars,
            self.sense,
            self.obj_cols,
            self.obj_vals,
            self.obj_const,
            self.blocks,
            frozenset(),
            self.variable_names,
        )

    # -- serialization ------------------------------------------------------

    def to_text(self) -> str:
        header = {
            "record": "program",
            "n_vars": self.n_vars,
            "sense": self.sense,
            "obj_cols": self.obj_cols.tolist(),
            "obj_vals": self.obj_vals.tolist(),
            "obj_const": self.obj_const,
            "integrality": sorted(self.integrality),
            "variable_names": list(self.variable_names) if self.variable_names else None,
        }
        lines = [json.dumps(header)]
        for b in self.blocks:
            lines.append(
                json.dumps(
                    {
                        "record": "block",
                        "cone": b.cone,
                        "dim": b.dim,
                        "order": b.order,
                        "name": b.name,
                        "rows": b.rows.tolist(),
                        "cols": b.cols.tolist(),
                        "vals": b.vals.tolist(),
                        "offset": b.offset.tolist(),
                    }
                )
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "ConeProgram":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = json.loads(lines[0])
        if header.get("record") != "program":
            raise ValueError("missing program header record")
        blocks = []
        for ln in lines[1:]:
            rec = json.loads(ln)
            blocks.append(
                Block(
                    cone=rec["cone"],
                    dim=rec["dim"],
                    rows=np.asarray(rec["rows"], dtype=np.int64),
                    cols=np.asarray(rec["cols"], dtype=np.int64),
                    vals=np.asarray(rec["vals"], dtype=float),
                    offset=np.asarray(rec["offset"], dtype=float),
                    order=rec["order"],
                    name=rec["name"],
                )
            )
        names = header["variable_names"]
        return ConeProgram(
            n_vars=header["n_vars"],
            sense=header["sense"],
            obj_cols=np.asarray(header["obj_cols"], dtype=np.int64),
            obj_vals=np.asarray(header["obj_vals"], dtype=float),
            obj_const=header["obj_const"],
            blocks=tuple(blocks),
            integrality=frozenset(header["integrality"]),
            variable_names=tuple(names) if names else None,
        )


def cone_residual(cone: str, w: np.ndarray, order: int = 0) -> float:
    """Signed margin of w with respect to its cone (>= 0 iff member)."""
    if cone == ZERO:
        return -float(np.max(np.abs(w))) if len(w) else 0.0
    if cone == NONNEG:
        return float(np.min(w)) if len(w) else 0.0
    if cone == SOC:
        return float(w[0] - np.linalg.norm(w[1:]))
    if cone == PSD:
        return float(np.linalg.eigvalsh(smat(w, order))[0])
    raise ValueError(f"unknown cone tag {cone!r}")


def variable_indices(prog: ConeProgram, name: str) -> np.ndarray:
    """Indices of variables named ``name`` or ``name[k]``, in declaration order."""
    if prog.variable_names is None:
        raise ValueError("program carries no variable names")
    out = [
        j
        for j, nm in enumerate(prog.variable_names)
        if nm == name or nm.startswith(f"{name}[")
    ]
    return np.asarray(out, dtype=np.int64)


def check_solution(prog: ConeProgram, primal: np.ndarray) -> list[Residual]:
    """Per-block signed residuals of a primal point."""
    primal = np.asarray(primal, dtype=float)
    if primal.shape != (prog.n_vars,):
        raise ValueError(
            f"primal has shape {primal.shape}, expected ({prog.n_vars},)"
        )
    out = []
    for k, b in enumerate(prog.blocks):
        w = b.affine_value(primal)
        out.append(Residual(k, b.name, b.cone, cone_residual(b.cone, w, b.order)))
    return out


def min_residual(prog: ConeProgram, primal: np.ndarray) -> float:
    res = check_solution(prog, primal)
    return min((r.value for r in res), default=0.0)


class ConeProgramBuilder:
    """Single-owner builder; the built :class:`ConeProgram` is immutable."""

    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.sense = sense
        self._n_vars = 0
        self._names: list[str] = []
        self._obj: dict[int, float] = {}
        self._obj_const = 0.0
        self._blocks: list[Block] = []
        self._binary: set[int] = set()

    # -- variables ----------------------------------------------------------

    def add_vars(self, name: str, count: int) -> np.ndarray:
        idx = np.arange(self._n_vars, self._n_vars + count, dtype=np.int64)
        if count == 1:
            self._names.append(name)
        else:
            self._names.extend(f"{name}[{k}]" for k in range(count))
        self._n_vars += count
        return idx

    def add_var(self, name: str) -> int:
        return int(self.add_vars(name, 1)[0])

    def mark_binary(self, idx) -> None:
        for j in np.atleast_1d(np.asarray(idx, dtype=np.int64)):
            if j >= self._n_vars:
                raise ValueError(f"binary index {j} out of range")
            self._binary.add(int(j))

    def set_objective(self, expr: Aff) -> None:
        self._obj = {j: c for j, c in expr.terms.items() if c != 0.0}
        self._obj_const = expr.const

    # -- blocks -------------------------------------------------------------

    def add_block(self, cone: str, exprs: list[Aff], name: str = "", order: int = 0) -> int:
        """Add block ``[e(x) for e in exprs] in cone``; returns the block id."""
        if cone not in CONES:
            raise ValueError(f"unknown cone tag {cone!r}")
        if not exprs:
            raise ValueError("empty cone block")
        if cone == PSD and svec_dim(order) != len(exprs):
            raise ValueError("psd block length inconsistent with matrix order")
        rows, cols, vals = [], [], []
        offset = np.empty(len(exprs))
        for r, e in enumerate(exprs):
            c_idx, c_val, const = e.compact()
            if np.any(c_idx >= self._n_vars):
                raise ValueError("row references undeclared variable")
            rows.extend([r] * len(c_idx))
            cols.extend(c_idx.tolist())
            vals.extend(c_val.tolist())
            offset[r] = const
        blk = Block(
            cone=cone,
            dim=len(exprs),
            rows=np.asarray(rows, dtype=np.int64),
            cols=np.asarray(cols, dtype=np.int64),
            vals=np.asarray(vals, dtype=float),
            offset=offset,
            order=order,
            name=name,
        )
        self._blocks.append(blk)
        return len(self._blocks) - 1

    def add_nonneg(self, exprs: list[Aff], name: str = "") -> int:
        return self.add_block(NONNEG, exprs, name=name)

    def add_zero(self, exprs: list[Aff], name: str = "") -> int:
        return self.add_block(ZERO, exprs, name=name)

    def add_soc(self, exprs: list[Aff], name: str = "") -> int:
        return self.add_block(SOC, exprs, name=name)

    def add_psd(self, entries: dict[tuple[int, int], Aff], order: int, name: str = "") -> int:
        """PSD block from lower-triangle affine entries {(i, j): expr, j <= i}."""
        exprs = []
        for i, j in svec_entries(order):
            e = entries.get((i, j), Aff())
            exprs.append(e if i == j else e * np.sqrt(2.0))
        return self.add_block(PSD, exprs, name=name, order=order)

    def build(self) -> ConeProgram:
        cols = np.array(sorted(self._obj), dtype=np.int64)
        vals = np.array([self._obj[j] for j in cols], dtype=float)
        return ConeProgram(
            n_vars=self._n_vars,
            sense=self.sense,
            obj_cols=cols,
            obj_vals=vals,
            obj_const=self._obj_const,
            blocks=tuple(self._blocks),
            integrality=frozenset(self._binary),
            variable_names=tuple(self._names),
        )


def add_block(prog_builder: ConeProgramBuilder, affine_rows: list[Aff], cone: str, **kw) -> int:
    """Functional alias for :meth:`ConeProgramBuilder.add_block`."""
    return prog_builder.add_block(cone, affine_rows, **kw)
