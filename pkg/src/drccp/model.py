"""Domain types for distributionally robust joint chance-constrained
programs: empirical samples, Wasserstein balls, support sets, uncertain
constraint families, and the full problem record.

All types are immutable after construction (arrays are frozen); they are safe
to share across concurrent readers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

#: slack on minimum-eigenvalue checks of matrices required PSD
PSD_TOL = 1e-10
#: slack on support-membership checks of loaded samples
SUPPORT_TOL = 1e-9


def _frozen(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


class GroundNorm(enum.Enum):
    """Ground norm of the transport metric; dual pairing L1<->Linf, L2<->L2."""

    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @property
    def dual(self) -> "GroundNorm":
        return {GroundNorm.L1: GroundNorm.LINF,
                GroundNorm.L2: GroundNorm.L2,
                GroundNorm.LINF: GroundNorm.L1}[self]

    def value_of(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        if self is GroundNorm.L1:
            return float(np.sum(np.abs(v)))
        if self is GroundNorm.L2:
            return float(np.linalg.norm(v))
        return float(np.max(np.abs(v))) if v.size else 0.0


def dual_norm(v: np.ndarray, norm: GroundNorm) -> float:
    """Dual norm sup_{||xi|| <= 1} v^T xi of the ground norm."""
    return norm.dual.value_of(v)


@dataclass(frozen=True)
class SampleSet:
    """Empirical points backing the center of the ambiguity ball."""

    samples: np.ndarray  # (N, m)
    n_samples: int
    dim: int

    @staticmethod
    def from_array(samples) -> "SampleSet":
        arr = np.atleast_2d(np.asarray(samples, dtype=float))
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("samples must form a nonempty (N, m) array")
        return SampleSet(_frozen(arr), arr.shape[0], arr.shape[1])

    def __post_init__(self):
        if self.samples.shape != (self.n_samples, self.dim):
            raise ValueError("sample array shape inconsistent with (n_samples, dim)")


@dataclass(frozen=True)
class WassersteinBall:
    """Transport-distance ball of radius >= 0 around the empirical measure."""

    radius: float
    norm: GroundNorm
    center: SampleSet

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")


# -- support sets ------------------------------------------------------------


@dataclass(frozen=True)
class FullSpace:
    dim: int

    def contains(self, points: np.ndarray, tol: float = SUPPORT_TOL) -> np.ndarray:
        return np.ones(np.atleast_2d(points).shape[0], dtype=bool)


@dataclass(frozen=True)
class Polyhedron:
    """{xi : rows_k xi <= offsets_k}; offsets must be strictly positive so the
    set has 0 in its interior (the premise of the polyhedral epigraph dual)."""

    rows: np.ndarray      # (l, m)
    offsets: np.ndarray   # (l,)

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(np.atleast_2d(self.rows)))
        object.__setattr__(self, "offsets", _frozen(np.atleast_1d(self.offsets)))

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def contains(self, points, tol: float = SUPPORT_TOL) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all(pts @ self.rows.T <= self.offsets + tol, axis=1)


@dataclass(frozen=True)
class Ellipsoid:
    """{xi : (xi - center)^T shape^{-1} (xi - center) <= 1}, shape PD."""

    shape: np.ndarray     # (m, m)
    center: np.ndarray    # (m,)

    def __post_init__(self):
        object.__setattr__(self, "shape", _frozen(np.atleast_2d(self.shape)))
        object.__setattr__(self, "center", _frozen(np.atleast_1d(self.center)))

    @property
    def dim(self) -> int:
        return self.shape.shape[0]

    def shape_inv(self) -> np.ndarray:
        inv = np.linalg.inv(self.shape)
        return (inv + inv.T) / 2.0

    def contains(self, points, tol: float = SUPPORT_TOL) -> np.ndarray:
        pts = np.atleast_2d(points) - self.center
        quad = np.einsum("ij,jk,ik->i", pts, self.shape_inv(), pts)
        return quad <= 1.0 + tol


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen(np.atleast_1d(self.lower)))
        object.__setattr__(self, "upper", _frozen(np.atleast_1d(self.upper)))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, points, tol: float = SUPPORT_TOL) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lower - tol) & (pts <= self.upper + tol), axis=1)


SupportSet = FullSpace | Polyhedron | Ellipsoid | Box


# -- constraint-function families --------------------------------------------


@dataclass(frozen=True)
class AffineBoth:
    """f(x, xi) = (A x + a)^T xi + b^T x + h, affine in both arguments."""

    A: np.ndarray   # (m, n)
    a: np.ndarray   # (m,)
    b: np.ndarray   # (n,)
    h: float

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(np.atleast_2d(self.A)))
        object.__setattr__(self, "a", _frozen(np.atleast_1d(self.a)))
        object.__setattr__(self, "b", _frozen(np.atleast_1d(self.b)))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def xi_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self.a

    def evaluate(self, x: np.ndarray, xi: np.ndarray) -> float:
        return float(self.xi_gradient(x) @ xi + self.b @ x + self.h)


@dataclass(frozen=True)
class QuadraticXi:
    """f(x, xi) = xi^T x + <A, xi xi^T> + b^T x + h with A PSD (forces m = n,
    since xi pairs with x directly)."""

    A: np.ndarray   # (m, m)
    b: np.ndarray   # (n,)
    h: float

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(np.atleast_2d(self.A)))
        object.__setattr__(self, "b", _frozen(np.atleast_1d(self.b)))

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def evaluate(self, x: np.ndarray, xi: np.ndarray) -> float:
        return float(xi @ x + xi @ self.A @ xi + self.b @ x + self.h)


@dataclass(frozen=True)
class BilinearQuadratic:
    """f(x, xi) = w(xi)^T x with w_j(xi) = xi^T W_j xi + r_j^T xi + h_j,
    each W_j PSD."""

    W: np.ndarray   # (n, m, m)
    r: np.ndarray   # (n, m)
    h: np.ndarray   # (n,)

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(self.W))
        object.__setattr__(self, "r", _frozen(np.atleast_2d(self.r)))
        object.__setattr__(self, "h", _frozen(np.atleast_1d(self.h)))

    @property
    def m(self) -> int:
        return self.W.shape[1]

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def weights(self, xi: np.ndarray) -> np.ndarray:
        return np.einsum("jkl,k,l->j", self.W, xi, xi) + self.r @ xi + self.h

    def evaluate(self, x: np.ndarray, xi: np.ndarray) -> float:
        return float(self.weights(xi) @ x)


ConstraintFunction = AffineBoth | QuadraticXi | BilinearQuadratic


def evaluate_constraint(f: ConstraintFunction, x, xi) -> float:
    """Evaluate one uncertain row f(x, xi); raises on dimension mismatch."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.shape != (f.n,):
        raise ValueError(f"x has shape {x.shape}, constraint expects ({f.n},)")
    if xi.shape != (f.m,):
        raise ValueError(f"xi has shape {xi.shape}, constraint expects ({f.m},)")
    return f.evaluate(x, xi)


# -- decision domains ---------------------------------------------------------


@dataclass(frozen=True)
class BinaryDomain:
    n: int


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen(np.atleast_1d(self.lower)))
        object.__setattr__(self, "upper", _frozen(np.atleast_1d(self.upper)))

    @property
    def n(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class LinearDomain:
    """{x : A x <= rhs}."""

    A: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(np.atleast_2d(self.A)))
        object.__setattr__(self, "rhs", _frozen(np.atleast_1d(self.rhs)))

    @property
    def n(self) -> int:
        return self.A.shape[1]


Domain = BinaryDomain | BoxDomain | LinearDomain


@dataclass(frozen=True)
class DrccpProblem:
    """Full problem record: optimize c^T x over the domain subject to all T
    uncertain rows holding jointly with probability >= 1 - risk under every
    distribution in the ambiguity ball."""

    objective: np.ndarray
    domain: Domain
    constraints: tuple[ConstraintFunction, ...]
    risk: float
    ball: WassersteinBall
    support: SupportSet
    sense: str = "min"

    def __post_init__(self):
        object.__setattr__(self, "objective", _frozen(np.atleast_1d(self.objective)))
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def n(self) -> int:
        return self.objective.shape[0]

    @property
    def m(self) -> int:
        return self.support.dim

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    @property
    def variant(self) -> type:
        return type(self.constraints[0]) if self.constraints else AffineBoth


def _min_eig(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh((mat + mat.T) / 2.0)[0])


def _check_symmetric(mat: np.ndarray, what: str, out: list[str]) -> None:
    if not np.allclose(mat, mat.T, atol=1e-12, rtol=0.0):
        out.append(f"{what} is not symmetric")


def validate_problem(p: DrccpProblem) -> list[str]:
    """Structural diagnostics; empty list iff every invariant holds."""
    diags: list[str] = []
    n, m = p.n, p.m

    if not (0.0 < p.risk < 1.0):
        diags.append(f"risk level {p.risk} outside (0, 1)")
    if p.sense not in ("min", "max"):
        diags.append(f"sense {p.sense!r} must be 'min' or 'max'")
    if p.ball.radius < 0:
        diags.append("ball radius is negative")
    if len(p.constraints) < 1:
        diags.append("problem needs at least one uncertain constraint row")

    variants = {type(f) for f in p.constraints}
    if len(variants) > 1:
        names = sorted(v.__name__ for v in variants)
        diags.append(f"mixed constraint variants {names}; rows must share one family")

    center = p.ball.center
    if center.dim != m:
        diags.append(f"sample dim {center.dim} does not match support dim {m}")
    else:
        inside = p.support.contains(center.samples)
        for i in np.nonzero(~inside)[0]:
            diags.append(f"sample {i} lies outside the declared support set")

    # domain shape
    if p.domain.n != n:
        diags.append(f"domain dimension {p.domain.n} does not match objective length {n}")
    if isinstance(p.domain, BoxDomain) and np.any(p.domain.lower > p.domain.upper):
        diags.append("domain box has lower > upper")

    # support-specific invariants
    if isinstance(p.support, Polyhedron):
        if np.any(p.support.offsets <= 0):
            bad = int(np.nonzero(p.support.offsets <= 0)[0][0])
            diags.append(
                f"polyhedral support offset d[{bad}] <= 0; strictly positive offsets required"
            )
    elif isinstance(p.support, Ellipsoid):
        _check_symmetric(p.support.shape, "ellipsoid shape matrix", diags)
        if _min_eig(p.support.shape) <= 0:
            diags.append("ellipsoid shape matrix is not positive definite")
    elif isinstance(p.support, Box):
        if np.any(p.support.lower > p.support.upper):
            diags.append("box support has lower > upper")

    # row-family invariants
    for t, f in enumerate(p.constraints):
        if f.m != m:
            diags.append(f"constraint {t}: uncertainty dim {f.m} != support dim {m}")
        if f.n != n:
            diags.append(f"constraint {t}: decision dim {f.n} != objective length {n}")
        if isinstance(f, AffineBoth):
            if f.a.shape != (f.m,) or f.b.shape != (f.n,):
                diags.append(f"constraint {t}: inconsistent coefficient shapes")
        elif isinstance(f, QuadraticXi):
            if f.m != f.n:
                diags.append(f"constraint {t}: quadratic row requires m = n, got m={f.m} n={f.n}")
            _check_symmetric(f.A, f"constraint {t} quadratic matrix", diags)
            if _min_eig(f.A) < -PSD_TOL:
                diags.append(f"constraint {t}: quadratic matrix has eigenvalue < -{PSD_TOL}")
        elif isinstance(f, BilinearQuadratic):
            if f.W.ndim != 3 or f.W.shape != (f.n, f.m, f.m):
                diags.append(f"constraint {t}: weight tensor shape {f.W.shape} invalid")
            else:
                for j in range(f.n):
                    _check_symmetric(f.W[j], f"constraint {t} weight matrix {j}", diags)
                    if _min_eig(f.W[j]) < -PSD_TOL:
                        diags.append(
                            f"constraint {t}: weight matrix {j} has eigenvalue < -{PSD_TOL}"
                        )
    return diags
