"""Compilers from problem records to cone programs.

Five builders are provided:

- ``build_robust_membership``: the all-scenarios robust counterpart (every
  uncertain row must hold for every support point).
- ``build_cvar_relaxation``: the convex worst-case-CVaR relaxation with
  per-sample epigraph certificates; quadratic rows on polyhedral or
  ellipsoidal supports go through linear-matrix-inequality epigraphs built
  by Lagrangian dualization of the inner concave maximization.
- ``build_binary_cvar_mip``: the mixed-integer convex inner approximation
  for binary decisions and affine rows, with the bilinear products
  alpha_t * x linearized exactly by McCormick envelopes.
- ``build_saa_milp``: the empirical (zero-radius) chance-constraint big-M
  MILP, for transportation instances or generic affine problems.
- ``build_transport_cvar_lp``: the all-continuous LP form of the CVaR model
  for the two-stage transportation problem on a box support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conic import Aff, ConeProgram, ConeProgramBuilder
from .model import (
    AffineBoth,
    BilinearQuadratic,
    BinaryDomain,
    Box,
    BoxDomain,
    DrccpProblem,
    Ellipsoid,
    FullSpace,
    GroundNorm,
    LinearDomain,
    Polyhedron,
    QuadraticXi,
    validate_problem,
)

#: conic solvers need closed sets; alpha > 0 is realized as alpha >= ALPHA_MIN
ALPHA_MIN = 1e-9

#: fallback cap when a row's multiplier bound is certified only as +inf
ALPHA_CAP = 1e8


class UnsupportedReformulation(ValueError):
    pass


def _validated(problem: DrccpProblem) -> DrccpProblem:
    diags = validate_problem(problem)
    if diags:
        raise ValueError("invalid problem: " + "; ".join(diags))
    return problem


def _add_domain_rows(bld: ConeProgramBuilder, domain, x: np.ndarray) -> None:
    if isinstance(domain, BinaryDomain):
        bld.add_nonneg([Aff.var(j) for j in x], name="x_lower")
        bld.add_nonneg([1.0 - Aff.var(j) for j in x], name="x_upper")
        bld.mark_binary(x)
    elif isinstance(domain, BoxDomain):
        lo_rows = [Aff.var(j) - lo for j, lo in zip(x, domain.lower) if np.isfinite(lo)]
        up_rows = [up - Aff.var(j) for j, up in zip(x, domain.upper) if np.isfinite(up)]
        if lo_rows:
            bld.add_nonneg(lo_rows, name="x_lower")
        if up_rows:
            bld.add_nonneg(up_rows, name="x_upper")
    elif isinstance(domain, LinearDomain):
        rows = [
            domain.rhs[r] - Aff.dot(x, domain.A[r])
            for r in range(domain.A.shape[0])
        ]
        bld.add_nonneg(rows, name="x_linear")
    else:
        raise UnsupportedReformulation(f"unknown domain type {type(domain).__name__}")


def _domain_lower_bounds(domain) -> np.ndarray:
    if isinstance(domain, BinaryDomain):
        return np.zeros(domain.n)
    if isinstance(domain, BoxDomain):
        return np.asarray(domain.lower)
    return np.full(domain.n, -np.inf)


def _add_dual_norm_epigraph(
    bld: ConeProgramBuilder, w: Aff, vec: list[Aff], ground: GroundNorm, name: str
) -> None:
    """Rows enforcing w >= ||vec||_* for the dual of the ground norm."""
    dual = ground.dual
    if dual is GroundNorm.L2:
        bld.add_soc([w] + vec, name=name)
    elif dual is GroundNorm.LINF:
        rows = []
        for e in vec:
            rows.append(w - e)
            rows.append(w + e)
        bld.add_nonneg(rows, name=name)
    else:  # dual L1: split components through p >= |vec_r|
        p = bld.add_vars(f"{name}.abs", len(vec))
        rows = []
        for pj, e in zip(p, vec):
            rows.append(Aff.var(pj) - e)
            rows.append(Aff.var(pj) + e)
        rows.append(w - sum((Aff.var(pj) for pj in p), Aff()))
        bld.add_nonneg(rows, name=name)


# ---------------------------------------------------------------------------
# robust counterpart (the "always feasible" branch of the disjunction)
# ---------------------------------------------------------------------------


def build_robust_membership(problem: DrccpProblem) -> ConeProgram:
    """Rows demanding f_t(x, xi) >= 0 for every xi in the support."""
    if not problem.constraints:
        # no uncertain rows: trivially feasible, domain-only program
        bld = ConeProgramBuilder(sense=problem.sense)
        x = bld.add_vars("x", problem.n)
        bld.set_objective(Aff.dot(x, problem.objective))
        _add_domain_rows(bld, problem.domain, x)
        return bld.build()
    _validated(problem)
    if problem.variant is not AffineBoth:
        raise UnsupportedReformulation(
            "robust counterpart is only available for affine rows"
        )
    support = problem.support
    bld = ConeProgramBuilder(sense=problem.sense)
    x = bld.add_vars("x", problem.n)
    bld.set_objective(Aff.dot(x, problem.objective))
    _add_domain_rows(bld, problem.domain, x)

    for t, f in enumerate(problem.constraints):
        grad = [Aff.dot(x, f.A[r]) + f.a[r] for r in range(f.m)]  # A x + a, per component
        const = Aff.dot(x, f.b) + f.h
        if isinstance(support, FullSpace):
            # min over all xi is -inf unless the gradient vanishes
            bld.add_zero(grad, name=f"robust[{t}].grad")
            bld.add_nonneg([const], name=f"robust[{t}].const")
        elif isinstance(support, Box):
            # min over the box via splitting the gradient into +/- parts
            eta = bld.add_vars(f"robust[{t}].eta", f.m)
            theta = bld.add_vars(f"robust[{t}].theta", f.m)
            bld.add_zero(
                [Aff.var(theta[r]) - Aff.var(eta[r]) - grad[r] for r in range(f.m)],
                name=f"robust[{t}].split",
            )
            bld.add_nonneg(
                [Aff.var(j) for j in eta] + [Aff.var(j) for j in theta],
                name=f"robust[{t}].mult",
            )
            worst = sum(
                (Aff.var(theta[r]) * support.lower[r] - Aff.var(eta[r]) * support.upper[r]
                 for r in range(f.m)),
                Aff(),
            )
            bld.add_nonneg([worst + const], name=f"robust[{t}].value")
        elif isinstance(support, Polyhedron):
            # LP dual of min grad^T xi over {rows xi <= offsets}
            l = support.rows.shape[0]
            nu = bld.add_vars(f"robust[{t}].nu", l)
            bld.add_zero(
                [
                    sum((Aff.var(nu[k]) * support.rows[k, r] for k in range(l)), Aff())
                    + grad[r]
                    for r in range(f.m)
                ],
                name=f"robust[{t}].stationarity",
            )
            bld.add_nonneg([Aff.var(j) for j in nu], name=f"robust[{t}].mult")
            worst = -sum((Aff.var(nu[k]) * support.offsets[k] for k in range(l)), Aff())
            bld.add_nonneg([worst + const], name=f"robust[{t}].value")
        else:
            raise UnsupportedReformulation(
                "robust counterpart supports full-space, box, or polyhedral supports"
            )
    return bld.build()


# ---------------------------------------------------------------------------
# worst-case CVaR relaxation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CvarCertificate:
    """Auxiliary variables of a CVaR-relaxation solution."""

    alpha: np.ndarray          # (T,)
    v: np.ndarray              # (N, T, m)
    q: np.ndarray              # (N, T)
    u: np.ndarray | None       # (N, T) epigraph values (quadratic rows only)
    nu: np.ndarray | None      # (N, T, l) or (N, T) support multipliers


@dataclass(frozen=True)
class CvarLayout:
    """Index map from program variables to certificate fields."""

    n: int
    n_samples: int
    n_rows: int
    m: int
    x: np.ndarray
    alpha: np.ndarray
    q: np.ndarray                  # (N, T)
    v: np.ndarray | None           # (N, T, m); None when eliminated analytically
    u: np.ndarray | None
    nu: np.ndarray | None
    affine_rows: tuple | None = None  # constraints, for reconstructing eliminated v

    def extract(self, primal: np.ndarray) -> CvarCertificate:
        x = primal[self.x]
        alpha = primal[self.alpha]
        q = primal[self.q]
        if self.v is not None:
            v = primal[self.v]
        else:
            v = np.empty((self.n_samples, self.n_rows, self.m))
            for t, f in enumerate(self.affine_rows):
                v[:, t, :] = f.xi_gradient(x)
        u = primal[self.u] if self.u is not None else None
        nu = primal[self.nu] if self.nu is not None else None
        return CvarCertificate(alpha, v, q, u, nu)


class _CvarContext:
    """Shared state handed to the per-(i, t) epigraph emitters."""

    def __init__(self, bld, problem, x, alpha, q, v, u, nu):
        self.bld = bld
        self.problem = problem
        self.x = x
        self.alpha = alpha
        self.q = q
        self.v = v
        self.u = u
        self.nu = nu
        support = problem.support
        if isinstance(support, Ellipsoid):
            self.w_inv = support.shape_inv()
            self.w_inv_center = self.w_inv @ support.center
            self.center_quad = float(support.center @ self.w_inv_center)


def _lmi_entries_polyhedral(f, support, v_exprs, x_exprs, nu_exprs, u_expr):
    """Lower-triangle entries of the dualized epigraph matrix for quadratic
    rows on a polyhedron: constant top-left A, off-diagonal
    -(v - x - sum_k nu_k a_k)/2, corner u - sum_k nu_k d_k."""
    m = f.m
    l = support.rows.shape[0]
    entries: dict[tuple[int, int], Aff] = {}
    for r in range(m):
        for s in range(r + 1):
            entries[(r, s)] = Aff.const_(f.A[r, s])
    for r in range(m):
        e = v_exprs[r] * -0.5 + x_exprs[r] * 0.5
        for k in range(l):
            if support.rows[k, r] != 0.0:
                e = e + nu_exprs[k] * (0.5 * support.rows[k, r])
        entries[(m, r)] = e
    corner = u_expr
    for k in range(l):
        corner = corner - nu_exprs[k] * support.offsets[k]
    entries[(m, m)] = corner
    return entries


def _lmi_entries_ellipsoidal(f, w_inv, w_inv_center, center_quad, v_exprs, x_exprs, nu_expr, u_expr):
    """Entries for quadratic rows on an ellipsoid: top-left A + nu W^{-1},
    off-diagonal -(2 nu W^{-1} xi0 + v - x)/2, corner u + nu (xi0^T W^{-1} xi0 - 1)."""
    m = f.m
    entries: dict[tuple[int, int], Aff] = {}
    for r in range(m):
        for s in range(r + 1):
            entries[(r, s)] = Aff.const_(f.A[r, s]) + nu_expr * w_inv[r, s]
    for r in range(m):
        entries[(m, r)] = v_exprs[r] * -0.5 + x_exprs[r] * 0.5 - nu_expr * w_inv_center[r]
    entries[(m, m)] = u_expr + nu_expr * (center_quad - 1.0)
    return entries


def _lmi_entries_bilinear(f, w_inv, w_inv_center, center_quad, v_exprs, x_exprs, nu_expr, u_expr):
    """Entries for bilinear rows on an ellipsoid; the top-left block
    sum_j x_j W_j + nu W^{-1} is affine in (x, nu)."""
    m, n = f.m, f.n
    entries: dict[tuple[int, int], Aff] = {}
    for r in range(m):
        for s in range(r + 1):
            e = nu_expr * w_inv[r, s]
            for j in range(n):
                if f.W[j, r, s] != 0.0:
                    e = e + x_exprs[j] * f.W[j, r, s]
            entries[(r, s)] = e
    for r in range(m):
        e = v_exprs[r] * -0.5 - nu_expr * w_inv_center[r]
        for j in range(n):
            if f.r[j, r] != 0.0:
                e = e + x_exprs[j] * (0.5 * f.r[j, r])
        entries[(m, r)] = e
    entries[(m, m)] = u_expr + nu_expr * (center_quad - 1.0)
    return entries


def _add_value_row(ctx, i, t, offset_expr, u):
    """(value row) q_it >= u_it - offset(x) + alpha_t - v_it^T zeta^i."""
    zeta = ctx.problem.ball.center.samples[i]
    ctx.bld.add_nonneg(
        [
            Aff.var(ctx.q[i, t])
            + offset_expr
            - Aff.var(ctx.alpha[t])
            + Aff.dot(ctx.v[i, t], zeta)
            - u
        ],
        name=f"cvar.value[{i},{t}]",
    )


def lmi_epigraph_polyhedral(ctx: _CvarContext, i: int, t: int) -> int:
    """Epigraph of the inner concave maximization over a polyhedral support,
    dualized against the support rows; returns the PSD block id."""
    f = ctx.problem.constraints[t]
    u = Aff.var(ctx.u[i, t])
    nu = [Aff.var(j) for j in ctx.nu[i, t]]
    _add_value_row(ctx, i, t, Aff.dot(ctx.x, f.b) + f.h, u)
    ctx.bld.add_nonneg(nu, name=f"cvar.nu[{i},{t}]")
    entries = _lmi_entries_polyhedral(
        f, ctx.problem.support,
        [Aff.var(j) for j in ctx.v[i, t]], [Aff.var(j) for j in ctx.x], nu, u,
    )
    return ctx.bld.add_psd(entries, order=f.m + 1, name=f"cvar.lmi[{i},{t}]")


def lmi_epigraph_ellipsoidal(ctx: _CvarContext, i: int, t: int) -> int:
    """Same epigraph with a single multiplier against the ellipsoid."""
    f = ctx.problem.constraints[t]
    u = Aff.var(ctx.u[i, t])
    nu = Aff.var(ctx.nu[i, t])
    _add_value_row(ctx, i, t, Aff.dot(ctx.x, f.b) + f.h, u)
    ctx.bld.add_nonneg([nu], name=f"cvar.nu[{i},{t}]")
    entries = _lmi_entries_ellipsoidal(
        f, ctx.w_inv, ctx.w_inv_center, ctx.center_quad,
        [Aff.var(j) for j in ctx.v[i, t]], [Aff.var(j) for j in ctx.x], nu, u,
    )
    return ctx.bld.add_psd(entries, order=f.m + 1, name=f"cvar.lmi[{i},{t}]")


def lmi_epigraph_bilinear(ctx: _CvarContext, i: int, t: int) -> int:
    """Epigraph for bilinear rows w_t(xi)^T x on an ellipsoid."""
    f = ctx.problem.constraints[t]
    u = Aff.var(ctx.u[i, t])
    nu = Aff.var(ctx.nu[i, t])
    _add_value_row(ctx, i, t, Aff.dot(ctx.x, f.h), u)
    ctx.bld.add_nonneg([nu], name=f"cvar.nu[{i},{t}]")
    entries = _lmi_entries_bilinear(
        f, ctx.w_inv, ctx.w_inv_center, ctx.center_quad,
        [Aff.var(j) for j in ctx.v[i, t]], [Aff.var(j) for j in ctx.x], nu, u,
    )
    return ctx.bld.add_psd(entries, order=f.m + 1, name=f"cvar.lmi[{i},{t}]")


def build_epigraph_probe(constraint, support, x_value, v_value) -> ConeProgram:
    """Standalone ``min u`` over one epigraph matrix with x and v pinned.

    The optimum equals the inner concave maximization of the scenario
    functional over the support, which makes the dualization directly
    checkable against an independent maximizer.
    """
    x_value = np.asarray(x_value, dtype=float)
    v_value = np.asarray(v_value, dtype=float)
    bld = ConeProgramBuilder(sense="min")
    u_idx = bld.add_var("epi")
    u = Aff.var(u_idx)
    bld.set_objective(u)
    v_exprs = [Aff.const_(val) for val in v_value]
    x_exprs = [Aff.const_(val) for val in x_value]
    if isinstance(constraint, QuadraticXi) and isinstance(support, Polyhedron):
        nu = [Aff.var(j) for j in bld.add_vars("nu", support.rows.shape[0])]
        bld.add_nonneg(nu, name="nu")
        entries = _lmi_entries_polyhedral(constraint, support, v_exprs, x_exprs, nu, u)
    elif isinstance(constraint, QuadraticXi) and isinstance(support, Ellipsoid):
        nu = Aff.var(bld.add_var("nu"))
        bld.add_nonneg([nu], name="nu")
        w_inv = support.shape_inv()
        wc = w_inv @ support.center
        entries = _lmi_entries_ellipsoidal(
            constraint, w_inv, wc, float(support.center @ wc), v_exprs, x_exprs, nu, u
        )
    elif isinstance(constraint, BilinearQuadratic) and isinstance(support, Ellipsoid):
        nu = Aff.var(bld.add_var("nu"))
        bld.add_nonneg([nu], name="nu")
        w_inv = support.shape_inv()
        wc = w_inv @ support.center
        entries = _lmi_entries_bilinear(
            constraint, w_inv, wc, float(support.center @ wc), v_exprs, x_exprs, nu, u
        )
    else:
        raise UnsupportedReformulation(
            f"no epigraph construction for ({type(constraint).__name__}, "
            f"{type(support).__name__})"
        )
    bld.add_psd(entries, order=constraint.m + 1, name="lmi")
    return bld.build()


def build_cvar_relaxation(problem: DrccpProblem) -> tuple[ConeProgram, CvarLayout]:
    """Convex relaxation of the worst-case CVaR inner approximation.

    Supported (row family, support) pairs: affine rows on full space (the
    scenario gradients are eliminated analytically), quadratic rows on a
    polyhedron or an ellipsoid, and bilinear rows on an ellipsoid with a
    nonnegative decision domain.

    The relaxation is exact for a single uncertain row; with several rows it
    relaxes the CVaR set, so on binary domains (where integrality marks are
    emitted) prefer :func:`build_binary_cvar_mip`, which is exact for
    affine rows.
    """
    _validated(problem)
    variant = problem.variant
    support = problem.support
    N = problem.ball.center.n_samples
    T = problem.n_rows
    m = problem.m
    n = problem.n
    eps = problem.risk
    delta = problem.ball.radius
    samples = problem.ball.center.samples
    norm = problem.ball.norm

    bld = ConeProgramBuilder(sense=problem.sense)
    x = bld.add_vars("x", n)
    alpha = bld.add_vars("alpha", T)
    q = bld.add_vars("q", N * T).reshape(N, T)
    bld.set_objective(Aff.dot(x, problem.objective))
    _add_domain_rows(bld, problem.domain, x)
    bld.add_nonneg([Aff.var(a) - ALPHA_MIN for a in alpha], name="alpha_min")
    bld.add_nonneg([Aff.var(j) for j in q.ravel()], name="q_nonneg")

    if variant is AffineBoth and isinstance(support, FullSpace):
        # gradient matching pins the scenario vector to A^t x + a^t, so the
        # norm row collapses to one epigraph per row
        w = bld.add_vars("normbound", T)
        for t, f in enumerate(problem.constraints):
            grad = [Aff.dot(x, f.A[r]) + f.a[r] for r in range(m)]
            _add_dual_norm_epigraph(bld, Aff.var(w[t]), grad, norm, f"cvar.norm[{t}]")
            qsum = Aff.dot(q[:, t], np.full(N, 1.0 / N))
            bld.add_nonneg(
                [Aff.var(alpha[t], eps) - Aff.var(w[t], delta) - qsum],
                name=f"cvar.budget[{t}]",
            )
            rows = []
            for i in range(N):
                fval = Aff.dot(x, f.A.T @ samples[i] + f.b) + float(f.a @ samples[i] + f.h)
                rows.append(Aff.var(q[i, t]) + fval - Aff.var(alpha[t]))
            bld.add_nonneg(rows, name=f"cvar.value[{t}]")
        layout = CvarLayout(
            n, N, T, m, x, alpha, q, None, None, None, tuple(problem.constraints)
        )
        return bld.build(), layout

    if variant is QuadraticXi and isinstance(support, (Polyhedron, Ellipsoid)):
        emitter = (
            lmi_epigraph_polyhedral
            if isinstance(support, Polyhedron)
            else lmi_epigraph_ellipsoidal
        )
        l = support.rows.shape[0] if isinstance(support, Polyhedron) else 1
    elif variant is BilinearQuadratic and isinstance(support, Ellipsoid):
        lo = _domain_lower_bounds(problem.domain)
        if np.any(lo < 0):
            raise UnsupportedReformulation(
                "bilinear rows need a nonnegative decision domain: the weighted "
                "matrix sum inside the PSD block is only certified PSD for x >= 0"
            )
        emitter = lmi_epigraph_bilinear
        l = 1
    else:
        raise UnsupportedReformulation(
            f"no conic epigraph construction for ({variant.__name__}, "
            f"{type(support).__name__}); supported: affine rows on full space, "
            "quadratic rows on a polyhedron or ellipsoid, bilinear rows on an ellipsoid"
        )

    v = bld.add_vars("v", N * T * m).reshape(N, T, m)
    u = bld.add_vars("epi", N * T).reshape(N, T)
    if isinstance(support, Polyhedron):
        nu = bld.add_vars("nu", N * T * l).reshape(N, T, l)
    else:
        nu = bld.add_vars("nu", N * T).reshape(N, T)
    w = bld.add_vars("normbound", N * T).reshape(N, T)

    ctx = _CvarContext(bld, problem, x, alpha, q, v, u, nu)
    for i in range(N):
        for t in range(T):
            vec = [Aff.var(j) for j in v[i, t]]
            _add_dual_norm_epigraph(bld, Aff.var(w[i, t]), vec, norm, f"cvar.norm[{i},{t}]")
            qsum = Aff.dot(q[:, t], np.full(N, 1.0 / N))
            bld.add_nonneg(
                [Aff.var(alpha[t], eps) - Aff.var(w[i, t], delta) - qsum],
                name=f"cvar.budget[{i},{t}]",
            )
            emitter(ctx, i, t)
    layout = CvarLayout(n, N, T, m, x, alpha, q, v, u, nu)
    return bld.build(), layout


# ---------------------------------------------------------------------------
# multiplier bound and the binary mixed-integer model
# ---------------------------------------------------------------------------


def _binary_gamma(f: AffineBoth, norm: GroundNorm, n: int) -> float:
    """min over binary x with A x + a != 0 of the dual norm ||A x + a||_*.

    Exact by enumeration for n <= 20 (chunked); a structure fast path covers
    selector-style rows (a = 0, orthogonal columns, euclidean ground norm).
    Returns +inf when the gradient vanishes for every binary x.
    """
    dual = norm.dual
    A, a = f.A, f.a

    if not np.any(a) and dual is GroundNorm.L2:
        gram = A.T @ A
        if np.allclose(gram - np.diag(np.diag(gram)), 0.0, atol=1e-14):
            col_norms = np.sqrt(np.diag(gram))
            nz = col_norms[col_norms > 0]
            return float(np.min(nz)) if len(nz) else math.inf

    if n <= 20:
        best = math.inf
        chunk = 1 << min(n, 14)
        total = 1 << n
        bits = np.arange(n)
        for start in range(0, total, chunk):
            codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
            X = ((codes[:, None] >> bits[None, :]) & 1).astype(float)
            G = X @ A.T + a  # (chunk, m)
            if dual is GroundNorm.L2:
                norms = np.linalg.norm(G, axis=1)
            elif dual is GroundNorm.LINF:
                norms = np.max(np.abs(G), axis=1)
            else:
                norms = np.sum(np.abs(G), axis=1)
            nz = norms[norms > 0]
            if len(nz):
                best = min(best, float(np.min(nz)))
        return best

    # interval-arithmetic lower bound: any dual norm dominates the max-abs
    # component, and each component of A x + a stays in [lo_r, hi_r]
    lo = np.where(A > 0, 0.0, A).sum(axis=1) + a
    hi = np.where(A > 0, A, 0.0).sum(axis=1) + a
    per_comp = np.maximum(np.maximum(lo, -hi), 0.0)
    bound = float(np.max(per_comp)) if len(per_comp) else 0.0
    if bound <= 0.0:
        raise UnsupportedReformulation(
            "cannot certify a positive lower bound on the row gradient norm "
            "for n > 20; pass an explicit multiplier bound"
        )
    return bound


def compute_alpha_bound(problem: DrccpProblem) -> np.ndarray:
    """Valid upper bounds M_t = eps / (delta * gamma_t) on the row multipliers.

    gamma_t is the smallest dual norm of a nonvanishing row gradient over the
    binary cube.  Rows whose gradient vanishes identically are exempt and get
    +inf (capped later).  Requires a positive radius.
    """
    if problem.ball.radius <= 0:
        raise ValueError(
            "multiplier bound needs a positive radius; use the empirical (SAA) model at radius 0"
        )
    if problem.variant is not AffineBoth or not isinstance(problem.domain, BinaryDomain):
        raise UnsupportedReformulation(
            "multiplier bound applies to affine rows with a binary domain"
        )
    out = np.empty(problem.n_rows)
    for t, f in enumerate(problem.constraints):
        gamma = _binary_gamma(f, problem.ball.norm, problem.n)
        out[t] = (
            math.inf
            if not np.isfinite(gamma)
            else problem.risk / (problem.ball.radius * gamma)
        )
    return out


@dataclass(frozen=True)
class BinaryCvarCertificate:
    lam: float
    s: np.ndarray        # (N,)
    alpha: np.ndarray    # (T,)
    y: np.ndarray        # (T, n) linearized alpha_t * x
    M: np.ndarray        # (T,) multiplier upper bounds


@dataclass(frozen=True)
class BinaryCvarLayout:
    n: int
    n_samples: int
    n_rows: int
    x: np.ndarray
    lam: int
    s: np.ndarray
    alpha: np.ndarray
    y: np.ndarray        # (T, n)
    M: np.ndarray

    def extract(self, primal: np.ndarray) -> BinaryCvarCertificate:
        return BinaryCvarCertificate(
            float(primal[self.lam]),
            primal[self.s],
            primal[self.alpha],
            primal[self.y],
            self.M,
        )


def build_binary_cvar_mip(
    problem: DrccpProblem, alpha_bound: np.ndarray | None = None
) -> tuple[ConeProgram, BinaryCvarLayout]:
    """Mixed-integer convex inner approximation for binary affine problems.

    The scenario vectors are eliminated analytically (on full-space support
    the inner maximization is finite only at the row gradient), so the model
    carries one norm row per uncertain row and McCormick boxes tying
    y^t = alpha_t * x, exact at binary points.
    """
    _validated(problem)
    if problem.variant is not AffineBoth:
        raise UnsupportedReformulation("binary model needs affine rows")
    if not isinstance(problem.domain, BinaryDomain):
        raise UnsupportedReformulation("binary model needs a binary domain")
    if not isinstance(problem.support, FullSpace):
        raise UnsupportedReformulation("binary model needs full-space support")
    if problem.ball.radius <= 0:
        raise ValueError("binary model needs a positive radius; use the SAA model at radius 0")

    N = problem.ball.center.n_samples
    T = problem.n_rows
    n = problem.n
    samples = problem.ball.center.samples
    M = np.asarray(alpha_bound, dtype=float) if alpha_bound is not None else compute_alpha_bound(problem)
    if M.shape != (T,):
        raise ValueError(f"alpha_bound must have shape ({T},)")
    M = np.where(np.isfinite(M), M, ALPHA_CAP)

    bld = ConeProgramBuilder(sense=problem.sense)
    x = bld.add_vars("x", n)
    lam = bld.add_var("lam")
    alpha = bld.add_vars("alpha", T)
    y = bld.add_vars("y", T * n).reshape(T, n)
    s = bld.add_vars("s", N)
    bld.set_objective(Aff.dot(x, problem.objective))
    _add_domain_rows(bld, problem.domain, x)
    bld.add_nonneg(
        [Aff.var(lam)] + [Aff.var(a) for a in alpha] + [Aff.var(j) for j in s],
        name="signs",
    )
    bld.add_nonneg(
        [problem.risk - Aff.var(lam, problem.ball.radius) - Aff.dot(s, np.full(N, 1.0 / N))],
        name="budget",
    )

    for t, f in enumerate(problem.constraints):
        # scenario rows: f_hat((alpha_t, y^t), zeta^i) >= 1 - s_i
        rows = []
        for i in range(N):
            zeta = samples[i]
            coeff_y = f.A.T @ zeta + f.b
            coeff_a = float(f.a @ zeta + f.h)
            rows.append(
                Aff.dot(y[t], coeff_y)
                + Aff.var(alpha[t], coeff_a)
                + Aff.var(s[i])
                - 1.0
            )
        bld.add_nonneg(rows, name=f"scenario[{t}]")
        # McCormick box for y^t = alpha_t x
        rows = []
        for r in range(n):
            rows.append(Aff.var(y[t, r]))
            rows.append(Aff.var(x[r], M[t]) - Aff.var(y[t, r]))
            rows.append(Aff.var(y[t, r]) - Aff.var(alpha[t]) + M[t] - Aff.var(x[r], M[t]))
            rows.append(Aff.var(alpha[t]) - Aff.var(y[t, r]))
        bld.add_nonneg(rows, name=f"mccormick[{t}]")
        # norm row ||A^t y^t + a^t alpha_t||_* <= lam
        vec = [
            Aff.dot(y[t], f.A[r]) + Aff.var(alpha[t], f.a[r]) for r in range(f.m)
        ]
        _add_dual_norm_epigraph(bld, Aff.var(lam), vec, problem.ball.norm, f"norm[{t}]")

    layout = BinaryCvarLayout(n, N, T, x, lam, s, alpha, y, M)
    return bld.build(), layout


# ---------------------------------------------------------------------------
# sample-average models
# ---------------------------------------------------------------------------


def build_saa_milp(problem_or_instance, samples=None, eps: float | None = None):
    """Empirical big-M chance-constraint MILP.

    Accepts either a transportation instance (with its training samples and
    risk level) or a generic affine problem at radius zero.
    """
    if isinstance(problem_or_instance, DrccpProblem):
        return _saa_affine_milp(problem_or_instance)
    return _saa_transport_milp(problem_or_instance, samples, eps)


def _saa_transport_milp(instance, samples, eps):
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    N = samples.shape[0]
    m, n = instance.m, instance.n
    mn = m * n
    if samples.shape[1] != mn:
        raise ValueError(f"samples have dim {samples.shape[1]}, instance needs {mn}")
    # any plan cost is at most (max unit cost) * (total mass); box support and
    # capacity caps yield the documented constant
    big_m = float(np.max(instance.d) * m * instance.L_high)

    bld = ConeProgramBuilder(sense="min")
    a = bld.add_vars("a", m)
    b = bld.add_vars("b", n)
    z = bld.add_var("z")
    flows = bld.add_vars("flow", N * mn).reshape(N, mn)
    s = bld.add_vars("s", N)
    bld.set_objective(Aff.var(z))
    bld.mark_binary(s)

    bld.add_nonneg(
        [
            Aff.var(z) - Aff.dot(flows[i], samples[i]) + big_m - Aff.var(s[i], big_m)
            for i in range(N)
        ],
        name="saa.cost",
    )
    bld.add_nonneg(
        [Aff.dot(s, np.ones(N)) - (1.0 - eps) * N], name="saa.count"
    )
    _transport_flow_rows(bld, instance, flows, a, b)
    _transport_marginal_rows(bld, instance, a, b)
    bld.add_nonneg([Aff.var(j) for j in flows.ravel()], name="flow_nonneg")
    bld.add_nonneg([Aff.var(j) for j in s], name="s_lower")
    bld.add_nonneg([1.0 - Aff.var(j) for j in s], name="s_upper")
    return bld.build()


def _saa_affine_milp(problem: DrccpProblem):
    _validated(problem)
    if problem.variant is not AffineBoth:
        raise UnsupportedReformulation("the SAA model needs affine rows")
    if problem.ball.radius != 0.0:
        raise ValueError("the SAA model is the radius-zero case; got a positive radius")
    lo = _domain_lower_bounds(problem.domain)
    if isinstance(problem.domain, BinaryDomain):
        hi = np.ones(problem.n)
    elif isinstance(problem.domain, BoxDomain):
        hi = np.asarray(problem.domain.upper)
    else:
        raise UnsupportedReformulation(
            "the SAA model needs a bounded (binary or box) domain for its big-M constants"
        )
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnsupportedReformulation("the SAA model needs finite domain bounds")

    N = problem.ball.center.n_samples
    samples = problem.ball.center.samples
    bld = ConeProgramBuilder(sense=problem.sense)
    x = bld.add_vars("x", problem.n)
    s = bld.add_vars("s", N)
    bld.set_objective(Aff.dot(x, problem.objective))
    _add_domain_rows(bld, problem.domain, x)
    bld.mark_binary(s)
    bld.add_nonneg([Aff.var(j) for j in s], name="s_lower")
    bld.add_nonneg([1.0 - Aff.var(j) for j in s], name="s_upper")
    bld.add_nonneg([Aff.dot(s, np.ones(N)) - (1.0 - problem.risk) * N], name="saa.count")
    for t, f in enumerate(problem.constraints):
        rows = []
        for i in range(N):
            zeta = samples[i]
            coeff = f.A.T @ zeta + f.b
            const = float(f.a @ zeta + f.h)
            worst = float(np.minimum(coeff * lo, coeff * hi).sum() + const)
            big_m = max(0.0, -worst)
            rows.append(Aff.dot(x, coeff) + const + big_m - Aff.var(s[i], big_m))
        bld.add_nonneg(rows, name=f"saa.row[{t}]")
    return bld.build()


# ---------------------------------------------------------------------------
# transportation CVaR LP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransportCvarLayout:
    a: np.ndarray
    b: np.ndarray
    z: int
    alpha: int
    flows: np.ndarray   # (N, mn)
    y: np.ndarray       # (N, mn)
    v: np.ndarray       # (N, mn)
    q: np.ndarray       # (N,)

    def extract(self, primal: np.ndarray) -> dict:
        return {
            "a": primal[self.a],
            "b": primal[self.b],
            "z": float(primal[self.z]),
            "alpha": float(primal[self.alpha]),
        }


def _transport_flow_rows(bld, instance, flows, a, b):
    m, n = instance.m, instance.n
    N = flows.shape[0]
    rows = []
    for i in range(N):
        grid = flows[i].reshape(m, n)
        for k in range(m):
            rows.append(Aff.dot(grid[k], np.ones(n)) - Aff.var(a[k]))
        for j in range(n):
            rows.append(Aff.dot(grid[:, j], np.ones(m)) - Aff.var(b[j]))
    bld.add_zero(rows, name="flow_balance")


def _transport_marginal_rows(bld, instance, a, b):
    m, n = instance.m, instance.n
    bld.add_zero(
        [Aff.dot(a, np.ones(m)) - Aff.dot(b, np.ones(n))], name="mass_balance"
    )
    bld.add_nonneg([Aff.dot(a, np.ones(m)) - instance.L_low], name="min_mass")
    bld.add_nonneg([Aff.var(j) for j in a], name="a_lower")
    bld.add_nonneg([instance.L_high - Aff.var(j) for j in a], name="a_upper")
    bld.add_nonneg([Aff.var(j) for j in b], name="b_lower")


def build_transport_cvar_lp(instance, samples, eps: float, delta: float):
    """All-continuous CVaR model of the transportation problem on the box
    support [0, d] with the transport metric in the 1-norm (dual: max-abs,
    expanded into two linear rows per component)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    N = samples.shape[0]
    m, n = instance.m, instance.n
    mn = m * n
    if samples.shape[1] != mn:
        raise ValueError(f"samples have dim {samples.shape[1]}, instance needs {mn}")
    d = np.asarray(instance.d, dtype=float)

    bld = ConeProgramBuilder(sense="min")
    a = bld.add_vars("a", m)
    b = bld.add_vars("b", n)
    z = bld.add_var("z")
    alpha = bld.add_var("alpha")
    flows = bld.add_vars("flow", N * mn).reshape(N, mn)
    y = bld.add_vars("y", N * mn).reshape(N, mn)
    v = bld.add_vars("v", N * mn).reshape(N, mn)
    q = bld.add_vars("q", N)
    bld.set_objective(Aff.var(z))

    inv_n = np.full(N, 1.0 / N)
    budget_rows, value_rows, envelope_rows = [], [], []
    for i in range(N):
        qsum = Aff.dot(q, inv_n)
        for r in range(mn):
            budget_rows.append(Aff.var(alpha, eps) - Aff.var(v[i, r], delta) - qsum)
            budget_rows.append(Aff.var(alpha, eps) + Aff.var(v[i, r], delta) - qsum)
        value_rows.append(
            Aff.var(z)
            - Aff.var(alpha)
            + Aff.dot(v[i], samples[i])
            + Aff.var(q[i])
            - Aff.dot(y[i], d)
        )
        envelope_rows.extend(
            Aff.var(y[i, r]) - Aff.var(v[i, r]) - Aff.var(flows[i, r]) for r in range(mn)
        )
    bld.add_nonneg(budget_rows, name="cvar.budget")
    bld.add_nonneg(value_rows, name="cvar.value")
    bld.add_nonneg(envelope_rows, name="cvar.envelope")
    _transport_flow_rows(bld, instance, flows, a, b)
    _transport_marginal_rows(bld, instance, a, b)
    bld.add_nonneg([Aff.var(j) for j in flows.ravel()], name="flow_nonneg")
    bld.add_nonneg([Aff.var(j) for j in y.ravel()], name="y_nonneg")
    bld.add_nonneg([Aff.var(j) for j in q], name="q_nonneg")
    bld.add_nonneg([Aff.var(alpha) - ALPHA_MIN], name="alpha_min")
    layout = TransportCvarLayout(a, b, z, alpha, flows, y, v, q)
    return bld.build(), layout
