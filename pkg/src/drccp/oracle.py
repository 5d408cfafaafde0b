"""Exact worst-case violation probability for a fixed decision.

For affine rows on full-space support, the worst probability over the
transport ball that some row goes negative reduces to a one-dimensional
piecewise-linear minimization

    min_{lam >= 0}  lam * delta + (1/N) sum_i (1 - lam * d_i)_+

where d_i is the ground-norm distance from sample i to the unsafe set
{xi : some row < 0}.  The function is convex piecewise linear, so scanning
lam = 0 and the breakpoints lam = 1/d_i is exact.  Samples already unsafe
(d_i = 0) contribute the constant 1/N; rows that can never go negative
contribute distance +inf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AffineBoth, DrccpProblem, FullSpace, GroundNorm, dual_norm

#: absolute tolerance on the probability-vs-risk membership comparison
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class ViolationEstimate:
    """Certificate of the exact worst-case violation probability."""

    probability: float
    lambda_star: float
    distances: np.ndarray           # (N,) sample-to-unsafe-set distances
    eta_certificate: np.ndarray | None = None  # (N, T) multipliers


def _require_affine_fullspace(constraints, support) -> None:
    if not all(isinstance(f, AffineBoth) for f in constraints):
        raise ValueError("oracle requires affine constraint rows")
    if not isinstance(support, FullSpace):
        raise ValueError("oracle requires full-space support")


def distance_to_unsafe(x, zeta, constraints, norm: GroundNorm) -> float:
    """Ground-norm distance from one point to the unsafe set of the rows.

    Returns +inf when no row can go negative at this x (gradient zero with
    nonnegative constant part for every row).
    """
    x = np.asarray(x, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    _require_affine_fullspace(constraints, FullSpace(len(zeta)))
    best = np.inf
    for f in constraints:
        g = f.xi_gradient(x)
        val = float(g @ zeta + f.b @ x + f.h)
        if val <= 0.0:
            return 0.0
        gn = dual_norm(g, norm)
        if gn == 0.0:
            continue  # row never violable at this x
        best = min(best, val / gn)
    return best


def row_distances(x, samples, constraints, norm: GroundNorm) -> np.ndarray:
    """Vectorized distance_to_unsafe over an (N, m) sample array."""
    x = np.asarray(x, dtype=float)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    dists = np.full(samples.shape[0], np.inf)
    for f in constraints:
        g = f.xi_gradient(x)
        vals = samples @ g + float(f.b @ x + f.h)
        gn = dual_norm(g, norm)
        if gn == 0.0:
            d_t = np.where(vals <= 0.0, 0.0, np.inf)
        else:
            d_t = np.maximum(vals, 0.0) / gn
        dists = np.minimum(dists, d_t)
    return dists


def scan_probability(distances: np.ndarray, delta: float) -> tuple[float, float]:
    """Exact minimization of h(lam) over lam >= 0 by breakpoint scan.

    Returns (probability, lambda_star); ties resolve to the smallest lam.
    """
    d = np.asarray(distances, dtype=float)
    n = len(d)
    finite = np.isfinite(d)
    n_zero = int(np.sum(d[finite] == 0.0))
    pos = d[finite & (d > 0.0)]
    lams = np.concatenate([[0.0], np.sort(1.0 / pos)[::-1]]) if len(pos) else np.array([0.0])
    # h(lam) = lam*delta + (1/N) * [n_zero + sum_j (1 - lam d_j)_+]
    vals = lams * delta + (n_zero + np.sum(np.maximum(1.0 - np.outer(lams, pos), 0.0), axis=1)) / n
    best = float(np.min(vals))
    winners = np.nonzero(vals <= best + 1e-15)[0]
    lam_star = float(np.min(lams[winners]))
    return min(best, 1.0), lam_star


def worst_case_violation_probability(x, problem: DrccpProblem) -> ViolationEstimate:
    """sup over the ambiguity ball of P{some row negative} at fixed x."""
    _require_affine_fullspace(problem.constraints, problem.support)
    x = np.asarray(x, dtype=float)
    samples = problem.ball.center.samples
    d = row_distances(x, samples, problem.constraints, problem.ball.norm)
    prob, lam = scan_probability(d, problem.ball.radius)
    eta = np.zeros((samples.shape[0], len(problem.constraints)))
    for t, f in enumerate(problem.constraints):
        gn = dual_norm(f.xi_gradient(x), problem.ball.norm)
        if gn > 0.0:
            eta[:, t] = lam / gn
    return ViolationEstimate(prob, lam, d, eta)


def check_zd_membership(x, problem: DrccpProblem) -> tuple[bool, ViolationEstimate]:
    """True iff the worst-case violation probability is within the risk level."""
    est = worst_case_violation_probability(x, problem)
    return est.probability <= problem.risk + MEMBERSHIP_TOL, est
