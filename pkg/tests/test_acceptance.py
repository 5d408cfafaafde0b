"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Budget on one desktop
core is roughly ten to fifteen minutes; the transportation sweeps dominate.
"""

import math
import time

import numpy as np
import pytest

from _oracles import (
    dense_grid_probability,
    direct_dual_lp_probability,
    max_concave_quadratic_ball,
    max_concave_quadratic_polyhedron,
)
from drccp.conic import Aff, ConeProgramBuilder
from drccp.experiments import (
    TransportStudyConfig,
    exact_binary_optimum,
    generate_knapsack,
    knapsack_problem,
    run_transport_study,
)
from drccp.model import (
    AffineBoth,
    BilinearQuadratic,
    BoxDomain,
    DrccpProblem,
    Ellipsoid,
    FullSpace,
    GroundNorm,
    Polyhedron,
    QuadraticXi,
    SampleSet,
    WassersteinBall,
)
from drccp.oracle import worst_case_violation_probability
from drccp.reformulate import (
    build_binary_cvar_mip,
    build_cvar_relaxation,
    build_epigraph_probe,
)
from drccp.solve import (
    OPTIMAL,
    BnbConfig,
    ClarabelAdapter,
    HighsAdapter,
    branch_and_bound,
    solve_continuous,
)

CLARABEL = ClarabelAdapter()
HIGHS = HighsAdapter()

_cache: dict = {}


def report(num: int, label: str, ok: bool, detail: str = "") -> None:
    print(f"\nACCEPTANCE {num:02d} [{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"criterion {num} ({label}): {detail}"


def _random_affine_problem(rng):
    m = int(rng.integers(1, 4))
    T = int(rng.integers(1, 4))
    N = int(rng.integers(2, 11))
    n = int(rng.integers(1, 4))
    norm = rng.choice(list(GroundNorm))
    cons = tuple(
        AffineBoth(rng.normal(size=(m, n)), rng.normal(size=m), rng.normal(size=n),
                   float(rng.normal()))
        for _ in range(T)
    )
    ball = WassersteinBall(
        float(rng.uniform(0.0, 0.5)), norm, SampleSet.from_array(rng.normal(size=(N, m)))
    )
    return DrccpProblem(
        rng.normal(size=n), BoxDomain(-np.ones(n), np.ones(n)), cons, 0.1, ball,
        FullSpace(m),
    ), rng.normal(size=n)


def test_criterion_1_oracle_correctness():
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    worst_grid = worst_lp = 0.0
    for _ in range(200):
        problem, x = _random_affine_problem(rng)
        est = worst_case_violation_probability(x, problem)
        grid = dense_grid_probability(est.distances, problem.ball.radius)
        lp = min(direct_dual_lp_probability(x, problem), 1.0)
        worst_grid = max(worst_grid, abs(est.probability - grid))
        worst_lp = max(worst_lp, abs(est.probability - lp))
    elapsed = time.perf_counter() - t0
    ok = worst_grid <= 1e-4 and worst_lp <= 1e-7 and elapsed < 5.0
    report(
        1, "oracle breakpoint scan vs grid and dual LP", ok,
        f"grid dev {worst_grid:.2e} (tol 1e-4), LP dev {worst_lp:.2e} (tol 1e-7), "
        f"{elapsed:.2f}s (< 5s)",
    )


def _knapsack_soundness_runs():
    if "c2" in _cache:
        return _cache["c2"]
    runs = []
    for seed in range(100):
        rng = np.random.default_rng(20_000 + seed)
        n = int(rng.integers(4, 9))
        T = int(rng.integers(1, 4))
        N = int(rng.integers(5, 21))
        inst = generate_knapsack(seed, n=n, n_rows=T, n_samples=N, capacity=2.5 * n)
        problem = knapsack_problem(inst, eps=0.10, delta=0.01)
        prog, layout = build_binary_cvar_mip(problem)
        sol = branch_and_bound(prog, CLARABEL)
        runs.append((problem, layout, sol))
    _cache["c2"] = runs
    return runs


def test_criterion_2_inner_approximation_soundness():
    violations = 0
    solved = 0
    worst = 0.0
    for problem, layout, sol in _knapsack_soundness_runs():
        if sol.status != OPTIMAL:
            continue
        solved += 1
        x = np.round(sol.primal[layout.x])
        est = worst_case_violation_probability(x, problem)
        worst = max(worst, est.probability)
        if est.probability > problem.risk + 1e-6:
            violations += 1
    ok = violations == 0 and solved >= 95
    report(
        2, "inner approximation never exceeds the risk level", ok,
        f"{solved}/100 solved, {violations} violations, worst probability {worst:.6f} "
        f"(risk 0.10)",
    )


def _scaled_table_runs():
    if "c3" in _cache:
        return _cache["c3"]
    runs = []
    for eps in (0.05, 0.10):
        for delta in (0.01, 0.02):
            for seed in range(20):
                inst = generate_knapsack(
                    3_000 + seed, n=10, n_rows=5, n_samples=50, capacity=25.0
                )
                problem = knapsack_problem(inst, eps=eps, delta=delta)
                x_exact, opt_val = exact_binary_optimum(problem)
                prog, layout = build_binary_cvar_mip(problem)
                t0 = time.perf_counter()
                sol = branch_and_bound(prog, CLARABEL)
                wall = time.perf_counter() - t0
                runs.append((problem, layout, sol, opt_val, wall))
    _cache["c3"] = runs
    return runs


def test_criterion_3_exact_optimum_comparison():
    gaps, walls = [], []
    signed_ok = True
    for problem, layout, sol, opt_val, wall in _scaled_table_runs():
        assert sol.status == OPTIMAL, "scaled-table MISOCP did not solve"
        walls.append(wall)
        signed = (opt_val - sol.objective_value) / opt_val
        signed_ok &= signed >= -1e-6
        gaps.append(abs(sol.objective_value - opt_val) / opt_val)
    mean_gap = float(np.mean(gaps))
    ok = signed_ok and mean_gap <= 0.05 and max(walls) < 60.0
    report(
        3, "scaled optimality-gap table", ok,
        f"mean GAP {100 * mean_gap:.3f}% (<= 5%), max GAP {100 * max(gaps):.3f}%, "
        f"never above the exact optimum: {signed_ok}, slowest solve {max(walls):.1f}s (< 60s)",
    )


def test_criterion_4_metric_plumbing():
    from drccp.experiments import gap_fraction, improvement_fraction

    gap = 100 * gap_fraction(49.90, 50.10)
    imp = 100 * improvement_fraction(41.14, 40.18)
    # the printed operands are rounded to two decimals, which leaves about
    # 0.025 percentage points of slack around the printed 2.40% figure
    lo = 100 * improvement_fraction(41.135, 40.185)
    hi = 100 * improvement_fraction(41.145, 40.175)
    ok = round(gap, 2) == 0.40 and abs(imp - 2.40) < 0.02 and lo <= 2.40 <= hi
    report(
        4, "gap and improvement row arithmetic", ok,
        f"gap row {gap:.4f}% -> 0.40%, improvement row {imp:.4f}% vs printed 2.40% "
        f"(operand interval [{lo:.3f}%, {hi:.3f}%])",
    )


def test_criterion_5_lmi_builders():
    rng = np.random.default_rng(55)
    worst = 0.0
    for trial in range(150):
        m = int(rng.integers(1, 4))
        kind = ("poly", "ellip", "bilinear")[trial % 3]
        x = rng.normal(size=m)
        v = rng.normal(size=m)
        if kind == "poly":
            rows = np.vstack([np.eye(m), -np.eye(m)])
            offs = rng.uniform(0.5, 2.5, 2 * m)
            B = rng.normal(size=(m, m)) * 0.6
            A = B @ B.T + (0.05 * np.eye(m) if rng.random() < 0.7 else 0.0)
            f = QuadraticXi(A, np.zeros(m), 0.0)
            prog = build_epigraph_probe(f, Polyhedron(rows, offs), x, v)
            ref = max_concave_quadratic_polyhedron(A, v - x, rows, offs)
        else:
            W = np.diag(rng.uniform(0.5, 3.0, m))
            center = rng.normal(size=m) * 0.3
            if kind == "ellip":
                B = rng.normal(size=(m, m)) * 0.6
                A = B @ B.T
                f = QuadraticXi(A, np.zeros(m), 0.0)
                prog = build_epigraph_probe(f, Ellipsoid(W, center), x, v)
                ref = max_concave_quadratic_ball(A, v - x, W, center)
            else:
                n = int(rng.integers(1, 3))
                Ws, rs, hs = [], [], []
                for _ in range(n):
                    B = rng.normal(size=(m, m)) * 0.5
                    Ws.append(B @ B.T)
                    rs.append(rng.normal(size=m))
                    hs.append(float(rng.normal()))
                f = BilinearQuadratic(np.stack(Ws), np.stack(rs), np.array(hs))
                xb = np.abs(rng.normal(size=n))
                prog = build_epigraph_probe(f, Ellipsoid(W, center), xb, v)
                Q = np.einsum("j,jkl->kl", xb, f.W)
                g = v - f.r.T @ xb
                ref = max_concave_quadratic_ball(Q, g, W, center)
        sol = solve_continuous(prog, CLARABEL)
        assert sol.status == OPTIMAL
        worst = max(worst, abs(sol.objective_value - ref))
    # interior closed-form cases: u* = g^T A^{-1} g / 4
    worst_interior = 0.0
    for _ in range(20):
        m = int(rng.integers(1, 4))
        B = rng.normal(size=(m, m))
        A = B @ B.T + 0.5 * np.eye(m)
        g = rng.normal(size=m) * 0.2
        if np.linalg.norm(np.linalg.solve(A, g)) / 2.0 >= 0.95:
            continue
        f = QuadraticXi(A, np.zeros(m), 0.0)
        prog = build_epigraph_probe(f, Ellipsoid(np.eye(m), np.zeros(m)), np.zeros(m), g)
        sol = solve_continuous(prog, CLARABEL)
        closed = float(g @ np.linalg.solve(A, g) / 4.0)
        worst_interior = max(worst_interior, abs(sol.objective_value - closed))
    ok = worst <= 1e-5 and worst_interior <= 1e-6
    report(
        5, "epigraph matrices match direct maximization", ok,
        f"150 random instances dev {worst:.2e} (tol 1e-5), "
        f"interior closed form dev {worst_interior:.2e} (tol 1e-6)",
    )


def _alpha_slice_program(p, alpha):
    """The biconvex model at a fixed scalarization multiplier (T = 1)."""
    f = p.constraints[0]
    N = p.ball.center.n_samples
    samples = p.ball.center.samples
    bld = ConeProgramBuilder(sense=p.sense)
    x = bld.add_vars("x", p.n)
    lam = bld.add_var("lam")
    s = bld.add_vars("s", N)
    bld.set_objective(Aff.dot(x, p.objective))
    bld.add_nonneg([Aff.var(j) - lo for j, lo in zip(x, p.domain.lower)])
    bld.add_nonneg([hi - Aff.var(j) for j, hi in zip(x, p.domain.upper)])
    bld.add_nonneg([Aff.var(j) for j in s] + [Aff.var(lam)])
    bld.add_nonneg(
        [p.risk - Aff.var(lam, p.ball.radius) - Aff.dot(s, np.full(N, 1.0 / N))]
    )
    for i in range(N):
        zeta = samples[i]
        fv = Aff.dot(x, f.A.T @ zeta + f.b) + float(f.a @ zeta + f.h)
        bld.add_nonneg([Aff.var(s[i]) + fv * alpha - 1.0])
    vec = [(Aff.dot(x, f.A[r]) + f.a[r]) * alpha for r in range(f.m)]
    dual = p.ball.norm.dual
    if dual is GroundNorm.L2:
        bld.add_soc([Aff.var(lam)] + vec)
    elif dual is GroundNorm.LINF:
        rows = []
        for e in vec:
            rows += [Aff.var(lam) - e, Aff.var(lam) + e]
        bld.add_nonneg(rows)
    else:
        pv = bld.add_vars("p", f.m)
        rows = []
        for pj, e in zip(pv, vec):
            rows += [Aff.var(pj) - e, Aff.var(pj) + e]
        rows.append(Aff.var(lam) - sum((Aff.var(pj) for pj in pv), Aff()))
        bld.add_nonneg(rows)
    return bld.build()


def _slice_value(p, alpha, adapter):
    sol = solve_continuous(_alpha_slice_program(p, alpha), adapter)
    return sol.objective_value if sol.status == OPTIMAL else np.inf


def _golden_section_over_alpha(p, adapter, n_coarse=40, iters=50):
    grid = np.logspace(-3, 4, n_coarse)
    vals = [_slice_value(p, a, adapter) for a in grid]
    k = int(np.argmin(vals))
    a = math.log(grid[max(k - 1, 0)])
    b = math.log(grid[min(k + 1, n_coarse - 1)])
    phi = (math.sqrt(5) - 1) / 2
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc = _slice_value(p, math.exp(c), adapter)
    fd = _slice_value(p, math.exp(d), adapter)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = _slice_value(p, math.exp(c), adapter)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = _slice_value(p, math.exp(d), adapter)
    return min(vals[k], fc, fd)


def test_criterion_6_single_row_exactness():
    rng = np.random.default_rng(66)
    worst = 0.0
    done = 0
    while done < 25:
        m = int(rng.integers(1, 4))
        n = int(rng.integers(1, 4))
        N = int(rng.integers(3, 8))
        norm = rng.choice(list(GroundNorm))
        f = AffineBoth(
            rng.normal(size=(m, n)), rng.normal(size=m), rng.normal(size=n),
            float(rng.uniform(1.0, 3.0)),
        )
        ball = WassersteinBall(
            float(rng.uniform(0.01, 0.2)), norm,
            SampleSet.from_array(rng.normal(size=(N, m)) * 0.5),
        )
        p = DrccpProblem(
            rng.normal(size=n), BoxDomain(-np.ones(n), np.ones(n)), (f,), 0.1, ball,
            FullSpace(m),
        )
        prog, _ = build_cvar_relaxation(p)
        sol = solve_continuous(prog, CLARABEL)
        if sol.status != OPTIMAL:
            continue  # infeasible draw; regenerate deterministically
        adapter = CLARABEL if norm is GroundNorm.L2 else HIGHS
        golden = _golden_section_over_alpha(p, adapter)
        rel = abs(golden - sol.objective_value) / max(1.0, abs(golden))
        worst = max(worst, rel)
        done += 1
    ok = worst <= 1e-4
    report(
        6, "single-row relaxation is exact", ok,
        f"25 instances, worst relative deviation {worst:.2e} (tol 1e-4)",
    )


def test_criterion_7_mccormick_exactness():
    worst = 0.0
    count = 0
    for problem, layout, sol, *_ in (
        list(_knapsack_soundness_runs()) + list(_scaled_table_runs())
    ):
        if sol.status != OPTIMAL:
            continue
        cert = layout.extract(sol.primal)
        x = sol.primal[layout.x]
        dev = np.max(np.abs(cert.y - np.outer(cert.alpha, x)))
        worst = max(worst, float(dev))
        count += 1
    ok = worst <= 1e-6
    report(
        7, "McCormick products exact at binary optima", ok,
        f"{count} solutions, max |y - alpha x| = {worst:.2e} (tol 1e-6)",
    )


DELTA_GRID = (0.01, 0.04, 0.07, 0.10, 0.13, 0.16, 0.19)


def _transport_means():
    if "c8" in _cache:
        return _cache["c8"]
    cfg = TransportStudyConfig(
        m=3, n=4, eps=0.10, delta_grid=DELTA_GRID, n_grid=(10, 160),
        n_instances=10, n_test=2000, seed=0, models=("drw",),
    )
    rep = run_transport_study(cfg)
    means = {a["cell"]: a["mean"] for a in rep.aggregates}
    _cache["c8"] = means
    return means


def _count_inversions(seq, slack):
    inv = [max(a - b, 0.0) for a, b in zip(seq, seq[1:])]
    return sum(1 for v in inv if v > 1e-12), max(inv, default=0.0)


def test_criterion_8_radius_trend():
    means = _transport_means()
    ok = True
    details = []
    for N in (10, 160):
        seq = [means[f"drw/delta={d}/N={N}"] for d in DELTA_GRID]
        n_inv, worst_inv = _count_inversions(seq, 0.02)
        ok &= n_inv <= 1 and worst_inv <= 0.02
        details.append(f"N={N}: " + "->".join(f"{v:.3f}" for v in seq))
    final = means["drw/delta=0.19/N=10"]
    # NOTE: the 0.90 floor is asserted as specified; see the decisions ledger
    # for the calibration analysis of this clause at desk scale.
    ok_floor = final >= 0.90
    report(
        8, "reliability grows with the radius", ok and ok_floor,
        "; ".join(details) + f"; reliability(0.19, N=10) = {final:.4f} (>= 0.90)",
    )


def test_criterion_9_sample_size_trend():
    if "c9" not in _cache:
        cfg = TransportStudyConfig(
            m=3, n=4, eps=0.10, delta_grid=(0.10,), n_grid=(10, 40, 160),
            n_instances=10, n_test=2000, seed=0, models=("drw", "saa"),
            saa_max_nodes=150,
        )
        rep = run_transport_study(cfg)
        _cache["c9"] = {a["cell"]: a["mean"] for a in rep.aggregates}
    means = _cache["c9"]
    drw = [means[f"drw/delta=0.1/N={N}"] for N in (10, 40, 160)]
    saa = [means[f"saa/delta=0.0/N={N}"] for N in (10, 40, 160)]
    margin = drw[0] - saa[0]
    n_inv_d, worst_d = _count_inversions(drw, 0.02)
    n_inv_s, worst_s = _count_inversions(saa, 0.02)
    ok = margin >= 0.05 and worst_d <= 0.02 and worst_s <= 0.02
    report(
        9, "robust model beats the empirical model at small N", ok,
        f"DRW {['%.3f' % v for v in drw]} vs SAA {['%.3f' % v for v in saa]}, "
        f"margin at N=10: {margin:.3f} (>= 0.05), worst inversions "
        f"{worst_d:.3f}/{worst_s:.3f} (<= 0.02)",
    )


def test_criterion_10_branch_and_bound_vs_enumeration():
    rng = np.random.default_rng(101)
    worst_rel = 0.0
    for trial in range(25):
        inst = generate_knapsack(
            10_000 + trial, n=10, n_rows=2, n_samples=10, capacity=25.0
        )
        problem = knapsack_problem(inst, eps=0.10, delta=0.01)
        prog, layout = build_binary_cvar_mip(problem)
        sol = branch_and_bound(prog, CLARABEL)
        assert sol.status == OPTIMAL
        # exhaustive enumeration: every leaf is the continuous program with x
        # fixed; scanning in decreasing objective order, the first feasible
        # leaf is the exact optimum
        binaries = np.array(sorted(prog.integrality))
        relax = prog.without_integrality()
        codes = np.arange(1 << 10)
        X = ((codes[:, None] >> np.arange(10)[None, :]) & 1).astype(float)
        order = np.argsort(-(X @ problem.objective), kind="stable")
        enum_val = None
        for k in order:
            leaf = solve_continuous(relax.with_fixings(binaries, X[k]), CLARABEL)
            if leaf.status == OPTIMAL:
                enum_val = leaf.objective_value
                break
        assert enum_val is not None
        worst_rel = max(worst_rel, abs(sol.objective_value - enum_val) / max(1.0, enum_val))
    # determinism: repeated runs and 1-vs-4 workers agree exactly
    inst = generate_knapsack(10_000, n=10, n_rows=2, n_samples=10, capacity=25.0)
    problem = knapsack_problem(inst, eps=0.10, delta=0.01)
    prog, layout = build_binary_cvar_mip(problem)
    base = [branch_and_bound(prog, CLARABEL, BnbConfig(workers=1)) for _ in range(2)]
    par = branch_and_bound(prog, CLARABEL, BnbConfig(workers=4))
    same_repeat = (
        base[0].objective_value == base[1].objective_value
        and np.array_equal(base[0].primal, base[1].primal)
        and base[0].solve_stats["nodes"] == base[1].solve_stats["nodes"]
    )
    bidx = np.array(sorted(prog.integrality))
    same_workers = base[0].objective_value == pytest.approx(
        par.objective_value, abs=1e-12
    ) and np.array_equal(np.round(base[0].primal[bidx]), np.round(par.primal[bidx]))
    ok = worst_rel <= 1e-6 and same_repeat and same_workers
    report(
        10, "branch-and-bound equals leaf enumeration, deterministically", ok,
        f"25 instances, worst relative deviation {worst_rel:.2e} (tol 1e-6), "
        f"repeat-identical: {same_repeat}, worker-invariant: {same_workers}",
    )
