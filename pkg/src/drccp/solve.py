"""Solver adapters for continuous cone programs and branch-and-bound for
binary mixed-integer conic models.

Adapters consume the :mod:`drccp.conic` IR.  Two are bundled:

``clarabel``  interior-point, handles zero/nonneg/second-order/PSD cones.
``highs``     scipy's HiGHS front end, zero/nonneg only (fast for pure LPs).

Branch-and-bound is best-bound first with most-fractional branching
(lowest-index tie-break).  Node results are applied in node-id order, so
incumbents and the returned solution do not depend on the worker count.
"""

from __future__ import annotations

import heapq
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .conic import (
    CONES,
    FEAS_TOL,
    NONNEG,
    PSD,
    SOC,
    ZERO,
    ConeProgram,
    min_residual,
)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"
NODE_LIMIT = "node_limit"


@dataclass
class Solution:
    status: str
    primal: np.ndarray | None = None
    objective_value: float | None = None
    duals: list[np.ndarray] | None = None
    solve_stats: dict = field(default_factory=dict)


class UnsupportedCone(Exception):
    pass


class SolverAdapter:
    """Contract: deterministic, returned Optimal solutions satisfy every block
    within FEAS_TOL (verified by the caller via check_solution)."""

    name: str = "base"
    capabilities: frozenset = frozenset()

    def solve(self, prog: ConeProgram) -> Solution:  # pragma: no cover
        raise NotImplementedError


class ClarabelAdapter(SolverAdapter):
    """Interior-point conic adapter over the clarabel solver."""

    name = "clarabel"
    capabilities = frozenset(CONES)

    def __init__(self, tol: float = 1e-9, max_iter: int = 200):
        self.tol = tol
        self.max_iter = max_iter

    def solve(self, prog: ConeProgram) -> Solution:
        import clarabel

        n = prog.n_vars
        c = prog.objective_dense()
        if prog.sense == "max":
            c = -c
        # canonical cone order: zero, nonneg, soc, psd (block order kept within)
        order = {ZERO: 0, NONNEG: 1, SOC: 2, PSD: 3}
        perm = sorted(range(len(prog.blocks)), key=lambda k: (order[prog.blocks[k].cone], k))
        mats, offs, cones = [], [], []
        for k in perm:
            b = prog.blocks[k]
            mats.append(b.matrix(n))
            offs.append(b.offset)
            if b.cone == ZERO:
                cones.append(clarabel.ZeroConeT(b.dim))
            elif b.cone == NONNEG:
                cones.append(clarabel.NonnegativeConeT(b.dim))
            elif b.cone == SOC:
                cones.append(clarabel.SecondOrderConeT(b.dim))
            else:
                cones.append(clarabel.PSDTriangleConeT(b.order))
        # block constraint w = Fx + g in K maps to  A x + s = b,  s = w:
        A = sp.vstack([-m for m in mats]).tocsc() if mats else sp.csc_matrix((0, n))
        bvec = np.concatenate(offs) if offs else np.zeros(0)
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = self.max_iter
        settings.max_threads = 1
        settings.tol_feas = self.tol
        settings.tol_gap_abs = self.tol
        settings.tol_gap_rel = self.tol
        t0 = time.perf_counter()
        solver = clarabel.DefaultSolver(
            sp.csc_matrix((n, n)), c, A, bvec, cones, settings
        )
        res = solver.solve()
        wall = time.perf_counter() - t0
        status_name = str(res.status)
        x = np.asarray(res.x, dtype=float)
        stats = {"iterations": res.iterations, "wall_s": wall, "solver_status": status_name}
        if status_name in ("Solved", "AlmostSolved"):
            obj = prog.objective_value(x)
            # split duals back into original block order
            duals: list[np.ndarray] = [np.zeros(0)] * len(prog.blocks)
            z = np.asarray(res.z, dtype=float)
            pos = 0
            for k in perm:
                d = prog.blocks[k].dim
                duals[k] = z[pos : pos + d]
                pos += d
            return Solution(OPTIMAL, x, obj, duals, stats)
        if status_name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return Solution(INFEASIBLE, None, None, None, stats)
        if status_name in ("DualInfeasible", "AlmostDualInfeasible"):
            return Solution(UNBOUNDED, None, None, None, stats)
        return Solution(NUMERICAL_FAILURE, None, None, None, stats)


class HighsAdapter(SolverAdapter):
    """LP adapter over scipy's HiGHS; zero and nonneg cones only.

    Singleton rows are converted to variable bounds so HiGHS presolve can
    exploit them.
    """

    name = "highs"
    capabilities = frozenset({ZERO, NONNEG})

    def solve(self, prog: ConeProgram) -> Solution:
        n = prog.n_vars
        c = prog.objective_dense()
        sign = 1.0
        if prog.sense == "max":
            c = -c
            sign = -1.0
        lb = np.full(n, -np.inf)
        ub = np.full(n, np.inf)
        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        for b in prog.blocks:
            if b.cone not in self.capabilities:
                raise UnsupportedCone(f"highs adapter cannot handle {b.cone} block {b.name!r}")
            F = b.matrix(n).tocsr()
            nnz_per_row = np.diff(F.indptr)
            for r in range(b.dim):
                start, end = F.indptr[r], F.indptr[r + 1]
                if nnz_per_row[r] == 1 and b.cone == NONNEG:
                    j = F.indices[start]
                    a = F.data[start]
                    # a*x_j + g >= 0
                    if a > 0:
                        lb[j] = max(lb[j], -b.offset[r] / a)
                    else:
                        ub[j] = min(ub[j], -b.offset[r] / a)
                    continue
                cols = F.indices[start:end]
                vals = F.data[start:end]
                if b.cone == NONNEG:
                    # F x + g >= 0  ->  -F x <= g
                    ub_rows.append((cols, -vals))
                    ub_rhs.append(b.offset[r])
                else:
                    eq_rows.append((cols, vals))
                    eq_rhs.append(-b.offset[r])

        def to_csr(rows):
            ri, ci, vi = [], [], []
            for r, (cols, vals) in enumerate(rows):
                ri.extend([r] * len(cols))
                ci.extend(cols.tolist())
                vi.extend(vals.tolist())
            return sp.csr_matrix((vi, (ri, ci)), shape=(len(rows), n))

        kw = {}
        if ub_rows:
            kw["A_ub"] = to_csr(ub_rows)
            kw["b_ub"] = np.asarray(ub_rhs)
        if eq_rows:
            kw["A_eq"] = to_csr(eq_rows)
            kw["b_eq"] = np.asarray(eq_rhs)
        t0 = time.perf_counter()
        res = linprog(c, bounds=list(zip(lb, ub)), method="highs", **kw)
        wall = time.perf_counter() - t0
        stats = {
            "iterations": int(getattr(res, "nit", 0) or 0),
            "wall_s": wall,
            "solver_status": int(res.status),
        }
        if res.status == 0:
            x = np.asarray(res.x, dtype=float)
            return Solution(OPTIMAL, x, prog.objective_value(x), None, stats)
        if res.status == 2:
            return Solution(INFEASIBLE, None, None, None, stats)
        if res.status == 3:
            return Solution(UNBOUNDED, None, None, None, stats)
        return Solution(NUMERICAL_FAILURE, None, None, None, stats)


_ADAPTERS = {"clarabel": ClarabelAdapter, "highs": HighsAdapter}


def get_adapter(name: str | None = None) -> SolverAdapter:
    """Adapter by name; default from DRCCP_SOLVER env var, then clarabel."""
    if name is None:
        name = os.environ.get("DRCCP_SOLVER", "clarabel")
    try:
        return _ADAPTERS[name]()
    except KeyError:
        raise ValueError(f"unknown solver adapter {name!r}; known: {sorted(_ADAPTERS)}")


def solve_continuous(prog: ConeProgram, adapter: SolverAdapter) -> Solution:
    """Solve a program without integrality marks, verifying block residuals."""
    if prog.integrality:
        raise ValueError("program has integrality marks; use branch_and_bound")
    present = {b.cone for b in prog.blocks}
    missing = present - adapter.capabilities
    if missing:
        raise UnsupportedCone(
            f"adapter {adapter.name!r} lacks cones {sorted(missing)} required by the program"
        )
    sol = adapter.solve(prog)
    if sol.status == OPTIMAL and min_residual(prog, sol.primal) < -FEAS_TOL:
        sol = Solution(NUMERICAL_FAILURE, sol.primal, sol.objective_value, sol.duals,
                       dict(sol.solve_stats, residual_check="failed"))
    return sol


@dataclass
class BnbConfig:
    rel_gap: float = 1e-6
    abs_gap: float = 1e-9
    max_nodes: int = 100000
    integrality_tol: float = 1e-6
    workers: int = 1
    heuristic_freq: int = 10  # 0: root only; k>0: every k processed nodes; <0: off

    def __post_init__(self):
        if min(self.rel_gap, self.abs_gap, self.integrality_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_nodes <= 0 or self.workers <= 0:
            raise ValueError("max_nodes and workers must be positive")


class _Node:
    __slots__ = ("bound", "nid", "fixed")

    def __init__(self, bound, nid, fixed):
        self.bound = bound
        self.nid = nid
        self.fixed = fixed  # tuple of (var index, value)

    def __lt__(self, other):
        return (self.bound, self.nid) < (other.bound, other.nid)


def branch_and_bound(
    prog: ConeProgram,
    adapter: SolverAdapter,
    cfg: BnbConfig | None = None,
    heuristic=None,
) -> Solution:
    """Best-first branch-and-bound over the binary variables of ``prog``.

    ``heuristic(x_relax) -> values`` may propose a 0/1 assignment for the
    binary variables given a node relaxation point; candidates are verified
    by a continuous resolve before being accepted as incumbents.
    """
    cfg = cfg or BnbConfig()
    if not prog.integrality:
        raise ValueError("program has no integrality marks")
    binaries = np.array(sorted(prog.integrality), dtype=np.int64)
    relax = prog.without_integrality()
    flip = -1.0 if prog.sense == "max" else 1.0  # work in min space

    t_start = time.perf_counter()
    best_obj = np.inf  # min-space incumbent objective
    best_x: np.ndarray | None = None
    trace: list[tuple[int, float]] = []
    n_solved = 0

    def node_prog(fixed):
        if not fixed:
            return relax
        idx = np.array([f[0] for f in fixed], dtype=np.int64)
        vals = np.array([f[1] for f in fixed], dtype=float)
        return relax.with_fixings(idx, vals)

    def solve_node(fixed):
        return solve_continuous(node_prog(fixed), adapter)

    def prune_level():
        """Nodes with bound at or above this cannot improve the incumbent."""
        if not np.isfinite(best_obj):
            return np.inf
        return best_obj - max(cfg.abs_gap, cfg.rel_gap * abs(best_obj))

    def try_incumbent(values, nid):
        """Fix all binaries to `values`, resolve, accept if it improves."""
        nonlocal best_obj, best_x
        sol = solve_continuous(relax.with_fixings(binaries, values), adapter)
        if sol.status != OPTIMAL:
            return
        obj = flip * sol.objective_value
        if obj < best_obj - 1e-15:
            best_obj = obj
            best_x = sol.primal
            trace.append((nid, flip * obj))

    heap: list[_Node] = [_Node(-np.inf, 0, ())]
    next_id = 1
    status = OPTIMAL
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    root_unbounded = False
    try:
        while heap:
            if n_solved >= cfg.max_nodes:
                status = NODE_LIMIT
                break
            wave = []
            while heap and len(wave) < cfg.workers and n_solved + len(wave) < cfg.max_nodes:
                node = heapq.heappop(heap)
                if node.bound >= prune_level():
                    continue
                wave.append(node)
            if not wave:
                if heap:
                    continue
                break
            if pool is not None:
                results = list(pool.map(lambda nd: solve_node(nd.fixed), wave))
            else:
                results = [solve_node(nd.fixed) for nd in wave]
            n_solved += len(wave)
            # deterministic application order: by node id
            for node, sol in sorted(zip(wave, results), key=lambda p: p[0].nid):
                if sol.status == INFEASIBLE:
                    continue
                if sol.status == UNBOUNDED:
                    if node.nid == 0:
                        root_unbounded = True
                        heap.clear()
                        break
                    continue
                if sol.status != OPTIMAL:
                    # conservative: branch without a bound update
                    free = [j for j in binaries if j not in {f[0] for f in node.fixed}]
                    if free:
                        j = free[0]
                        for v in (0.0, 1.0):
                            heapq.heappush(heap, _Node(node.bound, next_id, node.fixed + ((j, v),)))
                            next_id += 1
                    continue
                bound = max(node.bound, flip * sol.objective_value)
                if bound >= prune_level():
                    continue
                xb = sol.primal[binaries]
                frac = np.minimum(xb, 1.0 - xb)
                if np.all(frac <= cfg.integrality_tol):
                    try_incumbent(np.round(xb), node.nid)
                    continue
                run_heur = (
                    cfg.heuristic_freq == 0 and node.nid == 0
                ) or (cfg.heuristic_freq > 0 and node.nid % cfg.heuristic_freq == 0)
                if run_heur:
                    cand = np.round(xb) if heuristic is None else heuristic(sol.primal)
                    if cand is not None:
                        try_incumbent(np.asarray(cand, dtype=float), node.nid)
                    if bound >= prune_level():
                        continue
                j = binaries[int(np.argmax(frac))]
                for v in (0.0, 1.0):
                    heapq.heappush(heap, _Node(bound, next_id, node.fixed + ((j, v),)))
                    next_id += 1
    finally:
        if pool is not None:
            pool.shutdown()

    wall = time.perf_counter() - t_start
    open_bound = min((nd.bound for nd in heap), default=np.inf)
    proven = min(open_bound, best_obj)
    stats = {
        "nodes": n_solved,
        "incumbent_trace": [(nid, obj) for nid, obj in trace],
        "best_bound": flip * proven if np.isfinite(proven) else None,
        "gap": (best_obj - proven) if np.isfinite(best_obj) else None,
        "wall_s": wall,
        "workers": cfg.workers,
    }
    if root_unbounded:
        return Solution(UNBOUNDED, None, None, None, stats)
    if best_x is None:
        if status == NODE_LIMIT:
            return Solution(NODE_LIMIT, None, None, None, stats)
        return Solution(INFEASIBLE, None, None, None, stats)
    return Solution(status, best_x, flip * best_obj, None, stats)
