"""Command-line front end.

Subcommands: ``generate`` (instances), ``build`` (reformulations to IR
files), ``solve``, ``oracle`` (worst-case violation probability of a fixed
decision), ``study`` (the benchmark sweeps).  Exit codes: 0 success,
1 validation error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io
from .conic import ConeProgram
from .experiments import (
    KnapsackStudyConfig,
    TransportStudyConfig,
    generate_knapsack,
    generate_transport,
    knapsack_problem,
    run_knapsack_study,
    run_transport_study,
    sample_costs,
)
from .model import validate_problem
from .oracle import check_zd_membership
from .reformulate import (
    build_binary_cvar_mip,
    build_cvar_relaxation,
    build_robust_membership,
    build_saa_milp,
    build_transport_cvar_lp,
)
from .solve import OPTIMAL, BnbConfig, branch_and_bound, get_adapter, solve_continuous

VALIDATION_ERROR = 1
SOLVER_FAILURE = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drccp")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a random benchmark instance")
    g.add_argument("family", choices=["transport", "knapsack"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=None, help="customers / items")
    g.add_argument("--m", type=int, default=None, help="facilities (transport)")
    g.add_argument("--t", type=int, default=None, help="uncertain rows (knapsack)")
    g.add_argument("--samples", type=int, default=None, help="training sample count")
    g.add_argument("--eps", type=float, default=0.10)
    g.add_argument("--delta", type=float, default=0.01)
    g.add_argument("--out", required=True)

    b = sub.add_parser("build", help="compile a model to a cone-program file")
    b.add_argument("model", choices=["cvar", "binary-cvar", "saa", "robust", "transport-cvar"])
    b.add_argument("--problem", required=True, help="problem or instance JSON file")
    b.add_argument("--eps", type=float, default=None, help="override risk level (instance files)")
    b.add_argument("--delta", type=float, default=None, help="override radius (instance files)")
    b.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="solve an IR file or build-and-solve a problem")
    s.add_argument("--program", help="cone-program IR file")
    s.add_argument("--problem", help="problem/instance JSON (requires --model)")
    s.add_argument("--model", choices=["cvar", "binary-cvar", "saa", "robust", "transport-cvar"])
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--solver", default=None, help="adapter name (default: env or clarabel)")
    s.add_argument("--max-nodes", type=int, default=100000)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default=None, help="write the solution JSON here")

    o = sub.add_parser("oracle", help="worst-case violation probability of a fixed x")
    o.add_argument("--problem", required=True)
    o.add_argument("--x", required=True, help="comma-separated decision vector")

    st = sub.add_parser("study", help="run a benchmark sweep, emitting CSV files")
    st.add_argument("family", choices=["transport", "knapsack"])
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--n", type=int, default=None)
    st.add_argument("--m", type=int, default=None)
    st.add_argument("--t", type=int, default=None)
    st.add_argument("--samples", type=int, default=None)
    st.add_argument("--instances", type=int, default=None)
    st.add_argument("--test-samples", type=int, default=2000)
    st.add_argument("--eps", type=float, default=0.10)
    st.add_argument("--delta", type=float, default=0.01)
    st.add_argument("--delta-grid", default=None, help="comma-separated radii (transport)")
    st.add_argument("--n-grid", default=None, help="comma-separated sample sizes (transport)")
    st.add_argument("--solver", default=None)
    st.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    st.add_argument("--out", required=True, help="output file prefix")
    return p


def _log_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    print(f"config: {json.dumps(resolved, default=str)}", file=sys.stderr)


def _build_from_files(model: str, path: str, eps, delta):
    data = io.load_json(path)
    if model in ("transport-cvar",) or (model == "saa" and data.get("kind") == "transport"):
        instance, samples = io.transport_from_dict(data)
        eps = 0.10 if eps is None else eps
        if model == "saa":
            return build_saa_milp(instance, samples, eps)
        delta = 0.01 if delta is None else delta
        prog, _ = build_transport_cvar_lp(instance, samples, eps, delta)
        return prog
    if data.get("kind") == "knapsack":
        instance = io.knapsack_from_dict(data)
        problem = knapsack_problem(
            instance, 0.10 if eps is None else eps, 0.01 if delta is None else delta
        )
    else:
        problem = io.problem_from_dict(data)
    diags = validate_problem(problem)
    if diags:
        raise ValueError("; ".join(diags))
    if model == "cvar":
        return build_cvar_relaxation(problem)[0]
    if model == "binary-cvar":
        return build_binary_cvar_mip(problem)[0]
    if model == "robust":
        return build_robust_membership(problem)
    if model == "saa":
        return build_saa_milp(problem)
    raise ValueError(f"model {model!r} does not apply to this input file")


def _cmd_generate(args) -> int:
    if args.family == "transport":
        instance = generate_transport(
            args.seed, m=args.m or 4, n=args.n or 6
        )
        samples, clip_rate = sample_costs(instance, args.samples or 10, "samples")
        payload = io.transport_to_dict(instance, samples)
        payload["clip_rate"] = clip_rate
        io.save_json(payload, args.out)
    else:
        instance = generate_knapsack(
            args.seed, n=args.n or 20, n_rows=args.t or 10,
            n_samples=args.samples or 100,
        )
        io.save_json(io.knapsack_to_dict(instance), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_build(args) -> int:
    prog = _build_from_files(args.model, args.problem, args.eps, args.delta)
    with open(args.out, "w") as fh:
        fh.write(prog.to_text())
    print(f"wrote {args.out}: {prog.n_vars} variables, {len(prog.blocks)} blocks")
    return 0


def _cmd_solve(args) -> int:
    if args.program:
        with open(args.program) as fh:
            prog = ConeProgram.from_text(fh.read())
    elif args.problem and args.model:
        prog = _build_from_files(args.model, args.problem, args.eps, args.delta)
    else:
        raise ValueError("solve needs --program, or --problem with --model")
    adapter = get_adapter(args.solver)
    if prog.integrality:
        sol = branch_and_bound(
            prog, adapter, BnbConfig(max_nodes=args.max_nodes, workers=args.workers)
        )
    else:
        sol = solve_continuous(prog, adapter)
    payload = {
        "status": sol.status,
        "objective": sol.objective_value,
        "primal": sol.primal.tolist() if sol.primal is not None else None,
        "stats": {k: v for k, v in sol.solve_stats.items() if k != "incumbent_trace"},
    }
    text = json.dumps(payload, default=str)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(f"status={sol.status} objective={sol.objective_value}")
    return 0 if sol.status == OPTIMAL else SOLVER_FAILURE


def _cmd_oracle(args) -> int:
    data = io.load_json(args.problem)
    if data.get("kind") == "knapsack":
        instance = io.knapsack_from_dict(data)
        problem = knapsack_problem(instance, 0.10, 0.01)
    else:
        problem = io.problem_from_dict(data)
    diags = validate_problem(problem)
    if diags:
        raise ValueError("; ".join(diags))
    x = np.array([float(v) for v in args.x.split(",")])
    feasible, est = check_zd_membership(x, problem)
    print(
        f"probability={est.probability:.10g} lambda_star={est.lambda_star:.10g} "
        f"feasible={str(feasible).lower()} risk={problem.risk}"
    )
    return 0


def _cmd_study(args) -> int:
    if args.family == "transport":
        cfg = TransportStudyConfig(
            m=args.m or 3,
            n=args.n or 4,
            eps=args.eps,
            n_instances=args.instances or 10,
            n_test=args.test_samples,
            seed=args.seed,
        )
        if args.delta_grid:
            cfg.delta_grid = tuple(float(v) for v in args.delta_grid.split(","))
        if args.n_grid:
            cfg.n_grid = tuple(int(v) for v in args.n_grid.split(","))
        if args.solver:
            cfg.lp_solver = args.solver
        report = run_transport_study(cfg)
    else:
        cfg = KnapsackStudyConfig(
            n=args.n or 10,
            n_rows=args.t or 5,
            n_samples=args.samples or 50,
            eps=args.eps,
            delta=args.delta,
            n_instances=args.instances or 20,
            n_test=args.test_samples,
            seed=args.seed,
        )
        if args.solver:
            cfg.solver = args.solver
        report = run_knapsack_study(cfg)
    if args.format == "csv":
        rows_path = f"{args.out}_rows.csv"
        agg_path = f"{args.out}_aggregates.csv"
        with open(rows_path, "w") as fh:
            fh.write(report.rows_csv())
        with open(agg_path, "w") as fh:
            fh.write(report.aggregates_csv())
    else:
        rows_path = f"{args.out}_rows.jsonl"
        agg_path = f"{args.out}_aggregates.jsonl"
        with open(rows_path, "w") as fh:
            for row in report.rows:
                fh.write(json.dumps(row, default=str) + "\n")
        with open(agg_path, "w") as fh:
            for agg in report.aggregates:
                fh.write(json.dumps(agg, default=str) + "\n")
    print(f"wrote {rows_path} and {agg_path}")
    return 0


def dispatch(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    _log_config(args)
    handlers = {
        "generate": _cmd_generate,
        "build": _cmd_build,
        "solve": _cmd_solve,
        "oracle": _cmd_oracle,
        "study": _cmd_study,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return VALIDATION_ERROR


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
