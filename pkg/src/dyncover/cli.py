"""Batch entry point: generate instances, solve them with a chosen method,
evaluate solutions, and compare methods into a results CSV."""

from __future__ import annotations

import argparse
import ast
import logging
import os
import sys
from pathlib import Path

from . import io as dio
from .benders import GammaVariant, solve_abbc, solve_bc, solve_greedy, solve_ubbc
from .localbranching import LbConfig, solve_lb
from .milp import MilpOptions, SolveResult
from .model import Instance, Solution, coverage

log = logging.getLogger("dyncover")

_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = _LEVELS.get(os.environ.get("DYNCOVER_LOG", "quiet"), logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(message)s")


def _load_instance(path: str) -> Instance:
    text = Path(path).read_text()
    return dio.parse_instance(text, name=Path(path).stem)


def _parse_solution_arg(arg: str, inst: Instance) -> Solution:
    if Path(arg).exists():
        return dio.parse_solution(Path(arg).read_text())
    values = ast.literal_eval(arg)
    if values and not isinstance(values[0], (tuple, list)):
        # flat per-facility vector; valid for single-period instances
        values = [[v] * inst.periods for v in values] if inst.periods == 1 else None
        if values is None:
            raise ValueError("flat solution literals need a single-period instance")
    return Solution(tuple(tuple(int(v) for v in row) for row in values))


def _append_csv(path: str, rows: list[str]) -> None:
    target = Path(path)
    fresh = not target.exists() or target.stat().st_size == 0
    with target.open("a") as fh:
        if fresh:
            fh.write(dio.result_csv_header() + "\n")
        for row in rows:
            fh.write(row + "\n")


def _solve_one(inst: Instance, args) -> SolveResult:
    opts = MilpOptions(time_limit_seconds=args.time_limit)
    method = args.method
    if method == "greedy":
        return solve_greedy(inst)
    if method == "bc":
        return solve_bc(inst, opts)
    if method == "ubbc":
        return solve_ubbc(inst, opts)
    if method == "abbc":
        pareto = args.cuts == "pareto"
        variant = GammaVariant(args.cuts) if not pareto else GammaVariant.B1
        return solve_abbc(
            inst,
            opts,
            multicut=args.multicut,
            pareto=pareto,
            partial=args.partial,
            warmstart=True,
            root_only_fractional=True,
            bdd=args.bdd,
            cut_variant=variant,
        )
    if method == "lb":
        config = LbConfig(
            sub=args.sub,
            sep=args.sep,
            kappa=args.kappa,
            sepb_trigger=args.sepb_trigger,
            subproblem_time_limit=args.sp_time_limit,
        )
        return solve_lb(inst, opts, config)
    raise ValueError(f"unknown method {method!r}")


def _print_result(res: SolveResult) -> None:
    obj = "-" if res.objective is None else f"{res.objective:.6g}"
    gap = "-" if res.gap != res.gap or res.gap == float("inf") else f"{res.gap * 100:.2f}%"
    print(
        f"method={res.method} status={res.status} objective={obj} "
        f"bound={res.bound:.6g} gap={gap} nodes={res.nodes} "
        f"time={res.wall_seconds:.3f}s"
    )


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", default="abbc",
                   choices=["greedy", "bc", "ubbc", "abbc", "lb"])
    p.add_argument("--cuts", default="pareto", choices=["b0", "b1", "b2", "pareto"])
    p.add_argument("--multicut", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--partial", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--bdd", action="store_true")
    p.add_argument("--sub", default="subd", choices=["subd", "subb"])
    p.add_argument("--sep", default="sepd", choices=["sepd", "sepb"])
    p.add_argument("--sepb-trigger", default="improving", choices=["all", "improving"])
    p.add_argument("--kappa", type=int, default=2)
    p.add_argument("--time-limit", type=float, default=None)
    p.add_argument("--sp-time-limit", type=float, default=60.0)
    p.add_argument("--csv", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyncover",
        description="Dynamic maximum covering: exact solvers and utilities.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded random instance")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--users", type=int, required=True)
    g.add_argument("--facilities", type=int, required=True)
    g.add_argument("--periods", type=int, default=1)
    g.add_argument("--domain", default="cardinality",
                   choices=["cardinality", "knapsack", "ev-style"])
    g.add_argument("--radius", type=float, default=0.3)
    g.add_argument("--demand-low", type=float, default=1.0)
    g.add_argument("--demand-high", type=float, default=100.0)
    g.add_argument("--growth", type=float, default=1.0)
    g.add_argument("--limit", type=float, default=None)
    g.add_argument("--integer-demands", action="store_true")
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    _add_solver_flags(s)

    e = sub.add_parser("evaluate", help="print the coverage of a solution")
    e.add_argument("instance")
    e.add_argument("--solution", required=True,
                   help="solution JSON file or a literal like (1,0,0)")

    c = sub.add_parser("compare", help="run several methods, one CSV row each")
    c.add_argument("instance")
    c.add_argument("--methods", default="greedy,bc,ubbc,abbc,lb")
    c.add_argument("--csv", default=None)
    c.add_argument("--time-limit", type=float, default=None)
    c.add_argument("--sp-time-limit", type=float, default=60.0)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            params = dio.GeneratorParams(
                seed=args.seed,
                periods=args.periods,
                facility_count=args.facilities,
                user_count=args.users,
                coverage_radius=args.radius,
                demand_low=args.demand_low,
                demand_high=args.demand_high,
                demand_growth=args.growth,
                domain_template=args.domain,
                cardinality_limit=(
                    int(args.limit)
                    if args.limit is not None and args.domain == "cardinality"
                    else None
                ),
                budget_limit=(
                    args.limit if args.domain != "cardinality" else None
                ),
                integer_demands=args.integer_demands,
            )
            inst = dio.generate_instance(params)
            Path(args.out).write_text(dio.write_instance(inst))
            print(f"wrote {args.out}: {inst.facility_count} facilities, "
                  f"{inst.user_count} users, {inst.periods} periods")
            return 0

        if args.command == "solve":
            inst = _load_instance(args.instance)
            res = _solve_one(inst, args)
            _print_result(res)
            if args.csv:
                _append_csv(args.csv, [dio.write_result(res, inst.name)])
            return 0

        if args.command == "evaluate":
            inst = _load_instance(args.instance)
            sol = _parse_solution_arg(args.solution, inst)
            print(f"{coverage(inst, sol):.17g}")
            return 0

        if args.command == "compare":
            inst = _load_instance(args.instance)
            rows = []
            for method in args.methods.split(","):
                ns = argparse.Namespace(
                    method=method.strip(), cuts="pareto", multicut=True,
                    partial=True, bdd=False, sub="subd", sep="sepd",
                    sepb_trigger="improving", kappa=2,
                    time_limit=args.time_limit, sp_time_limit=args.sp_time_limit,
                )
                res = _solve_one(inst, ns)
                _print_result(res)
                rows.append(dio.write_result(res, inst.name))
            if args.csv:
                _append_csv(args.csv, rows)
            return 0
    except Exception as exc:  # solver/input failure -> exit 1, message on stderr
        log.error("error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
