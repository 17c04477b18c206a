"""``ccssp`` command line.

Commands: ``solve``, ``table``, ``ratio``, ``reduce-gcc``, ``export-mps``,
``eval``. Results go to CSV/JSON; every command that writes ``--out`` also
writes ``<out>.manifest.json`` (command, problem source, config hash, seed,
version, per-phase timings).

Exit codes: 0 success, 2 usage or input error, 3 infeasible, 4 a limit was
hit (node/time/iteration limit, node cap, augmentation cap, rounding sweeps).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from contextlib import contextmanager
from importlib import metadata

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_LIMIT = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


class Phases:
    """Wall-clock seconds per named phase."""

    def __init__(self):
        self.seconds: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - t0


def _config_hash(args) -> str:
    keep = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "pretty", "manifest")}
    return hashlib.sha256(json.dumps(keep, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _write_manifest(args, phases: Phases, extra: dict | None = None):
    path = args.manifest or (f"{args.out}.manifest.json" if getattr(args, "out", None) else None)
    if path is None:
        return
    source = getattr(args, "problem", None) or (f"builtin:{args.builtin}" if getattr(args, "builtin", None) else None)
    doc = {"command": args.command, "problem_source": source, "config_hash": _config_hash(args),
           "seed": getattr(args, "seed", None), "version": _version(),
           "timings": {k: round(v, 6) for k, v in phases.seconds.items()}}
    doc.update(extra or {})
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, default=str)


def _emit_rows(args, header: list[str], rows: list[list]) -> str:
    """Render rows as CSV (default) or an aligned table (``--pretty``)."""
    if getattr(args, "pretty", False):
        cells = [header] + [[_fmt(v) for v in r] for r in rows]
        width = [max(len(r[i]) for r in cells) for i in range(len(header))]
        return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, width)) for r in cells) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[_fmt(v) for v in r] for r in rows])
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _output(args, text: str):
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- problem input ---------------------------------------------------------------------

def _add_problem_args(p, builtin=True):
    p.add_argument("problem", nargs="?", help="problem JSON file")
    if builtin:
        p.add_argument("--builtin", choices=("grid", "highway"), help="use a builtin generator instead of a file")
        p.add_argument("--size", type=int, default=100, help="grid side length (builtin grid)")
        p.add_argument("--h", "--horizon", dest="horizon", type=int, help="override the horizon")
        p.add_argument("--delta", type=float, help="override every risk budget")
        p.add_argument("--seed", type=int, default=0, help="instance / sampling seed")


def _load_problem(args):
    from dataclasses import replace

    from .benchmarks import gen_highway, small_grid, small_highway
    from .io import ProblemFormatError, load_problem

    if getattr(args, "builtin", None):
        if args.problem:
            raise CliError("give either a problem file or --builtin, not both")
        h = args.horizon
        d = 0.05 if args.delta is None else args.delta
        if args.builtin == "grid":
            return small_grid(seed=args.seed, size=args.size, horizon=h or 10, delta=d)
        return small_highway(h or 3, d)
    if not args.problem:
        raise CliError("no problem given (file argument or --builtin)")
    try:
        spec = load_problem(args.problem)
    except OSError as exc:
        raise CliError(f"cannot read {args.problem}: {exc}") from exc
    except ProblemFormatError as exc:
        raise CliError(str(exc)) from exc
    if getattr(args, "horizon", None):
        spec = replace(spec, horizon=args.horizon)
    if getattr(args, "delta", None) is not None:
        spec = replace(spec, risks=tuple(replace(r, delta=args.delta) for r in spec.risks))
    return spec


def _solver_config(args):
    from .solver import SolverConfig

    return SolverConfig(node_limit=args.node_limit, time_limit=args.time_limit, lp_backend=args.lp_backend)


def _add_solver_args(p):
    p.add_argument("--node-limit", type=int, default=100_000)
    p.add_argument("--time-limit", type=float, default=float("inf"), help="seconds")
    p.add_argument("--lp-backend", choices=("auto", "simplex", "highs"), default="auto")


def _status_code(status: str) -> int:
    from .solver import INFEASIBLE, OPTIMAL

    if status == OPTIMAL:
        return EXIT_OK
    if status == INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_LIMIT


# -- commands ---------------------------------------------------------------------------

def cmd_solve(args) -> int:
    from .graph import census, expand
    from .ilp import InfeasibleAtRoot, build_ilp, extract_policy
    from .io import save_policy
    from .risk import risk_report
    from .rounding import NoFeasibleRounding, RoundingConfig, round_solution
    from .solver import solve_lp, solve_milp

    phases = Phases()
    spec = _load_problem(args)
    config = _solver_config(args)
    with phases("expand"):
        graph = expand(spec)
        nodes = census(graph)
    relaxed = args.mode != "ilp"
    try:
        with phases("build"):
            model = build_ilp(graph, spec, relaxed=relaxed)
    except InfeasibleAtRoot as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        _write_manifest(args, phases, {"status": "infeasible"})
        return EXIT_INFEASIBLE
    with phases("solve"):
        sol = solve_lp(model, config) if relaxed else solve_milp(model, config)
    if not sol.ok:
        print(f"solver status: {sol.status}", file=sys.stderr)
        _write_manifest(args, phases, {"status": sol.status})
        return _status_code(sol.status)
    objective, iterations = sol.objective, None
    if args.mode == "round":
        try:
            with phases("round"):
                out = round_solution(sol, graph, spec, config=RoundingConfig(seed=args.seed,
                                     max_outer_iterations=args.max_sweeps), model=model)
        except NoFeasibleRounding as exc:
            print(str(exc), file=sys.stderr)
            _write_manifest(args, phases, {"status": "rounding_failed"})
            return EXIT_LIMIT
        policy, objective, iterations = out.policy, out.objective, out.iterations
    else:
        policy = extract_policy(sol.x, graph, model)
    with phases("verify"):
        report = risk_report(graph, policy, args.samples, args.seed)
    if args.policy_out:
        save_policy(policy, args.policy_out)
    header = ["mode", "status", "objective", "graph_nodes", "tree_nodes", "bb_nodes", "sweeps"]
    header += [f"risk_{j}" for j in range(1, len(report.recursive) + 1)]
    header += [f"{k}_seconds" for k in ("expand", "build", "solve", "round", "verify")]
    row = [args.mode, sol.status, objective, nodes.graph_nodes, nodes.tree_nodes,
           sol.stats.get("bb_nodes", 0), iterations] + list(report.recursive)
    row += [round(phases.seconds.get(k, 0.0), 6) for k in ("expand", "build", "solve", "round", "verify")]
    _output(args, _emit_rows(args, header, [row]))
    if args.report:
        with open(args.report, "w") as fh:
            json.dump({"objective": objective, "status": sol.status, "mode": args.mode,
                       "graph_nodes": nodes.graph_nodes, "tree_nodes": nodes.tree_nodes,
                       "risk": report.to_json()}, fh, indent=1)
    _write_manifest(args, phases, {"status": sol.status, "objective": objective})
    return EXIT_OK


TABLE_HEADER = ["horizon", "delta", "ilp_objective", "ilp_seconds", "rounding_objective", "rounding_seconds",
                "graph_nodes", "tree_nodes", "status", "note"]


def _parse_list(text: str, kind):
    return [kind(v) for v in text.split(",") if v.strip()] if text else []


def cmd_table(args) -> int:
    from .benchmarks import small_grid, small_highway
    from .graph import NodeCapExceeded, census, expand
    from .ilp import InfeasibleAtRoot, build_ilp
    from .rounding import NoFeasibleRounding, RoundingConfig, round_solution
    from .solver import solve_lp, solve_milp

    horizons = _parse_list(args.horizons, int)
    deltas = _parse_list(args.deltas, float)
    config = _solver_config(args)
    phases = Phases()
    if args.benchmark == "grid":
        make = lambda h, d: small_grid(seed=args.seed, size=args.size, horizon=h, delta=d)
    else:
        make = lambda h, d: small_highway(h, d)
    rows, best, rbest, sense = [], {}, {}, None
    for h in horizons:
        for d in deltas:
            spec = make(h, d)
            sense = spec.sense
            row = [h, d, None, None, None, None, None, None, "", ""]
            try:
                with phases("expand"):
                    graph = expand(spec)
                    nodes = census(graph)
                row[6], row[7] = nodes.graph_nodes, nodes.tree_nodes
                if args.nodes_only:
                    row[8] = "skipped"
                    rows.append(row)
                    continue
                t0 = time.perf_counter()
                with phases("solve"):
                    sol = solve_milp(build_ilp(graph, spec), config)
                row[3] = round(time.perf_counter() - t0, 6)
                row[8] = sol.status
                if sol.ok:
                    row[2] = best[(h, d)] = sol.objective
                t0 = time.perf_counter()
                with phases("round"):
                    relaxed = build_ilp(graph, spec, relaxed=True)
                    lp = solve_lp(relaxed, config)
                    if lp.ok:
                        out = round_solution(lp, graph, spec, config=RoundingConfig(seed=args.seed), model=relaxed)
                        row[4] = rbest[(h, d)] = out.objective
                row[5] = round(time.perf_counter() - t0, 6)
            except (InfeasibleAtRoot, NoFeasibleRounding, NodeCapExceeded) as exc:
                row[8] = row[8] or type(exc).__name__
                row[9] = str(exc)
            rows.append(row)
    if args.no_timing:
        for r in rows:
            r[3] = r[5] = None
    _output(args, _emit_rows(args, TABLE_HEADER, rows))
    violations = _monotonicity_violations(best, horizons, deltas, sense, "ILP")
    violations += _monotonicity_violations(rbest, horizons, deltas, sense, "rounding", per_h=False)
    for v in violations:
        print(f"monotonicity: {v}", file=sys.stderr)
    _write_manifest(args, phases, {"monotonicity_violations": violations})
    return EXIT_OK


def _monotonicity_violations(best, horizons, deltas, sense, label, per_h=True):
    from .model import Sense

    sign = -1.0 if sense == Sense.MAX else 1.0
    out = []
    for h in horizons:
        ds = sorted(d for d in deltas if (h, d) in best)
        for d0, d1 in zip(ds, ds[1:]):
            if sign * best[(h, d1)] > sign * best[(h, d0)] + 1e-6:
                out.append(f"{label} h={h}: objective at delta={d1} worse than at delta={d0}")
    if per_h:
        for d in deltas:
            hs = sorted(h for h in horizons if (h, d) in best)
            for h0, h1 in zip(hs, hs[1:]):
                if sign * best[(h1, d)] / h1 > sign * best[(h0, d)] / h0 + 1e-9:
                    out.append(f"{label} delta={d}: objective/h rises from h={h0} to h={h1}")
    return out


def cmd_ratio(args) -> int:
    from .rounding import NoFeasibleRounding, approximation_ratio_experiment

    if args.trials < 1:
        raise CliError("--trials must be at least 1")
    if not 0 < args.confidence < 1:
        raise CliError("--confidence must lie in (0, 1)")
    phases = Phases()
    spec = _load_problem(args)
    try:
        with phases("experiment"):
            exp = approximation_ratio_experiment(spec, args.trials, seed=args.seed, confidence=args.confidence,
                                                 solver_config=_solver_config(args))
    except NoFeasibleRounding as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_LIMIT
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INFEASIBLE if "infeasible" in str(exc) else EXIT_LIMIT
    _output(args, exp.to_csv(timing=args.timing))
    half = None if math.isnan(exp.ci_half_width) else exp.ci_half_width
    summary = {"trials": len(exp.trials), "mean_ratio": exp.mean, "ci_half_width": half if half is not None else "n/a",
               "confidence": exp.confidence, "min_ratio": exp.min_ratio, "ilp_objective": exp.ilp_objective}
    if args.timing:
        faster = sum(t.seconds < exp.ilp_seconds for t in exp.trials)
        summary.update(ilp_seconds=exp.ilp_seconds, lp_seconds=exp.lp_seconds, rounding_faster=faster)
    print(json.dumps(summary), file=sys.stderr)
    if args.out:
        with open(f"{args.out}.summary.json", "w") as fh:
            json.dump(summary, fh, indent=1)
    _write_manifest(args, phases, {"summary": summary})
    return EXIT_OK


def cmd_reduce_gcc(args) -> int:
    from .gcc import AugmentationBlowup, plan_discretization, reduce_discretized, reduce_exact
    from .io import problem_to_dict

    phases = Phases()
    spec = _load_problem(args)
    if not spec.global_costs:
        raise CliError("problem has no global chance criterion")
    try:
        with phases("reduce"):
            if args.mode == "exact":
                reduced, plan = reduce_exact(spec, cap=args.cap), None
            else:
                if args.epsilon is None or not 0 < args.epsilon < 1:
                    raise CliError("--epsilon must lie in (0, 1)")
                plan = plan_discretization(spec, args.epsilon, strict=args.strict)
                reduced = reduce_discretized(spec, plan, strict=args.strict)
            doc = problem_to_dict(reduced, node_cap=args.cap)
    except AugmentationBlowup as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_LIMIT
    _output(args, json.dumps(doc, indent=1) + "\n")
    if plan is not None:
        print(json.dumps(plan.summary()), file=sys.stderr)
    _write_manifest(args, phases, {"plan": plan.summary() if plan else None})
    return EXIT_OK


def cmd_export_mps(args) -> int:
    from .graph import expand
    from .ilp import InfeasibleAtRoot, build_ilp
    from .mps import write_lp, write_mps

    phases = Phases()
    spec = _load_problem(args)
    try:
        with phases("build"):
            model = build_ilp(expand(spec), spec, relaxed=args.relaxed)
    except InfeasibleAtRoot as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    buf = io.StringIO()
    (write_lp if args.format == "lp" else write_mps)(model, buf)
    _output(args, buf.getvalue())
    _write_manifest(args, phases)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .graph import expand
    from .io import ProblemFormatError, load_policy
    from .model import PolicyMismatch
    from .risk import expected_value, risk_report

    phases = Phases()
    spec = _load_problem(args)
    try:
        policy = load_policy(args.policy)
    except (OSError, ValueError, ProblemFormatError) as exc:
        raise CliError(f"cannot read policy {args.policy}: {exc}") from exc
    with phases("expand"):
        graph = expand(spec)
    try:
        with phases("verify"):
            report = risk_report(graph, policy, args.samples, args.seed)
            value = expected_value(graph, graph.policy_probs(policy))
    except PolicyMismatch as exc:
        raise CliError(f"policy does not cover the problem: {exc}") from exc
    doc = {"expected_utility": value, "risk": report.to_json(),
           "feasible": all(r <= d + 1e-9 for r, d in zip(report.recursive, report.deltas))}
    _output(args, json.dumps(doc, indent=1) + "\n")
    _write_manifest(args, phases)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccssp", description="Chance-constrained SSP planning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="result file (default: stdout)")
        p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json when --out is set)")

    p = sub.add_parser("solve", help="solve one problem (ILP, LP relaxation, or LP + rounding)")
    _add_problem_args(p)
    _add_solver_args(p)
    common(p)
    p.add_argument("--mode", choices=("ilp", "lp", "round"), default="ilp")
    p.add_argument("--policy-out", help="write the policy JSON here")
    p.add_argument("--report", help="write objective and risk report JSON here")
    p.add_argument("--samples", type=int, default=0, help="Monte Carlo runs for the risk report")
    p.add_argument("--max-sweeps", type=int, default=1000, help="rounding sweeps before giving up")
    p.add_argument("--pretty", action="store_true", help="aligned table instead of CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("table", help="objective/time/node table over horizons and budgets")
    p.add_argument("--benchmark", choices=("grid", "highway"), default="grid")
    p.add_argument("--horizons", default="2,4,6", help="comma-separated horizons")
    p.add_argument("--deltas", default="0.05,0.1", help="comma-separated risk budgets")
    p.add_argument("--size", type=int, default=100, help="grid side length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes-only", action="store_true", help="only expand and count nodes")
    p.add_argument("--no-timing", action="store_true", help="blank the time columns (byte-stable output)")
    p.add_argument("--pretty", action="store_true")
    _add_solver_args(p)
    common(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("ratio", help="approximation ratio of LP rounding over repeated trials")
    _add_problem_args(p)
    _add_solver_args(p)
    common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--confidence", type=float, default=0.99)
    p.add_argument("--timing", action="store_true", help="add wall-clock columns (not byte-stable)")
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("reduce-gcc", help="reduce global chance constraints to a CC-SSP")
    _add_problem_args(p, builtin=False)
    common(p)
    p.add_argument("--mode", choices=("exact", "discretized"), default="discretized")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--strict", action="store_true", help="flag risk at (sum > P) instead of (1+eps)P")
    p.add_argument("--cap", type=int, default=200_000, help="augmented-state cap")
    p.set_defaults(func=cmd_reduce_gcc)

    p = sub.add_parser("export-mps", help="write the ILP as MPS or LP format")
    _add_problem_args(p)
    common(p)
    p.add_argument("--format", choices=("mps", "lp"), default="mps")
    p.add_argument("--relaxed", action="store_true", help="export the LP relaxation")
    p.set_defaults(func=cmd_export_mps)

    p = sub.add_parser("eval", help="evaluate a policy file: exact and sampled risk, expected utility")
    _add_problem_args(p)
    common(p)
    p.add_argument("--policy", required=True, help="policy JSON file")
    p.add_argument("--samples", type=int, default=0)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    from .graph import NodeCapExceeded

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"ccssp {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except NodeCapExceeded as exc:
        print(f"ccssp {args.command}: {exc}", file=sys.stderr)
        return EXIT_LIMIT


if __name__ == "__main__":
    sys.exit(main())
