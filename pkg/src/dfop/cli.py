"""Command-line front end: solve, bench, profile, audit, list-problems.

Runs are configured by a JSON manifest; command-line flags override
manifest keys. All outputs land in the manifest's output directory.
Exit codes: 0 success, 1 run failure, 2 bad manifest or arguments.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import bench, privacy
from .exceptions import DfopError, ParameterError
from .objective import TransformSchedule
from .problems import get_problem, problem_library, problem_names
from .solver import SolverConfig, minimize

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_BAD_MANIFEST = 2

_SOLVE_SOLVERS = ("dfop", "dfop-newuoa", "newuoa-n")


class ManifestError(Exception):
    pass


def _load_manifest(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc


def _merge(manifest, args, keys):
    merged = dict(manifest)
    for key in keys:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            merged[key] = value
    return merged


def _mechanism(entry, default_c=1.0):
    """Mechanism factory from a manifest entry (name or None)."""
    if entry in (None, "identity"):
        return None
    if isinstance(entry, dict):
        name = entry.get("name")
        c = float(entry.get("C", default_c))
    else:
        name, c = entry, default_c
    if name == "profile":
        return bench.mechanism_profile
    if name in bench.NOISE_CONFIGS:
        return lambda problem, seed, _n=name, _c=c: bench.noise_config(
            _n, seed=seed, C=_c)
    raise ManifestError(f"unknown mechanism {name!r}")


def _outdir(merged):
    out = merged.get("out", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _schedule_for(mechanism, problem, seed):
    if mechanism is None:
        return TransformSchedule.identity()
    return mechanism(problem, seed)


def cmd_solve(args):
    merged = _merge(_load_manifest(args.manifest), args,
                    ["problem", "solver", "seed", "budget", "rho_beg",
                     "rho_end", "m", "mechanism", "out"])
    name = merged.get("problem")
    if not name:
        raise ManifestError("manifest needs a problem name")
    problem = get_problem(name)
    solver = merged.get("solver", "dfop")
    if solver not in _SOLVE_SOLVERS:
        raise ManifestError(f"solve supports {_SOLVE_SOLVERS}, got {solver!r}")
    seed = int(merged.get("seed", 0))
    mechanism = _mechanism(merged.get("mechanism"))
    if solver == "newuoa-n":
        mechanism = None
    cfg = SolverConfig(
        rho_beg=float(merged.get("rho_beg", problem.rho_beg)),
        rho_end=float(merged.get("rho_end", 1e-8)),
        m=merged.get("m"),
        max_evals=int(merged.get("budget", 400 * problem.dimension)),
        newuoa_mode=(solver != "dfop"),
        seed=seed,
        audit=bool(merged.get("audit", False)),
    )
    schedule = _schedule_for(mechanism, problem, seed)
    trace = minimize(problem.spec(), schedule, problem.x0, cfg)
    out = _outdir(merged)
    trace.to_csv(os.path.join(out, "trace.csv"))
    trace.to_json(os.path.join(out, "trace.json"))
    flag = "Y" if trace.f_opt <= 1e-3 else "N"
    print(f"problem   : {problem.name}")
    print(f"solver    : {solver}")
    print(f"x_opt     : {np.array2string(trace.x_opt, precision=6)}")
    print(f"F_opt     : {trace.f_opt:.6e}")
    print(f"NF        : {trace.nf}")
    print(f"status    : {trace.status}")
    print(f"flag      : {flag}")
    return EXIT_OK if trace.status != "aborted" else EXIT_RUN_FAILURE


def cmd_bench(args):
    merged = _merge(_load_manifest(args.manifest), args,
                    ["problems", "solvers", "seeds", "budget", "tau",
                     "mechanism", "out", "audit"])
    names = merged.get("problems") or problem_names()
    if isinstance(names, str):
        names = [names]
    problems = [get_problem(n) for n in names]
    solvers = merged.get("solvers") or list(bench.SOLVER_IDS)
    if isinstance(solvers, str):
        solvers = [solvers]
    for s in solvers:
        if s not in bench.SOLVER_IDS:
            raise ManifestError(f"unknown solver {s!r}")
    seeds = merged.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    budget = int(merged.get("budget", 400 * max(p.dimension for p in problems)))
    tau = float(merged.get("tau", 1e-5))
    mechanism = _mechanism(merged.get("mechanism"))
    out = _outdir(merged)

    records = bench.run_suite(problems, solvers, seeds, budget,
                              mechanism=mechanism)
    bench.records_to_csv(records, os.path.join(out, "records.csv"))
    known = {p.name: p.f_best for p in problems if p.f_best is not None}
    table = bench.performance_profile(records, tau, known_best=known)
    table.to_csv(os.path.join(out, "profile.csv"))
    bench.plot_profile(table, os.path.join(out, "profile.svg"),
                       dat_path=os.path.join(out, "profile.dat"),
                       title=f"tau = {tau:g}")

    print(f"{'Algorithm':<14}{'Problem':<18}{'NF':>8}  {'F_opt':>12}  flag")
    failures = 0
    for rec in records:
        flag = "Y" if rec.f_final <= 1e-3 else "N"
        if rec.status == "failed":
            failures += 1
        print(f"{rec.solver:<14}{rec.problem:<18}{rec.nf:>8}  "
              f"{rec.f_final:>12.4e}  {flag}")
    return EXIT_OK if failures == 0 else EXIT_RUN_FAILURE


def cmd_profile(args):
    merged = _merge(_load_manifest(args.manifest), args,
                    ["records", "tau", "out"])
    path = merged.get("records")
    if not path or not os.path.exists(path):
        raise ManifestError("profile needs an existing records CSV")
    tau = float(merged.get("tau", 1e-5))
    out = _outdir(merged)
    records = bench.records_from_csv(path)
    table = bench.performance_profile(records, tau)
    table.to_csv(os.path.join(out, "profile.csv"))
    bench.plot_profile(table, os.path.join(out, "profile.svg"),
                       dat_path=os.path.join(out, "profile.dat"),
                       title=f"tau = {tau:g}")
    print(f"profile written for {len(table.problems)} problems, "
          f"{len(table.solvers)} solvers")
    return EXIT_OK


def cmd_audit(args):
    merged = _merge(_load_manifest(args.manifest), args,
                    ["problem", "seed", "budget", "mechanism", "out"])
    name = merged.get("problem")
    if not name:
        raise ManifestError("manifest needs a problem name")
    problem = get_problem(name)
    seed = int(merged.get("seed", 0))
    entry = merged.get("mechanism") or "lap1"
    mechanism = _mechanism(entry)
    if mechanism is None:
        raise ManifestError("audit needs a noise mechanism")
    schedule = mechanism(problem, seed)
    if schedule.laplace is None:
        raise ManifestError("audit needs an additive or mixed mechanism")
    cfg = SolverConfig(
        rho_beg=problem.rho_beg, rho_end=float(merged.get("rho_end", 1e-8)),
        max_evals=int(merged.get("budget", 400 * problem.dimension)),
        seed=seed, audit=True,
    )
    trace = minimize(problem.spec(), schedule, problem.x0, cfg)
    ledger = trace.objective.ledger
    budgets = privacy.audit_budgets(
        ledger.new_point_h, ledger.new_point_fh, ledger.new_point_mechanisms,
        schedule.laplace, m=2 * problem.dimension + 1,
    )
    out = _outdir(merged)
    budgets.to_csv(os.path.join(out, "budgets.csv"))
    trace.objective.export_audit_csv(os.path.join(out, "evaluations.csv"))
    print(f"audited {trace.nf} evaluations over {len(budgets.records)} windows")
    return EXIT_OK if trace.status != "aborted" else EXIT_RUN_FAILURE


def cmd_list(_args):
    for problem in problem_library():
        best = "best-found" if problem.f_best is None else f"{problem.f_best:g}"
        print(f"{problem.name:<18} n={problem.dimension:<4} F_best={best}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dfop",
        description="Trust-region optimization of per-iteration "
                    "transformed objectives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--manifest", help="JSON manifest file")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("solve", help="run one solve and write its trace")
    add_common(p)
    p.add_argument("--problem")
    p.add_argument("--solver", choices=_SOLVE_SOLVERS)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--rho-beg", type=float, dest="rho_beg")
    p.add_argument("--rho-end", type=float, dest="rho_end")
    p.add_argument("--m", type=int)
    p.add_argument("--mechanism")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a suite and emit profiles")
    add_common(p)
    p.add_argument("--budget", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--mechanism")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("profile", help="re-plot profiles from a records CSV")
    add_common(p)
    p.add_argument("--records")
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("audit", help="run a solve and emit privacy budgets")
    add_common(p)
    p.add_argument("--problem")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--mechanism")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("list-problems", help="list registered problems")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ManifestError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_MANIFEST
    except DfopError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
