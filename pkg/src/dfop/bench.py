"""Benchmark harness: suite runs, baselines, and performance profiles.

Runs are scored on the raw objective F = f + h even when the solver only
ever saw transformed values; NF counts unique evaluations, so cached
re-reads under later transformations are free.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import privacy, rng
from .exceptions import ParameterError
from .objective import TransformSchedule, TransformedObjective
from .solver import SolverConfig, minimize

SOLVER_IDS = ("dfop", "dfop-newuoa", "newuoa-n", "nelder-mead")

ALPHA_GRID = np.logspace(0.0, 6.0, 200, base=2.0)


@dataclass
class RunRecord:
    """One (solver, problem, seed) run: best-so-far history on raw F."""

    solver: str
    problem: str
    seed: int
    history: np.ndarray
    nf: int
    f_final: float
    status: str = "ok"

    def __post_init__(self):
        self.history = np.asarray(self.history, dtype=float)


# ---------------------------------------------------------------------------
# mechanisms


def _clip_unit(u):
    return min(u, 1.0 - 1e-12)


def noise_config(name, seed=0, C=1.0):
    """The six per-iteration noise configurations used in the reports."""
    def lap(coef, gain=C):
        return privacy.LaplaceParams(scale_schedule=lambda k, c=coef: c / k, C=gain)

    def uni(coef):
        return privacy.UniformParams(
            halfwidth_schedule=lambda k, c=coef: _clip_unit(c / k)
        )

    if name == "lap1":
        return TransformSchedule.additive(lap(1.0), seed)
    if name == "lap100":
        return TransformSchedule.additive(lap(100.0), seed)
    if name == "lap10":
        return TransformSchedule.additive(lap(10.0), seed)
    if name == "unif1":
        return TransformSchedule.multiplicative(uni(1.0), seed)
    if name == "mix-lap100-unif1":
        return TransformSchedule.mixed(privacy.MixParams(
            laplace=lap(100.0), uniform=uni(1.0),
            prob_additive=0.5, rng_seed=seed,
        ))
    if name == "mix-lap100-grow":
        growing = privacy.UniformParams(
            halfwidth_schedule=lambda k: _clip_unit(k / 1e4)
        )
        return TransformSchedule.mixed(privacy.MixParams(
            laplace=lap(100.0), uniform=growing,
            prob_additive=0.5, rng_seed=seed,
        ))
    raise ParameterError(f"unknown noise config {name!r}")


NOISE_CONFIGS = ("lap1", "lap100", "lap10", "unif1",
                 "mix-lap100-unif1", "mix-lap100-grow")


def mechanism_profile(problem, seed):
    """Mixed mechanism with Lap(100/k) gain 100 and U(-1/k, 1/k)."""
    return TransformSchedule.mixed(privacy.MixParams(
        laplace=privacy.LaplaceParams(scale_schedule=lambda k: 100.0 / k, C=100.0),
        uniform=privacy.UniformParams(
            halfwidth_schedule=lambda k: _clip_unit(1.0 / k)),
        prob_additive=0.5, rng_seed=seed,
    ))


# ---------------------------------------------------------------------------
# baselines


def nelder_mead(spec, schedule, x0, budget, initial_simplex=None,
                solver="nelder-mead", problem="", seed=0):
    """Classic simplex search over a per-iteration transformed objective.

    The whole simplex is re-read under the current iteration's
    transformation before every step (free for cached points).
    """
    x0 = np.asarray(x0, dtype=float)
    n = spec.dimension
    if initial_simplex is None:
        simplex = np.tile(x0, (n + 1, 1))
        for i in range(n):
            simplex[i + 1, i] += 0.5
    else:
        simplex = np.array(initial_simplex, dtype=float)
        if simplex.shape != (n + 1, n):
            raise ParameterError("initial simplex must have shape (n+1, n)")
        if np.linalg.matrix_rank(simplex[1:] - simplex[0]) < n:
            raise ParameterError("initial simplex is degenerate")

    obj = TransformedObjective(spec, schedule)
    k = 0
    status = "ok"

    def room():
        return obj.nf < budget

    max_steps = 10 * budget + 100
    try:
        while room() and k < max_steps:
            k += 1
            vals = obj.evaluate_batch(simplex, k)
            order = np.argsort(vals, kind="stable")
            simplex = simplex[order]
            vals = vals[order]
            if float(np.max(np.abs(simplex[1:] - simplex[0]))) < 1e-10:
                break
            centroid = np.mean(simplex[:-1], axis=0)
            xr = centroid + (centroid - simplex[-1])
            if not room():
                break
            fr = obj.evaluate_batch([xr], k)[0]
            if fr < vals[0]:
                xe = centroid + 2.0 * (centroid - simplex[-1])
                fe = obj.evaluate_batch([xe], k)[0] if room() else np.inf
                if fe < fr:
                    simplex[-1], vals[-1] = xe, fe
                else:
                    simplex[-1], vals[-1] = xr, fr
            elif fr < vals[-2]:
                simplex[-1], vals[-1] = xr, fr
            else:
                if fr < vals[-1]:
                    xc = centroid + 0.5 * (xr - centroid)
                else:
                    xc = centroid + 0.5 * (simplex[-1] - centroid)
                fc = obj.evaluate_batch([xc], k)[0] if room() else np.inf
                if fc < min(fr, vals[-1]):
                    simplex[-1], vals[-1] = xc, fc
                else:
                    for i in range(1, n + 1):
                        simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                        if not room():
                            break
    except Exception:
        status = "failed"

    history = np.minimum.accumulate(np.asarray(obj.ledger.raw_history))
    return RunRecord(solver=solver, problem=problem, seed=seed,
                     history=history, nf=obj.nf,
                     f_final=float(history[-1]) if history.size else math.inf,
                     status=status if history.size else "failed")


# ---------------------------------------------------------------------------
# suite


def run_single(problem, solver, seed, budget, mechanism=None, rho_end=1e-8):
    """One run; noise mechanisms apply to every solver except the
    noiseless baseline."""
    spec = problem.spec()
    if mechanism is None or solver == "newuoa-n":
        schedule = TransformSchedule.identity()
    else:
        schedule = mechanism(problem, seed)
    if solver == "nelder-mead":
        return nelder_mead(spec, schedule, problem.x0, budget,
                           problem=problem.name, seed=seed)
    if solver not in ("dfop", "dfop-newuoa", "newuoa-n"):
        raise ParameterError(f"unknown solver {solver!r}")
    cfg = SolverConfig(
        rho_beg=problem.rho_beg, rho_end=rho_end, max_evals=budget,
        newuoa_mode=(solver != "dfop"), seed=seed,
    )
    trace = minimize(spec, schedule, problem.x0, cfg)
    raw = np.asarray(trace.objective.ledger.raw_history)
    history = np.minimum.accumulate(raw) if raw.size else np.array([math.inf])
    return RunRecord(solver=solver, problem=problem.name, seed=seed,
                     history=history, nf=trace.nf,
                     f_final=float(history[-1]), status=trace.status)


def run_suite(problems, solvers, seeds, budget, mechanism=None, rho_end=1e-8):
    """Full (solver, problem, seed) grid; failures are recorded, not raised."""
    if budget <= 0:
        raise ParameterError("budget must be positive")
    records = []
    for problem in problems:
        for solver in solvers:
            for seed in seeds:
                try:
                    rec = run_single(problem, solver, seed, budget,
                                     mechanism=mechanism, rho_end=rho_end)
                except Exception as exc:  # noqa: BLE001 - suite must continue
                    warnings.warn(f"{solver} on {problem.name} (seed {seed}) "
                                  f"failed: {exc}")
                    rec = RunRecord(solver=solver, problem=problem.name,
                                    seed=seed, history=np.array([math.inf]),
                                    nf=0, f_final=math.inf, status="failed")
                records.append(rec)
    return records


# ---------------------------------------------------------------------------
# profiles


@dataclass
class ProfileTable:
    tau: float
    alphas: np.ndarray
    solvers: list
    problems: list
    n_evals: dict
    ratios: dict
    curves: dict
    f_best: dict
    substituted: set = field(default_factory=set)
    excluded: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha"] + list(self.solvers))
            for i, alpha in enumerate(self.alphas):
                writer.writerow([alpha] + [self.curves[s][i] for s in self.solvers])


def _first_success(record, f0, f_best, tau):
    """1-based count of evaluations to reach accuracy tau, inf if never."""
    if not math.isfinite(f0):
        return math.inf
    gap = f0 - f_best
    if gap <= 0:
        return None
    history = record.history
    finite = np.isfinite(history)
    if not finite.all():
        history = np.where(finite, history, np.inf)
    hits = np.nonzero(f0 - history >= (1.0 - tau) * gap)[0]
    return int(hits[0]) + 1 if hits.size else math.inf


def performance_profile(records, tau, known_best=None):
    """Evaluation-count performance profile at accuracy level tau."""
    known_best = known_best or {}
    solvers = sorted({r.solver for r in records})
    problems = sorted({r.problem for r in records})
    by_problem = {p: [r for r in records if r.problem == p] for p in problems}

    f_best = {}
    substituted = set()
    excluded = []
    for p, recs in by_problem.items():
        found = min(
            (float(np.min(r.history)) for r in recs if r.history.size),
            default=math.inf,
        )
        known = known_best.get(p)
        if known is None:
            f_best[p] = found
            substituted.add(p)
        else:
            f_best[p] = min(known, found)

    # average evaluation counts over seeds per (solver, problem)
    n_evals = {}
    for p in list(problems):
        recs = by_problem[p]
        f0_values = [float(r.history[0]) for r in recs
                     if r.history.size and np.isfinite(r.history[0])]
        if not f0_values:
            excluded.append(p)
            problems.remove(p)
            continue
        f0 = f0_values[0]
        if f0 - f_best[p] <= 0:
            warnings.warn(f"problem {p} excluded: no gap between F(x0) and best")
            excluded.append(p)
            problems.remove(p)
            continue
        for s in solvers:
            counts = [
                _first_success(r, float(r.history[0]), f_best[p], tau)
                for r in recs if r.solver == s and r.history.size
            ]
            counts = [c for c in counts if c is not None]
            if not counts:
                n_evals[(s, p)] = math.inf
            elif any(math.isinf(c) for c in counts):
                n_evals[(s, p)] = math.inf
            else:
                n_evals[(s, p)] = float(np.mean(counts))

    ratios = {}
    for p in problems:
        best = min(n_evals[(s, p)] for s in solvers)
        for s in solvers:
            n = n_evals[(s, p)]
            if math.isinf(best):
                ratios[(s, p)] = math.inf
            else:
                ratios[(s, p)] = n / best

    curves = {}
    denom = max(len(problems), 1)
    for s in solvers:
        rs = np.array([ratios[(s, p)] for p in problems])
        if len(problems):
            curves[s] = np.count_nonzero(
                rs[None, :] <= ALPHA_GRID[:, None], axis=1) / denom
        else:
            curves[s] = np.zeros(ALPHA_GRID.size)
    return ProfileTable(
        tau=tau, alphas=ALPHA_GRID.copy(), solvers=solvers, problems=problems,
        n_evals=n_evals, ratios=ratios, curves=curves, f_best=f_best,
        substituted=substituted, excluded=excluded,
    )


def draw_permutations(n, count, seed, identity_only=False):
    gen = rng.stream(seed, 0)
    if identity_only:
        return [np.arange(n) for _ in range(count)]
    return [gen.permutation(n) for _ in range(count)]


def permutation_matrix(perm):
    n = len(perm)
    mat = np.zeros((n, n))
    mat[np.arange(n), perm] = 1.0
    return mat


@dataclass
class SensitivityTable:
    alphas: np.ndarray
    solvers: list
    means: dict
    stds: dict
    ratios: dict
    curves: dict


def sensitivity_profile(problem, solvers, M, seed, budget, mechanism=None,
                        rho_end=1e-8, identity_only=False):
    """Profile over the spread of NF across M coordinate permutations."""
    if M < 2:
        raise ParameterError("need at least 2 permutations")
    perms = draw_permutations(problem.dimension, M, seed, identity_only)
    counts = {s: [] for s in solvers}
    for i, perm in enumerate(perms):
        permuted = _permuted_problem(problem, perm)
        for s in solvers:
            rec = run_single(permuted, s, seed, budget,
                             mechanism=mechanism, rho_end=rho_end)
            counts[s].append(rec.nf)
    means = {s: float(np.mean(counts[s])) for s in solvers}
    stds = {s: float(np.std(counts[s])) for s in solvers}
    floor = min(stds.values())
    ratios = {}
    for s in solvers:
        if floor == 0.0:
            ratios[s] = 1.0 if stds[s] == 0.0 else math.inf
        else:
            ratios[s] = stds[s] / floor
    curves = {
        s: (ALPHA_GRID >= ratios[s]).astype(float) for s in solvers
    }
    return SensitivityTable(alphas=ALPHA_GRID.copy(), solvers=list(solvers),
                            means=means, stds=stds, ratios=ratios,
                            curves=curves)


def _permuted_problem(problem, perm):
    from .problems import ProblemInstance

    idx = np.asarray(perm)
    inv = np.argsort(idx)
    return ProblemInstance(
        name=problem.name,
        dimension=problem.dimension,
        f=lambda x, _p=problem, _i=idx: _p.f(np.asarray(x)[_i]),
        h=lambda x, _p=problem, _i=idx: _p.h(np.asarray(x)[_i]),
        x0=np.asarray(problem.x0)[inv],
        x_best=None,
        f_best=problem.f_best,
        rho_beg=problem.rho_beg,
    )


# ---------------------------------------------------------------------------
# persistence and plots


RECORD_HEADER = ["solver", "problem", "seed", "nf", "f_final", "status",
                 "history"]


def records_to_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_HEADER)
        for r in records:
            writer.writerow([r.solver, r.problem, r.seed, r.nf, r.f_final,
                             r.status, json.dumps(r.history.tolist())])


def records_from_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(RunRecord(
                solver=row["solver"], problem=row["problem"],
                seed=int(row["seed"]),
                history=np.asarray(json.loads(row["history"])),
                nf=int(row["nf"]), f_final=float(row["f_final"]),
                status=row["status"],
            ))
    return records


def plot_profile(table, svg_path, dat_path=None, title=None):
    """SVG line chart of the profile plus a gnuplot-ready data file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for s in table.solvers:
        ax.step(table.alphas, table.curves[s], where="post", label=s)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("alpha")
    ax.set_ylabel("fraction of problems")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
    if dat_path is not None:
        cols = [table.alphas] + [table.curves[s] for s in table.solvers]
        header = "alpha " + " ".join(table.solvers)
        np.savetxt(dat_path, np.column_stack(cols), header=header)
