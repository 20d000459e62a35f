"""Diagnostics: solution shifts, translation equivalence, and the space of
value vectors that keep the trust-region step unchanged.

The last of these answers: which vectors of (possibly transformed) values
at the interpolation points rebuild into a model whose trust-region
minimizer is still d*? The stationarity conditions are n linear equations
in the m unknown values, so the solutions contain an affine space of
dimension at least m - n.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import minimize_scalar

from . import rng
from .exceptions import DegenerateGeometryError, ParameterError, UnsupportedProblemError
from .solver import SolverConfig, minimize
from .subproblems import trsapp


@dataclass
class ShiftReport:
    """Per-iteration step norms, optionally with the minimizer-set shift."""

    dm: list
    ds: Optional[float] = None


def model_solution_shift(trace):
    """Step norm per iteration, extracted from a solver trace."""
    dm = [rec.step_norm for rec in trace.records
          if rec.subroutine in ("trust", "geometry")]
    if any(v < 0 for v in dm):
        raise ParameterError("negative step norm in trace")
    return ShiftReport(dm=dm)


def _local_minima_1d(func, bounds, grid):
    xs = np.linspace(bounds[0], bounds[1], grid)
    vals = np.array([func(np.array([x])) for x in xs])
    minima = []
    for i in range(1, grid - 1):
        if vals[i] < vals[i - 1] and vals[i] <= vals[i + 1]:
            res = minimize_scalar(
                lambda x: func(np.array([x])),
                bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                options={"xatol": 1e-12},
            )
            minima.append(float(res.x))
    # deduplicate refined minima that converged to the same point
    out = []
    for x in sorted(minima):
        if not out or abs(x - out[-1]) > 1e-6 * max(1.0, abs(x)):
            out.append(x)
    return out


def solution_shift(problem, transform=None, bounds=(-10.0, 10.0), grid=4001):
    """Displacement of the local-minimizer set under a value transform.

    ``transform`` maps function values; None or any order-preserving map
    leaves the minimizer set unchanged, so the shift is zero. A
    non-monotonic transform on a 1-D problem is re-analyzed by
    grid-refined local search; a changed minimizer count gives +inf.
    """
    if getattr(problem, "minimizers", None) is None:
        raise UnsupportedProblemError(
            f"problem {problem.name!r} has no registered minimizer set"
        )
    if transform is None:
        return 0.0
    if problem.dimension != 1:
        raise UnsupportedProblemError(
            "minimizer-altering transforms are re-analyzed in 1-D only"
        )

    def total(x):
        return problem.f(x) + problem.h(x)

    before = [float(np.atleast_1d(p)[0]) for p in problem.minimizers]
    after = _local_minima_1d(lambda x: transform(total(x)), bounds, grid)
    if len(after) != len(before):
        return math.inf
    return float(sum(abs(a - b) for a, b in zip(sorted(before), sorted(after))))


@dataclass
class TransformSpaceSolution:
    """Affine description of the value vectors preserving the step d*."""

    particular_values: np.ndarray
    basis: np.ndarray
    omega: float
    matrix: np.ndarray = field(repr=False, default=None)
    offset: np.ndarray = field(repr=False, default=None)
    d_star: np.ndarray = field(repr=False, default=None)


def _model_pieces(kkt, q_prev, values, x_opt):
    """Hessian and gradient at x_opt of the model rebuilt from ``values``."""
    prev = np.array([q_prev.value(x) for x in kkt.points])
    lam, c, g = kkt.solve(np.asarray(values, dtype=float) - prev)
    y = kkt.points - kkt.base
    hess = q_prev.hessian() + y.T @ (lam[:, None] * y)
    s = x_opt - kkt.base
    grad = q_prev.gradient(x_opt) + g + y.T @ (lam * (y @ s))
    return hess, grad


def transform_space(kkt, q_prev, d_star, tr, values=None):
    """The affine space of value vectors whose model still steps to d*.

    Stationarity of the ball problem at d* reads
    (hess(v) + omega I) d* + grad(v) = 0, an affine map of the m values v
    into R^n; omega is zero for an interior step and the boundary
    multiplier otherwise.
    """
    m, n = kkt.m, kkt.n
    d_star = np.asarray(d_star, dtype=float)
    x_opt = tr.center
    dn = float(np.linalg.norm(d_star))

    ref = values if values is not None else np.array(
        [q_prev.value(x) for x in kkt.points]
    )
    hess0, grad0 = _model_pieces(kkt, q_prev, ref, x_opt)
    if dn < tr.Delta * (1.0 - 1e-8):
        omega = 0.0
    else:
        omega = max(0.0, -float(d_star @ (hess0 @ d_star + grad0)) / (dn * dn))

    def phi(v):
        hess, grad = _model_pieces(kkt, q_prev, v, x_opt)
        return (hess + omega * np.eye(n)) @ d_star + grad

    offset = phi(np.zeros(m))
    matrix = np.empty((n, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        matrix[:, j] = phi(e) - offset

    scale = max(1.0, float(np.linalg.norm(offset)), float(np.abs(matrix).max()))
    if values is not None and np.linalg.norm(matrix @ values + offset) <= 1e-6 * scale:
        particular = np.asarray(values, dtype=float)
    else:
        particular, *_ = np.linalg.lstsq(matrix, -offset, rcond=None)
        if np.linalg.norm(matrix @ particular + offset) > 1e-6 * scale:
            raise DegenerateGeometryError(
                "stationarity system for d* is inconsistent"
            )
    basis = null_space(matrix)
    if basis.shape[1] < m - n:
        raise DegenerateGeometryError("null space smaller than m - n")
    return TransformSpaceSolution(
        particular_values=particular, basis=basis, omega=omega,
        matrix=matrix, offset=offset, d_star=d_star.copy(),
    )


def sample_value_vectors(kkt, q_prev, solution, tr, count, seed=0, scale=1.0):
    """Draw alternative value vectors from the affine solution space.

    Each draw is shrunk until the rebuilt model is positive definite on
    the relevant set (interior case) or positive semidefinite after the
    omega shift (boundary case), so the sampled vector provably keeps d*
    as the ball minimizer.
    """
    gen = rng.stream(seed, 0)
    dim = solution.basis.shape[1]
    out = []
    for _ in range(count):
        coeffs = gen.normal(size=dim) * scale
        for _ in range(60):
            v = solution.particular_values + solution.basis @ coeffs
            hess, _ = _model_pieces(kkt, q_prev, v, tr.center)
            eigmin = float(np.linalg.eigvalsh(hess)[0])
            if eigmin + solution.omega > 1e-8:
                break
            coeffs = 0.5 * coeffs
        out.append(v)
    return np.array(out)


def verify_transform_space(kkt, q_prev, solution, tr, vectors, tol=1e-6):
    """Re-solve the ball problem for each value vector; max |d - d*|."""
    worst = 0.0
    for v in vectors:
        prev = np.array([q_prev.value(x) for x in kkt.points])
        lam, c, g = kkt.solve(np.asarray(v) - prev)
        model = q_prev.copy()
        y = kkt.points - kkt.base
        model.hess_explicit = model.hessian() + y.T @ (lam[:, None] * y)
        model.lam = np.zeros_like(model.lam)
        model.c = model.c + c
        model.g = model.g + g
        step = trsapp(model, tr)
        worst = max(worst, float(np.linalg.norm(step.d - solution.d_star)))
    return worst


@dataclass
class EquivalenceReport:
    max_iterate_deviation: float
    max_constant_deviation: float
    max_coefficient_deviation: float
    iterations_compared: int


def translation_equivalence_check(spec, schedule_translation, x0, cfg=None):
    """Paired identity/translation solves; deviations after removing C2_k."""
    from .objective import TransformSchedule

    cfg = cfg or SolverConfig()
    cfg_diag = SolverConfig(**{**cfg.__dict__, "diagnostics": True})
    base = minimize(spec, TransformSchedule.identity(), x0, cfg_diag)
    cfg_diag2 = SolverConfig(**{**cfg.__dict__, "diagnostics": True})
    shifted = minimize(spec, schedule_translation, x0, cfg_diag2)

    pairs = min(len(base.records), len(shifted.records))
    it_dev = 0.0
    c_dev = 0.0
    coeff_dev = 0.0
    c2 = schedule_translation.c2
    for i in range(pairs):
        a, b = base.records[i], shifted.records[i]
        it_dev = max(it_dev, float(np.max(np.abs(
            np.asarray(a.x_opt) - np.asarray(b.x_opt)))))
    snaps = min(len(base.model_snapshots), len(shifted.model_snapshots))
    for i in range(snaps):
        ka, ma = base.model_snapshots[i]
        kb, mb = shifted.model_snapshots[i]
        c_dev = max(c_dev, abs(mb["c"] - ma["c"] - c2(kb)))
        coeff_dev = max(
            coeff_dev,
            float(np.max(np.abs(np.asarray(mb["g"]) - np.asarray(ma["g"])))),
            float(np.max(np.abs(
                np.asarray(mb["hess_explicit"]) - np.asarray(ma["hess_explicit"])))),
            float(np.max(np.abs(np.asarray(mb["lam"]) - np.asarray(ma["lam"])))),
        )
    return EquivalenceReport(
        max_iterate_deviation=it_dev,
        max_constant_deviation=c_dev,
        max_coefficient_deviation=coeff_dev,
        iterations_compared=pairs,
    )
