"""Outer loop of the trust-region solver for per-iteration transformed objectives.

Each iteration either takes a trust-region step (evaluate, ratio test,
radius update, point replacement) or improves the geometry of the
interpolation set. Under the synchronized protocol every retained point
is re-read under the current iteration's transformation in one batch, so
the model update right-hand side carries the transformation differences;
``newuoa_mode`` disables the synchronization and keeps stale values,
reproducing the classical method's behaviour.
"""

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import (
    DegenerateGeometryError,
    DegenerateLagrangeError,
    EvaluationError,
    GeometryRebuildNeeded,
    NearSingularUpdateError,
    ParameterError,
)
from .model import (
    build_initial_set,
    build_w_matrix,
    legal_point_range,
    shift_base,
    solve_initial_model,
    update_model,
)
from .objective import TransformedObjective, delta_k, residual_from_sync
from .subproblems import TrustRegion, biglag, bigden, trsapp

STATUS_CONVERGED = "converged"
STATUS_BUDGET = "budget-exhausted"
STATUS_ABORTED = "aborted"

_BASE_SHIFT_FACTOR = 1e3


class _BudgetExhausted(Exception):
    pass


@dataclass
class SolverConfig:
    """Run parameters; m defaults to 2n+1 when left as None."""

    rho_beg: float = 1.0
    rho_end: float = 1e-6
    m: Optional[int] = None
    max_evals: int = 5000
    newuoa_mode: bool = False
    seed: int = 0
    audit: bool = False
    diagnostics: bool = False

    def resolve_m(self, n):
        m = self.m if self.m is not None else 2 * n + 1
        lo, hi = legal_point_range(n)
        if not lo <= m <= hi:
            raise ParameterError(f"m={m} outside legal range [{lo}, {hi}] for n={n}")
        if not 0.0 < self.rho_end < self.rho_beg:
            raise ParameterError("need 0 < rho_end < rho_beg")
        if self.max_evals < 1:
            raise ParameterError("max_evals must be positive")
        return m


@dataclass
class TraceRecord:
    k: int
    x_opt: list
    f_opt_transformed: float
    f_opt_raw: float
    delta: float
    rho: float
    ratio: float
    step_norm: float
    subroutine: str
    nf: int

    def row(self):
        return [self.k, json.dumps(self.x_opt), self.f_opt_transformed,
                self.f_opt_raw, self.delta, self.rho, self.ratio,
                self.step_norm, self.subroutine, self.nf]


CSV_HEADER = ["k", "x_opt", "F_opt", "F_opt_raw", "Delta", "rho", "ratio",
              "step_norm", "subroutine", "NF"]


@dataclass
class SolverTrace:
    """Per-iteration records plus the final result and diagnostics."""

    records: list = field(default_factory=list)
    x_opt: Optional[np.ndarray] = None
    f_opt: float = math.inf
    f_opt_transformed: float = math.inf
    status: str = STATUS_ABORTED
    nf: int = 0
    iterations: int = 0
    lambda_checks: list = field(default_factory=list)
    trsapp_checks: list = field(default_factory=list)
    model_snapshots: list = field(default_factory=list)
    objective: Optional[TransformedObjective] = None

    def signature(self):
        """Comparable content of the run, for determinism checks."""
        return (
            [rec.row() for rec in self.records],
            None if self.x_opt is None else self.x_opt.tolist(),
            self.f_opt, self.f_opt_transformed, self.status, self.nf,
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for rec in self.records:
                writer.writerow(rec.row())

    def to_json(self, path=None):
        payload = {
            "records": [rec.__dict__ for rec in self.records],
            "x_opt": None if self.x_opt is None else self.x_opt.tolist(),
            "F_opt_raw": self.f_opt,
            "F_opt": self.f_opt_transformed,
            "status": self.status,
            "NF": self.nf,
            "iterations": self.iterations,
        }
        if path is None:
            return payload
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
        return payload


def update_trust_region(delta, ratio, step_norm, rho):
    """Radius revision from the achieved-vs-predicted reduction ratio."""
    if ratio <= 0.1:
        new = 0.5 * step_norm
    elif ratio <= 0.7:
        new = max(0.5 * delta, step_norm)
    else:
        new = max(0.5 * delta, 2.0 * step_norm)
    new = max(new, rho)
    if new <= 1.5 * rho:
        new = rho
    return new


def reduce_rho(rho, rho_end):
    """Next resolution level: snap, geometric mean, or tenfold cut."""
    if rho <= 16.0 * rho_end:
        return rho_end
    if rho <= 250.0 * rho_end:
        return math.sqrt(rho * rho_end)
    return 0.1 * rho


class _Engine:
    def __init__(self, spec, schedule, x0, cfg):
        self.spec = spec
        self.cfg = cfg
        self.x0 = np.asarray(x0, dtype=float)
        if not np.all(np.isfinite(self.x0)):
            raise ParameterError("x0 must be finite")
        self.n = self.x0.size
        self.m = cfg.resolve_m(self.n)
        self.objective = TransformedObjective(spec, schedule, audit=cfg.audit)
        self.trace = SolverTrace(objective=self.objective)
        self.k = 0
        self.delta = cfg.rho_beg
        self.rho = cfg.rho_beg
        self.recent = deque(maxlen=3)
        self.done = False
        self.last_short_step = None
        self.iset = None
        self.kkt = None
        self.model = None

    # -- plumbing ---------------------------------------------------------

    def _check_budget(self, new_evals=1):
        if self.objective.nf + new_evals > self.cfg.max_evals:
            raise _BudgetExhausted

    @property
    def x_opt(self):
        return self.iset.points[self.iset.opt_index]

    def _record(self, subroutine, ratio=float("nan"), step_norm=0.0):
        opt = self.iset.opt_index
        self.trace.records.append(
            TraceRecord(
                k=self.k,
                x_opt=self.x_opt.tolist(),
                f_opt_transformed=float(self.iset.values[opt]),
                f_opt_raw=self.objective.raw_at(self.x_opt),
                delta=self.delta,
                rho=self.rho,
                ratio=ratio,
                step_norm=step_norm,
                subroutine=subroutine,
                nf=self.objective.nf,
            )
        )
        if self.cfg.diagnostics and self.model is not None:
            self.trace.model_snapshots.append((self.k, self.model.to_dict()))

    def _record_lambda(self, lam_d=None):
        """Side conditions of the coefficient solve: each increment sums to
        zero and has zero first moment over the current point offsets."""
        if not self.cfg.diagnostics:
            return
        if lam_d is None:
            if self.model.last_update is None:
                return
            lam_d = self.model.last_update[0]
        offsets = self.kkt.points - self.kkt.base
        l1 = float(np.sum(np.abs(lam_d)))
        max_off = float(np.max(np.linalg.norm(offsets, axis=1))) if len(offsets) else 0.0
        self.trace.lambda_checks.append(
            (abs(float(np.sum(lam_d))), float(np.linalg.norm(lam_d @ offsets)),
             l1, l1 * max(max_off, 1.0))
        )

    def _record_trsapp(self, step):
        if not self.cfg.diagnostics:
            return
        g = self.model.gradient(self.x_opt)
        gnorm = float(np.linalg.norm(g))
        bnorm = float(np.linalg.norm(self.model.hessian(), 2))
        if gnorm > 0.0:
            cauchy = 0.5 * gnorm * min(self.delta, gnorm / bnorm if bnorm > 0 else np.inf)
        else:
            cauchy = 0.0
        min_ray = min(step.rayleighs) if step.rayleighs else float("nan")
        self.trace.trsapp_checks.append(
            (step.predicted_reduction, cauchy, step.crvmin, min_ray, gnorm)
        )

    # -- evaluation and model maintenance ---------------------------------

    def _evaluate_step(self, x_new):
        """Evaluate F_k for the candidate point; returns (f_new, f_opt_now, batch)."""
        self._check_budget()
        if self.cfg.newuoa_mode:
            f_new = self.objective.evaluate_batch([x_new], self.k)[0]
            return float(f_new), float(self.iset.values[self.iset.opt_index]), None
        batch = self.objective.evaluate_batch(
            list(self.iset.points) + [x_new], self.k
        )
        return float(batch[self.m]), float(batch[self.iset.opt_index]), batch

    def _apply_replacement(self, t, x_new, f_new, batch, q_xnew, q_xopt):
        """Replace point t, update H and the model, and refresh stored values."""
        opt = self.iset.opt_index
        if self.cfg.newuoa_mode:
            r = np.zeros(self.m)
            r[t] = delta_k(f_new, float(self.iset.values[opt]), q_xnew, q_xopt)
        else:
            r = residual_from_sync(
                self.iset.values, batch[: self.m], f_new, q_xnew, q_xopt, t, opt
            )
        # The sync drift observed at the incumbent is a pure constant (and
        # exactly zero without a transform); folding it straight into the
        # model constant keeps the solve away from large constant vectors,
        # which would otherwise amplify rounding noise.
        shift = float(r[opt])
        r = r - shift
        snapped = self._snap_constant_sync(r, t, shift)
        self.kkt.update(t, x_new)
        self.model = update_model(self.model, self.kkt, r, t, x_new)
        self.model.c += shift
        self.iset.points[t] = x_new
        if self.cfg.newuoa_mode:
            self.iset.values[t] = f_new
            f_opt_now = float(self.iset.values[opt])
        else:
            if snapped:
                self.iset.values += shift
            else:
                self.iset.values[:] = batch[: self.m]
            self.iset.values[t] = f_new
            f_opt_now = float(self.iset.values[opt])
        if f_new < f_opt_now:
            self.iset.opt_index = t
        self._record_lambda()
        self._refresh_model_if_drifted()
        self._maybe_shift_base()

    def _snap_constant_sync(self, r, t, shift):
        """Zero the off-t residual when the sync was a pure constant drift.

        Components within a few ulps of the incumbent drift are rounding
        noise from adding a large constant to the values; keeping them
        would feed that noise into the model coefficients.
        """
        off = np.abs(np.concatenate([r[:t], r[t + 1:]]))
        scale = 1.0 + abs(shift) + float(np.max(np.abs(self.iset.values)))
        if float(np.max(off)) > 64.0 * np.finfo(float).eps * scale:
            return False
        r[:t] = 0.0
        r[t + 1:] = 0.0
        return True

    def _refresh_model_if_drifted(self):
        """Re-interpolate the stored values when rounding has accumulated.

        Solving for the correction that interpolates the full residual
        vector restores |Q(x_i) - value_i| to rounding level without
        changing the geometry, so update errors cannot compound.
        """
        s = self.iset.points - self.model.base
        vs = s @ self.model.directions.T
        q_vals = (self.model.c + s @ self.model.g
                  + 0.5 * np.einsum("ij,ij->i", s @ self.model.hess_explicit, s)
                  + 0.5 * (vs * vs) @ self.model.lam)
        resid = self.iset.values - q_vals
        scale = 1.0 + float(np.max(self.iset.values) - np.min(self.iset.values))
        if float(np.max(np.abs(resid))) <= 1e-9 * scale:
            return
        shift = float(resid[self.iset.opt_index])
        lam_d, c_d, g_d = self.kkt.solve(resid - shift)
        self.model.lam += lam_d
        self.model.c += c_d + shift
        self.model.g = self.model.g + g_d
        self._record_lambda(lam_d)

    def _maybe_shift_base(self):
        drift = self.x_opt - self.iset.base
        if float(drift @ drift) > _BASE_SHIFT_FACTOR * self.delta ** 2:
            self.model, self.kkt = shift_base(self.model, self.kkt, self.x_opt)
            self.iset.base = self.x_opt.copy()

    def _choose_move(self, x_new, better, ratio):
        """Drop index maximizing |sigma| weighted by distance from x_opt."""
        w = self.kkt.w_vector(x_new)
        hw = self.kkt.H @ w
        alpha = np.diag(self.kkt.H)[: self.m]
        d = x_new - self.kkt.base
        beta = 0.5 * float(d @ d) ** 2 - float(w @ hw)
        prod = alpha * beta
        prod = np.where(prod < 0.0, np.abs(alpha) * abs(beta), prod)
        sigmas = np.abs(prod + hw[: self.m] ** 2)
        dist = np.linalg.norm(self.iset.points - self.x_opt, axis=1)
        weights = np.maximum(1.0, (dist / max(self.delta, self.rho)) ** 4)
        scores = sigmas * weights
        scores[self.iset.opt_index] = -np.inf
        t = int(np.argmax(scores))
        if sigmas[t] <= 1e-30:
            return None
        if not better and ratio <= 0.0 and weights[t] <= 1.0:
            return None
        return t

    # -- phases ------------------------------------------------------------

    def _initialize(self):
        self.iset = build_initial_set(self.x0, self.cfg.rho_beg, self.m)
        if self.cfg.newuoa_mode:
            for j in range(1, self.m + 1):
                self._check_budget()
                self.k = j
                value = self.objective.evaluate_batch(
                    [self.iset.points[j - 1]], j
                )[0]
                self.iset.values[j - 1] = value
        else:
            for j in range(1, self.m + 1):
                self._check_budget()
                self.k = j
                values = self.objective.evaluate_batch(self.iset.points[:j], j)
                self.iset.values[:j] = values
        self.iset.opt_index = int(np.argmin(self.iset.values))
        self.kkt = build_w_matrix(self.iset)
        self.model = solve_initial_model(self.iset, self.iset.values, self.kkt)
        self._record_lambda()
        self._record("init")

    def _trust_iteration(self):
        step = trsapp(self.model, TrustRegion(self.x_opt, self.delta, self.rho))
        self._record_trsapp(step)
        dnorm = float(np.linalg.norm(step.d))
        if dnorm < 0.5 * self.rho:
            self.last_short_step = step.d.copy() if dnorm > 0.0 else None
            self._short_step(step, dnorm)
            return
        self.last_short_step = None
        self.k += 1
        x_new = self.x_opt + step.d
        q_xopt = self.model.value(self.x_opt)
        q_xnew = self.model.value(x_new)
        f_new, f_opt_now, batch = self._evaluate_step(x_new)
        pred = step.predicted_reduction
        # Scale the positivity guard by the observed change, not the raw
        # value, so a per-iteration constant offset cannot flip branches.
        if pred <= 1e-14 * (1.0 + abs(f_opt_now - f_new)):
            ratio = -1.0
        else:
            ratio = (f_opt_now - f_new) / pred
        self.delta = update_trust_region(self.delta, ratio, dnorm, self.rho)
        better = f_new < f_opt_now
        t = self._choose_move(x_new, better, ratio)
        if t is not None:
            try:
                self._apply_replacement(t, x_new, f_new, batch, q_xnew, q_xopt)
            except NearSingularUpdateError:
                pass
        diff = abs(delta_k(f_new, f_opt_now, q_xnew, q_xopt))
        self.recent.append((dnorm, diff))
        self._record("trust", ratio=ratio, step_norm=dnorm)
        if ratio < 0.1:
            self._improve(ratio, dnorm, short=False)

    def _short_step(self, step, dnorm):
        threshold = 0.125 * max(step.crvmin, 0.0) * self.rho ** 2
        adequate = len(self.recent) == 3 and all(
            dn <= threshold and df <= threshold for dn, df in self.recent
        )
        if adequate:
            self._reduce_rho_or_finish()
        else:
            self._improve(-1.0, dnorm, short=True)

    def _improve(self, ratio, dnorm, short):
        dists = np.linalg.norm(self.iset.points - self.x_opt, axis=1)
        far = int(np.argmax(dists))
        dist = float(dists[far])
        if dist >= 2.0 * self.delta:
            self._geometry_step(far, dist)
        elif max(dnorm, self.delta) <= self.rho * (1.0 + 1e-10) and ratio <= 0.0:
            self._reduce_rho_or_finish()
        elif short:
            self.delta = max(0.5 * self.delta, self.rho)
            if self.delta <= 1.5 * self.rho:
                self.delta = self.rho

    def _geometry_step(self, t, dist):
        self._check_budget()
        delta_bar = max(min(0.1 * dist, self.delta), self.rho)
        tr = TrustRegion(self.x_opt, delta_bar, min(self.rho, delta_bar))
        try:
            d = biglag(self.kkt, t, tr)
            sc = self.kkt.scalars(t, self.x_opt + d)
            if abs(sc.sigma) <= 10.0 * self.kkt.sigma_floor(sc):
                d = bigden(self.kkt, t, tr, self.x_opt + d)
        except (DegenerateLagrangeError, GeometryRebuildNeeded):
            self._rebuild()
            return
        self.k += 1
        x_new = self.x_opt + d
        q_xopt = self.model.value(self.x_opt)
        q_xnew = self.model.value(x_new)
        f_new, _, batch = self._evaluate_step(x_new)
        try:
            self._apply_replacement(t, x_new, f_new, batch, q_xnew, q_xopt)
        except NearSingularUpdateError:
            self._rebuild()
            return
        self._record("geometry", step_norm=float(np.linalg.norm(d)))

    def _rebuild(self):
        """Restart-in-place: fresh coordinate set of radius rho around x_opt."""
        fresh = build_initial_set(self.x_opt, self.rho, self.m)
        self._check_budget(new_evals=self.m)
        self.k += 1
        values = self.objective.evaluate_batch(fresh.points, self.k)
        fresh.values[:] = values
        fresh.opt_index = int(np.argmin(values))
        self.iset = fresh
        self.kkt = build_w_matrix(self.iset)
        self.model = solve_initial_model(self.iset, self.iset.values, self.kkt)
        self.recent.clear()
        self._record_lambda()
        self._record("rebuild")

    def _reduce_rho_or_finish(self):
        if self.rho <= self.cfg.rho_end * (1.0 + 1e-12):
            self.done = True
            return
        old_rho = self.rho
        self.rho = reduce_rho(self.rho, self.cfg.rho_end)
        self.delta = max(0.5 * old_rho, self.rho)
        self.recent.clear()
        self._record("rho")

    def _final_evaluation(self):
        d = self.last_short_step
        if d is None:
            return
        dnorm = float(np.linalg.norm(d))
        if not 0.0 < dnorm <= 0.5 * self.rho:
            return
        if self.objective.nf + 1 > self.cfg.max_evals:
            return
        self.k += 1
        x_last = self.x_opt + d
        values = self.objective.evaluate_batch([self.x_opt, x_last], self.k)
        if values[1] < values[0]:
            t = self.iset.opt_index
            self.iset.points[t] = x_last
            self.iset.values[t] = values[1]
        else:
            self.iset.values[self.iset.opt_index] = values[0]

    # -- driver ------------------------------------------------------------

    def run(self):
        status = STATUS_CONVERGED
        try:
            self._initialize()
            stalled = 0
            while not self.done:
                if self.objective.nf >= self.cfg.max_evals:
                    status = STATUS_BUDGET
                    break
                nf_before = self.objective.nf
                self._trust_iteration()
                self.trace.iterations += 1
                # A healthy iteration evaluates at least one new point; a
                # long run of cache hits means the step proposals are
                # cycling, so push the resolution down to break the cycle.
                stalled = stalled + 1 if self.objective.nf == nf_before else 0
                if stalled >= 30:
                    stalled = 0
                    self._reduce_rho_or_finish()
            if not self.done and status == STATUS_CONVERGED:
                status = STATUS_BUDGET
            if self.done:
                self._final_evaluation()
        except _BudgetExhausted:
            status = STATUS_BUDGET
        except (EvaluationError, DegenerateGeometryError):
            status = STATUS_ABORTED
        trace = self.trace
        trace.status = status
        trace.nf = self.objective.nf
        if self.iset is not None:
            trace.x_opt = self.x_opt.copy()
            trace.f_opt_transformed = float(self.iset.values[self.iset.opt_index])
            try:
                trace.f_opt = self.objective.raw_at(trace.x_opt)
            except ParameterError:
                trace.f_opt = math.inf
        return trace


def minimize(spec, schedule, x0, cfg=None):
    """Run the solver on a transformed objective and return its trace."""
    cfg = cfg or SolverConfig()
    return _Engine(spec, schedule, x0, cfg).run()
