"""Transformed and encrypted objective functions.

The solver never sees the raw objective ``F = f + h``. At iteration k it
observes ``F_k = T_k(F)``, where the transformation T_k is fixed within
the iteration: every point queried at iteration k goes through the same
T_k, and for noise-based kinds a single set of draws is shared by the
whole iteration. True f and h values are cached by exact bit pattern, so
re-querying a known point at a later iteration re-applies the current
transformation without charging a new function evaluation.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import privacy, rng
from .exceptions import EvaluationError, ParameterError, ProtocolError

KINDS = ("identity", "translation", "linear", "additive_dp", "mixed_dp", "custom_table")


@dataclass
class ObjectiveSpec:
    """A composite objective F = f + h with a public and a private part."""

    dimension: int
    public_part: Callable
    private_part: Callable
    name: str = "objective"

    def __post_init__(self):
        if self.dimension < 1:
            raise ParameterError("dimension must be at least 1")

    def raw(self, x):
        """True (f, h) at x, unencrypted."""
        return float(self.public_part(x)), float(self.private_part(x))


def plain_objective(func, dimension, name="objective"):
    """Wrap a plain function F as a spec with empty private part."""
    return ObjectiveSpec(
        dimension=dimension,
        public_part=func,
        private_part=lambda x: 0.0,
        name=name,
    )


@dataclass
class TransformSchedule:
    """Which T_k is applied at each iteration, and its per-kind parameters."""

    kind: str = "identity"
    c1: Optional[Callable[[int], float]] = None
    c2: Optional[Callable[[int], float]] = None
    laplace: Optional[privacy.LaplaceParams] = None
    uniform: Optional[privacy.UniformParams] = None
    prob_additive: float = 1.0
    rng_seed: int = 0
    table: dict = field(default_factory=dict)
    per_point_noise: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown transform kind {self.kind!r}")

    @classmethod
    def identity(cls):
        return cls(kind="identity")

    @classmethod
    def translation(cls, c2):
        return cls(kind="translation", c2=_as_schedule(c2))

    @classmethod
    def linear(cls, c1, c2=0.0):
        return cls(kind="linear", c1=_as_schedule(c1), c2=_as_schedule(c2))

    @classmethod
    def additive(cls, laplace, seed=0):
        return cls(kind="additive_dp", laplace=laplace, rng_seed=seed)

    @classmethod
    def mixed(cls, mix):
        return cls(
            kind="mixed_dp",
            laplace=mix.laplace,
            uniform=mix.uniform,
            prob_additive=mix.prob_additive,
            rng_seed=mix.rng_seed,
        )

    @classmethod
    def multiplicative(cls, uniform, seed=0):
        """Mixed mechanism degenerate to the multiplicative operator only."""
        return cls(kind="mixed_dp", uniform=uniform, prob_additive=0.0, rng_seed=seed)

    @classmethod
    def custom_table(cls, table=None):
        return cls(kind="custom_table", table=dict(table or {}))

    def set_override(self, k, points, values):
        """Register per-point value overrides for iteration k (custom_table)."""
        entry = self.table.setdefault(int(k), {})
        for point, value in zip(points, values):
            entry[np.asarray(point, dtype=float).tobytes()] = float(value)

    def draws(self, k):
        """The shared randomness of iteration k (pure function of seed and k)."""
        if self.kind == "additive_dp":
            return privacy.iteration_draws(self.rng_seed, k, laplace=self.laplace)
        if self.kind == "mixed_dp":
            lap = self.laplace if self.prob_additive > 0.0 else None
            return privacy.iteration_draws(
                self.rng_seed, k,
                laplace=lap, uniform=self.uniform,
                prob_additive=self.prob_additive,
            )
        return None


def _as_schedule(value):
    if callable(value):
        return value
    const = float(value)
    return lambda k: const


@dataclass
class EvaluationLedger:
    """Caching and accounting state owned by one objective instance.

    NF counts distinct points ever submitted; cache hits are free. The
    noise log and the per-evaluation audit rows are populated only when
    auditing is on, since a real provider would not reveal its draws.
    """

    cache: dict = field(default_factory=dict)
    point_ids: dict = field(default_factory=dict)
    nf: int = 0
    last_k: int = 0
    raw_history: list = field(default_factory=list)
    new_point_h: list = field(default_factory=list)
    new_point_fh: list = field(default_factory=list)
    new_point_mechanisms: list = field(default_factory=list)
    noise_log: dict = field(default_factory=dict)
    audit_rows: list = field(default_factory=list)

    def lookup(self, key):
        return self.cache.get(key)

    def store(self, key, f_value, h_value, mechanism_tag):
        self.cache[key] = (f_value, h_value)
        self.point_ids[key] = self.nf
        self.nf += 1
        self.raw_history.append(f_value + h_value)
        self.new_point_h.append(h_value)
        self.new_point_fh.append(f_value + h_value)
        self.new_point_mechanisms.append(mechanism_tag)


class TransformedObjective:
    """Single-owner handle pairing a spec with its transform schedule.

    Not thread-safe; one instance per solver run.
    """

    def __init__(self, spec, schedule, audit=False):
        self.spec = spec
        self.schedule = schedule
        self.audit = audit
        self.ledger = EvaluationLedger()

    def evaluate_batch(self, points, k):
        """Evaluate F_k at every point, under one iteration-k transformation."""
        if k < 1:
            raise ProtocolError(f"iteration index must be >= 1, got {k}")
        if k < self.ledger.last_k:
            raise ProtocolError(
                f"iteration index went backwards: {self.ledger.last_k} -> {k}"
            )
        self.ledger.last_k = k

        schedule = self.schedule
        draws = schedule.draws(k)
        if self.audit and draws is not None:
            self.ledger.noise_log.setdefault(k, draws)

        tag = "-"
        if schedule.kind == "additive_dp":
            tag = "A"
        elif schedule.kind == "mixed_dp":
            tag = "A" if draws.use_additive else "B"

        values = np.empty(len(points))
        for i, point in enumerate(points):
            arr = np.asarray(point, dtype=float)
            if arr.shape != (self.spec.dimension,):
                raise ParameterError(
                    f"point has shape {arr.shape}, expected ({self.spec.dimension},)"
                )
            key = arr.tobytes()
            cached = self.ledger.lookup(key)
            if cached is None:
                f_value, h_value = self.spec.raw(arr)
                if not (math.isfinite(f_value) and math.isfinite(h_value)):
                    raise EvaluationError(
                        f"non-finite objective value at {arr}", point=arr
                    )
                self.ledger.store(key, f_value, h_value, tag)
            else:
                f_value, h_value = cached
            if schedule.per_point_noise and schedule.kind in ("additive_dp", "mixed_dp"):
                point_draws = privacy.iteration_draws(
                    schedule.rng_seed + 1 + self.ledger.point_ids[key],
                    k,
                    laplace=schedule.laplace,
                    uniform=schedule.uniform,
                    prob_additive=schedule.prob_additive,
                )
            else:
                point_draws = draws
            values[i] = self._transform(f_value, h_value, k, key, point_draws)
            if self.audit:
                noise = values[i] - (f_value + h_value)
                self.ledger.audit_rows.append(
                    (k, self.ledger.point_ids[key], f_value, h_value, noise, values[i])
                )
        return values

    def _transform(self, f_value, h_value, k, key, draws):
        kind = self.schedule.kind
        total = f_value + h_value
        if kind == "identity":
            return total
        if kind == "translation":
            return total + self.schedule.c2(k)
        if kind == "linear":
            c1 = self.schedule.c1(k)
            if c1 <= 0:
                raise ParameterError(f"C1_k must be positive, got {c1} at k={k}")
            return c1 * total + (self.schedule.c2(k) if self.schedule.c2 else 0.0)
        if kind == "additive_dp":
            return f_value + privacy.additive_encrypt(
                h_value, k, self.schedule.laplace, draws.eta
            )
        if kind == "mixed_dp":
            if draws.use_additive:
                return f_value + privacy.additive_encrypt(
                    h_value, k, self.schedule.laplace, draws.eta
                )
            return f_value + privacy.multiplicative_encrypt(
                f_value, h_value, k, draws.gamma
            )
        if kind == "custom_table":
            entry = self.schedule.table.get(k)
            if entry is not None and key in entry:
                return entry[key]
            return total
        raise ParameterError(f"unknown transform kind {kind!r}")

    def raw_at(self, point):
        """True F at a previously evaluated point (from the cache)."""
        key = np.asarray(point, dtype=float).tobytes()
        cached = self.ledger.lookup(key)
        if cached is None:
            raise ParameterError("point was never evaluated")
        return cached[0] + cached[1]

    @property
    def nf(self):
        return self.ledger.nf

    def export_audit_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "point_id", "f", "h", "noise", "F_k"])
            writer.writerows(self.ledger.audit_rows)


def delta_k(f_new_at_xnew, f_old_at_xopt, q_old_at_xnew, q_old_at_xopt):
    """Model-vs-objective change from x_opt to x_new.

    (F_{k+1}(x_new) - F_k(x_opt)) - (Q_old(x_new) - Q_old(x_opt)).
    """
    for value in (f_new_at_xnew, f_old_at_xopt, q_old_at_xnew, q_old_at_xopt):
        if not math.isfinite(value):
            raise EvaluationError("non-finite input to delta_k")
    return (f_new_at_xnew - f_old_at_xopt) - (q_old_at_xnew - q_old_at_xopt)


def residual_from_sync(old_values, new_values, f_new_at_xnew, q_at_xnew, q_at_xopt,
                       t, opt_index):
    """Assemble the update right-hand side from one synchronization batch.

    Off-t components are the change of the transformed values of the
    retained points between the two iterations; the t-th component uses
    the delta convention so the constant term of the old model is never
    needed.
    """
    r = np.asarray(new_values, dtype=float) - np.asarray(old_values, dtype=float)
    r[t] = delta_k(f_new_at_xnew, old_values[opt_index], q_at_xnew, q_at_xopt)
    return r


def residual_vector(objective, iset, k, x_new, t, q_old):
    """Evaluate the update right-hand side for replacing point t by x_new."""
    m = len(iset.points)
    if not 0 <= t < m:
        raise ParameterError(f"drop index {t} out of range")
    batch = list(iset.points) + [x_new]
    values = objective.evaluate_batch(batch, k)
    x_opt = iset.points[iset.opt_index]
    return residual_from_sync(
        iset.values, values[:m], values[m],
        q_old.value(x_new), q_old.value(x_opt),
        t, iset.opt_index,
    )
