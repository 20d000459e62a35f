"""Differentially private noise mechanisms and privacy-budget accounting.

Two per-iteration encryption operators are provided for the private part
``h`` of an objective ``F = f + h``:

* additive: ``h + C * eta_k`` with ``eta_k ~ Lap(b_k)``,
* multiplicative: ``h + gamma_k * (f + h)`` with ``gamma_k ~ U(-u_k, u_k)``,

plus the mixed mechanism that picks one of the two with an
iteration-level coin. All draws for iteration ``k`` come from the
counter-based stream keyed by (seed, k), in a fixed order, so a run is
replayable from its seed alone.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

from . import rng
from .exceptions import DegenerateEncryptionError, ParameterError


def sample_laplace(b, generator):
    """Draw one Laplace(b) variate by the inverse-CDF transform.

    Uses a single uniform u ~ U(-1/2, 1/2); the median u = 0 maps to 0
    exactly and there is no rejection loop, so one call consumes exactly
    one uniform from the stream.
    """
    if b <= 0:
        raise ParameterError(f"Laplace scale must be positive, got {b}")
    u = generator.uniform(-0.5, 0.5)
    if u == 0.0:
        return 0.0
    return -b * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u))


def laplace_pdf(x, b):
    """Density of Lap(b) at x."""
    return math.exp(-abs(x) / b) / (2.0 * b)


@dataclass
class LaplaceParams:
    """Additive-mechanism parameters: noise scale schedule and gain C."""

    scale_schedule: Callable[[int], float]
    C: float = 1.0

    def scale(self, k):
        b = float(self.scale_schedule(k))
        if b <= 0:
            raise ParameterError(f"b_k must be positive, got {b} at k={k}")
        return b

    def __post_init__(self):
        if self.C <= 0:
            raise ParameterError(f"C must be positive, got {self.C}")


@dataclass
class UniformParams:
    """Multiplicative-mechanism parameters: halfwidth schedule u_k in (0, 1)."""

    halfwidth_schedule: Callable[[int], float]

    def halfwidth(self, k):
        u = float(self.halfwidth_schedule(k))
        if not 0.0 < u < 1.0:
            raise ParameterError(f"u_k must lie in (0, 1), got {u} at k={k}")
        return u


@dataclass
class MixParams:
    """Mixed mechanism: a coin choosing additive vs multiplicative each iteration."""

    laplace: LaplaceParams
    uniform: UniformParams
    prob_additive: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.prob_additive <= 1.0:
            raise ParameterError("prob_additive must lie in [0, 1]")


@dataclass
class IterationDraws:
    """The shared randomness of one iteration: eta, gamma and the mechanism coin."""

    eta: float
    gamma: float
    use_additive: bool


def iteration_draws(seed, k, laplace=None, uniform=None, prob_additive=1.0):
    """Compute the iteration-k draws from the (seed, k) stream.

    The stream is consumed in a fixed order (eta, gamma, coin), so the
    triple is a pure function of (seed, k) regardless of how many points
    are evaluated or in how many batches.
    """
    gen = rng.stream(seed, k)
    eta = sample_laplace(laplace.scale(k), gen) if laplace is not None else 0.0
    gamma = gen.uniform(-1.0, 1.0) * uniform.halfwidth(k) if uniform is not None else 0.0
    use_additive = bool(gen.uniform(0.0, 1.0) < prob_additive)
    return IterationDraws(eta=eta, gamma=gamma, use_additive=use_additive)


def additive_encrypt(h_value, k, params, eta_k):
    """Additive operator: h + C * eta_k with the iteration-k shared draw."""
    return h_value + params.C * eta_k


def multiplicative_encrypt(f_value, h_value, k, gamma_k):
    """Multiplicative operator: h + gamma_k * (f + h); needs |f + h| > 0."""
    total = f_value + h_value
    if total == 0.0:
        raise DegenerateEncryptionError(
            "multiplicative encryption is undefined where f + h = 0"
        )
    return h_value + gamma_k * total


def mixed_encrypt(f_value, h_value, k, params, draws):
    """Apply the iteration-k mixed operator; returns (value, mechanism tag)."""
    if draws.use_additive:
        return additive_encrypt(h_value, k, params.laplace, draws.eta), "A"
    return multiplicative_encrypt(f_value, h_value, k, draws.gamma), "B"


def global_sensitivity(window_values, m=None):
    """Max absolute successive difference of h over the recent window."""
    values = list(window_values)
    if m is not None:
        values = values[-m:]
    if len(values) < 2:
        raise ParameterError("sensitivity window needs at least 2 entries")
    return max(abs(a - b) for a, b in zip(values, values[1:]))


def budget_additive(gs, b_k, C):
    """Per-iteration budget of the additive mechanism: GS / (b_k * C)."""
    if b_k <= 0 or C <= 0:
        raise ParameterError("b_k and C must be positive")
    if gs < 0:
        raise ParameterError("global sensitivity cannot be negative")
    return gs / (b_k * C)


def budget_multiplicative(window_fh):
    """Per-iteration budget of the multiplicative mechanism.

    Max over successive window pairs of |ln| (f+h)_{j+1} / (f+h)_j ||.
    """
    values = list(window_fh)
    if len(values) < 2:
        raise ParameterError("budget window needs at least 2 entries")
    if any(v == 0.0 for v in values):
        raise DegenerateEncryptionError("f + h vanishes inside the budget window")
    return max(
        abs(math.log(abs(b) / abs(a))) for a, b in zip(values, values[1:])
    )


def budget_mixed(eps_add, eps_mult):
    """Budget of the mixed mechanism: the sum of the two budgets."""
    if eps_add < 0 or eps_mult < 0:
        raise ParameterError("budgets cannot be negative")
    return eps_add + eps_mult


@dataclass
class BudgetRecord:
    k: int
    mechanism: str
    gs: float
    b_k: float
    C: float
    eps_additive: float
    eps_multiplicative: float
    eps_total: float


@dataclass
class BudgetLedger:
    """Append-only per-iteration budget records, keyed by k."""

    records: list = field(default_factory=list)

    def append(self, record):
        if self.records and record.k <= self.records[-1].k:
            raise ParameterError("budget ledger is append-only in k")
        self.records.append(record)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["k", "mechanism", "GS", "b_k", "C", "eps_k", "eps_prime_k", "eps_bar_k"]
            )
            for rec in self.records:
                writer.writerow(
                    [rec.k, rec.mechanism, rec.gs, rec.b_k, rec.C,
                     rec.eps_additive, rec.eps_multiplicative, rec.eps_total]
                )


def audit_budgets(new_point_h, new_point_fh, mechanisms, laplace, m):
    """Provider-side budget audit over a recorded run.

    ``new_point_h`` and ``new_point_fh`` are the true h and f+h values of
    the successive new points, in evaluation order; ``mechanisms[i]`` is
    the tag ("A" or "B") of the mechanism fired at the iteration that
    introduced point i. Budgets are computed over the trailing window of
    m points, starting once two points exist.
    """
    ledger = BudgetLedger()
    for k in range(2, len(new_point_h) + 1):
        window_h = new_point_h[max(0, k - m):k]
        window_fh = new_point_fh[max(0, k - m):k]
        gs = global_sensitivity(window_h)
        b_k = laplace.scale(k)
        eps_a = budget_additive(gs, b_k, laplace.C)
        try:
            eps_m = budget_multiplicative(window_fh)
        except DegenerateEncryptionError:
            eps_m = math.inf
        ledger.append(
            BudgetRecord(
                k=k,
                mechanism=mechanisms[k - 1] if k - 1 < len(mechanisms) else "A",
                gs=gs,
                b_k=b_k,
                C=laplace.C,
                eps_additive=eps_a,
                eps_multiplicative=eps_m,
                eps_total=budget_mixed(eps_a, eps_m),
            )
        )
    return ledger
