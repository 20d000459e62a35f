"""Interpolation set, KKT system and least-change quadratic models.

The quadratic model is determined by m interpolation values through the
saddle system W (lambda, c, g) = (r, 0) whose blocks are built from the
half-squared inner products of the point offsets. The inverse H = W^-1
is maintained by the rank-structured update; a drift audit against the
freshly rebuilt W triggers re-factorization when the incremental update
has degraded.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateGeometryError,
    NearSingularUpdateError,
    ParameterError,
)

COND_LIMIT = 1e14
DRIFT_LIMIT = 1e-6


def legal_point_range(n):
    """Allowed interpolation-set sizes for dimension n."""
    return n + 2, (n + 1) * (n + 2) // 2


@dataclass
class InterpolationSet:
    """The m points carrying the model, with their current transformed values."""

    points: np.ndarray
    base: np.ndarray
    values: np.ndarray
    opt_index: int = 0

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.base = np.asarray(self.base, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        m, n = self.points.shape
        lo, hi = legal_point_range(n)
        if not lo <= m <= hi:
            raise ParameterError(f"m={m} outside legal range [{lo}, {hi}] for n={n}")
        if len(self.values) != m:
            raise ParameterError("values length must equal point count")
        if not 0 <= self.opt_index < m:
            raise ParameterError("opt_index out of range")

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def n(self):
        return self.points.shape[1]

    @property
    def x_opt(self):
        return self.points[self.opt_index]

    def replace(self, t, x_new, value):
        self.points[t] = x_new
        self.values[t] = value


def build_initial_set(x0, rho_beg, m):
    """Coordinate-pattern start set: x0, x0 +/- rho*e_i, then cross terms."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    lo, hi = legal_point_range(n)
    if not lo <= m <= hi:
        raise ParameterError(f"m={m} outside legal range [{lo}, {hi}] for n={n}")
    if rho_beg <= 0:
        raise ParameterError("rho_beg must be positive")
    points = np.tile(x0, (m, 1))
    for j in range(1, min(m, n + 1)):
        points[j, j - 1] += rho_beg
    for j in range(n + 1, min(m, 2 * n + 1)):
        points[j, j - n - 1] -= rho_beg
    if m > 2 * n + 1:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for idx, (i, j) in zip(range(2 * n + 1, m), pairs):
            points[idx, i] += rho_beg
            points[idx, j] += rho_beg
    return InterpolationSet(points=points, base=x0.copy(), values=np.zeros(m))


@dataclass
class UpdateScalars:
    """The denominator pieces of one inverse-KKT update."""

    alpha: float
    beta: float
    tau: float
    sigma: float
    w: np.ndarray


class KktSystem:
    """W and its maintained inverse H for one interpolation geometry."""

    def __init__(self, points, base):
        self.points = np.array(points, dtype=float)
        self.base = np.asarray(base, dtype=float)
        self.m, self.n = self.points.shape
        self.W = self._build_w()
        self.refactorize()

    def _build_w(self):
        y = self.points - self.base
        a = 0.5 * (y @ y.T) ** 2
        size = self.m + self.n + 1
        w = np.zeros((size, size))
        w[: self.m, : self.m] = a
        w[: self.m, self.m] = 1.0
        w[self.m, : self.m] = 1.0
        w[: self.m, self.m + 1:] = y
        w[self.m + 1:, : self.m] = y.T
        return w

    def refactorize(self):
        # Invert a radius-scaled copy of W: raw entries scale like radius^4
        # against the constant block, so the unscaled condition number is
        # meaningless for small sets. The scaling S with W = S^-1 (SWS) S^-1
        # gives H = S inv(SWS) S.
        y = self.points - self.base
        radius = float(np.max(np.linalg.norm(y, axis=1)))
        if radius <= 0.0:
            raise DegenerateGeometryError("all interpolation points coincide")
        s = np.concatenate([
            np.full(self.m, radius ** -2), [radius ** 2], np.full(self.n, radius),
        ])
        ws = self.W * np.outer(s, s)
        cond = np.linalg.cond(ws)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise DegenerateGeometryError(
                f"interpolation geometry is degenerate (cond ~ {cond:.2e})"
            )
        h = np.linalg.inv(ws) * np.outer(s, s)
        # Newton refinement against the raw W: plain inversion leaves a
        # residual of order cond * eps, which the drift audit would reject.
        eye = np.eye(self.W.shape[0])
        for _ in range(3):
            resid = eye - self.W @ h
            if np.max(np.abs(resid)) < 1e-10:
                break
            h = h + h @ resid
        self.H = 0.5 * (h + h.T)

    def w_vector(self, x_new):
        """Right-hand geometry vector of the update for a candidate point."""
        y = self.points - self.base
        d = np.asarray(x_new, dtype=float) - self.base
        w = np.empty(self.m + self.n + 1)
        w[: self.m] = 0.5 * (y @ d) ** 2
        w[self.m] = 1.0
        w[self.m + 1:] = d
        return w

    def scalars(self, t, x_new):
        """alpha, beta, tau and the denominator sigma for replacing point t."""
        w = self.w_vector(x_new)
        hw = self.H @ w
        alpha = self.H[t, t]
        d = np.asarray(x_new, dtype=float) - self.base
        beta = 0.5 * float(d @ d) ** 2 - float(w @ hw)
        tau = float(hw[t])
        ab = alpha * beta
        if ab < 0.0:
            # alpha and beta are nonnegative in exact arithmetic; a negative
            # product is rounding noise, so take magnitudes.
            ab = abs(alpha) * abs(beta)
        sigma = ab + tau * tau
        return UpdateScalars(alpha=float(alpha), beta=beta, tau=tau, sigma=sigma, w=w)

    def sigma_for(self, t, x_new):
        return self.scalars(t, x_new).sigma

    def sigma_floor(self, scalars):
        scale = max(1.0, abs(scalars.alpha) * abs(scalars.beta) + scalars.tau ** 2)
        return 1e-12 * scale

    def update(self, t, x_new):
        """Replace point t by x_new and update H by the rank-structured formula."""
        sc = self.scalars(t, x_new)
        if abs(sc.sigma) <= self.sigma_floor(sc):
            raise NearSingularUpdateError(
                f"update denominator sigma={sc.sigma:.3e} below floor"
            )
        h = self.H
        et_minus_hw = -h @ sc.w
        et_minus_hw[t] += 1.0
        het = h[:, t].copy()
        h += (
            sc.alpha * np.outer(et_minus_hw, et_minus_hw)
            - sc.beta * np.outer(het, het)
            + sc.tau * (np.outer(het, et_minus_hw) + np.outer(et_minus_hw, het))
        ) / sc.sigma
        self.H = 0.5 * (h + h.T)
        self.points[t] = np.asarray(x_new, dtype=float)
        self.W = self._build_w()
        drift = np.max(np.abs(self.W @ self.H - np.eye(self.W.shape[0])))
        if drift > DRIFT_LIMIT:
            self.refactorize()
        return sc

    def solve(self, r):
        """Coefficients (lambda, c, g) for the interpolation right-hand side r.

        The constraint block of the system demands that lambda sums to zero
        and has zero first moment over the point offsets; the exact solution
        satisfies both, so projecting out any numerical remainder only
        removes rounding error while making the conditions hold exactly.
        """
        rhs = np.zeros(self.m + self.n + 1)
        rhs[: self.m] = r
        sol = self.H @ rhs
        lam = sol[: self.m]
        basis = np.column_stack([np.ones(self.m), self.points - self.base])
        coef, *_ = np.linalg.lstsq(basis, lam, rcond=None)
        lam = lam - basis @ coef
        return lam, float(sol[self.m]), sol[self.m + 1:]


def build_w_matrix(iset):
    """Factorized KKT system for an interpolation set."""
    return KktSystem(iset.points, iset.base)


class QuadraticModel:
    """c + (x-x0)'g + 1/2 (x-x0)'(G + sum lam_j v_j v_j')(x-x0).

    The Hessian is an explicit symmetric part plus rank-one terms tied to
    the current interpolation points; when a point leaves the set its
    term is folded into the explicit part, so storage stays bounded.
    """

    def __init__(self, base, c, g, hess_explicit, lam, directions):
        self.base = np.asarray(base, dtype=float)
        self.c = float(c)
        self.g = np.asarray(g, dtype=float)
        self.hess_explicit = np.asarray(hess_explicit, dtype=float)
        self.lam = np.asarray(lam, dtype=float)
        self.directions = np.asarray(directions, dtype=float)
        self.last_update = None

    @classmethod
    def zero(cls, base, n, m):
        return cls(base, 0.0, np.zeros(n), np.zeros((n, n)),
                   np.zeros(m), np.zeros((m, n)))

    def copy(self):
        model = QuadraticModel(
            self.base.copy(), self.c, self.g.copy(),
            self.hess_explicit.copy(), self.lam.copy(), self.directions.copy(),
        )
        model.last_update = self.last_update
        return model

    @property
    def hess_implicit(self):
        return [(self.lam[j], self.directions[j]) for j in range(len(self.lam))]

    def value(self, x):
        s = np.asarray(x, dtype=float) - self.base
        vs = self.directions @ s
        return (
            self.c + float(s @ self.g)
            + 0.5 * float(s @ (self.hess_explicit @ s))
            + 0.5 * float(self.lam @ (vs * vs))
        )

    def gradient(self, x):
        s = np.asarray(x, dtype=float) - self.base
        vs = self.directions @ s
        return self.g + self.hess_explicit @ s + self.directions.T @ (self.lam * vs)

    def hessian(self):
        return self.hess_explicit + self.directions.T @ (self.lam[:, None] * self.directions)

    def to_dict(self):
        """JSON-ready dump: constant, gradient, explicit Hessian, rank-one terms."""
        return {
            "base": self.base.tolist(),
            "c": self.c,
            "g": self.g.tolist(),
            "hess_explicit": self.hess_explicit.tolist(),
            "lam": self.lam.tolist(),
            "directions": self.directions.tolist(),
        }

    def apply_update(self, lam_d, c_d, g_d, t, x_new):
        """Fold point t's rank-one term away and add the new increment."""
        if self.lam[t] != 0.0:
            v_old = self.directions[t]
            self.hess_explicit += self.lam[t] * np.outer(v_old, v_old)
            self.lam[t] = 0.0
        self.directions[t] = np.asarray(x_new, dtype=float) - self.base
        self.lam += lam_d
        self.c += c_d
        self.g = self.g + g_d
        self.last_update = (np.array(lam_d), float(c_d), np.array(g_d))


def solve_initial_model(iset, values, kkt=None):
    """Minimum-Frobenius-norm interpolant of the initial values (from Q = 0)."""
    if kkt is None:
        kkt = build_w_matrix(iset)
    lam, c, g = kkt.solve(np.asarray(values, dtype=float))
    model = QuadraticModel(
        base=iset.base.copy(), c=c, g=g,
        hess_explicit=np.zeros((iset.n, iset.n)),
        lam=lam, directions=iset.points - iset.base,
    )
    model.last_update = (lam.copy(), c, g.copy())
    return model


def update_model(q_old, kkt, r, t, x_new):
    """Least-change model for the new values; H must already hold the new set."""
    lam_d, c_d, g_d = kkt.solve(r)
    model = q_old.copy()
    model.apply_update(lam_d, c_d, g_d, t, x_new)
    return model


def lagrange_function(kkt, t):
    """The t-th Lagrange quadratic: 1 at point t, 0 at the others."""
    if not 0 <= t < kkt.m:
        raise ParameterError(f"index {t} out of range")
    col = kkt.H[:, t]
    return QuadraticModel(
        base=kkt.base.copy(),
        c=float(col[kkt.m]),
        g=col[kkt.m + 1:].copy(),
        hess_explicit=np.zeros((kkt.n, kkt.n)),
        lam=col[: kkt.m].copy(),
        directions=kkt.points - kkt.base,
    )


def shift_base(model, kkt, new_base):
    """Re-express the model about new_base; values are unchanged."""
    new_base = np.asarray(new_base, dtype=float)
    shifted = QuadraticModel(
        base=new_base.copy(),
        c=model.value(new_base),
        g=model.gradient(new_base),
        hess_explicit=model.hessian(),
        lam=np.zeros(len(model.lam)),
        directions=kkt.points - new_base,
    )
    new_kkt = KktSystem(kkt.points, new_base)
    return shifted, new_kkt
