"""Trust-region kernels: the step subproblem and the two geometry searches.

``trsapp`` approximately minimizes the quadratic model in a ball by
truncated conjugate gradients with a boundary-following phase. ``biglag``
maximizes the modulus of a Lagrange function over the ball, and
``bigden`` maximizes the modulus of the update denominator sigma, both
by alternating two-dimensional boundary searches.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import (
    DegenerateLagrangeError,
    GeometryRebuildNeeded,
    ParameterError,
)
from .model import lagrange_function

_REL_REDUCTION_CUTOFF = 1e-2
_MAX_BOUNDARY_PASSES = 10


@dataclass
class TrustRegion:
    """Ball of radius Delta around the current best point, floored by rho."""

    center: np.ndarray
    Delta: float
    rho: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if not 0.0 < self.rho <= self.Delta:
            raise ParameterError(
                f"need 0 < rho <= Delta, got rho={self.rho}, Delta={self.Delta}"
            )


@dataclass
class StepResult:
    """Step, its predicted model reduction, and the minimum curvature seen."""

    d: np.ndarray
    predicted_reduction: float
    crvmin: float
    rayleighs: list = field(default_factory=list)


def _quad_values(c0, g, B, D):
    """Quadratic c0 + g'd + 1/2 d'Bd at every row d of D."""
    return c0 + D @ g + 0.5 * np.einsum("ij,ij->i", D @ B, D)


def _circle_minimize(c0, g, B, d1, d2, sign=1.0, num=129):
    """Minimize sign * quadratic over d(theta) = cos(theta) d1 + sin(theta) d2.

    On the circle the quadratic restricts to a degree-2 trigonometric
    polynomial, so a vectorized sweep plus safeguarded Newton steps on the
    angle reach the local stationary point cheaply; d1 and d2 should be
    orthogonal with equal norm so the curve stays on the sphere.
    """
    Bd1 = B @ d1
    Bd2 = B @ d2
    a1 = sign * float(g @ d1)
    a2 = sign * float(g @ d2)
    q11 = sign * float(d1 @ Bd1)
    q12 = sign * float(d1 @ Bd2)
    q22 = sign * float(d2 @ Bd2)
    base = sign * c0

    def f(cth, sth):
        return (base + a1 * cth + a2 * sth
                + 0.5 * (q11 * cth * cth + 2.0 * q12 * cth * sth
                         + q22 * sth * sth))

    thetas = np.linspace(0.0, 2.0 * np.pi, num, endpoint=False)
    cth, sth = np.cos(thetas), np.sin(thetas)
    vals = f(cth, sth)
    i = int(np.argmin(vals))
    theta, best = float(thetas[i]), float(vals[i])
    span = 2.0 * np.pi / num

    th = theta
    for _ in range(30):
        c, s = math.cos(th), math.sin(th)
        d1f = (-a1 * s + a2 * c + (q22 - q11) * s * c
               + q12 * (c * c - s * s))
        d2f = (-a1 * c - a2 * s + (q22 - q11) * (c * c - s * s)
               - 4.0 * q12 * s * c)
        if d2f <= 0.0:
            break
        step = -d1f / d2f
        if abs(step) > span:
            step = math.copysign(span, step)
        th += step
        if abs(step) < 1e-15:
            break
    c, s = math.cos(th), math.sin(th)
    val = f(c, s)
    if val < best:
        theta, best = th, float(val)
    return (math.cos(theta) * d1 + math.sin(theta) * d2, sign * best)


def trsapp(Q, tr):
    """Approximate minimizer of the model over the trust-region ball."""
    delta = tr.Delta
    B = Q.hessian()
    g = Q.gradient(tr.center)
    n = g.size
    d = np.zeros(n)
    rayleighs = []
    boundary = False
    gnorm = float(np.linalg.norm(g))

    if gnorm == 0.0:
        vals, vecs = np.linalg.eigh(B)
        if vals[0] >= 0.0:
            return StepResult(d=d, predicted_reduction=0.0,
                              crvmin=float(max(vals[0], 0.0)))
        d = delta * vecs[:, 0]
        boundary = True
    else:
        grad = g.copy()
        p = -grad
        rs_old = float(grad @ grad)
        total_red = 0.0
        for _ in range(n):
            Bp = B @ p
            pBp = float(p @ Bp)
            pp = float(p @ p)
            if pp <= 0.0:
                break
            rayleighs.append(pBp / pp)
            dp = float(d @ p)
            dd = float(d @ d)
            disc = dp * dp + pp * (delta * delta - dd)
            a_bnd = (-dp + math.sqrt(max(disc, 0.0))) / pp
            gp = float(grad @ p)
            if pBp > 0.0 and -gp / pBp < a_bnd:
                a = -gp / pBp
            else:
                a = a_bnd
                boundary = True
            if a <= 0.0:
                break
            d = d + a * p
            grad = grad + a * Bp
            step_red = -(a * gp + 0.5 * a * a * pBp)
            total_red += step_red
            if boundary:
                break
            rs_new = float(grad @ grad)
            if math.sqrt(rs_new) <= 1e-12 * max(1.0, gnorm):
                break
            if step_red <= _REL_REDUCTION_CUTOFF * max(total_red, 0.0):
                break
            p = -grad + (rs_new / rs_old) * p
            rs_old = rs_new

    if boundary:
        dn = float(np.linalg.norm(d))
        if dn > 0.0:
            d = d * (delta / dn)
        value = float(g @ d) + 0.5 * float(d @ (B @ d))
        for _ in range(_MAX_BOUNDARY_PASSES):
            grad = g + B @ d
            proj = grad - (float(grad @ d) / (delta * delta)) * d
            pn = float(np.linalg.norm(proj))
            if pn <= 1e-10 * max(1.0, float(np.linalg.norm(grad))):
                break
            s = (-delta / pn) * proj
            d_new, val_new = _circle_minimize(0.0, g, B, d, s)
            if val_new >= value - 1e-14 * max(1.0, abs(value)):
                break
            d, value = d_new, val_new

    reduction = -(float(g @ d) + 0.5 * float(d @ (B @ d)))
    crvmin = 0.0 if boundary else (min(rayleighs) if rayleighs else 0.0)
    return StepResult(
        d=d,
        predicted_reduction=max(reduction, 0.0),
        crvmin=max(crvmin, 0.0) if not boundary else 0.0,
        rayleighs=rayleighs,
    )


def biglag(kkt, t, tr):
    """Step maximizing |l_t(center + d)| over the ball."""
    ell = lagrange_function(kkt, t)
    center, delta = tr.center, tr.Delta
    n = center.size
    A = ell.hessian()
    c0 = ell.value(center)
    g = ell.gradient(center)

    cands = np.zeros((2 * n + 2, n))
    for i in range(n):
        cands[2 * i, i] = delta
        cands[2 * i + 1, i] = -delta
    gn = float(np.linalg.norm(g))
    if gn > 0.0:
        cands[2 * n] = (delta / gn) * g
        cands[2 * n + 1] = -(delta / gn) * g
    else:
        cands = cands[: 2 * n]
    vals = np.abs(_quad_values(c0, g, A, cands))
    i = int(np.argmax(vals))
    best = float(vals[i])
    if best < 1e-12:
        raise DegenerateLagrangeError(
            f"Lagrange function {t} is numerically flat on the trust region"
        )
    d = cands[i].copy()

    for _ in range(n):
        grad = g + A @ d
        proj = grad - (float(grad @ d) / (delta * delta)) * d
        pn = float(np.linalg.norm(proj))
        if pn <= 1e-10 * max(1.0, float(np.linalg.norm(grad))):
            break
        sign = 1.0 if (c0 + float(g @ d) + 0.5 * float(d @ (A @ d))) >= 0.0 else -1.0
        s = (sign * delta / pn) * proj
        d_new, _ = _circle_minimize(c0, g, A, d, s, sign=-sign)
        new_abs = abs(c0 + float(g @ d_new) + 0.5 * float(d_new @ (A @ d_new)))
        if new_abs <= best * (1.0 + 1e-10):
            break
        best = new_abs
        d = d_new
    return d


def _sigma_at(kkt, t, point):
    sc = kkt.scalars(t, point)
    return sc, abs(sc.sigma)


def bigden(kkt, t, tr, x_new_candidate):
    """Step maximizing |sigma| when the candidate's denominator is too small."""
    center, delta = tr.center, tr.Delta
    d0 = np.asarray(x_new_candidate, dtype=float) - center
    d0n = float(np.linalg.norm(d0))
    if d0n == 0.0:
        d0 = np.zeros_like(center)
        d0[0] = delta
        d0n = delta
    _, best_abs = _sigma_at(kkt, t, center + d0)
    best_d = d0.copy()

    e1 = (delta / d0n) * d0
    ell = lagrange_function(kkt, t)
    gu = ell.gradient(center + d0)
    u = gu - (float(gu @ e1) / (delta * delta)) * e1
    un = float(np.linalg.norm(u))
    if un <= 1e-12 * max(1.0, float(np.linalg.norm(gu))):
        # gradient direction degenerate: pick the coordinate axis least
        # aligned with the candidate step.
        i = int(np.argmin(np.abs(e1)))
        u = np.zeros_like(e1)
        u[i] = 1.0
        u -= (float(u @ e1) / (delta * delta)) * e1
        un = float(np.linalg.norm(u))
    e2 = (delta / un) * u

    thetas = np.linspace(0.0, 2.0 * np.pi, 51)[:-1]
    sigmas = np.empty(thetas.size)
    for i, th in enumerate(thetas):
        d = math.cos(th) * e1 + math.sin(th) * e2
        _, sigmas[i] = _sigma_at(kkt, t, center + d)
    i = int(np.argmax(sigmas))

    def objective(th):
        d = math.cos(th) * e1 + math.sin(th) * e2
        return -_sigma_at(kkt, t, center + d)[1]

    span = thetas[1] - thetas[0]
    res = minimize_scalar(objective, bounds=(thetas[i] - span, thetas[i] + span),
                          method="bounded", options={"xatol": 1e-10})
    candidates = [(float(thetas[i]), float(sigmas[i])), (float(res.x), -float(res.fun))]
    for th, s_abs in candidates:
        if s_abs > best_abs:
            best_abs = s_abs
            best_d = math.cos(th) * e1 + math.sin(th) * e2

    sc, s_abs = _sigma_at(kkt, t, center + best_d)
    if s_abs <= kkt.sigma_floor(sc):
        raise GeometryRebuildNeeded(
            f"no step gives an acceptable denominator (best |sigma|={s_abs:.3e})"
        )
    return best_d
