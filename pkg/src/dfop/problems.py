"""Registry of unconstrained test problems with public/private splits.

Each instance carries a public part f and a private part h (zero for
most problems), a start point, and the best known value when it has a
clean closed form. Instances without one are scored against the best
value found across solvers, which the bench harness flags.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ParameterError
from .objective import ObjectiveSpec


@dataclass
class ProblemInstance:
    name: str
    dimension: int
    f: Callable
    h: Callable
    x0: np.ndarray
    x_best: Optional[np.ndarray] = None
    f_best: Optional[float] = None
    minimizers: Optional[list] = None
    rho_beg: float = 1.0

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.size != self.dimension:
            raise ParameterError(f"{self.name}: x0 has wrong dimension")
        if self.x_best is not None:
            self.x_best = np.asarray(self.x_best, dtype=float)
            best = float(self.f(self.x_best) + self.h(self.x_best))
            if self.f_best is None:
                self.f_best = best
        if self.f_best is not None:
            start = float(self.f(self.x0) + self.h(self.x0))
            if not start > self.f_best:
                raise ParameterError(f"{self.name}: F(x0) must exceed F(x_best)")

    def spec(self):
        return ObjectiveSpec(
            dimension=self.dimension,
            public_part=self.f,
            private_part=self.h,
            name=self.name,
        )

    def total(self, x):
        return float(self.f(x)) + float(self.h(x))


def _zero(x):
    return 0.0


# ---------------------------------------------------------------------------
# closed-form objectives


def sphere(x):
    return float(np.sum(x ** 2))


def quartic_sum(x):
    return float(np.sum(x ** 4))


def shell(x):
    return 100.0 * (float(np.sum(x ** 2)) - 1.0) ** 2


def mean_deviation(x):
    xbar = float(np.mean(x))
    return float(np.sum((x - xbar - 1.0) ** 2)) + 20.0 * (xbar + 1.0) ** 2


def chrosen(x):
    return float(np.sum(4.0 * (x[:-1] - x[1:] ** 2) ** 2 + (1.0 - x[1:]) ** 2))


def rosenbrock(x):
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def srosenbr(x):
    odd = x[0::2]
    even = x[1::2]
    return float(np.sum(100.0 * (even - odd ** 2) ** 2 + (1.0 - odd) ** 2))


def powellsg(x):
    a, b, c, d = x[0::4], x[1::4], x[2::4], x[3::4]
    return float(
        np.sum((a + 10.0 * b) ** 2 + 5.0 * (c - d) ** 2
               + (b - 2.0 * c) ** 4 + 10.0 * (a - d) ** 4)
    )


def woods(x):
    a, b, c, d = x[0::4], x[1::4], x[2::4], x[3::4]
    return float(
        np.sum(100.0 * (b - a ** 2) ** 2 + (1.0 - a) ** 2
               + 90.0 * (d - c ** 2) ** 2 + (1.0 - c) ** 2
               + 10.0 * (b + d - 2.0) ** 2 + 0.1 * (b - d) ** 2)
    )


def arwhead(x):
    return float(np.sum((x[:-1] ** 2 + x[-1] ** 2) ** 2 - 4.0 * x[:-1] + 3.0))


def dqrtic(x):
    i = np.arange(1, x.size + 1)
    return float(np.sum((x - i) ** 4))


def vardim(x):
    n = x.size
    i = np.arange(1, n + 1)
    s = float(i @ x) - n * (n + 1) / 2.0
    return float(np.sum((x - 1.0) ** 2)) + s ** 2 + s ** 4


def freuroth(x):
    a, b = x[0], x[1]
    r1 = -13.0 + a + ((5.0 - b) * b - 2.0) * b
    r2 = -29.0 + a + ((b + 1.0) * b - 14.0) * b
    return float(r1 ** 2 + r2 ** 2)


def chebyquad(x):
    """Sum of squared shifted-Chebyshev moment residuals."""
    n = x.size
    fvec = np.zeros(n)
    for i in range(n):
        t1 = 1.0
        t2 = 2.0 * x[i] - 1.0
        t3 = 2.0 * t2
        for j in range(n):
            fvec[j] += t2
            t4 = t3 * t2 - t1
            t1 = t2
            t2 = t4
    for j in range(1, n + 1):
        fvec[j - 1] /= n
        if j % 2 == 0:
            fvec[j - 1] += 1.0 / (j ** 2 - 1.0)
    return float(np.sum(fvec ** 2))


def broydn3d(x):
    left = np.concatenate(([0.0], x[:-1]))
    right = np.concatenate((x[1:], [0.0]))
    res = (3.0 - 2.0 * x) * x - left - 2.0 * right + 1.0
    return float(np.sum(res ** 2))


def penalty1(x):
    return float(1e-5 * np.sum((x - 1.0) ** 2) + (np.sum(x ** 2) - 0.25) ** 2)


def liarwhd(x):
    return float(np.sum(4.0 * (x ** 2 - x[0]) ** 2 + (x - 1.0) ** 2))


def nondia(x):
    return float((x[0] - 1.0) ** 2 + np.sum(100.0 * (x[0] - x[:-1] ** 2) ** 2))


def engval1(x):
    return float(np.sum((x[:-1] ** 2 + x[1:] ** 2) ** 2 - 4.0 * x[:-1] + 3.0))


def power(x):
    i = np.arange(1, x.size + 1)
    return float(np.sum((i * x) ** 2))


def brownal(x):
    n = x.size
    sm = float(np.sum(x)) - (n + 1)
    res = x + sm
    res = res.copy()
    res[-1] = float(np.prod(x)) - 1.0
    return float(np.sum(res ** 2))


def edensch(x):
    a, b = x[:-1], x[1:]
    return float(16.0 + np.sum((a - 2.0) ** 4 + (a * b - 2.0 * b) ** 2
                               + (b + 1.0) ** 2))


def tointgss(x):
    n = x.size
    a, b, c = x[:-2], x[1:-1], x[2:]
    t = 0.1 + c ** 2
    return float(np.sum((10.0 / (n + 2) + c ** 2)
                        * (2.0 - np.exp(-((a - b) ** 2) / t))))


def morebv(x):
    n = x.size
    h = 1.0 / (n + 1)
    i = np.arange(1, n + 1)
    left = np.concatenate(([0.0], x[:-1]))
    right = np.concatenate((x[1:], [0.0]))
    res = 2.0 * x - left - right + 0.5 * h ** 2 * (x + i * h + 1.0) ** 3
    return float(np.sum(res ** 2))


def parabola_1d(x):
    return float((x[0] - 1.0) ** 2)


# ---------------------------------------------------------------------------
# registry


def _instances():
    ones = np.ones
    zeros = np.zeros
    out = [
        ProblemInstance("sphere", 10, sphere, _zero, 2.0 * ones(10),
                        x_best=zeros(10), minimizers=[zeros(10)]),
        ProblemInstance("quartic-table6", 10, quartic_sum, sphere,
                        10.0 * ones(10), x_best=zeros(10)),
        ProblemInstance("shell-meandev", 20, shell, mean_deviation, ones(20)),
        ProblemInstance("shell", 10, shell, sphere, ones(10)),
        ProblemInstance("chrosen", 5, chrosen, _zero, -ones(5),
                        x_best=ones(5), minimizers=[ones(5)]),
        ProblemInstance("chrosen10", 10, chrosen, _zero, -ones(10),
                        x_best=ones(10)),
        ProblemInstance("rosenbrock", 2, rosenbrock, _zero,
                        np.array([-1.2, 1.0]), x_best=ones(2),
                        minimizers=[ones(2)]),
        ProblemInstance("srosenbr", 10, srosenbr, _zero,
                        np.tile([-1.2, 1.0], 5), x_best=ones(10)),
        ProblemInstance("powellsg", 8, powellsg, _zero,
                        np.tile([3.0, -1.0, 0.0, 1.0], 2), x_best=zeros(8)),
        ProblemInstance("woods", 4, woods, _zero,
                        np.array([-3.0, -1.0, -3.0, -1.0]), x_best=ones(4)),
        ProblemInstance("arwhead", 10, arwhead, _zero, ones(10),
                        x_best=np.append(np.ones(9), 0.0)),
        ProblemInstance("dqrtic", 10, dqrtic, _zero, 2.0 * ones(10),
                        x_best=np.arange(1.0, 11.0)),
        ProblemInstance("vardim", 10, vardim, _zero,
                        1.0 - np.arange(1, 11) / 10.0, x_best=ones(10)),
        ProblemInstance("freuroth", 2, freuroth, _zero,
                        np.array([0.5, -2.0]), f_best=0.0),
        ProblemInstance("chebyquad", 8, chebyquad, _zero,
                        np.arange(1, 9) / 9.0),
        ProblemInstance("broydn3d", 10, broydn3d, _zero, -ones(10),
                        f_best=0.0),
        ProblemInstance("penalty1", 10, penalty1, _zero,
                        np.arange(1.0, 11.0)),
        ProblemInstance("liarwhd", 10, liarwhd, _zero, 4.0 * ones(10),
                        x_best=ones(10)),
        ProblemInstance("nondia", 10, nondia, _zero, -ones(10),
                        x_best=ones(10)),
        ProblemInstance("engval1", 10, engval1, _zero, 2.0 * ones(10)),
        ProblemInstance("power", 10, power, _zero, ones(10),
                        x_best=zeros(10)),
        ProblemInstance("brownal", 10, brownal, _zero, 0.5 * ones(10),
                        x_best=ones(10)),
        ProblemInstance("edensch", 10, edensch, _zero, zeros(10)),
        ProblemInstance("tointgss", 10, tointgss, _zero, 3.0 * ones(10)),
        ProblemInstance("morebv", 10, morebv, _zero,
                        (np.arange(1, 11) / 11.0) * (np.arange(1, 11) / 11.0 - 1.0),
                        f_best=0.0),
        ProblemInstance("parabola1d", 1, parabola_1d, _zero,
                        np.array([3.0]), x_best=np.array([1.0]),
                        minimizers=[np.array([1.0])]),
    ]
    return out


def problem_library():
    """All registered instances (fresh copies)."""
    return _instances()


def get_problem(name):
    for prob in _instances():
        if prob.name == name:
            return prob
    raise ParameterError(f"unknown problem {name!r}")


def problem_names():
    return [prob.name for prob in _instances()]
