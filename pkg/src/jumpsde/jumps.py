"""Finite-activity Poisson random measures and their nu-integrals.

The Lévy measure ``nu`` is represented by a total rate ``lambda = nu(U)``
and a normalised mark law; marks are vectors of the state dimension with
i.i.d. coordinates.  Infinite-activity measures enter only through a
small-jump cutoff (:meth:`JumpActivity.power_law`).
"""

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from ._util import sqnorm

DEFAULT_MC_SAMPLES = 4096


class MarkLaw:
    """Normalised law of one mark coordinate."""

    name = "abstract"
    params = ()

    def sample(self, rng, size):
        raise NotImplementedError

    @property
    def mean(self):
        raise NotImplementedError

    @property
    def second_moment(self):
        raise NotImplementedError

    def __repr__(self):
        return "%s(%s)" % (self.name, ",".join(repr(float(p)) for p in self.params))


class Normal(MarkLaw):
    name = "normal"

    def __init__(self, mu=0.0, sigma=1.0):
        if sigma < 0:
            raise ValueError("normal marks need sigma >= 0, got %r" % sigma)
        self.params = (float(mu), float(sigma))

    def sample(self, rng, size):
        mu, sigma = self.params
        return mu + sigma * rng.standard_normal(size)

    @property
    def mean(self):
        return self.params[0]

    @property
    def second_moment(self):
        mu, sigma = self.params
        return mu * mu + sigma * sigma


class Uniform(MarkLaw):
    name = "uniform"

    def __init__(self, a=-1.0, b=1.0):
        if not b > a:
            raise ValueError("uniform marks need a < b, got (%r, %r)" % (a, b))
        self.params = (float(a), float(b))

    def sample(self, rng, size):
        a, b = self.params
        return rng.uniform(a, b, size)

    @property
    def mean(self):
        a, b = self.params
        return 0.5 * (a + b)

    @property
    def second_moment(self):
        a, b = self.params
        return (a * a + a * b + b * b) / 3.0


class Constant(MarkLaw):
    name = "constant"

    def __init__(self, c=1.0):
        self.params = (float(c),)

    def sample(self, rng, size):
        return np.full(size, self.params[0])

    @property
    def mean(self):
        return self.params[0]

    @property
    def second_moment(self):
        return self.params[0] ** 2


class PowerLaw(MarkLaw):
    """Symmetric marks with density proportional to |u|^(-1-beta) on eps < |u| <= 1.

    This is the normalised big-jump part of nu(du) = c|u|^(-1-beta) du
    restricted to |u| <= 1, which has infinite mass near 0 for beta > 0.
    """

    name = "power_law"

    def __init__(self, c=1.0, beta=0.5, eps=0.01):
        if not (0 < beta < 2):
            raise ValueError("power_law needs 0 < beta < 2, got %r" % beta)
        if not (0 < eps < 1):
            raise ValueError("power_law cutoff must lie in (0, 1), got %r" % eps)
        if c <= 0:
            raise ValueError("power_law intensity must be positive, got %r" % c)
        self.params = (float(c), float(beta), float(eps))

    @property
    def rate(self):
        c, beta, eps = self.params
        return 2.0 * c * (eps ** -beta - 1.0) / beta

    def sample(self, rng, size):
        c, beta, eps = self.params
        v = rng.uniform(0.0, 1.0, size)
        sign = np.where(rng.uniform(0.0, 1.0, size) < 0.5, -1.0, 1.0)
        # inverse CDF of |u| on (eps, 1]
        r = (eps ** -beta - v * (eps ** -beta - 1.0)) ** (-1.0 / beta)
        return sign * r

    @property
    def mean(self):
        return 0.0

    @property
    def second_moment(self):
        c, beta, eps = self.params
        return 2.0 * c * (1.0 - eps ** (2.0 - beta)) / (2.0 - beta) / self.rate


MARK_LAWS = {"normal": Normal, "uniform": Uniform, "constant": Constant, "power_law": PowerLaw}

_MARK_RE = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def parse_mark_law(text):
    """Parse identifiers like ``"normal(0,1)"`` or ``"uniform(-1, 1)"``."""
    m = _MARK_RE.match(text)
    if not m:
        raise ValueError("cannot parse mark law %r; expected name(arg,...)" % text)
    name, args = m.groups()
    if name not in MARK_LAWS:
        raise ValueError("unknown mark law %r; known: %s" % (name, ", ".join(sorted(MARK_LAWS))))
    values = [float(a) for a in args.split(",") if a.strip()]
    return MARK_LAWS[name](*values)


@dataclass(frozen=True)
class JumpActivity:
    """Finite-activity stand-in for (U, nu): rate ``lambda`` plus a mark law.

    ``mode`` is ``"finite"`` or ``"truncated"``; in the latter the rate is
    ``nu(|u| > cutoff)`` and smaller jumps are dropped together with their
    compensator.
    """

    rate: float
    marks: MarkLaw = field(default_factory=Normal)
    dim: int = 1
    mode: str = "finite"
    cutoff: float = 0.0

    def __post_init__(self):
        if not self.rate >= 0 or not math.isfinite(self.rate):
            raise ValueError("jump rate must be finite and >= 0, got %r" % self.rate)
        if self.mode not in ("finite", "truncated"):
            raise ValueError("unknown jump mode %r" % self.mode)
        if self.mode == "truncated" and not self.cutoff > 0:
            raise ValueError("truncated mode needs a positive cutoff")

    @classmethod
    def none(cls, dim=1):
        return cls(0.0, Constant(0.0), dim)

    @classmethod
    def power_law(cls, c, beta, eps, dim=1):
        law = PowerLaw(c, beta, eps)
        return cls(law.rate, law, dim, mode="truncated", cutoff=eps)

    @property
    def mark_mean(self):
        return np.full(self.dim, self.marks.mean)

    @property
    def mark_second_moment(self):
        """Per-coordinate ``E U_i^2`` under the normalised mark law."""
        return np.full(self.dim, self.marks.second_moment)

    def sample_marks(self, rng, n):
        return np.asarray(self.marks.sample(rng, (n, self.dim)), dtype=float).reshape(n, self.dim)

    def describe(self):
        return {"rate": self.rate, "marks": repr(self.marks), "dim": self.dim,
                "mode": self.mode, "cutoff": self.cutoff}


@dataclass(frozen=True)
class JumpTrain:
    """Realisation of N on [0, T] x U."""

    times: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.marks):
            raise ValueError("times and marks differ in length")

    def __len__(self):
        return len(self.times)

    def between(self, t0, t1):
        """Jumps with t0 < time <= t1."""
        lo = np.searchsorted(self.times, t0, side="right")
        hi = np.searchsorted(self.times, t1, side="right")
        return JumpTrain(self.times[lo:hi], self.marks[lo:hi])


def sample_train(activity, T, seed):
    """Sample a jump train on [0, T].

    ``seed`` is either an integer sub-seed (the jump stream is derived from
    it) or a ready :class:`numpy.random.Generator`.
    """
    if not T > 0:
        raise ValueError("horizon must be positive, got %r" % T)
    rng = seed if isinstance(seed, np.random.Generator) else seeding.stream(seed, seeding.JUMPS)
    if activity.rate == 0:
        return JumpTrain(np.empty(0), np.empty((0, activity.dim)))
    n = rng.poisson(activity.rate * T)
    times = np.sort(rng.uniform(0.0, T, n))
    marks = activity.sample_marks(rng, n)
    return JumpTrain(times, marks)


def _mc_marks(activity, mc_samples, seed):
    return activity.sample_marks(seeding.stream(seed, seeding.MARKS_MC), mc_samples)


def _use_closed_form(kernel, method):
    if method == "closed":
        if getattr(kernel, "coef", None) is None:
            raise ValueError("closed form needs a kernel that is linear in the mark")
        return True
    if method == "mc":
        return False
    if method != "auto":
        raise ValueError("method must be auto, closed or mc")
    return getattr(kernel, "coef", None) is not None


def nu_second_moment(activity, kernel, x, mc_samples=DEFAULT_MC_SAMPLES, seed=0, method="auto"):
    """``int_U |g(x,u)|^2 nu(du)`` at states ``x`` of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    if activity.rate == 0:
        return np.zeros(x.shape[:-1])
    if _use_closed_form(kernel, method):
        return activity.rate * sqnorm(kernel.coef(x)) * activity.marks.second_moment
    u = _mc_marks(activity, mc_samples, seed)
    vals = kernel(x[..., None, :], u)
    return activity.rate * sqnorm(vals).mean(axis=-1)


def nu_difference_moment(activity, kernel, x, y, mc_samples=DEFAULT_MC_SAMPLES, seed=0,
                         method="auto"):
    """``int_U |g(x,u) - g(y,u)|^2 nu(du)``, vectorised over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if activity.rate == 0:
        return np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])
    if _use_closed_form(kernel, method):
        return activity.rate * sqnorm(kernel.coef(x) - kernel.coef(y)) * activity.marks.second_moment
    u = _mc_marks(activity, mc_samples, seed)
    vals = kernel(x[..., None, :], u) - kernel(y[..., None, :], u)
    return activity.rate * sqnorm(vals).mean(axis=-1)


def compensator(activity, kernel, x, mc_samples=DEFAULT_MC_SAMPLES, seed=0):
    """Drift correction ``lambda E[g(x, U)]`` of the compensated measure."""
    x = np.asarray(x, dtype=float)
    if activity.rate == 0:
        return np.zeros_like(x)
    if getattr(kernel, "coef", None) is not None:
        return kernel.coef(x) * (activity.rate * activity.mark_mean)
    u = _mc_marks(activity, mc_samples, seed)
    return activity.rate * kernel(x[..., None, :], u).mean(axis=-2)
