"""Randomised checks of the coefficient conditions.

Every checker maximises the defining quotient of one condition over points
or pairs drawn uniformly from a ball, and reports the maximiser.  A pass
means no counterexample was found at that sampling density; it is a lower
bound on the true constant, not a proof.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import jumps, seeding
from ._util import dot, hs_sqnorm, sqnorm

LOL = "LOL"
GOL = "GOL"
GL = "GL"
SEP_LOCAL_LIPSCHITZ = "SEP_LOCAL_LIPSCHITZ"
SEP_GLOBAL_LIPSCHITZ = "SEP_GLOBAL_LIPSCHITZ"
GOLG = "GOLG"
GLG = "GLG"
SEP_LINEAR_GROWTH = "SEP_LINEAR_GROWTH"
LOCAL_BOUND = "LOCAL_BOUND"
GLOBAL_BOUND = "GLOBAL_BOUND"
DISSIPATIVE = "DISSIPATIVE"

PAIR_CONDITIONS = (LOL, GOL, GL, SEP_LOCAL_LIPSCHITZ, SEP_GLOBAL_LIPSCHITZ)


@dataclass(frozen=True)
class SamplingPlan:
    radius: float
    pairs: int = 10_000
    min_separation: float = 1e-6
    seed: int = 0
    mc_samples: int = jumps.DEFAULT_MC_SAMPLES

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("sampling radius must be positive and finite, got %r" % self.radius)
        if self.pairs < 1:
            raise ValueError("need at least one sample")
        if not self.min_separation > 0:
            raise ValueError("min_separation must be positive")


@dataclass(frozen=True)
class ConditionReport:
    condition_id: str
    constant_estimate: float
    witness: tuple
    samples_used: int
    claimed_constant: float = None
    verdict: str = "estimate-only"
    params: dict = None

    def to_dict(self):
        return {
            "condition_id": self.condition_id,
            "constant_estimate": self.constant_estimate,
            "witness": [np.asarray(w).tolist() for w in self.witness],
            "samples_used": self.samples_used,
            "claimed_constant": self.claimed_constant,
            "verdict": self.verdict,
        }


def _ball(normals, radius):
    # first d coordinates of a uniform point on S^{d+1} are uniform in B^d
    d = normals.shape[-1] - 2
    r = np.sqrt(sqnorm(normals))
    return radius * normals[..., :d] / r[..., None]


def uniform_ball(rng, n, dim, radius):
    """``n`` points uniform in the ``dim``-ball of ``radius``."""
    return _ball(rng.standard_normal((n, dim + 2)), radius)


def sample_points(plan, dim):
    rng = seeding.stream(plan.seed, 0)
    return _ball(rng.standard_normal((plan.pairs, dim + 2)), plan.radius)


def sample_pairs(plan, dim):
    """``plan.pairs`` pairs in the ball with |x - y| >= min_separation.

    Draws are prefix-stable: the first n pairs do not depend on how many
    pairs are requested in total.
    """
    rng = seeding.stream(plan.seed, 0)
    xy = _ball(rng.standard_normal((plan.pairs, 2, dim + 2)), plan.radius)
    x, y = xy[:, 0], xy[:, 1]
    close = np.flatnonzero(np.sqrt(sqnorm(x - y)) < plan.min_separation)
    if len(close):
        spare = seeding.stream(plan.seed, seeding.RESAMPLE)
        for i in close:
            while True:
                a, b = _ball(spare.standard_normal((2, dim + 2)), plan.radius)
                if math.sqrt(sqnorm(a - b)) >= plan.min_separation:
                    x[i], y[i] = a, b
                    break
    return x, y


def _jump_diff(c, x, y, mc):
    return jumps.nu_difference_moment(c.activity, c.jump, x, y, mc_samples=mc)


def _jump_second(c, x, mc):
    return jumps.nu_second_moment(c.activity, c.jump, x, mc_samples=mc)


def quotient(condition_id, c, x, y=None, K=None, M=None, mc_samples=jumps.DEFAULT_MC_SAMPLES):
    """Defining quotient of ``condition_id`` at points x (and y for pair conditions)."""
    x = np.asarray(x, dtype=float)
    if condition_id in PAIR_CONDITIONS:
        y = np.asarray(y, dtype=float)
        diff = x - y
        noise = hs_sqnorm(c.diffusion(x) - c.diffusion(y)) + _jump_diff(c, x, y, mc_samples)
        if condition_id in (LOL, GOL):
            num = dot(c.drift(x) - c.drift(y), diff) + noise
        elif condition_id == GL:
            num = sqnorm(c.drift(x) - c.drift(y)) + noise
        else:
            num = noise
        return num / sqnorm(diff)
    growth = hs_sqnorm(c.diffusion(x)) + _jump_second(c, x, mc_samples)
    if condition_id == GOLG:
        return (dot(c.drift(x), x) + growth) / (1.0 + sqnorm(x))
    if condition_id == GLG:
        return (sqnorm(c.drift(x)) + growth) / (1.0 + sqnorm(x))
    if condition_id == SEP_LINEAR_GROWTH:
        return growth / (1.0 + sqnorm(x))
    if condition_id in (LOCAL_BOUND, GLOBAL_BOUND):
        return sqnorm(c.drift(x)) + growth
    if condition_id == DISSIPATIVE:
        return dot(c.drift(x), x) + growth - (-K * sqnorm(x) + M)
    raise ValueError("unknown condition %r" % condition_id)


def _verdict(estimate, claimed):
    if claimed is None:
        return "estimate-only"
    return "pass" if estimate <= claimed else "fail"


def _report(condition_id, q, witness, claimed, params=None):
    if np.isnan(q).any():
        i = int(np.flatnonzero(np.isnan(q))[0])
        raise ValueError("%s quotient is NaN at sample %d" % (condition_id, i))
    i = int(np.argmax(q))  # first maximiser, so the result is order-deterministic
    est = float(q[i])
    return ConditionReport(condition_id, est, tuple(w[i].copy() for w in witness), len(q),
                           claimed, _verdict(est, claimed), params)


def _pair_check(condition_id, c, plan, claimed):
    x, y = sample_pairs(plan, c.dim)
    q = quotient(condition_id, c, x, y, mc_samples=plan.mc_samples)
    return _report(condition_id, q, (x, y), claimed)


def _point_check(condition_id, c, plan, claimed, **kw):
    x = sample_points(plan, c.dim)
    q = quotient(condition_id, c, x, mc_samples=plan.mc_samples, **kw)
    return _report(condition_id, q, (x,), claimed, kw or None)


def check_local_one_sided_lipschitz(c, plan, claimed=None):
    """C_R in <b(x)-b(y), x-y> + |sigma(x)-sigma(y)|^2 + int|g(x)-g(y)|^2 nu <= C_R |x-y|^2."""
    return _pair_check(LOL, c, plan, claimed)


def check_global_one_sided_lipschitz(c, plan, claimed=None):
    """Same quotient as the local check, tagged global; use a large plan radius."""
    return _pair_check(GOL, c, plan, claimed)


def check_global_lipschitz(c, plan, claimed=None):
    return _pair_check(GL, c, plan, claimed)


def check_separate_local_lipschitz(c, plan, claimed=None):
    """S_R for the diffusion and jump parts alone."""
    return _pair_check(SEP_LOCAL_LIPSCHITZ, c, plan, claimed)


def check_separate_global_lipschitz(c, plan, claimed=None):
    return _pair_check(SEP_GLOBAL_LIPSCHITZ, c, plan, claimed)


def check_global_one_sided_linear_growth(c, plan, claimed=None):
    return _point_check(GOLG, c, plan, claimed)


def check_global_linear_growth(c, plan, claimed=None):
    return _point_check(GLG, c, plan, claimed)


def check_separate_linear_growth(c, plan, claimed=None):
    return _point_check(SEP_LINEAR_GROWTH, c, plan, claimed)


def check_local_boundedness(c, plan, claimed=None):
    """M_R: max of |b|^2 + |sigma|_HS^2 + int|g|^2 nu on the ball."""
    return _point_check(LOCAL_BOUND, c, plan, claimed)


def check_global_boundedness(c, plan, claimed=None):
    return _point_check(GLOBAL_BOUND, c, plan, claimed)


def check_dissipative_growth(c, plan, K, M):
    """Largest excess of <b,x> + |sigma|^2 + int|g|^2 nu over -K|x|^2 + M; passes iff <= 0."""
    if not (K > 0 and M > 0):
        raise ValueError("K and M must be positive")
    return _point_check(DISSIPATIVE, c, plan, 0.0, K=float(K), M=float(M))


def reevaluate(report, c, mc_samples=jumps.DEFAULT_MC_SAMPLES):
    """Quotient at the report's witness; equals ``constant_estimate`` exactly."""
    w = [np.asarray(v)[None] for v in report.witness]
    kw = dict(report.params or {})
    if report.condition_id in PAIR_CONDITIONS:
        return float(quotient(report.condition_id, c, w[0], w[1], mc_samples=mc_samples)[0])
    return float(quotient(report.condition_id, c, w[0], mc_samples=mc_samples, **kw)[0])


def local_constants(c, radius, pairs=10_000, seed=0):
    """Estimated (C, M) on the ball of ``radius``, as needed by truncation."""
    plan = SamplingPlan(radius, pairs, seed=seed)
    C = check_local_one_sided_lipschitz(c, plan).constant_estimate
    M = check_local_boundedness(c, plan).constant_estimate
    return {"C": C, "M": M}


CHECKERS = {
    LOL: check_local_one_sided_lipschitz,
    GOL: check_global_one_sided_lipschitz,
    GL: check_global_lipschitz,
    SEP_LOCAL_LIPSCHITZ: check_separate_local_lipschitz,
    SEP_GLOBAL_LIPSCHITZ: check_separate_global_lipschitz,
    GOLG: check_global_one_sided_linear_growth,
    GLG: check_global_linear_growth,
    SEP_LINEAR_GROWTH: check_separate_linear_growth,
    LOCAL_BOUND: check_local_boundedness,
    GLOBAL_BOUND: check_global_boundedness,
    DISSIPATIVE: check_dissipative_growth,
}
