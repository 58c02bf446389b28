"""Coefficient models for dX = b(X)dt + sigma(X)dW + int g(X-,u) Ñ(dt,du).

All fields are vectorised: a drift maps (..., d) -> (..., d), a diffusion
maps (..., d) -> (..., d, d) and a jump kernel maps ((..., d), (..., d))
-> (..., d).  Built-in fields additionally carry a :class:`KernelCode` so
the compiled simulation core can evaluate them without calling back into
Python.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import beta as beta_fn

from . import jumps
from ._util import as_states, matvec, norm, sqnorm

# family codes understood by the compiled core (see _ckernels.pyx)
DRIFT_ZERO, DRIFT_LINEAR, DRIFT_ALPHA, DRIFT_CLAMP = 0, 1, 2, 3
DIFF_ZERO, DIFF_CONSTANT, DIFF_LINEAR, DIFF_TANH = 0, 1, 2, 3
JUMP_ZERO, JUMP_ADDITIVE, JUMP_MULTIPLICATIVE, JUMP_SIN = 0, 1, 2, 3

SMOOTHSTEP_LIPSCHITZ = 15.0 / 8.0


class BoundViolation(ValueError):
    """A drift exceeded the global bound a mollifier was built with."""


@dataclass(frozen=True)
class KernelCode:
    family: int
    params: tuple = ()
    cutoff: float = math.inf


class Drift:
    """Vector field b with an optional compiled-kernel code."""

    def __init__(self, func, name="custom", params=None, code=None):
        self.func = func
        self.name = name
        self.params = dict(params or {})
        self.code = code

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def __repr__(self):
        return "Drift(%s, %s)" % (self.name, self.params)


class Diffusion:
    """Matrix field sigma.  ``diag`` is set when sigma(x) is diagonal."""

    def __init__(self, func=None, diag=None, name="custom", params=None, code=None):
        if func is None and diag is None:
            raise ValueError("diffusion needs func or diag")
        self.diag = diag
        self._func = func
        self.name = name
        self.params = dict(params or {})
        self.code = code

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self._func is not None:
            return self._func(x)
        v = self.diag(x)
        return v[..., :, None] * np.eye(x.shape[-1])

    def apply(self, x, dw):
        """sigma(x) @ dw without forming the matrix when diagonal."""
        if self.diag is not None:
            return self.diag(x) * dw
        return matvec(self(x), dw)

    def __repr__(self):
        return "Diffusion(%s, %s)" % (self.name, self.params)


class JumpKernel:
    """Jump coefficient g(x, u).

    ``coef`` is set for kernels linear in the mark, g(x, u) = coef(x) * u
    coordinatewise; nu-integrals then have closed forms.
    """

    def __init__(self, func=None, coef=None, name="custom", params=None, code=None):
        if func is None and coef is None:
            raise ValueError("jump kernel needs func or coef")
        self._func = func
        self.coef = coef
        self.name = name
        self.params = dict(params or {})
        self.code = code

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self._func is not None:
            return self._func(x, u)
        return self.coef(x) * u

    def __repr__(self):
        return "JumpKernel(%s, %s)" % (self.name, self.params)


@dataclass(frozen=True)
class CoefficientSet:
    dim: int
    drift: Drift
    diffusion: Diffusion
    jump: JumpKernel
    activity: jumps.JumpActivity = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.activity is None:
            object.__setattr__(self, "activity", jumps.JumpActivity.none(self.dim))
        elif self.activity.dim != self.dim:
            raise ValueError("jump activity has dimension %d, coefficients %d"
                             % (self.activity.dim, self.dim))

    def with_drift(self, drift):
        return replace(self, drift=drift)

    def describe(self):
        return {
            "dim": self.dim,
            "drift": {"id": self.drift.name, **self.drift.params},
            "diffusion": {"id": self.diffusion.name, **self.diffusion.params},
            "jump": {"id": self.jump.name, **self.jump.params},
            "activity": self.activity.describe(),
        }


# --- built-in fields -------------------------------------------------------

def zero_drift():
    return Drift(lambda x: np.zeros_like(x), "zero", code=KernelCode(DRIFT_ZERO))


def linear_drift(slope=-1.0):
    """b(x) = slope * x."""
    slope = float(slope)
    return Drift(lambda x: slope * x, "linear", {"slope": slope},
                 KernelCode(DRIFT_LINEAR, (slope,)))


def clamp_drift(bound=1.0):
    """b(x) = clip(-x, -bound, bound) coordinatewise; bounded and 1-Lipschitz."""
    bound = float(bound)
    return Drift(lambda x: np.clip(-x, -bound, bound), "clamp", {"bound": bound},
                 KernelCode(DRIFT_CLAMP, (bound,)))


def _alpha_field(alpha, K):
    def b(x):
        r = norm(x)
        safe = np.where(r > 0, r, 1.0)
        scale = np.where(r > 0, safe ** -alpha, 0.0)
        return -x * scale[..., None] - K * x
    return b


def example_alpha_drift(alpha, dim=1):
    """b(x) = -x |x|^(-alpha), with b(0) = 0.

    One-sided Lipschitz with constant 0 but not locally Lipschitz at 0.
    ``dim`` is accepted for symmetry with the registry; the field itself
    works in any dimension.
    """
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1), got %r" % alpha)
    if dim < 1:
        raise ValueError("dimension must be positive")
    alpha = float(alpha)
    return Drift(_alpha_field(alpha, 0.0), "alpha_drift", {"alpha": alpha},
                 KernelCode(DRIFT_ALPHA, (alpha, 0.0)))


def example_dissipative_drift(base, K):
    """x -> base(x) - K x."""
    if not K > 0:
        raise ValueError("K must be positive, got %r" % K)
    K = float(K)
    code = None
    c = base.code
    if c is not None and math.isinf(c.cutoff):
        if c.family == DRIFT_ALPHA:
            code = KernelCode(DRIFT_ALPHA, (c.params[0], c.params[1] + K))
        elif c.family == DRIFT_LINEAR:
            code = KernelCode(DRIFT_LINEAR, (c.params[0] - K,))
        elif c.family == DRIFT_ZERO:
            code = KernelCode(DRIFT_LINEAR, (-K,))
    if code is not None and code.family == DRIFT_ALPHA:
        func = _alpha_field(code.params[0], code.params[1])
    elif code is not None:
        func = linear_drift(code.params[0]).func
    else:
        def func(x):
            return base(x) - K * x
    name = "dissipative_alpha" if base.name == "alpha_drift" else "dissipative(%s)" % base.name
    return Drift(func, name, {**base.params, "K": K}, code)


def zero_diffusion():
    return Diffusion(diag=lambda x: np.zeros_like(x), name="zero", code=KernelCode(DIFF_ZERO))


def constant_diffusion(scale=1.0):
    scale = float(scale)
    return Diffusion(diag=lambda x: np.full_like(x, scale), name="constant",
                     params={"scale": scale}, code=KernelCode(DIFF_CONSTANT, (scale,)))


def linear_diffusion(scale=1.0):
    scale = float(scale)
    return Diffusion(diag=lambda x: scale * x, name="linear", params={"scale": scale},
                     code=KernelCode(DIFF_LINEAR, (scale,)))


def tanh_diffusion(scale=1.0):
    scale = float(scale)
    return Diffusion(diag=lambda x: scale * np.tanh(x), name="tanh", params={"scale": scale},
                     code=KernelCode(DIFF_TANH, (scale,)))


def zero_jump():
    return JumpKernel(coef=lambda x: np.zeros_like(x), name="zero", code=KernelCode(JUMP_ZERO))


def additive_jump(scale=1.0):
    """g(x, u) = scale * u."""
    scale = float(scale)
    return JumpKernel(coef=lambda x: np.full_like(x, scale), name="additive",
                      params={"scale": scale}, code=KernelCode(JUMP_ADDITIVE, (scale,)))


def multiplicative_jump(scale=1.0):
    """g(x, u) = scale * x * u."""
    scale = float(scale)
    return JumpKernel(coef=lambda x: scale * x, name="multiplicative",
                      params={"scale": scale}, code=KernelCode(JUMP_MULTIPLICATIVE, (scale,)))


def sin_jump(scale=1.0):
    """g(x, u) = scale * sin(x) * u."""
    scale = float(scale)
    return JumpKernel(coef=lambda x: scale * np.sin(x), name="sin",
                      params={"scale": scale}, code=KernelCode(JUMP_SIN, (scale,)))


def ou_with_jumps(kappa=1.0, sigma=1.0, rate=1.0, marks="normal(0,1)", dim=1, jump_scale=1.0):
    """b = -kappa x, constant sigma, additive marks.  Stationary E|X|^2 per
    coordinate is (sigma^2 + rate * E U^2 * jump_scale^2) / (2 kappa)."""
    law = jumps.parse_mark_law(marks) if isinstance(marks, str) else marks
    return CoefficientSet(dim, linear_drift(-kappa), constant_diffusion(sigma),
                          additive_jump(jump_scale), jumps.JumpActivity(rate, law, dim))


# --- smooth cutoff (truncation) ---------------------------------------------

def _smoothstep_down(u):
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


@dataclass(frozen=True)
class CutoffFunction:
    """Radial plateau eta_R: 1 on |x| <= R, 0 beyond R + 1, quintic in between."""

    radius: float
    lipschitz_const: float = SMOOTHSTEP_LIPSCHITZ

    def profile(self, x):
        r = norm(np.asarray(x, dtype=float))
        u = r - self.radius
        return np.where(u <= 0.0, 1.0, np.where(u >= 1.0, 0.0, _smoothstep_down(u)))

    __call__ = profile


def make_cutoff(R):
    if not R > 0:
        raise ValueError("cutoff radius must be positive, got %r" % R)
    return CutoffFunction(float(R))


@dataclass(frozen=True)
class TruncatedCoefficients:
    base: CoefficientSet
    cutoff: CutoffFunction
    one_sided_const: float
    bound: float
    coefficients: CoefficientSet = field(repr=False, default=None)

    @property
    def radius(self):
        return self.cutoff.radius


def _cut_code(code, R):
    if code is None or not math.isinf(code.cutoff):
        return None
    return replace(code, cutoff=R)


def truncate_drift(drift, cutoff):
    eta = cutoff.profile
    return Drift(lambda x: eta(x)[..., None] * drift(x), "%s|R=%g" % (drift.name, cutoff.radius),
                 drift.params, _cut_code(drift.code, cutoff.radius))


def truncate(base, R, local_consts, cutoff=None):
    """Multiply every coefficient by eta_R.

    ``local_consts`` holds the one-sided constant ``C`` and bound ``M`` of
    the base coefficients on the ball of radius R + 1 (keys ``"C"`` and
    ``"M"``); the truncated set is globally one-sided Lipschitz with
    ``C + sqrt(M) Lip + M Lip^2`` and bounded by ``M``.
    """
    C_next = float(local_consts["C"])
    M_next = float(local_consts["M"])
    if not M_next > 0:
        raise ValueError("local bound M must be positive, got %r" % M_next)
    cut = cutoff or make_cutoff(R)
    lip = cut.lipschitz_const
    eta = cut.profile
    one_sided = C_next + math.sqrt(M_next) * lip + M_next * lip * lip

    sig = base.diffusion
    if sig.diag is not None:
        diffusion = Diffusion(diag=lambda x: eta(x)[..., None] * sig.diag(x), name=sig.name,
                              params=sig.params, code=_cut_code(sig.code, cut.radius))
    else:
        diffusion = Diffusion(lambda x: eta(x)[..., None, None] * sig(x), name=sig.name,
                              params=sig.params)
    g = base.jump
    if g.coef is not None:
        jump = JumpKernel(coef=lambda x: eta(x)[..., None] * g.coef(x), name=g.name,
                          params=g.params, code=_cut_code(g.code, cut.radius))
    else:
        jump = JumpKernel(lambda x, u: eta(x)[..., None] * g(x, u), name=g.name, params=g.params)

    cs = CoefficientSet(base.dim, truncate_drift(base.drift, cut), diffusion, jump, base.activity)
    return TruncatedCoefficients(base, cut, one_sided, M_next, cs)


# --- mollification ------------------------------------------------------------

def bump_kernel(z):
    """Normalised j(z) = c_d (1 - |z|^2)^3 on the unit ball of dimension z.shape[-1]."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    s = 1.0 - sqnorm(z)
    return np.where(s > 0, s ** 3, 0.0) / _bump_mass(d)


def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _bump_mass(d):
    # int_{|z|<1} (1 - |z|^2)^3 dz
    return _sphere_area(d) * 0.5 * beta_fn(d / 2.0, 4.0)


def bump_moments(d):
    """(C1, C2, G): int |z| j, int |z|^2 j and int |grad j| for the bump kernel."""
    b0 = beta_fn(d / 2.0, 4.0)
    c1 = beta_fn((d + 1) / 2.0, 4.0) / b0
    c2 = beta_fn((d + 2) / 2.0, 4.0) / b0
    grad = 6.0 * beta_fn((d + 1) / 2.0, 3.0) / b0
    return float(c1), float(c2), float(grad)


def bump_quadrature(d, n):
    """Symmetric tensor midpoint rule for j on the unit ball, weights summing to 1."""
    if n < 3:
        raise ValueError("need at least 3 quadrature nodes per axis, got %r" % n)
    if not 1 <= d <= 3:
        raise ValueError("tensor quadrature supports 1 <= d <= 3, got %r" % d)
    axis = np.array([(2 * i - (n - 1)) / n for i in range(n)])
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    s = 1.0 - sqnorm(grid)
    keep = s > 0
    nodes = grid[keep]
    w = s[keep] ** 3
    return nodes, w / w.sum()


class MollifiedDrift(Drift):
    """b^k(x) = int b(x - z/k) j(z) dz evaluated by a fixed quadrature rule."""

    def __init__(self, base, order, drift_bound, dim=1, quad_nodes=33):
        if int(order) != order or order <= 0:
            raise ValueError("mollifier order k must be a positive integer, got %r" % order)
        if not drift_bound > 0:
            raise ValueError("drift bound must be positive, got %r" % drift_bound)
        self.base = base
        self.order = int(order)
        self.drift_bound = float(drift_bound)
        self.dim = int(dim)
        self.nodes, self.weights = bump_quadrature(self.dim, int(quad_nodes))
        self.shifts = self.nodes / self.order
        self.first_moment, self.second_moment, self.gradient_integral = bump_moments(self.dim)
        super().__init__(self._evaluate, "mollified(%s)" % base.name,
                         {**base.params, "k": self.order}, base.code)

    def _evaluate(self, x):
        x = as_states(x, self.dim)
        vals = self.base(x[..., None, :] - self.shifts)
        if np.any(sqnorm(vals) > self.drift_bound):
            raise BoundViolation("drift exceeds sqrt(M) = %g at a quadrature probe"
                                 % math.sqrt(self.drift_bound))
        return (vals * self.weights[:, None]).sum(axis=-2)

    @property
    def lipschitz_bound(self):
        return mollified_lipschitz_bound(self)


def mollify(base, k, drift_bound, quad_nodes=33, dim=1):
    return MollifiedDrift(base, k, drift_bound, dim=dim, quad_nodes=quad_nodes)


def mollified_lipschitz_bound(m):
    """k^(d+1) sqrt(M) int|grad j|."""
    return m.order ** (m.dim + 1) * math.sqrt(m.drift_bound) * m.gradient_integral


def continuity_probe(drift, points, steps, seed=0):
    """Max |b(x + h) - b(x)| over probe points for each step size |h|."""
    points = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal(points.shape)
    directions /= norm(directions)[..., None]
    base = drift(points)
    return np.array([norm(drift(points + h * directions) - base).max() for h in steps])


# --- registry -----------------------------------------------------------------

DRIFTS = {
    "alpha_drift": (lambda alpha=0.5, dim=1: example_alpha_drift(alpha, dim), {"alpha": 0.5}),
    "dissipative_alpha": (lambda alpha=0.5, K=1.0, dim=1:
                          example_dissipative_drift(example_alpha_drift(alpha, dim), K),
                          {"alpha": 0.5, "K": 1.0}),
    "linear": (lambda slope=-1.0, dim=1: linear_drift(slope), {"slope": -1.0}),
    "clamp": (lambda bound=1.0, dim=1: clamp_drift(bound), {"bound": 1.0}),
    "zero": (lambda dim=1: zero_drift(), {}),
}

DIFFUSIONS = {
    "zero": (zero_diffusion, {}),
    "constant": (constant_diffusion, {"scale": 1.0}),
    "linear": (linear_diffusion, {"scale": 1.0}),
    "tanh": (tanh_diffusion, {"scale": 1.0}),
}

JUMP_KERNELS = {
    "zero": (zero_jump, {}),
    "additive": (additive_jump, {"scale": 1.0}),
    "multiplicative": (multiplicative_jump, {"scale": 1.0}),
    "sin": (sin_jump, {"scale": 1.0}),
}

MARKS = {
    "normal": {"mu": 0.0, "sigma": 1.0},
    "uniform": {"a": -1.0, "b": 1.0},
    "constant": {"c": 1.0},
    "power_law": {"c": 1.0, "beta": 0.5, "eps": 0.01},
}


def _make(table, kind, name, params, **extra):
    if name not in table:
        raise KeyError("unknown %s id %r; known: %s" % (kind, name, ", ".join(sorted(table))))
    factory, schema = table[name]
    params = dict(params or {})
    unknown = set(params) - set(schema)
    if unknown:
        raise KeyError("unknown parameter(s) %s for %s %r" % (sorted(unknown), kind, name))
    return factory(**params, **extra)


def build(dim=1, drift="zero", drift_params=None, diffusion="zero", diffusion_params=None,
          jump="zero", jump_params=None, marks="normal(0,1)", rate=0.0):
    """Assemble a CoefficientSet from registry identifiers."""
    b = _make(DRIFTS, "drift", drift, drift_params, dim=dim)
    s = _make(DIFFUSIONS, "diffusion", diffusion, diffusion_params)
    g = _make(JUMP_KERNELS, "jump", jump, jump_params)
    law = jumps.parse_mark_law(marks) if isinstance(marks, str) else marks
    if isinstance(law, jumps.PowerLaw):
        activity = jumps.JumpActivity(law.rate, law, dim, mode="truncated", cutoff=law.params[2])
    else:
        activity = jumps.JumpActivity(float(rate), law, dim)
    return CoefficientSet(dim, b, s, g, activity)


def registry():
    """Sorted listing of every built-in identifier with its parameter defaults."""
    return {
        "drift": {k: dict(DRIFTS[k][1]) for k in sorted(DRIFTS)},
        "diffusion": {k: dict(DIFFUSIONS[k][1]) for k in sorted(DIFFUSIONS)},
        "jump": {k: dict(JUMP_KERNELS[k][1]) for k in sorted(JUMP_KERNELS)},
        "marks": {k: dict(MARKS[k]) for k in sorted(MARKS)},
    }
