import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from jumpsde import coefficients as co
from jumpsde import jumps
from jumpsde._util import sqnorm


def test_alpha_drift_values():
    b = co.example_alpha_drift(0.5)
    np.testing.assert_array_equal(b(np.array([[4.0], [0.0], [-9.0]])), [[-2.0], [0.0], [3.0]])
    b2 = co.example_alpha_drift(0.5, dim=2)
    v = b2(np.array([3.0, 4.0]))  # |x| = 5
    np.testing.assert_allclose(v, -np.array([3.0, 4.0]) / math.sqrt(5.0), rtol=1e-15)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_alpha_drift_one_sided_identity(alpha):
    # in 1-D <b(x)-b(y), x-y> = (|x|-|y|)(|y|^{1-a} - |x|^{1-a}) for same-sign x, y
    b = co.example_alpha_drift(alpha)
    x, y = 2.5, 0.7
    lhs = float((b(np.array([x])) - b(np.array([y])))[0] * (x - y))
    rhs = (abs(x) - abs(y)) * (abs(y) ** (1 - alpha) - abs(x) ** (1 - alpha))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert lhs <= 0


def test_alpha_rejects_bad_exponent():
    with pytest.raises(ValueError):
        co.example_alpha_drift(1.0)


def test_dissipative_drift_adds_linear_pull():
    base = co.example_alpha_drift(0.5)
    b = co.example_dissipative_drift(base, 2.0)
    x = np.array([[4.0], [-1.0]])
    np.testing.assert_allclose(b(x), base(x) - 2.0 * x, rtol=1e-15)
    assert b.code.params == (0.5, 2.0)
    lin = co.example_dissipative_drift(co.zero_drift(), 1.5)
    np.testing.assert_array_equal(lin(x), -1.5 * x)


def test_diffusion_and_jump_fields():
    s = co.tanh_diffusion(0.5)
    x = np.array([[0.3, -2.0]])
    np.testing.assert_allclose(s(x)[0], np.diag(0.5 * np.tanh(x[0])))
    np.testing.assert_allclose(s.apply(x, np.array([[1.0, 2.0]])), 0.5 * np.tanh(x) * [1.0, 2.0])
    g = co.multiplicative_jump(0.1)
    np.testing.assert_allclose(g(x, np.array([[2.0, 3.0]])), 0.1 * x * [2.0, 3.0])


# --- cutoff -------------------------------------------------------------------

def test_smoothstep_lipschitz_constant_by_dense_grid():
    u = np.linspace(0.0, 1.0, 200_001)
    s = co._smoothstep_down(u)
    assert np.max(np.abs(np.diff(s) / np.diff(u))) == pytest.approx(15 / 8, rel=1e-6)
    assert co.SMOOTHSTEP_LIPSCHITZ == 15 / 8


@given(st.floats(0.1, 10.0), st.floats(-30.0, 30.0), st.floats(-30.0, 30.0))
def test_cutoff_profile_properties(R, a, b):
    eta = co.make_cutoff(R)
    x, y = np.array([a]), np.array([b])
    ex, ey = float(eta(x)), float(eta(y))
    assert 0.0 <= ex <= 1.0
    if abs(a) <= R:
        assert ex == 1.0
    if abs(a) >= R + 1:
        assert ex == 0.0
    assert abs(ex - ey) <= eta.lipschitz_const * abs(a - b) + 1e-12


def _truncation_model():
    base = co.build(drift="dissipative_alpha", diffusion="tanh", diffusion_params={"scale": 0.5},
                    jump="multiplicative", jump_params={"scale": 0.1}, rate=1.0)
    return base


@pytest.mark.parametrize("R", [1.0, 3.0])
def test_truncate_agrees_inside_and_vanishes_outside(R):
    base = _truncation_model()
    tc = co.truncate(base, R, {"C": 0.5, "M": 10.0})
    c = tc.coefficients
    x = np.linspace(-R, R, 101)[:, None]
    np.testing.assert_array_equal(c.drift(x), base.drift(x))
    np.testing.assert_array_equal(c.diffusion(x), base.diffusion(x))
    np.testing.assert_array_equal(c.jump.coef(x), base.jump.coef(x))
    far = np.array([[R + 1.0], [-(R + 1.5)], [50.0]])
    assert np.all(c.drift(far) == 0) and np.all(c.diffusion(far) == 0)
    assert np.all(c.jump(far, np.ones_like(far)) == 0)


def test_truncate_constants():
    tc = co.truncate(_truncation_model(), 2.0, {"C": 0.5, "M": 4.0})
    lip = 15 / 8
    assert tc.one_sided_const == pytest.approx(0.5 + 2.0 * lip + 4.0 * lip ** 2)
    assert tc.bound == 4.0
    assert tc.radius == 2.0
    with pytest.raises(ValueError):
        co.truncate(_truncation_model(), 2.0, {"C": 0.5, "M": 0.0})


# --- mollifier ----------------------------------------------------------------

def _radial(f, d):
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    return area * integrate.quad(lambda r: f(r) * r ** (d - 1), 0.0, 1.0, epsabs=1e-14)[0]


@pytest.mark.parametrize("d", [1, 2, 3])
def test_bump_moments_against_radial_quadrature(d):
    mass = _radial(lambda r: (1 - r * r) ** 3, d)
    c1 = _radial(lambda r: r * (1 - r * r) ** 3, d) / mass
    c2 = _radial(lambda r: r * r * (1 - r * r) ** 3, d) / mass
    grad = _radial(lambda r: 6 * r * (1 - r * r) ** 2, d) / mass
    np.testing.assert_allclose(co.bump_moments(d), (c1, c2, grad), rtol=1e-10)


def test_bump_moments_closed_form_d1():
    assert co.bump_moments(1) == pytest.approx((0.2734375, 1 / 9, 35 / 16), rel=1e-14)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_bump_kernel_normalised(d):
    assert _radial(lambda r: float(co.bump_kernel(np.r_[r, np.zeros(d - 1)])), d) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("d,n", [(1, 33), (2, 33), (3, 17)])
def test_quadrature_symmetric_and_normalised(d, n):
    nodes, w = co.bump_quadrature(d, n)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(sqnorm(nodes) < 1)
    np.testing.assert_allclose(w @ nodes, 0.0, atol=1e-15)
    c1 = co.bump_moments(d)[0]
    assert w @ np.sqrt(sqnorm(nodes)) == pytest.approx(c1, rel=0.02)


def test_quadrature_rejects_bad_sizes():
    with pytest.raises(ValueError):
        co.bump_quadrature(1, 2)
    with pytest.raises(ValueError):
        co.bump_quadrature(4, 5)


@pytest.mark.parametrize("k", [1, 5, 50])
@pytest.mark.parametrize("d", [1, 2])
def test_mollifier_exact_on_linear_drift(k, d):
    b = co.linear_drift(-1.7)
    m = co.mollify(b, k, drift_bound=1e6, dim=d)
    x = np.random.default_rng(0).uniform(-3, 3, (200, d))
    assert np.max(np.abs(m(x) - b(x))) < 1e-12


def test_mollifier_bound_violation():
    m = co.mollify(co.linear_drift(-1.0), 2, drift_bound=4.0)
    m(np.array([[1.0]]))
    with pytest.raises(co.BoundViolation):
        m(np.array([[3.0]]))


def test_mollified_clamp_lipschitz_bound_holds():
    m = co.mollify(co.clamp_drift(1.0), 4, drift_bound=1.0)
    assert m.lipschitz_bound == pytest.approx(4 ** 2 * 1.0 * 35 / 16)
    x = np.linspace(-3, 3, 20_001)[:, None]
    v = m(x)[:, 0]
    assert np.max(np.abs(np.diff(v)) / np.diff(x[:, 0])) <= m.lipschitz_bound
    # mollification error of a 1-Lipschitz field is at most C1 / k
    assert np.max(np.abs(v - co.clamp_drift(1.0)(x)[:, 0])) <= co.bump_moments(1)[0] / 4 + 1e-12


def test_continuity_probe_shrinks_for_mollified_field():
    pts = np.linspace(-2, 2, 41)[:, None]
    m = co.mollify(co.clamp_drift(1.0), 8, drift_bound=1.0)
    probe = co.continuity_probe(m, pts, [1e-1, 1e-2, 1e-3])
    assert probe[0] > probe[1] > probe[2]


# --- registry -----------------------------------------------------------------

def test_registry_sorted_and_complete():
    reg = co.registry()
    assert "alpha_drift" in reg["drift"] and "zero" in reg["drift"]
    for table in reg.values():
        assert list(table) == sorted(table)


def test_build_rejects_unknown_ids_and_params():
    with pytest.raises(KeyError, match="alpah"):
        co.build(drift="alpah")
    with pytest.raises(KeyError, match="beta"):
        co.build(drift="alpha_drift", drift_params={"beta": 1})


def test_build_power_law_is_truncated_activity():
    c = co.build(jump="additive", marks="power_law(1.0,0.5,0.01)")
    assert c.activity.mode == "truncated"
    assert c.activity.rate == pytest.approx(jumps.PowerLaw(1.0, 0.5, 0.01).rate)
