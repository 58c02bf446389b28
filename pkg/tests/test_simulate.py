import csv
import math
import sys

import numpy as np
import pytest

from jumpsde import coefficients as co
from jumpsde import jumps, kernels, seeding
from jumpsde.simulate import (ExplosionError, SimConfig, first_exit, mollified_cascade, path_noise,
                              simulate, simulate_coupled, simulate_truncated, step)


def ou(**kw):
    return co.ou_with_jumps(**kw)


def test_config_validation():
    for bad in ({"dt": 0.0}, {"horizon": 1e-4}, {"paths": 0}, {"record_every": 0}, {"seed": None}):
        args = dict(dt=1e-3, horizon=1.0, paths=1, seed=0)
        args.update(bad)
        with pytest.raises(ValueError):
            SimConfig(**args)


def test_grid_ends_at_horizon():
    cfg = SimConfig(dt=0.3, horizon=1.0, paths=1, seed=0)
    assert cfg.n_steps == 4
    assert cfg.grid[-1] == 1.0
    cfg = SimConfig(dt=0.1, horizon=1.0, paths=1, seed=0, record_every=3)
    assert cfg.n_steps == 10
    assert cfg.record_steps.tolist() == [0, 3, 6, 9, 10]


def test_zero_dynamics_constant_paths(each_backend):
    c = co.build(dim=2)
    b = simulate(c, SimConfig(dt=0.01, horizon=1.0, paths=5, seed=3, initial=[1.0, -2.0]))
    assert np.all(b.states == np.array([1.0, -2.0]))
    assert np.all(b.supsq == 5.0)


def test_backends_agree_for_builtin_families():
    if "cython" not in kernels.BACKENDS:
        pytest.skip("compiled core not built")
    models = [
        ou(),
        co.build(drift="dissipative_alpha", diffusion="tanh", jump="sin", rate=2.0, dim=2),
        co.build(drift="clamp", diffusion="linear", diffusion_params={"scale": 0.2},
                 jump="multiplicative", jump_params={"scale": 0.1}, rate=3.0, marks="uniform(-1,1)"),
    ]
    cfg = SimConfig(dt=1e-2, horizon=2.0, paths=64, seed=9, initial=0.5, record_every=7)
    for i, c in enumerate(models):
        with kernels.backend("cython"):
            a = simulate(c, cfg)
        with kernels.backend("python"):
            b = simulate(c, cfg)
        assert a.backend == "cython" and b.backend == "python"
        if i == 0:
            # polynomial families only: identical operation order gives identical bits
            np.testing.assert_array_equal(a.states, b.states)
            np.testing.assert_array_equal(a.supsq, b.supsq)
        else:
            # libm and numpy's vectorised pow/sin/tanh may differ in the last ulp
            np.testing.assert_allclose(a.states, b.states, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(a.supsq, b.supsq, rtol=1e-12, atol=1e-14)


def test_backends_agree_for_truncated_and_mollified():
    if "cython" not in kernels.BACKENDS:
        pytest.skip("compiled core not built")
    base = co.build(drift="dissipative_alpha", diffusion="tanh", jump="multiplicative", rate=1.0)
    tc = co.truncate(base, 1.0, {"C": 1.0, "M": 4.0})
    moll = base.with_drift(co.mollify(co.clamp_drift(1.0), 4, drift_bound=1.0))
    cfg = SimConfig(dt=1e-2, horizon=2.0, paths=32, seed=4, initial=1.5)
    for c in (tc.coefficients, moll):
        with kernels.backend("cython"):
            a = simulate(c, cfg)
        with kernels.backend("python"):
            b = simulate(c, cfg)
        assert a.backend == "cython"
        np.testing.assert_allclose(a.states, b.states, rtol=0, atol=1e-12)


def test_python_fallback_for_custom_fields():
    c = co.CoefficientSet(1, co.Drift(lambda x: -x ** 3), co.constant_diffusion(0.1),
                          co.zero_jump())
    b = simulate(c, SimConfig(dt=1e-2, horizon=1.0, paths=4, seed=0, initial=1.0))
    assert b.backend == "python"
    assert np.all(np.abs(b.terminal) < 1.0)


def test_single_step_reference_reproduces_batch(each_backend):
    c = ou(rate=5.0)
    cfg = SimConfig(dt=0.05, horizon=2.0, paths=6, seed=21, initial=0.3)
    batch = simulate(c, cfg)
    grid = cfg.grid
    for p in range(cfg.paths):
        s = seeding.path_seed(cfg.seed, p)
        dw = seeding.stream(s, seeding.WIENER).standard_normal((cfg.n_steps, 1)) * np.sqrt(np.diff(grid))[:, None]
        train = jumps.sample_train(c.activity, cfg.horizon, s)
        x = np.array([0.3])
        for i in range(cfg.n_steps):
            x = step(c, x, grid[i + 1] - grid[i], dw[i], train.between(grid[i], grid[i + 1]), i)
        np.testing.assert_array_equal(x, batch.terminal[p])


def test_sequential_jumps_in_one_step():
    # two jumps in the same step: the second acts on the state left by the first
    c = co.CoefficientSet(1, co.zero_drift(), co.zero_diffusion(), co.multiplicative_jump(1.0),
                          jumps.JumpActivity(1.0, jumps.Constant(0.0), 1))
    train = jumps.JumpTrain(np.array([0.1, 0.2]), np.array([[1.0], [1.0]]))
    assert step(c, [1.0], 1.0, [0.0], train)[0] == 4.0


def test_path_independent_of_batch_size_and_threads():
    c = ou()
    small = simulate(c, SimConfig(dt=1e-2, horizon=1.0, paths=5, seed=8))
    big = simulate(c, SimConfig(dt=1e-2, horizon=1.0, paths=50, seed=8), threads=3)
    np.testing.assert_array_equal(small.states, big.states[:5])


def test_chunking_does_not_change_paths(monkeypatch):
    sim = sys.modules["jumpsde.simulate"]
    c = ou()
    cfg = SimConfig(dt=1e-2, horizon=1.0, paths=40, seed=2)
    whole = simulate(c, cfg)
    monkeypatch.setattr(sim, "_CHUNK_BUDGET", 300)
    assert len(sim._chunks(cfg, 1)) > 1
    np.testing.assert_array_equal(simulate(c, cfg, threads=2).states, whole.states)


def test_path_noise_reproducible():
    c = ou(rate=3.0)
    cfg = SimConfig(dt=0.1, horizon=1.0, paths=4, seed=1)
    a, b = path_noise(c, cfg, 1, 3), path_noise(c, cfg, 1, 3)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_ou_variance_matches_formula(each_backend):
    # b = -x, sigma = 1, no jumps: Var X_t = (1 - e^{-2t}) / 2
    c = co.build(drift="linear", diffusion="constant")
    b = simulate(c, SimConfig(dt=1e-2, horizon=2.0, paths=4000, seed=5, record_every=50))
    m = (b.states[:, :, 0] ** 2).mean(axis=0)
    se = (b.states[:, :, 0] ** 2).std(axis=0, ddof=1) / math.sqrt(4000)
    exact = (1 - np.exp(-2 * b.times)) / 2
    assert np.all(np.abs(m - exact) <= 3 * se + 1e-12)


def test_compensated_jumps_are_mean_zero(each_backend):
    # marks with mean 1: compensation keeps E X_t = x0 e^{-t}
    c = co.ou_with_jumps(sigma=0.0, rate=2.0, marks="constant(1)")
    b = simulate(c, SimConfig(dt=1e-2, horizon=1.0, paths=4000, seed=6, initial=1.0))
    x = b.terminal[:, 0]
    assert abs(x.mean() - (1 - 1e-2) ** 100) < 3 * x.std() / math.sqrt(len(x))


def test_explosion_flagged_not_raised(each_backend):
    c = co.build(drift="linear", drift_params={"slope": 1.0}, diffusion="linear")
    b = simulate(c, SimConfig(dt=1.0, horizon=200.0, paths=3, seed=0, initial=1.0, record_every=10))
    assert b.n_exploded == 3
    assert np.all(b.explode_step > 0)
    assert np.all(np.isnan(b.terminal))


def test_step_raises_on_explosion():
    c = co.build(drift="linear", drift_params={"slope": 1e13})
    with pytest.raises(ExplosionError) as info:
        step(c, [1.0], 1.0, [0.0], step_index=7)
    assert info.value.step_index == 7


def test_running_sup_tracks_fine_grid(each_backend):
    c = ou()
    b = simulate(c, SimConfig(dt=1e-2, horizon=1.0, paths=20, seed=4, record_every=1))
    sub = simulate(c, SimConfig(dt=1e-2, horizon=1.0, paths=20, seed=4, record_every=25))
    np.testing.assert_array_equal(np.maximum.accumulate(b.states[:, :, 0] ** 2, axis=1)[:, -1], sub.supsq[:, -1])
    assert np.all(np.diff(sub.supsq, axis=1) >= 0)


def test_coupled_copies_share_noise():
    c = co.build(drift="linear", diffusion="constant")
    bx, by = simulate_coupled(c, SimConfig(dt=1e-2, horizon=1.0, paths=10, seed=0), 1.0, 1.5)
    # additive noise and linear drift: the gap is deterministic
    np.testing.assert_allclose(by.terminal - bx.terminal, 0.5 * (1 - 1e-2) ** 100, rtol=1e-9)


def test_truncated_exit_times(each_backend):
    base = co.build(drift="linear", drift_params={"slope": 1.0}, diffusion="constant")
    tc = co.truncate(base, 2.0, {"C": 1.0, "M": 9.0})
    b, exits = simulate_truncated(tc, SimConfig(dt=1e-2, horizon=5.0, paths=30, seed=1, initial=0.5))
    for p, e in enumerate(exits):
        if e.stopped:
            k = int(round(e.tau / 1e-2))
            assert abs(e.exit_state[0]) >= 2.0
            assert first_exit(b.states[p, : k + 1], 2.0) == k
    assert any(e.stopped for e in exits)


def test_mollified_cascade_shares_noise():
    c = co.build(drift="linear", diffusion="constant")
    out = mollified_cascade(c, SimConfig(dt=1e-2, horizon=1.0, paths=5, seed=0), [1, 4], 1e6)
    np.testing.assert_allclose(out[1].states, out[4].states, atol=1e-12)


def test_to_csv_roundtrip(tmp_path):
    b = simulate(ou(dim=2), SimConfig(dt=0.1, horizon=0.5, paths=2, seed=0))
    path = tmp_path / "paths.csv"
    b.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["path_id", "t", "x_1", "x_2"]
    assert len(rows) == 1 + 2 * 6
    assert float(rows[-1][3]) == b.states[1, -1, 1]


def test_time_index():
    b = simulate(ou(), SimConfig(dt=0.1, horizon=1.0, paths=1, seed=0, record_every=2))
    assert b.time_index(0.4) == 2
    with pytest.raises(ValueError):
        b.time_index(0.3)
