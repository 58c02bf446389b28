"""Euler-Maruyama simulation with compound-Poisson jumps.

Each step applies the jumps that fall in (t_i, t_{i+1}] in time order,
each jump seeing the state left by the previous one, then adds the drift,
diffusion and compensator terms evaluated at the start of the step.
"""

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import jumps, kernels, seeding
from ._util import norm, sqnorm
from .coefficients import mollify

BLOWUP = 1e12
_CHUNK_BUDGET = 1 << 21  # doubles of Wiener increments held per chunk


class ExplosionError(ArithmeticError):
    """Non-finite or huge state produced at ``step_index``."""

    def __init__(self, step_index, state=None):
        super().__init__("path exploded at step %d" % step_index)
        self.step_index = step_index
        self.state = state


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon: float
    paths: int
    seed: int
    initial: object = 0.0
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive, got %r" % self.dt)
        if not self.horizon >= self.dt:
            raise ValueError("horizon must be >= dt, got %r < %r" % (self.horizon, self.dt))
        if self.paths < 1:
            raise ValueError("need at least one path")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.seed is None:
            raise ValueError("seed is mandatory")

    @property
    def n_steps(self):
        return max(1, int(math.ceil(self.horizon / self.dt * (1.0 - 1e-12))))

    @property
    def grid(self):
        n = self.n_steps
        g = np.arange(n + 1, dtype=float) * self.dt
        g[-1] = self.horizon
        return g

    @property
    def record_steps(self):
        n = self.n_steps
        steps = list(range(0, n + 1, self.record_every))
        if steps[-1] != n:
            steps.append(n)
        return np.array(steps, dtype=np.int64)

    def initial_states(self, dim):
        x = np.asarray(self.initial, dtype=float)
        if x.ndim == 0:
            return np.full((self.paths, dim), float(x))
        if x.ndim == 1:
            if dim == 1 and x.shape[0] == self.paths and self.paths > 1:
                return x.reshape(self.paths, 1).copy()
            if x.shape[0] != dim:
                raise ValueError("initial state has dimension %d, expected %d" % (x.shape[0], dim))
            return np.tile(x, (self.paths, 1))
        if x.shape != (self.paths, dim):
            raise ValueError("initial states need shape (%d, %d), got %s" % (self.paths, dim, x.shape))
        return x.copy()

    def replace(self, **changes):
        return replace(self, **changes)

    def describe(self):
        d = asdict(self)
        init = np.asarray(self.initial, dtype=float)
        d["initial"] = init.tolist()
        return d


@dataclass(frozen=True)
class StoppingTimeRecord:
    """First grid time with |X| >= radius; ``tau`` is inf if never reached."""

    radius: float
    tau: float
    exit_state: np.ndarray = None

    @property
    def stopped(self):
        return math.isfinite(self.tau)


@dataclass
class PathBatch:
    """Recorded trajectories on a shared grid.

    ``states`` has shape (paths, recorded times, d); ``supsq`` holds the
    running maximum of |X|^2 over the *fine* grid up to each recorded time.
    Exploded paths carry NaN after their explosion step.
    """

    grid: np.ndarray
    times: np.ndarray
    states: np.ndarray
    supsq: np.ndarray
    path_seeds: np.ndarray
    explode_step: np.ndarray
    config: SimConfig
    escaped: list = None
    backend: str = "python"
    coefficients: dict = field(default_factory=dict)

    @property
    def paths(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[2]

    @property
    def exploded(self):
        return self.explode_step >= 0

    @property
    def n_exploded(self):
        return int(self.exploded.sum())

    @property
    def exploded_fraction(self):
        return self.n_exploded / self.paths

    @property
    def terminal(self):
        return self.states[:, -1]

    def time_index(self, t):
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("t=%r is not a recorded grid time" % t)
        return idx

    def summary(self):
        return {
            "paths": self.paths,
            "dim": self.dim,
            "steps": int(len(self.grid) - 1),
            "recorded_times": int(len(self.times)),
            "exploded": self.n_exploded,
            "exploded_paths": np.flatnonzero(self.exploded).tolist(),
            "backend": self.backend,
            "config": self.config.describe(),
            "coefficients": self.coefficients,
            "path_seeds": [int(s) for s in self.path_seeds],
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path_id", "t"] + ["x_%d" % (i + 1) for i in range(self.dim)])
            for p in range(self.paths):
                for r, t in enumerate(self.times):
                    w.writerow([p, _fmt(t)] + [_fmt(v) for v in self.states[p, r]])

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    return repr(float(v))


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("JUMPSDE_THREADS", "1") or 1)
    return max(1, int(threads))


def path_noise(c, cfg, first, count):
    """Wiener increments and jump trains of paths ``first .. first+count-1``.

    Each path draws from streams derived from its own sub-seed only, so the
    noise of a path never depends on the chunking.
    """
    grid = cfg.grid
    dts = np.diff(grid)
    sqrt_dt = np.sqrt(dts)[:, None]
    n, d = len(dts), c.dim
    seeds = seeding.path_seeds(cfg.seed, count, offset=first)
    dw = np.empty((count, n, d))
    jptr = np.zeros(count + 1, dtype=np.int64)
    steps, marks = [], []
    for p, s in enumerate(seeds):
        dw[p] = seeding.stream(s, seeding.WIENER).standard_normal((n, d)) * sqrt_dt
        train = jumps.sample_train(c.activity, cfg.horizon, int(s))
        if len(train):
            idx = np.searchsorted(grid, train.times, side="left") - 1
            steps.append(np.clip(idx, 0, n - 1))
            marks.append(train.marks)
        jptr[p + 1] = jptr[p] + len(train)
    jstep = np.concatenate(steps).astype(np.int64) if steps else np.empty(0, dtype=np.int64)
    jmarks = np.concatenate(marks) if marks else np.empty((0, d))
    return seeds, dw, dts, jptr, jstep, jmarks


def _chunks(cfg, dim):
    size = max(1, min(cfg.paths, _CHUNK_BUDGET // max(1, cfg.n_steps * dim)))
    return [(s, min(size, cfg.paths - s)) for s in range(0, cfg.paths, size)]


def simulate(c, cfg, stop_radius=None, threads=None, blowup=BLOWUP):
    """Simulate ``cfg.paths`` independent paths of the SDE with coefficients ``c``.

    The result is a pure function of ``(c, cfg)``.  Exploded paths are
    flagged in ``explode_step`` and do not abort the batch.  With
    ``stop_radius`` set, first exits from that ball are recorded in
    ``escaped``.
    """
    x0 = cfg.initial_states(c.dim)
    rec = cfg.record_steps
    radius = math.inf if stop_radius is None else float(stop_radius)

    def work(chunk):
        first, count = chunk
        seeds, dw, dts, jptr, jstep, jmarks = path_noise(c, cfg, first, count)
        out = kernels.run_chunk(c, x0[first:first + count], dw, dts, jptr, jstep, jmarks,
                                rec, radius, blowup)
        return (seeds,) + tuple(out)

    chunks = _chunks(cfg, c.dim)
    n_threads = _threads(threads)
    if n_threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(ch) for ch in chunks]

    seeds = np.concatenate([p[0] for p in parts])
    states = np.concatenate([p[1] for p in parts])
    supsq = np.concatenate([p[2] for p in parts])
    exit_step = np.concatenate([p[3] for p in parts])
    exit_state = np.concatenate([p[4] for p in parts])
    explode_step = np.concatenate([p[5] for p in parts])
    grid = cfg.grid

    escaped = None
    if stop_radius is not None:
        escaped = [
            StoppingTimeRecord(radius, float(grid[e]), exit_state[p].copy()) if e >= 0
            else StoppingTimeRecord(radius, math.inf, None)
            for p, e in enumerate(exit_step)
        ]
    return PathBatch(grid, grid[rec], states, supsq, seeds, explode_step, cfg, escaped,
                     "cython" if kernels.uses_compiled(c) else "python", c.describe())


def simulate_coupled(c, cfg, x, y, threads=None):
    """Synchronous coupling: both copies share every Wiener increment and jump."""
    bx = simulate(c, cfg.replace(initial=x), threads=threads)
    by = simulate(c, cfg.replace(initial=y), threads=threads)
    return bx, by


def simulate_truncated(tc, cfg, threads=None):
    """Simulate with truncated coefficients and record first exits from the radius-R ball."""
    batch = simulate(tc.coefficients, cfg, stop_radius=tc.radius, threads=threads)
    return batch, batch.escaped


def mollified_cascade(c, cfg, ks, drift_bound, quad_nodes=33, threads=None):
    """One batch per mollifier order k, all driven by the same noise."""
    out = {}
    for k in ks:
        ck = c.with_drift(mollify(c.drift, k, drift_bound, quad_nodes=quad_nodes, dim=c.dim))
        out[int(k)] = simulate(ck, cfg, threads=threads)
    return out


def step(c, x, dt, dW, jumps_in_step=None, step_index=0, blowup=BLOWUP):
    """One Euler-Maruyama step from a single state.

    ``jumps_in_step`` is a :class:`~jumpsde.jumps.JumpTrain` slice whose
    jumps are applied in time order, each evaluated at the state left by the
    previous jump.
    """
    x = np.asarray(x, dtype=float).reshape(c.dim)
    dW = np.asarray(dW, dtype=float).reshape(c.dim)
    with np.errstate(all="ignore"):
        drift_term = c.drift(x) * dt
        noise = c.diffusion.apply(x, dW)
        y = x
        if jumps_in_step is not None:
            for u in jumps_in_step.marks:
                y = y + c.jump(y, u)
        out = y + drift_term + noise
        if c.activity.rate > 0:
            out = out - jumps.compensator(c.activity, c.jump, x) * dt
    if not sqnorm(out) <= blowup * blowup:
        raise ExplosionError(step_index, out)
    return out


def first_exit(states, radius):
    """Index of the first row of ``states`` with |x| >= radius, or -1."""
    hit = np.flatnonzero(norm(np.asarray(states)) >= radius)
    return int(hit[0]) if len(hit) else -1
