"""Estimators over path batches: moments, tails, coupling moduli,
occupation measures and distances between empirical measures.

Records are plain dicts so they serialise straight to JSON; a record with
a ``verdict`` key is "pass", "fail" or "estimate-only".
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from . import seeding
from ._util import sqnorm
from .simulate import simulate, simulate_coupled

MAX_EXPLODED_FRACTION = 0.01
CI_LEVEL = 0.997  # matches the 3-standard-error convention


def _verdict(ok):
    return "pass" if ok else "fail"


@dataclass(frozen=True)
class MomentSeries:
    times: np.ndarray
    second_moment: np.ndarray
    second_moment_se: np.ndarray
    running_sup_moment: np.ndarray
    running_sup_se: np.ndarray
    paths_used: int
    exploded_fraction: float

    def rows(self):
        return [
            {"t": float(t), "second_moment": float(m), "second_moment_se": float(s),
             "running_sup_moment": float(u), "running_sup_se": float(v)}
            for t, m, s, u, v in zip(self.times, self.second_moment, self.second_moment_se,
                                     self.running_sup_moment, self.running_sup_se)
        ]

    def to_csv(self, path):
        write_csv(self.rows(), path)


def _mean_se(a):
    n = a.shape[0]
    mean = a.mean(axis=0)
    se = a.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def _alive(batch):
    keep = ~batch.exploded
    if not keep.any():
        raise ValueError("all %d paths exploded" % batch.paths)
    return keep


def moment_series(batch):
    """Means of |X_t|^2 and sup_{s<=t}|X_s|^2 with standard errors, exploded paths excluded."""
    keep = _alive(batch)
    m, s = _mean_se(sqnorm(batch.states[keep]))
    u, v = _mean_se(batch.supsq[keep])
    return MomentSeries(batch.times.copy(), m, s, u, v, int(keep.sum()), batch.exploded_fraction)


def decay_check(series, K, M, x0):
    """E|X_t|^2 <= |x0|^2 e^{-2Kt} + M/K + 3 se at every recorded time."""
    x0sq = float(sqnorm(np.atleast_1d(np.asarray(x0, dtype=float))))
    bound = x0sq * np.exp(-2.0 * K * series.times) + M / K
    excess = series.second_moment - (bound + 3.0 * series.second_moment_se)
    bad = np.flatnonzero(excess > 0)
    too_many = series.exploded_fraction > MAX_EXPLODED_FRACTION
    return {
        "K": K, "M": M, "x0_sq": x0sq,
        "max_excess": float(excess.max()),
        "violations": series.times[bad].tolist(),
        "exploded_fraction": series.exploded_fraction,
        "verdict": _verdict(len(bad) == 0 and not too_many),
    }


def sup_envelope_check(series, fit_fraction=0.5, tolerance=0.10):
    """Fit log(1 + E sup|X|^2) by a line on the early part of the horizon and
    require the later part to stay within ``tolerance`` (relative) of it."""
    t = series.times
    y = np.log1p(series.running_sup_moment)
    cut = t[-1] * fit_fraction
    early, late = t <= cut, t > cut
    if early.sum() < 2 or not late.any():
        raise ValueError("need at least two fit times and one extrapolation time")
    slope, intercept = np.polyfit(t[early], y[early], 1)
    line = intercept + slope * t[late]
    overshoot = float(np.max((y[late] - line) / np.abs(line)))
    too_many = series.exploded_fraction > MAX_EXPLODED_FRACTION
    return {
        "slope": float(slope), "intercept": float(intercept),
        "max_overshoot": overshoot, "tolerance": tolerance,
        "exploded_fraction": series.exploded_fraction,
        "verdict": _verdict(overshoot <= tolerance and not too_many),
    }


def stationary_moment_check(series, expected, t=None):
    """E|X_t|^2 at one recorded time (default: the last) against ``expected``, within 3 se."""
    i = len(series.times) - 1 if t is None else int(np.argmin(np.abs(series.times - t)))
    mean = float(series.second_moment[i])
    se = float(series.second_moment_se[i])
    return {"t": float(series.times[i]), "estimate": mean, "stderr": se, "expected": expected,
            "verdict": _verdict(abs(mean - expected) <= 3.0 * se)}


def bounded_in_probability(batch, R, t, confidence=CI_LEVEL):
    """Fraction of paths with |X_t| > R and its exact binomial interval.

    Exploded paths count as exceedances.
    """
    i = batch.time_index(t)
    x = batch.states[:, i]
    r2 = sqnorm(x)
    exceed = int(np.sum(batch.exploded | (r2 > R * R)))
    ci = stats.binomtest(exceed, batch.paths).proportion_ci(confidence, method="exact")
    return {"R": R, "t": float(batch.times[i]), "paths": batch.paths, "exceed": exceed,
            "estimate": exceed / batch.paths, "ci_low": float(ci.low), "ci_high": float(ci.high),
            "confidence": confidence}


def chebyshev_radius(second_moment_bound, eps):
    """Smallest R with E|X|^2 / R^2 <= eps."""
    return math.sqrt(second_moment_bound / eps)


def feller_modulus(c, cfg, x, deltas, direction=None, max_spread=3.0, threads=None):
    """E|X_t(x) - X_t(x + delta e)|^2 / |x - y|^2 under synchronous coupling.

    One coupled batch per delta; every batch reuses ``cfg.seed`` so all
    copies see the same noise.  The envelope ``A e^{B t}`` is fitted with
    A = 1 (the ratio is exactly 1 at t = 0) and B the smallest rate that
    dominates the worst delta at every recorded time.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(c.dim)
    e = np.zeros(c.dim)
    e[0] = 1.0
    if direction is not None:
        e = np.asarray(direction, dtype=float).reshape(c.dim)
        e = e / math.sqrt(float(sqnorm(e)))
    rows, curves = [], []
    exploded = 0.0
    for delta in deltas:
        y = x + delta * e
        gap0 = float(sqnorm(x - y))
        bx, by = simulate_coupled(c, cfg, x, y, threads=threads)
        keep = ~(bx.exploded | by.exploded)
        if not keep.any():
            raise ValueError("all coupled paths exploded at delta=%r" % delta)
        exploded = max(exploded, 1.0 - keep.mean())
        d2 = sqnorm(bx.states[keep] - by.states[keep]) / gap0
        mean, se = _mean_se(d2)
        curves.append(mean)
        rows.append({"delta": float(delta), "ratio": float(mean[-1]), "stderr": float(se[-1])})
    ratios = np.array([r["ratio"] for r in rows])
    times = bx.times
    worst = np.max(np.array(curves), axis=0)
    pos = times > 0
    B = float(np.max(np.log(worst[pos]) / times[pos])) if pos.any() else 0.0
    spread = float(ratios.max() / ratios.min()) if ratios.min() > 0 else math.inf
    ok = bool(np.all(np.isfinite(ratios))) and spread <= max_spread
    ok = ok and exploded <= MAX_EXPLODED_FRACTION
    return {"t": float(times[-1]), "x": x.tolist(), "table": rows, "A": 1.0, "B": B,
            "bound": math.exp(B * times[-1]), "spread": spread, "max_spread": max_spread,
            "exploded_fraction": float(exploded), "verdict": _verdict(ok)}


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted atoms; ``path_index`` tags atoms with the path they came from (or -1)."""

    atoms: np.ndarray
    weights: np.ndarray
    path_index: np.ndarray = None

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        w = np.asarray(self.weights, dtype=float)
        if a.shape[0] == 0 or w.shape != (a.shape[0],):
            raise ValueError("need one weight per atom and at least one atom")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)
        if self.path_index is None:
            object.__setattr__(self, "path_index", np.full(a.shape[0], -1, dtype=np.int64))

    @classmethod
    def uniform(cls, atoms, path_index=None):
        a = np.asarray(atoms, dtype=float)
        return cls(a, np.full(a.shape[0], 1.0 / a.shape[0]), path_index)

    @classmethod
    def point_mass(cls, x):
        return cls(np.atleast_1d(np.asarray(x, dtype=float))[None], np.ones(1))

    @property
    def dim(self):
        return self.atoms.shape[1]

    def __len__(self):
        return self.atoms.shape[0]

    def second_moment(self):
        """Weighted E|X|^2 and a standard error clustered by path."""
        sq = sqnorm(self.atoms)
        mean = float(np.dot(self.weights, sq))
        ids = self.path_index
        if np.all(ids < 0):
            n = len(sq)
            return mean, float(np.sqrt(np.sum(self.weights ** 2 * (sq - mean) ** 2) * n / max(n - 1, 1)))
        # per-path totals of w (|x|^2 - mean); clusters are independent
        _, inv = np.unique(ids, return_inverse=True)
        resid = np.bincount(inv, weights=self.weights * (sq - mean))
        g = len(resid)
        return mean, float(np.sqrt(np.sum(resid ** 2) * g / max(g - 1, 1)))

    def to_csv(self, path):
        rows = []
        for a, w, p in zip(self.atoms, self.weights, self.path_index):
            row = {"path_id": int(p)}
            row.update({"x_%d" % (i + 1): float(v) for i, v in enumerate(a)})
            row["weight"] = float(w)
            rows.append(row)
        write_csv(rows, path)


def occupation_measure(batch, t0, t1=None):
    """Uniform weights over recorded states with t0 < t <= t1, pooled over surviving paths."""
    t1 = batch.times[-1] if t1 is None else t1
    sel = (batch.times > t0) & (batch.times <= t1 * (1 + 1e-12))
    if not sel.any():
        raise ValueError("no recorded times in (%r, %r]" % (t0, t1))
    keep = np.flatnonzero(_alive(batch))
    atoms = batch.states[keep][:, sel].reshape(-1, batch.dim)
    ids = np.repeat(keep, int(sel.sum()))
    return EmpiricalMeasure.uniform(atoms, ids)


def krylov_bogoliubov(c, cfg, burn_in, threads=None):
    """Occupation average over (burn_in, horizon] of a freshly simulated batch."""
    if not 0 <= burn_in < cfg.horizon:
        raise ValueError("burn_in must lie in [0, horizon)")
    return occupation_measure(simulate(c, cfg, threads=threads), burn_in)


def _values(m):
    if isinstance(m, EmpiricalMeasure):
        return m.atoms, m.weights
    a = np.asarray(m, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    return a, np.full(a.shape[0], 1.0 / a.shape[0])


def wasserstein1_1d(mu, nu):
    """Exact W1 between two weighted 1-D samples."""
    (a, wa), (b, wb) = _values(mu), _values(nu)
    if a.shape[1] != 1 or b.shape[1] != 1:
        raise ValueError("wasserstein1_1d needs scalar atoms; use energy_distance for d > 1")
    return float(stats.wasserstein_distance(a[:, 0], b[:, 0], wa, wb))


def _mean_dist(a, wa, b, wb, block=2048):
    total = 0.0
    for i in range(0, len(a), block):
        total += float(wa[i:i + block] @ cdist(a[i:i + block], b) @ wb)
    return total


def energy_distance(mu, nu):
    """2E|X-Y| - E|X-X'| - E|Y-Y'| for weighted samples in any dimension."""
    (a, wa), (b, wb) = _values(mu), _values(nu)
    if a.shape[1] != b.shape[1]:
        raise ValueError("measures live in different dimensions")
    e = 2.0 * _mean_dist(a, wa, b, wb) - _mean_dist(a, wa, a, wa) - _mean_dist(b, wb, b, wb)
    return max(e, 0.0)


def distance(mu, nu):
    """W1 for scalar measures, energy distance otherwise."""
    if _values(mu)[0].shape[1] == 1:
        return wasserstein1_1d(mu, nu)
    return energy_distance(mu, nu)


def push_forward(c, mu, step_horizon, cfg, threads=None):
    """Empirical law of X_{step_horizon} from ``cfg.paths`` atoms drawn from ``mu``."""
    rng = seeding.stream(cfg.seed, seeding.ATOMS)
    idx = rng.choice(len(mu), size=cfg.paths, p=mu.weights)
    fresh = int(rng.integers(0, 2 ** 63))
    run = cfg.replace(horizon=step_horizon, initial=mu.atoms[idx], seed=fresh, record_every=10 ** 9)
    batch = simulate(c, run, threads=threads)
    keep = np.flatnonzero(_alive(batch))
    return EmpiricalMeasure.uniform(batch.terminal[keep], keep)


def invariance_gap(c, mu, step_horizon, cfg, threads=None):
    """Distance between ``mu`` and its one-step push-forward under fresh noise."""
    return distance(mu, push_forward(c, mu, step_horizon, cfg, threads=threads))


def occupation_convergence(batch, horizons, reference):
    """W1 (or energy) distance of the (T/2, T] occupation measures to the reference window.

    Passes iff the distances strictly decrease along ``horizons``.
    """
    ref = occupation_measure(batch, reference / 2.0, reference)
    rows = [{"T": float(T), "distance": distance(occupation_measure(batch, T / 2.0, T), ref)}
            for T in horizons]
    d = [r["distance"] for r in rows]
    ok = all(a > b for a, b in zip(d, d[1:]))
    return {"reference_T": float(reference), "table": rows, "verdict": _verdict(ok)}


def cascade_rate(batches, max_ratio_factor=3.0):
    """Pairwise E sup_t |X^k_t - X^l_t|^2 over recorded times, scaled by |1/k - 1/l|.

    Passes iff every scaled gap is within ``max_ratio_factor`` of the scaled
    gap of the coarsest pair and gap(k, 2k) is nonincreasing in k.
    """
    ks = sorted(batches)
    if len(ks) < 2:
        raise ValueError("need at least two mollification orders")
    first = batches[ks[0]]
    for k in ks[1:]:
        b = batches[k]
        if not (np.array_equal(b.grid, first.grid) and np.array_equal(b.times, first.times)):
            raise ValueError("batches k=%d and k=%d are on different grids" % (ks[0], k))
        if b.paths != first.paths:
            raise ValueError("batches k=%d and k=%d have different path counts" % (ks[0], k))
    rows = []
    for i, k in enumerate(ks):
        for l in ks[i + 1:]:
            bk, bl = batches[k], batches[l]
            keep = ~(bk.exploded | bl.exploded)
            sup = np.max(sqnorm(bk.states[keep] - bl.states[keep]), axis=1)
            gap, se = _mean_se(sup[:, None])
            scale = abs(1.0 / k - 1.0 / l)
            rows.append({"k": k, "l": l, "gap": float(gap[0]), "stderr": float(se[0]),
                         "inv_diff": scale, "ratio": float(gap[0]) / scale})
    ratios = np.array([r["ratio"] for r in rows])
    coarse = max(rows, key=lambda r: r["inv_diff"])["ratio"]
    doubling = [r["gap"] for r in rows if r["l"] == 2 * r["k"]]
    monotone = all(a >= b for a, b in zip(doubling, doubling[1:]))
    bounded = bool(np.all(np.isfinite(ratios))) and ratios.max() <= max_ratio_factor * coarse
    return {"ks": ks, "table": rows, "max_ratio": float(ratios.max()), "coarse_ratio": coarse,
            "doubling_gaps": doubling, "doubling_nonincreasing": monotone,
            "verdict": _verdict(bounded and monotone)}


def jsonable(v):
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_json(record, path):
    with open(path, "w") as fh:
        json.dump(jsonable(record), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(rows, path):
    if not rows:
        raise ValueError("nothing to write")
    fields = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
