"""Pure-numpy Euler-Maruyama core, vectorised over paths.

Works with any coefficient callables.  Arithmetic follows the same order as
the compiled core so both backends agree to rounding.
"""

import numpy as np

from . import jumps as _jumps
from ._util import norm, sqnorm


def _jump_schedule(jptr, jstep):
    """Group jumps by (step, rank within that path's step) for vectorised updates."""
    n_paths = len(jptr) - 1
    counts = np.diff(jptr)
    path = np.repeat(np.arange(n_paths), counts)
    rank = np.zeros(len(jstep), dtype=np.int64)
    for j in range(1, len(jstep)):
        if path[j] == path[j - 1] and jstep[j] == jstep[j - 1]:
            rank[j] = rank[j - 1] + 1
    order = np.lexsort((rank, jstep))
    return path[order], np.asarray(jstep)[order], rank[order], order


def run_chunk(c, x0, dw, dts, jptr, jstep, jmarks, rec_steps, stop_radius, blowup,
              mc_samples=_jumps.DEFAULT_MC_SAMPLES):
    n_paths, n_steps, d = dw.shape
    n_rec = len(rec_steps)
    states = np.full((n_paths, n_rec, d), np.nan)
    supsq = np.full((n_paths, n_rec), np.nan)
    exit_step = np.full(n_paths, -1, dtype=np.int64)
    exit_state = np.full((n_paths, d), np.nan)
    explode_step = np.full(n_paths, -1, dtype=np.int64)

    jpath, jst, jrank, order = _jump_schedule(jptr, jstep)
    jmarks = np.asarray(jmarks)[order]
    has_jumps = c.activity.rate > 0 and len(jst) > 0
    compensate = c.activity.rate > 0

    x = np.array(x0, dtype=float)
    sq = sqnorm(x)
    sup = sq.copy()
    bad = ~(sq <= blowup * blowup)
    if bad.any():
        raise ValueError("non-finite or huge initial state")
    if np.isfinite(stop_radius):
        hit = norm(x) >= stop_radius
        exit_step[hit] = 0
        exit_state[hit] = x[hit]
    r = 0
    if rec_steps[0] == 0:
        states[:, 0] = x
        supsq[:, 0] = sup
        r = 1

    with np.errstate(all="ignore"):
        for i in range(n_steps):
            dt = dts[i]
            drift_term = c.drift(x) * dt
            noise = c.diffusion.apply(x, dw[:, i])
            if compensate:
                comp_term = _jumps.compensator(c.activity, c.jump, x, mc_samples) * dt
            y = x
            if has_jumps:
                lo = np.searchsorted(jst, i, side="left")
                hi = np.searchsorted(jst, i, side="right")
                if hi > lo:
                    y = x.copy()
                    for k in range(jrank[lo:hi].max() + 1):
                        sel = slice(lo, hi)
                        m = jrank[sel] == k
                        p = jpath[sel][m]
                        u = jmarks[sel][m]
                        y[p] = y[p] + c.jump(y[p], u)
            x = y + drift_term + noise
            if compensate:
                x = x - comp_term

            sq = sqnorm(x)
            blown = ~(sq <= blowup * blowup) & (explode_step < 0)
            if blown.any():
                explode_step[blown] = i + 1
                x[blown] = np.nan
                sq[blown] = np.nan
            sup = np.maximum(sup, sq)
            if np.isfinite(stop_radius):
                hit = (exit_step < 0) & (np.sqrt(sq) >= stop_radius)
                if hit.any():
                    exit_step[hit] = i + 1
                    exit_state[hit] = x[hit]
            if r < n_rec and rec_steps[r] == i + 1:
                states[:, r] = x
                supsq[:, r] = sup
                r += 1
    return states, supsq, exit_step, exit_state, explode_step
