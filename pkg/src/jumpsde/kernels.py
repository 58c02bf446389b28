"""Backend selection for the Euler-Maruyama core.

The compiled core is used when it imported and the coefficient set is made
of built-in families; everything else runs on the numpy core.
"""

import contextlib
import math

import numpy as np

from . import _kernels_py
from .coefficients import BoundViolation, MollifiedDrift

try:
    from . import _ckernels
except ImportError:  # no compiler at install time
    _ckernels = None

BACKENDS = ("cython", "python") if _ckernels is not None else ("python",)
_active = BACKENDS[0]


def active_backend():
    return _active


def set_backend(name):
    global _active
    if name not in BACKENDS:
        raise ValueError("backend %r unavailable; have %s" % (name, ", ".join(BACKENDS)))
    _active = name


@contextlib.contextmanager
def backend(name):
    prev = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def compiled_layout(c):
    """Numeric description of ``c`` for the compiled core, or None."""
    drift = c.drift
    if isinstance(drift, MollifiedDrift):
        base, shifts, weights, bound = drift.base, drift.shifts, drift.weights, drift.drift_bound
    else:
        base, shifts, weights, bound = drift, np.empty((0, c.dim)), np.empty(0), math.inf
    codes = (base.code, c.diffusion.code, c.jump.code)
    if any(code is None for code in codes):
        return None
    dcode, scode, jcode = codes
    if scode.cutoff != jcode.cutoff and not (math.isinf(scode.cutoff) and math.isinf(jcode.cutoff)):
        return None
    return {
        "drift_fam": dcode.family,
        "drift_par": np.array(dcode.params + (0.0, 0.0), dtype=float),
        "drift_cut": float(dcode.cutoff),
        "shifts": np.ascontiguousarray(shifts, dtype=float),
        "weights": np.ascontiguousarray(weights, dtype=float),
        "drift_bound": float(bound),
        "diff_fam": scode.family,
        "diff_par": np.array(scode.params + (0.0,), dtype=float),
        "jump_fam": jcode.family,
        "jump_par": np.array(jcode.params + (0.0,), dtype=float),
        "field_cut": float(scode.cutoff),
        "lam_mean": float(c.activity.rate * c.activity.marks.mean),
        "compensate": c.activity.rate > 0,
    }


def uses_compiled(c):
    return _active == "cython" and compiled_layout(c) is not None


def run_chunk(c, x0, dw, dts, jptr, jstep, jmarks, rec_steps, stop_radius=math.inf,
              blowup=1e12):
    """Advance a chunk of paths through every step.

    Returns ``(states, supsq, exit_step, exit_state, explode_step)``; see
    :func:`jumpsde.simulate.simulate` for their meaning.
    """
    layout = compiled_layout(c) if _active == "cython" else None
    if layout is None:
        return _kernels_py.run_chunk(c, x0, dw, dts, jptr, jstep, jmarks, rec_steps,
                                     stop_radius, blowup)
    try:
        return _ckernels.run_chunk(
            layout["drift_fam"], layout["drift_par"], layout["drift_cut"],
            layout["shifts"], layout["weights"], layout["drift_bound"],
            layout["diff_fam"], layout["diff_par"],
            layout["jump_fam"], layout["jump_par"], layout["field_cut"],
            layout["lam_mean"], layout["compensate"],
            np.ascontiguousarray(x0, dtype=float), np.ascontiguousarray(dw, dtype=float),
            np.ascontiguousarray(dts, dtype=float),
            np.ascontiguousarray(jptr, dtype=np.int64), np.ascontiguousarray(jstep, dtype=np.int64),
            np.ascontiguousarray(jmarks, dtype=float).reshape(-1, c.dim),
            np.ascontiguousarray(rec_steps, dtype=np.int64), float(stop_radius), float(blowup))
    except ValueError as exc:
        if "global bound" in str(exc):
            raise BoundViolation(str(exc)) from None
        raise
