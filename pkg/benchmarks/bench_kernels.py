"""Wall-clock comparison of the compiled and numpy Euler-Maruyama cores.

    python benchmarks/bench_kernels.py [--paths 10 100 1000] [--repeat R]

Both backends simulate the same batch (noise generation included); the
script also reports the largest absolute difference between their outputs.
The numpy core vectorises across paths, so its per-step overhead is
amortised on wide batches; the compiled core wins on narrow ones.
"""

import argparse
import time

import numpy as np

from jumpsde import coefficients as co
from jumpsde import kernels
from jumpsde.simulate import SimConfig, simulate

MODELS = {
    "ou_with_jumps": lambda: co.ou_with_jumps(),
    "alpha_drift": lambda: co.build(drift="alpha_drift", drift_params={"alpha": 0.5},
                                    diffusion="constant"),
    "tanh_multiplicative": lambda: co.build(
        dim=2, drift="dissipative_alpha", drift_params={"alpha": 0.5, "K": 1.0},
        diffusion="tanh", diffusion_params={"scale": 0.5},
        jump="multiplicative", jump_params={"scale": 0.1}, rate=1.0, marks="normal(0,1)"),
    "mollified_clamp": lambda: co.build(drift="clamp", drift_params={"bound": 1.0},
                                        diffusion="constant").with_drift(
        co.mollify(co.build(drift="clamp", drift_params={"bound": 1.0}).drift, 8, 1.0)),
}


def timed(c, cfg, name, repeat):
    best, batch = float("inf"), None
    with kernels.backend(name):
        for _ in range(repeat):
            t0 = time.perf_counter()
            batch = simulate(c, cfg, threads=1)
            best = min(best, time.perf_counter() - t0)
    return best, batch


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, nargs="+", default=[10, 100, 1000])
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if "cython" not in kernels.BACKENDS:
        print("compiled core not built; only the numpy core is available")
    print("%-22s %6s %10s %10s %8s %12s" % ("model", "paths", "cython s", "python s", "speedup",
                                           "max |diff|"))
    for label, make in MODELS.items():
        c = make()
        for paths in args.paths:
            cfg = SimConfig(dt=args.dt, horizon=args.horizon, paths=paths, seed=1, initial=1.0,
                            record_every=100)
            tp, bp = timed(c, cfg, "python", args.repeat)
            if "cython" in kernels.BACKENDS:
                tc, bc = timed(c, cfg, "cython", args.repeat)
                diff = float(np.nanmax(np.abs(bc.states - bp.states)))
                print("%-22s %6d %10.3f %10.3f %7.1fx %12.2e" % (label, paths, tc, tp, tp / tc, diff))
            else:
                print("%-22s %6d %10s %10.3f %8s %12s" % (label, paths, "-", tp, "-", "-"))


if __name__ == "__main__":
    main()
