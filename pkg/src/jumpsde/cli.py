"""Batch experiment runner.

    jumpsde run experiment.yaml
    jumpsde list-models [--json]

Exit codes: 0 pass or estimate-only, 1 any fail verdict or runtime
failure, 2 usage or config error.  ``JUMPSDE_THREADS`` sets the worker
thread count; everything else lives in the config file.
"""

import argparse
import json
import os
import re
import sys

import numpy as np
import yaml

from . import __version__, coefficients, conditions, estimate, kernels, seeding
from .simulate import BLOWUP, ExplosionError, SimConfig, mollified_cascade, simulate

TASKS = ("simulate", "check", "mollify", "invariant", "cascade", "feller")

MODEL_DEFAULTS = {
    "dim": 1, "drift": "zero", "drift_params": {}, "diffusion": "zero", "diffusion_params": {},
    "jump": "zero", "jump_params": {}, "marks": "normal(0,1)", "rate": 0.0,
}
SIM_DEFAULTS = {"dt": 1e-3, "horizon": 1.0, "paths": 1000, "initial": 0.0, "record_every": 1}

TASK_DEFAULTS = {
    "simulate": {"write_paths": True, "stop_radius": None, "decay": None, "envelope": None,
                 "tail": None, "stationary": None},
    "check": {"radius": 5.0, "pairs": 10_000, "min_separation": 1e-6, "mc_samples": 4096,
              "conditions": [{"id": conditions.LOL}]},
    "mollify": {"ks": [1, 5, 50], "drift_bound": None, "quad_nodes": 33, "probe_radius": 3.0,
                "probes": 1000},
    "invariant": {"burn_in": None, "step_horizon": 1.0, "atoms": None, "expected_second_moment": None},
    "cascade": {"ks": [2, 4, 8, 16], "drift_bound": None, "quad_nodes": 33, "max_ratio_factor": 3.0},
    "feller": {"x": 1.0, "deltas": [0.1, 0.01, 0.001], "max_spread": 3.0},
}
CONDITION_KEYS = {"id", "claimed", "K", "M"}
SIMULATE_CHECKS = {"decay": {"K", "M"}, "envelope": {"fit_fraction", "tolerance"},
                   "tail": {"R", "t"}, "stationary": {"expected", "t"}}
REQUIRED = {"decay": {"K", "M"}, "tail": {"R", "t"}, "stationary": {"expected"}}
TOP_KEYS = {"seed", "task", "output_dir", "model", "sim", "task_params"}


# numeric fields of each task; anything else is validated by its task
PARAM_KINDS = {
    "radius": "pos", "pairs": "posint", "min_separation": "pos", "mc_samples": "posint",
    "ks": "posints", "drift_bound": "pos", "quad_nodes": "posint", "probe_radius": "pos",
    "probes": "posint", "burn_in": "nonneg", "step_horizon": "pos", "atoms": "posint",
    "expected_second_moment": "num", "max_ratio_factor": "pos", "x": "nums", "deltas": "poss",
    "max_spread": "pos", "stop_radius": "pos", "write_paths": "bool",
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads YAML 1.2 floats such as 1e6 and 1.0e-3."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                   |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                   |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                   |[-+]?\.(?:inf|Inf|INF)
                   |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


class ConfigError(Exception):
    def __init__(self, message, key=None, line=None):
        where = ""
        if key is not None:
            where = " (key '%s'%s)" % (key, ", line %d" % line if line else "")
        super().__init__(message + where)
        self.key = key
        self.line = line


# --- config parsing -------------------------------------------------------------

def _key_lines(node, prefix=(), out=None):
    """Map dotted key paths to 1-based source lines using the YAML node tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            out[".".join(path)] = k.start_mark.line + 1
            _key_lines(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = prefix + (str(i),)
            out[".".join(path)] = v.start_mark.line + 1
            _key_lines(v, path, out)
    return out


class _Loc:
    def __init__(self, lines):
        self.lines = lines

    def error(self, message, key):
        # fall back to the nearest enclosing key that appears in the file
        probe, line = key, self.lines.get(key)
        while line is None and "." in probe:
            probe = probe.rsplit(".", 1)[0]
            line = self.lines.get(probe)
        return ConfigError(message, key, line)


def _table(raw, name, allowed, loc):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise loc.error("expected a table", name)
    for k in raw:
        if k not in allowed:
            raise loc.error("unknown key", "%s.%s" % (name, k) if name else str(k))
    return dict(raw)


def _number(value, key, loc, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise loc.error("expected a number, got %r" % (value,), key)
    if integer and int(value) != value:
        raise loc.error("expected an integer, got %r" % (value,), key)
    if positive and not value > 0:
        raise loc.error("must be positive, got %r" % (value,), key)
    return int(value) if integer else float(value)


def _typed(value, kind, key, loc):
    if kind == "bool":
        if not isinstance(value, bool):
            raise loc.error("expected true or false", key)
        return value
    if kind in ("nums", "posints", "poss"):
        items = value if isinstance(value, list) else [value]
        if kind != "nums" and not (isinstance(value, list) and value):
            raise loc.error("expected a non-empty list", key)
        elem = {"nums": "num", "posints": "posint", "poss": "pos"}[kind]
        out = [_typed(v, elem, "%s.%d" % (key, i), loc) for i, v in enumerate(items)]
        return out if isinstance(value, list) else out[0]
    if kind == "nonneg":
        v = _number(value, key, loc)
        if v < 0:
            raise loc.error("must be nonnegative", key)
        return v
    return _number(value, key, loc, positive=kind in ("pos", "posint"), integer=kind == "posint")


def parse_config(text, source="<config>"):
    """Validate and resolve a YAML experiment config; returns a plain dict."""
    try:
        node = yaml.compose(text, Loader=_Loader)
        raw = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("cannot parse %s: %s" % (source, getattr(exc, "problem", exc)),
                          None, mark.line + 1 if mark else None) from None
    loc = _Loc(_key_lines(node) if node is not None else {})
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table of keys")
    top = _table(raw, "", TOP_KEYS, loc)
    if "seed" not in top:
        raise ConfigError("seed is mandatory", "seed")
    seed = top["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise loc.error("seed must be an integer in [0, 2^64)", "seed")
    task = top.get("task", "simulate")
    if task not in TASKS:
        raise loc.error("unknown task %r; expected one of %s" % (task, ", ".join(TASKS)), "task")

    model = dict(MODEL_DEFAULTS)
    model.update(_table(top.get("model"), "model", set(MODEL_DEFAULTS), loc))
    model["dim"] = _number(model["dim"], "model.dim", loc, positive=True, integer=True)
    model["rate"] = _number(model["rate"], "model.rate", loc)
    reg = coefficients.registry()
    for kind, table in (("drift", "drift"), ("diffusion", "diffusion"), ("jump", "jump")):
        ident = model[kind]
        if ident not in reg[table]:
            raise loc.error("unknown %s id %r; known: %s" % (kind, ident, ", ".join(reg[table])),
                            "model." + kind)
        params = _table(model[kind + "_params"], "model.%s_params" % kind, set(reg[table][ident]), loc)
        resolved = dict(reg[table][ident])
        for k, v in params.items():
            resolved[k] = _number(v, "model.%s_params.%s" % (kind, k), loc)
        model[kind + "_params"] = resolved
    marks = model["marks"]
    try:
        law = coefficients.jumps.parse_mark_law(marks)
    except (ValueError, KeyError, TypeError) as exc:
        raise loc.error("bad mark law %r: %s" % (marks, exc), "model.marks") from None
    model["marks"] = repr(law)
    try:
        build_model(model)
    except (ValueError, KeyError, TypeError) as exc:
        raise loc.error(str(exc), "model") from None

    sim = dict(SIM_DEFAULTS)
    sim.update(_table(top.get("sim"), "sim", set(SIM_DEFAULTS), loc))
    for k in ("dt", "horizon"):
        sim[k] = _number(sim[k], "sim." + k, loc, positive=True)
    for k in ("paths", "record_every"):
        sim[k] = _number(sim[k], "sim." + k, loc, positive=True, integer=True)
    try:
        init = np.asarray(sim["initial"], dtype=float)
    except (TypeError, ValueError):
        raise loc.error("initial must be a number or a list of numbers", "sim.initial") from None
    if init.ndim > 1 or (init.ndim == 1 and init.shape[0] != model["dim"]):
        raise loc.error("initial must be a scalar or a list of length dim", "sim.initial")
    sim["initial"] = init.tolist()
    try:
        SimConfig(seed=seed, **sim)
    except ValueError as exc:
        raise loc.error(str(exc), "sim") from None

    params = dict(TASK_DEFAULTS[task])
    params.update(_table(top.get("task_params"), "task_params", set(TASK_DEFAULTS[task]), loc))
    for name, value in params.items():
        if name in PARAM_KINDS and value is not None:
            params[name] = _typed(value, PARAM_KINDS[name], "task_params." + name, loc)
    if task == "check":
        conds = params["conditions"]
        if not isinstance(conds, list) or not conds:
            raise loc.error("conditions must be a non-empty list", "task_params.conditions")
        resolved = []
        for i, cnd in enumerate(conds):
            key = "task_params.conditions.%d" % i
            cnd = _table(cnd, key, CONDITION_KEYS, loc)
            if cnd.get("id") not in conditions.CHECKERS:
                raise loc.error("unknown condition id %r; known: %s"
                                % (cnd.get("id"), ", ".join(sorted(conditions.CHECKERS))), key + ".id")
            if cnd["id"] == conditions.DISSIPATIVE and not ("K" in cnd and "M" in cnd):
                raise loc.error("DISSIPATIVE needs K and M", key)
            for k in ("claimed", "K", "M"):
                if k in cnd:
                    cnd[k] = _number(cnd[k], "%s.%s" % (key, k), loc, positive=k != "claimed")
            resolved.append(cnd)
        params["conditions"] = resolved
    if task == "simulate":
        for name, keys in SIMULATE_CHECKS.items():
            if params[name] is None:
                continue
            key = "task_params." + name
            sub = _table(params[name], key, keys, loc)
            for k in REQUIRED.get(name, ()):
                if k not in sub:
                    raise loc.error("missing %r" % k, key)
            params[name] = {k: _number(v, "%s.%s" % (key, k), loc) for k, v in sub.items()}
    if task in ("mollify", "cascade") and params["drift_bound"] is None:
        raise loc.error("drift_bound is required for task %s" % task, "task_params")
    if task == "invariant" and params["burn_in"] is None:
        params["burn_in"] = sim["horizon"] / 2.0
    out_dir = top.get("output_dir", "out")
    if not isinstance(out_dir, str):
        raise loc.error("output_dir must be a path", "output_dir")
    return {"seed": seed, "task": task, "output_dir": out_dir, "model": model, "sim": sim,
            "task_params": params}


def build_model(model):
    return coefficients.build(
        dim=model["dim"], drift=model["drift"], drift_params=model["drift_params"],
        diffusion=model["diffusion"], diffusion_params=model["diffusion_params"],
        jump=model["jump"], jump_params=model["jump_params"], marks=model["marks"],
        rate=model["rate"])


def sim_config(cfg):
    return SimConfig(seed=cfg["seed"], **cfg["sim"])


# --- tasks --------------------------------------------------------------------

def _task_simulate(c, cfg, out):
    p = cfg["task_params"]
    sc = sim_config(cfg)
    batch = simulate(c, sc, stop_radius=p["stop_radius"])
    files = []
    if p["write_paths"]:
        batch.to_csv(os.path.join(out, "paths.csv"))
        files.append("paths.csv")
    report = {"summary": batch.summary(), "checks": {}}
    verdicts = []
    if batch.exploded_fraction > estimate.MAX_EXPLODED_FRACTION:
        verdicts.append("fail")
    if batch.n_exploded < batch.paths:
        series = estimate.moment_series(batch)
        series.to_csv(os.path.join(out, "moments.csv"))
        files.append("moments.csv")
        if p["decay"]:
            r = estimate.decay_check(series, p["decay"]["K"], p["decay"]["M"], c_initial(sc, c))
            report["checks"]["decay"] = r
        if p["envelope"]:
            report["checks"]["envelope"] = estimate.sup_envelope_check(series, **p["envelope"])
        if p["stationary"]:
            report["checks"]["stationary"] = estimate.stationary_moment_check(series, **p["stationary"])
    if p["tail"]:
        report["checks"]["tail"] = estimate.bounded_in_probability(batch, p["tail"]["R"], p["tail"]["t"])
    if p["stop_radius"] is not None:
        report["exits"] = [{"path_id": i, "tau": e.tau} for i, e in enumerate(batch.escaped)]
    verdicts += [r["verdict"] for r in report["checks"].values() if "verdict" in r]
    return report, files, verdicts, {"exploded": batch.n_exploded}


def c_initial(sc, c):
    x = np.asarray(sc.initial, dtype=float)
    return np.full(c.dim, float(x)) if x.ndim == 0 else x


def _task_check(c, cfg, out):
    p = cfg["task_params"]
    plan = conditions.SamplingPlan(p["radius"], p["pairs"], p["min_separation"], cfg["seed"],
                                   p["mc_samples"])
    reports = []
    for cnd in p["conditions"]:
        fn = conditions.CHECKERS[cnd["id"]]
        if cnd["id"] == conditions.DISSIPATIVE:
            rep = fn(c, plan, cnd["K"], cnd["M"])
        else:
            rep = fn(c, plan, cnd.get("claimed"))
        reports.append(rep.to_dict())
    return {"reports": reports}, [], [r["verdict"] for r in reports], {}


def _task_mollify(c, cfg, out):
    p = cfg["task_params"]
    rng = seeding.stream(cfg["seed"], seeding.RESAMPLE)
    probes = conditions.uniform_ball(rng, p["probes"], c.dim, p["probe_radius"])
    base = c.drift(probes)
    rows = []
    for k in p["ks"]:
        m = coefficients.mollify(c.drift, k, p["drift_bound"], p["quad_nodes"], c.dim)
        err = np.sqrt(np.max(np.sum((m(probes) - base) ** 2, axis=1)))
        rows.append({"k": int(k), "max_abs_error": float(err), "lipschitz_bound": m.lipschitz_bound})
    moments = dict(zip(("C1", "C2", "G"), coefficients.bump_moments(c.dim)))
    return {"table": rows, "bump_moments": moments}, [], ["estimate-only"], {}


def _task_invariant(c, cfg, out):
    p = cfg["task_params"]
    sc = sim_config(cfg)
    mu = estimate.krylov_bogoliubov(c, sc, p["burn_in"])
    mu.to_csv(os.path.join(out, "occupation.csv"))
    push = sc.replace(paths=p["atoms"] or sc.paths)
    gap = estimate.invariance_gap(c, mu, p["step_horizon"], push)
    m2, se = mu.second_moment()
    report = {"gap": gap, "distance": "wasserstein1" if c.dim == 1 else "energy",
              "atoms": len(mu), "second_moment": m2, "second_moment_se": se}
    verdicts = ["estimate-only"]
    if p["expected_second_moment"] is not None:
        ok = abs(m2 - p["expected_second_moment"]) <= 3 * se
        report["expected_second_moment"] = p["expected_second_moment"]
        report["verdict"] = "pass" if ok else "fail"
        verdicts = [report["verdict"]]
    return report, ["occupation.csv"], verdicts, {}


def _task_cascade(c, cfg, out):
    p = cfg["task_params"]
    batches = mollified_cascade(c, sim_config(cfg), p["ks"], p["drift_bound"], p["quad_nodes"])
    rec = estimate.cascade_rate(batches, p["max_ratio_factor"])
    estimate.write_csv(rec["table"], os.path.join(out, "cascade.csv"))
    expl = {str(k): b.n_exploded for k, b in batches.items()}
    verdicts = [rec["verdict"]]
    if any(b.exploded_fraction > estimate.MAX_EXPLODED_FRACTION for b in batches.values()):
        verdicts.append("fail")
    return rec, ["cascade.csv"], verdicts, {"exploded": expl}


def _task_feller(c, cfg, out):
    p = cfg["task_params"]
    rec = estimate.feller_modulus(c, sim_config(cfg), p["x"], p["deltas"], max_spread=p["max_spread"])
    return rec, [], [rec["verdict"]], {}


TASK_RUNNERS = {
    "simulate": _task_simulate, "check": _task_check, "mollify": _task_mollify,
    "invariant": _task_invariant, "cascade": _task_cascade, "feller": _task_feller,
}


def run(cfg, base_dir="."):
    """Execute a parsed config; returns the exit code."""
    out = os.path.join(base_dir, cfg["output_dir"])
    os.makedirs(out, exist_ok=True)
    c = build_model(cfg["model"])
    manifest = {
        "version": __version__,
        "config": cfg,
        "seeds": {"master": cfg["seed"], "path_seed": "splitmix64(splitmix64(master) + index)",
                  "streams": {"wiener": seeding.WIENER, "jumps": seeding.JUMPS,
                              "resample": seeding.RESAMPLE, "marks_mc": seeding.MARKS_MC,
                              "atoms": seeding.ATOMS}},
        "backend": "cython" if kernels.uses_compiled(c) else "python",
        "blowup_threshold": BLOWUP,
        "coefficients": c.describe(),
    }
    try:
        report, files, verdicts, extra = TASK_RUNNERS[cfg["task"]](c, cfg, out)
        estimate.write_json(report, os.path.join(out, "report.json"))
        files.append("report.json")
        manifest.update(extra)
        failed = "fail" in verdicts
        manifest["verdict"] = "fail" if failed else ("pass" if "pass" in verdicts else "estimate-only")
        code = 1 if failed else 0
    except (ExplosionError, coefficients.BoundViolation, ValueError) as exc:
        manifest["verdict"] = "fail"
        manifest["error"] = "%s: %s" % (type(exc).__name__, exc)
        files, code = [], 1
    manifest["outputs"] = sorted(files)
    manifest["exit_code"] = code
    estimate.write_json(manifest, os.path.join(out, "manifest.json"))
    return code


def list_models(as_json=False, stream=None):
    stream = stream or sys.stdout
    reg = coefficients.registry()
    reg["conditions"] = {k: {} for k in sorted(conditions.CHECKERS)}
    if as_json:
        json.dump(reg, stream, indent=2, sort_keys=True)
        stream.write("\n")
        return
    for kind in sorted(reg):
        for ident in sorted(reg[kind]):
            params = ", ".join("%s=%r" % kv for kv in sorted(reg[kind][ident].items()))
            stream.write(("%-10s %-20s %s" % (kind, ident, params)).rstrip() + "\n")


def _parser():
    ap = argparse.ArgumentParser(prog="jumpsde", description="Jump-diffusion experiment runner.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    l = sub.add_parser("list-models", help="list built-in coefficient and condition ids")
    l.add_argument("--json", action="store_true")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list-models":
        list_models(args.json)
        return 0
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, args.config)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    return run(cfg, os.path.dirname(os.path.abspath(args.config)))


if __name__ == "__main__":
    sys.exit(main())
