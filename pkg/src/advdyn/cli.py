"""Command-line front end: ``advdyn {simulate,sweep,predict,compare}``.

Every subcommand reads one JSON config (``--config``), applies flag
overrides, writes its outputs under ``--out`` and drops a ``run.json``
sidecar holding the effective config, which can be fed back in unchanged.

Exit codes: 0 success, 2 configuration or domain error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (ClassificationRefused, classify_outcome, conservation_residual,
                       count_level_periods, count_periods, green_decay_residual)
from .core import STATE_FIELDS, ModelParams, PopulationState
from .integrator import IntegratorConfig, Trajectory, detect_extinction, integrate
from .models import (alpha_forced_autonomous_field, alpha_integro_field,
                     alpha_linear_field, alpha_overflow, contributor_field,
                     perturbation_field, reduced_contributor_field,
                     reduced_supporter_field, supporter_field)
from .sweep import ModelKind, SweepSpec, run_sweep
from . import theory

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CONFIG_KEYS = {"model", "params", "initial", "integrator", "sweep", "predict",
               "compare", "tool_version"}
COMPARE_MODES = ("annihilation_boundary", "oscillation_counts",
                 "reduced_equivalence", "alpha_ladder")


class ConfigError(Exception):
    pass


class NumericFailure(Exception):
    pass


# -- configuration --------------------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    return cfg


def _section(cfg, key) -> dict:
    v = cfg.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"'{key}' must be an object")
    return v


def _params(cfg) -> ModelParams:
    try:
        return ModelParams.from_dict(_section(cfg, "params"))
    except KeyError as e:
        raise ConfigError(f"params: {e.args[0]}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"params: {e}") from e


def _initial(cfg) -> PopulationState:
    d = _section(cfg, "initial")
    unknown = set(d) - set(STATE_FIELDS)
    if unknown:
        raise ConfigError(f"initial: unknown key(s) {', '.join(sorted(unknown))}")
    missing = set(STATE_FIELDS) - set(d)
    if missing:
        raise ConfigError(f"initial: missing key(s) {', '.join(sorted(missing))}")
    try:
        return PopulationState(**{k: float(d[k]) for k in STATE_FIELDS})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"initial: {e}") from e


def _integrator(cfg) -> IntegratorConfig:
    try:
        return IntegratorConfig(**_section(cfg, "integrator"))
    except TypeError as e:
        raise ConfigError(f"integrator: {e}") from e
    except ValueError as e:
        raise ConfigError(f"integrator: {e}") from e


def _model(cfg) -> ModelKind:
    try:
        return ModelKind(cfg.get("model", "supporter"))
    except ValueError as e:
        raise ConfigError(f"model: {e}") from e


def apply_overrides(cfg: dict, args) -> dict:
    cfg = json.loads(json.dumps(cfg))
    cfg.pop("tool_version", None)
    if getattr(args, "model", None):
        cfg["model"] = args.model
    if getattr(args, "t_end", None) is not None:
        cfg.setdefault("integrator", {})["t_end"] = args.t_end
    return cfg


def resolve_workers(flag) -> int:
    if flag is not None:
        n = flag
    elif os.environ.get("ADVDYN_WORKERS"):
        try:
            n = int(os.environ["ADVDYN_WORKERS"])
        except ValueError as e:
            raise ConfigError("ADVDYN_WORKERS must be an integer") from e
    else:
        n = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    if n < 1:
        raise ConfigError("worker count must be >= 1")
    return n


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else v


def _sidecar(cfg: dict) -> dict:
    return {**cfg, "tool_version": __version__}


# -- shared runners -------------------------------------------------------------

def _embed_reduced(model: ModelKind, y: np.ndarray, G0: float) -> np.ndarray:
    if model is ModelKind.REDUCED_SUPPORTER:
        B, g = y[:, 0], y[:, 1]
        return np.stack([B, B, g, g, G0 - 2 * g], axis=-1)
    B, g, Ga = y[:, 0], y[:, 1], y[:, 2]
    return np.stack([B, B, g, g, Ga], axis=-1)


def simulate_model(model: ModelKind, p: ModelParams, s0: PopulationState,
                   icfg: IntegratorConfig) -> Trajectory:
    """Integrate one model and return a 5-component trajectory.

    Reduced systems start from (B, g[, Gamma]) of ``s0`` and are mapped back
    onto the symmetric manifold B = R, g = gamma.
    """
    if model is ModelKind.SUPPORTER:
        return integrate(supporter_field(p), s0.as_array(), icfg)
    if model is ModelKind.CONTRIBUTOR:
        return integrate(contributor_field(p), s0.as_array(), icfg)
    G0 = 2 * s0.g + s0.Gamma
    if model is ModelKind.REDUCED_SUPPORTER:
        tr = integrate(reduced_supporter_field(p.lethality_R, p.capacity_R, G0),
                       [s0.B, s0.g], icfg, labels=("B", "g"))
    else:
        tr = integrate(reduced_contributor_field(p.transfer_B, p.capacity_R),
                       [s0.B, s0.g, s0.Gamma], icfg, labels=("B", "g", "Gamma"))
    return Trajectory(
        times=tr.times, states=_embed_reduced(model, tr.states, G0),
        termination=tr.termination, accepted_steps=tr.accepted_steps,
        rejected_steps=tr.rejected_steps, final_time=tr.final_time,
        final_state=_embed_reduced(model, tr.final_state[None], G0)[0],
        stiff_switch_time=tr.stiff_switch_time)


def _check_numeric(tr: Trajectory, what: str):
    if tr.termination.value in ("diverged", "step_failure"):
        raise NumericFailure(f"{what}: integration ended with {tr.termination.value} "
                             f"at t = {tr.final_time:.6g}")


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path) -> dict:
    model, p, s0, icfg = _model(cfg), _params(cfg), _initial(cfg), _integrator(cfg)
    tr = simulate_model(model, p, s0, icfg)
    _check_numeric(tr, "simulate")
    outcome = classify_outcome(tr)
    summary = {
        "model": model.value,
        "termination": tr.termination.value,
        "final_time": tr.final_time,
        "final_state": dict(zip(STATE_FIELDS, map(float, tr.final_state))),
        "outcome": outcome.kind.value,
        "margin": outcome.margin,
        "periods": {"R": count_periods(tr, "R", params=p), "B": count_periods(tr, "B", params=p)},
        "extinction": None,
        "accepted_steps": tr.accepted_steps,
        "rejected_steps": tr.rejected_steps,
        "stiff_switch_time": _finite_or_none(tr.stiff_switch_time),
    }
    ext = detect_extinction(tr)
    if ext is not None:
        summary["extinction"] = {"time": ext[0], "side": ext[1]}
    if model is ModelKind.SUPPORTER:
        summary["conservation_residual"] = conservation_residual(tr)
    elif model is ModelKind.CONTRIBUTOR and len(tr) >= 3:
        summary["green_decay_residual"] = green_decay_residual(tr, p)
    tr.to_csv(out / "trajectory.csv")
    _write_json(out / "summary.json", summary)
    return summary


def sweep_spec_from_config(cfg: dict) -> SweepSpec:
    sw = dict(_section(cfg, "sweep"))
    if "axis_x" not in sw or "axis_y" not in sw:
        raise ConfigError("sweep: 'axis_x' and 'axis_y' are required")
    for k in ("model", "fixed", "initial", "integrator"):
        if k in sw:
            raise ConfigError(f"sweep: '{k}' belongs at the top level of the config")
    _params(cfg)
    try:
        return SweepSpec.from_dict({
            **sw, "model": _model(cfg).value, "fixed": _section(cfg, "params"),
            "initial": _initial(cfg), "integrator": _integrator(cfg)})
    except KeyError as e:
        raise ConfigError(f"sweep: {e.args[0]}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"sweep: {e}") from e


def cmd_sweep(cfg: dict, out: Path, workers: int) -> dict:
    spec = sweep_spec_from_config(cfg)
    res = run_sweep(spec, workers=workers)
    res.write(out / "sweep.csv", out / "sweep.json")
    counts = {k: int(np.sum(res.outcome == k)) for k in ("blue", "red", "draw", "none")}
    summary = {"cells": len(res), "outcomes": counts,
               "boundary_edges": len(res.boundary_cells),
               "max_periods": int(res.periods.max())}
    _write_json(out / "sweep_summary.json", summary)
    return summary


PREDICT_KEYS = ("B0", "g0", "Gamma0", "lethality_R", "capacity_R", "transfer_B")


def cmd_predict(cfg: dict, out: Path) -> dict:
    d = dict(_section(cfg, "predict"))
    unknown = set(d) - set(PREDICT_KEYS) - {"G0"}
    if unknown:
        raise ConfigError(f"predict: unknown key(s) {', '.join(sorted(unknown))}")
    missing = [k for k in PREDICT_KEYS if k not in d]
    if missing:
        raise ConfigError(f"predict: missing key(s) {', '.join(missing)}")
    try:
        result = theory.predict(**{k: float(v) for k, v in d.items()})
    except ValueError as e:
        raise ConfigError(f"predict: {e}") from e
    _write_json(out / "predict.json", result)
    return result


def cmd_compare(cfg: dict, out: Path, workers: int) -> dict:
    opts = dict(_section(cfg, "compare"))
    mode = opts.pop("mode", None)
    if mode not in COMPARE_MODES:
        raise ConfigError(f"compare: 'mode' must be one of {', '.join(COMPARE_MODES)}")
    report = _COMPARERS[mode](cfg, opts, out, workers)
    report["mode"] = mode
    _write_json(out / "compare.json", report)
    return report


def _compare_annihilation(cfg, opts, out, workers):
    """Zero-B at the end of a symmetric supporter sweep vs the threshold rule."""
    s0 = _initial(cfg)
    zero = float(opts.pop("zero_threshold", 1e-3))
    sweep_cfg = {
        "axis_x": opts.pop("axis_x", ["lethality_R+lethality_B", 0.0, 20.0, 60]),
        "axis_y": opts.pop("axis_y", ["capacity_R+capacity_B", 0.0, 2.0, 60]),
    }
    if opts:
        raise ConfigError(f"compare: unknown option(s) {', '.join(sorted(opts))}")
    if not (s0.B == s0.R and s0.g == s0.gamma):
        raise ConfigError("compare: annihilation_boundary needs B = R and g = gamma initially")
    spec = sweep_spec_from_config({**cfg, "model": "supporter", "sweep": sweep_cfg})
    res = run_sweep(spec, workers=workers)
    G0 = s0.g + s0.gamma + s0.Gamma
    numeric = res.final_state[..., 0] < zero
    predicted = np.empty_like(numeric)
    for j, i in np.ndindex(numeric.shape):
        kL, kC = _cell_value(spec, "lethality_R", res, j, i), _cell_value(spec, "capacity_R", res, j, i)
        predicted[j, i] = theory.annihilation_verdict(s0.B, kL, kC, G0, s0.g).annihilates
    agree = numeric == predicted
    with open(out / "compare.csv", "w") as fh:
        fh.write("x,y,B_final,numeric_zero,predicted_zero,agree\n")
        for j, i in np.ndindex(numeric.shape):
            fh.write(f"{res.x[j, i]:.17g},{res.y[j, i]:.17g},{res.final_state[j, i, 0]:.17g},"
                     f"{int(numeric[j, i])},{int(predicted[j, i])},{int(agree[j, i])}\n")
    return {"cells": int(agree.size), "agreement_fraction": float(agree.mean())}


def _cell_value(spec: SweepSpec, name: str, res, j, i):
    for axis, grid in ((spec.axis_x, res.x), (spec.axis_y, res.y)):
        if name in axis.targets:
            return float(grid[j, i])
    return float(getattr(ModelParams.from_dict(spec.fixed), name))


def _compare_oscillations(cfg, opts, out, workers):
    """Crossing counts of the reduced contributor system vs the linear count."""
    s0 = _initial(cfg)
    sweep_cfg = {
        "axis_x": opts.pop("axis_x", ["transfer_B", 0.0, 3.5, 30]),
        "axis_y": opts.pop("axis_y", ["capacity_R", 0.5, 3.0, 30]),
        "period_field": "B",
    }
    if opts:
        raise ConfigError(f"compare: unknown option(s) {', '.join(sorted(opts))}")
    spec = sweep_spec_from_config({**cfg, "model": "reduced_contributor", "sweep": sweep_cfg})
    res = run_sweep(spec, workers=workers)
    rows, agree = [], []
    for j, i in np.ndindex(res.periods.shape):
        kT = _cell_value(spec, "transfer_B", res, j, i)
        kC = _cell_value(spec, "capacity_R", res, j, i)
        pred = theory.oscillation_count(s0.g, s0.Gamma, kT, kC)
        n = int(res.periods[j, i])
        expected = math.floor(pred.value) if pred.valid else 0
        ok = n >= 0 and abs(n - expected) <= 1
        agree.append(ok)
        rows.append((res.x[j, i], res.y[j, i], n, pred.value, int(pred.valid), int(ok)))
    with open(out / "compare.csv", "w") as fh:
        fh.write("x,y,periods_numeric,periods_predicted,predicted_valid,agree\n")
        for r in rows:
            fh.write(f"{r[0]:.17g},{r[1]:.17g},{r[2]},{r[3]:.17g},{r[4]},{r[5]}\n")
    return {"cells": len(rows), "agreement_fraction": float(np.mean(agree))}


def _pre_extinction(states, floor=1e-3):
    low = np.any(states < floor, axis=-1)
    return int(np.argmax(low)) if low.any() else len(states)


def _compare_reduced(cfg, opts, out, workers):
    """Full model on the symmetric manifold vs its reduced system."""
    tol = float(opts.pop("tolerance", 1e-4))
    if opts:
        raise ConfigError(f"compare: unknown option(s) {', '.join(sorted(opts))}")
    model = _model(cfg)
    if model not in (ModelKind.SUPPORTER, ModelKind.CONTRIBUTOR):
        raise ConfigError("compare: reduced_equivalence needs model supporter or contributor")
    p, s0, icfg = _params(cfg), _initial(cfg), _integrator(cfg)
    if not (s0.B == s0.R and s0.g == s0.gamma):
        raise ConfigError("compare: reduced_equivalence needs B = R and g = gamma initially")
    p = replace(p, lethality_B=p.lethality_R, transfer_R=p.transfer_B, capacity_B=p.capacity_R)
    full = simulate_model(model, p, s0, icfg)
    reduced_kind = (ModelKind.REDUCED_SUPPORTER if model is ModelKind.SUPPORTER
                    else ModelKind.REDUCED_CONTRIBUTOR)
    red = simulate_model(reduced_kind, p, s0, icfg)
    _check_numeric(full, "full model")
    _check_numeric(red, "reduced model")
    n = min(len(full), len(red))
    stop = min(_pre_extinction(full.states[:n, [0, 2]]), _pre_extinction(red.states[:n, [0, 2]]))
    diff = np.abs(full.states[:stop, 0] - red.states[:stop, 0])
    with open(out / "compare.csv", "w") as fh:
        fh.write("t,B_full,B_reduced,abs_diff\n")
        for k in range(stop):
            fh.write(f"{full.times[k]:.17g},{full.states[k, 0]:.17g},"
                     f"{red.states[k, 0]:.17g},{diff[k]:.17g}\n")
    sup = float(diff.max()) if stop else 0.0
    return {"samples": stop, "compared_until": float(full.times[stop - 1]) if stop else 0.0,
            "sup_norm": sup, "tolerance": tol,
            "agreement_fraction": float(np.mean(diff <= tol)) if stop else 1.0}


def alpha_ladder(transfer_B, capacity_R, B0, g0, Gamma0, icfg: IntegratorConfig):
    """Integrate the perturbation system and the three alpha forms over the
    stalemate timescale. Returns the times and eps from each."""
    t_f = theory.stalemate_timescale(g0, Gamma0, capacity_R)
    cfg = replace(icfg, t_end=t_f)
    runs = {
        "perturbation": integrate(perturbation_field(transfer_B, capacity_R),
                                  [B0 - capacity_R, g0, Gamma0], cfg,
                                  labels=("eps", "g", "Gamma")),
        "integro": integrate(alpha_integro_field(transfer_B, capacity_R, g0, Gamma0),
                             [0.0, 0.0, 0.0], cfg, labels=("alpha", "alpha_dot", "q"),
                             guard=alpha_overflow(transfer_B, capacity_R)),
        "forced_autonomous": integrate(
            alpha_forced_autonomous_field(transfer_B, capacity_R, g0, Gamma0),
            [0.0, 0.0, 0.0], cfg, labels=("alpha", "alpha_dot", "q"),
            guard=alpha_overflow(transfer_B, capacity_R, memory=False)),
        "linear": integrate(alpha_linear_field(transfer_B, capacity_R, g0, Gamma0),
                            [0.0, 0.0, 0.0], cfg, labels=("alpha", "alpha_dot", "q")),
    }
    eps = {k: (tr.states[:, 0] if k == "perturbation" else tr.states[:, 1])
           for k, tr in runs.items()}
    return t_f, runs, eps


def _compare_alpha(cfg, opts, out, workers):
    if opts:
        raise ConfigError(f"compare: unknown option(s) {', '.join(sorted(opts))}")
    p, s0, icfg = _params(cfg), _initial(cfg), _integrator(cfg)
    if s0.B - p.capacity_R != 0:
        raise ConfigError("compare: alpha_ladder needs initial B equal to capacity_R")
    t_f, runs, eps = alpha_ladder(p.transfer_B, p.capacity_R, s0.B, s0.g, s0.Gamma, icfg)
    _check_numeric(runs["perturbation"], "perturbation system")
    ref = eps["perturbation"]
    report = {"t_f": t_f, "tolerance": 10 * icfg.rel_tol, "forms": {}}
    n_all = min(len(v) for v in eps.values())
    for k in ("integro", "forced_autonomous", "linear"):
        n = min(len(ref), len(eps[k]))
        d = np.abs(eps[k][:n] - ref[:n])
        report["forms"][k] = {
            "termination": runs[k].termination.value,
            "samples": n,
            "sup_norm": float(d.max()),
            "agreement_fraction": float(np.mean(d <= report["tolerance"])),
        }
    report["agreement_fraction"] = report["forms"]["integro"]["agreement_fraction"]
    with open(out / "compare.csv", "w") as fh:
        fh.write("t,eps_perturbation,eps_integro,eps_forced_autonomous,eps_linear\n")
        times = runs["perturbation"].times
        for k in range(n_all):
            fh.write(",".join(f"{v:.17g}" for v in (
                times[k], ref[k], eps["integro"][k], eps["forced_autonomous"][k],
                eps["linear"][k])) + "\n")
    return report


_COMPARERS = {
    "annihilation_boundary": _compare_annihilation,
    "oscillation_counts": _compare_oscillations,
    "reduced_equivalence": _compare_reduced,
    "alpha_ladder": _compare_alpha,
}


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="advdyn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"advdyn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "sweep", "predict", "compare"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config file")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $ADVDYN_WORKERS or all CPUs)")
        sp.add_argument("--model", choices=[m.value for m in ModelKind])
        sp.add_argument("--t-end", type=float, dest="t_end")
        sp.add_argument("--seedless", action="store_true",
                        help="assert that the run uses no randomness (always true)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        workers = resolve_workers(args.workers)
        out = args.out
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"cannot create output directory: {e}") from e
        if args.command == "simulate":
            result = cmd_simulate(cfg, out)
        elif args.command == "sweep":
            result = cmd_sweep(cfg, out, workers)
        elif args.command == "predict":
            result = cmd_predict(cfg, out)
        else:
            result = cmd_compare(cfg, out, workers)
        _write_json(out / "run.json", _sidecar(cfg))
    except ConfigError as e:
        print(f"advdyn: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, ClassificationRefused) as e:
        print(f"advdyn: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    json.dump(result, sys.stdout, indent=2, sort_keys=True, default=_json_default)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
