"""Two-parameter grid scans over model coefficients or initial populations.

Cells are integrated in fixed-size chunks, each chunk as one batch. Chunks
are dealt to workers round-robin and results are reassembled in chunk order,
so the output does not depend on how many workers ran it.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum

import numpy as np

from . import __version__
from .analysis import DRAW_THRESHOLD, PROMINENCE_FRACTION, count_level_periods
from .core import STATE_FIELDS, ModelParams, PopulationState, SmoothStepParams
from .integrator import IntegratorConfig, Termination, integrate_batch
from .models import (contributor_field, reduced_contributor_field,
                     reduced_supporter_field, supporter_field)

CHUNK_SIZE = 64
PARAM_FIELDS = tuple(f.name for f in fields(ModelParams) if f.name != "step")
CSV_HEADER = ("x", "y", "B", "R", "g", "gamma", "Gamma", "G",
              "outcome", "margin", "periods", "termination")


class ModelKind(str, Enum):
    SUPPORTER = "supporter"
    CONTRIBUTOR = "contributor"
    REDUCED_SUPPORTER = "reduced_supporter"
    REDUCED_CONTRIBUTOR = "reduced_contributor"


@dataclass(frozen=True)
class Axis:
    """One swept quantity sampled at ``n_points`` cell centres in (min, max).

    ``name`` is a ModelParams field or an initial-state field; several names
    joined with ``+`` are set to the same value (for example
    ``"lethality_R+lethality_B"`` for a symmetric scan).
    """

    name: str
    min: float
    max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError(f"axis {self.name!r}: n_points must be >= 2")
        if not (math.isfinite(self.min) and math.isfinite(self.max) and self.min < self.max):
            raise ValueError(f"axis {self.name!r}: need finite min < max")
        for part in self.targets:
            if part not in PARAM_FIELDS and part not in STATE_FIELDS:
                raise KeyError(f"unknown axis parameter {part!r}")

    @property
    def targets(self) -> tuple:
        return tuple(s.strip() for s in self.name.split("+"))

    def values(self) -> np.ndarray:
        i = np.arange(self.n_points)
        return self.min + (i + 0.5) * (self.max - self.min) / self.n_points

    @classmethod
    def from_value(cls, v) -> "Axis":
        if isinstance(v, Axis):
            return v
        if isinstance(v, dict):
            return cls(v["name"], float(v["min"]), float(v["max"]), int(v["n_points"]))
        name, lo, hi, n = v
        return cls(name, float(lo), float(hi), int(n))


@dataclass(frozen=True)
class SweepSpec:
    model: ModelKind
    axis_x: Axis
    axis_y: Axis
    fixed: dict = field(default_factory=dict)
    initial: PopulationState = PopulationState(1.5, 1.5, 1.0, 2.0, 3.0)
    integrator: IntegratorConfig = IntegratorConfig()
    draw_threshold: float = DRAW_THRESHOLD
    period_field: str = "R"

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        object.__setattr__(self, "axis_x", Axis.from_value(self.axis_x))
        object.__setattr__(self, "axis_y", Axis.from_value(self.axis_y))
        base_params(self.fixed)  # validates the overrides
        if self.period_field not in ("B", "R"):
            raise ValueError("period_field must be 'B' or 'R'")

    @property
    def shape(self) -> tuple:
        return (self.axis_y.n_points, self.axis_x.n_points)

    def to_dict(self) -> dict:
        fixed = {k: (asdict(v) if isinstance(v, SmoothStepParams) else v)
                 for k, v in self.fixed.items()}
        return {
            "model": self.model.value,
            "axis_x": asdict(self.axis_x),
            "axis_y": asdict(self.axis_y),
            "fixed": fixed,
            "initial": self.initial.to_dict(),
            "integrator": self.integrator.to_dict(),
            "draw_threshold": self.draw_threshold,
            "period_field": self.period_field,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown sweep key(s): {', '.join(sorted(unknown))}")
        for k in ("model", "axis_x", "axis_y"):
            if k not in d:
                raise KeyError(f"missing sweep key {k!r}")
        if "initial" in d and not isinstance(d["initial"], PopulationState):
            d["initial"] = PopulationState(**d["initial"])
        if "integrator" in d and not isinstance(d["integrator"], IntegratorConfig):
            d["integrator"] = IntegratorConfig(**d["integrator"])
        return cls(**d)


def base_params(fixed: dict) -> ModelParams:
    return ModelParams.from_dict(dict(fixed))


@dataclass
class SweepResult:
    """Per-cell records in row-major (y outer, x inner) order."""

    spec: SweepSpec
    x: np.ndarray            # (n_y, n_x) axis_x value per cell
    y: np.ndarray
    final_state: np.ndarray  # (n_y, n_x, 5)
    outcome: np.ndarray      # (n_y, n_x) of "blue" / "red" / "draw" / "none"
    margin: np.ndarray
    periods: np.ndarray      # int, -1 where the run diverged
    termination: np.ndarray  # strings
    boundary_cells: list = field(default_factory=list)

    def __len__(self):
        return self.outcome.size

    def records(self):
        """Yield one tuple per cell in CSV column order."""
        for j in range(self.outcome.shape[0]):
            for i in range(self.outcome.shape[1]):
                s = self.final_state[j, i]
                yield (self.x[j, i], self.y[j, i], *s, s[2] + s[3] + s[4],
                       self.outcome[j, i], self.margin[j, i],
                       int(self.periods[j, i]), self.termination[j, i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for rec in self.records():
                w.writerow([_fmt(v) for v in rec])

    def sidecar(self) -> dict:
        return {"tool_version": __version__, "sweep": self.spec.to_dict()}

    def write(self, csv_path, json_path) -> None:
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


# -- per-chunk work -----------------------------------------------------------

def _cell_inputs(spec: SweepSpec, cells: np.ndarray):
    """Parameter and initial-state arrays for the given flat cell indices."""
    nx = spec.axis_x.n_points
    xs = spec.axis_x.values()[cells % nx]
    ys = spec.axis_y.values()[cells // nx]
    base = base_params(spec.fixed)
    params = {k: np.full(len(cells), float(getattr(base, k))) for k in PARAM_FIELDS}
    init = {k: np.full(len(cells), float(getattr(spec.initial, k))) for k in STATE_FIELDS}
    for axis, vals in ((spec.axis_x, xs), (spec.axis_y, ys)):
        for name in axis.targets:
            (params if name in params else init)[name] = vals.copy()
    return xs, ys, params, base.step, init


def _fields_for(model: ModelKind, params: dict, step, init: dict):
    """Batch field, initial states, a per-row field factory, and the map from
    the integrated state back to (B, R, g, gamma, Gamma)."""
    if model in (ModelKind.SUPPORTER, ModelKind.CONTRIBUTOR):
        make = supporter_field if model is ModelKind.SUPPORTER else contributor_field
        p = ModelParams(**params, step=step)
        y0 = np.stack([init[k] for k in STATE_FIELDS], axis=-1)

        def row(i):
            return make(ModelParams(**{k: v[i] for k, v in params.items()}, step=step))

        return make(p), y0, row, lambda y, i: y, (0, 1)

    if model is ModelKind.REDUCED_SUPPORTER:
        G0 = 2 * init["g"] + init["Gamma"]
        kL, kC = params["lethality_R"], params["capacity_R"]
        y0 = np.stack([init["B"], init["g"]], axis=-1)

        def embed(y, i):
            B, g = y[..., 0], y[..., 1]
            return np.stack([B, B, g, g, G0[i] - 2 * g], axis=-1)

        def row(i):
            return reduced_supporter_field(kL[i], kC[i], G0[i])

        return reduced_supporter_field(kL, kC, G0), y0, row, embed, (0, 0)

    kT, kC = params["transfer_B"], params["capacity_R"]
    y0 = np.stack([init["B"], init["g"], init["Gamma"]], axis=-1)

    def embed(y, i):
        B, g, Ga = y[..., 0], y[..., 1], y[..., 2]
        return np.stack([B, B, g, g, Ga], axis=-1)

    def row(i):
        return reduced_contributor_field(kT[i], kC[i])

    return reduced_contributor_field(kT, kC), y0, row, embed, (0, 0)


def _run_chunk(spec: SweepSpec, cells: np.ndarray) -> dict:
    xs, ys, params, step, init = _cell_inputs(spec, cells)
    f, y0, row, embed, sides = _fields_for(spec.model, params, step, init)
    m = len(cells)
    res = integrate_batch(f, y0, spec.integrator, row_rhs=row,
                          extinction_sides=(("blue", sides[0]), ("red", sides[1])))
    reduced = spec.model in (ModelKind.REDUCED_SUPPORTER, ModelKind.REDUCED_CONTRIBUTOR)
    if reduced:
        ref = params["capacity_R"]
    else:
        ref = params["capacity_R"] if spec.period_field == "R" else params["capacity_B"]
    col = 0 if reduced else STATE_FIELDS.index(spec.period_field)

    final = np.empty((m, 5))
    outcome = np.empty(m, dtype=object)
    margin = np.empty(m)
    periods = np.empty(m, dtype=np.int64)
    term = np.empty(m, dtype=object)
    for i in range(m):
        final[i] = embed(res.final_state[i], np.array(i))
        term[i] = res.termination[i].value
        finite = np.all(np.isfinite(final[i]))
        if res.termination[i] is Termination.DIVERGED or not finite:
            outcome[i], margin[i], periods[i] = "none", math.nan, -1
            continue
        margin[i] = final[i, 1] - final[i, 0]
        if margin[i] > spec.draw_threshold:
            outcome[i] = "red"
        elif margin[i] < -spec.draw_threshold:
            outcome[i] = "blue"
        else:
            outcome[i] = "draw"
        n = int(res.n_reached[i])
        periods[i] = count_level_periods(res.samples[i, :n, col], ref[i],
                                         PROMINENCE_FRACTION * abs(ref[i]))
    return {"cells": cells, "x": xs, "y": ys, "final": final, "outcome": outcome,
            "margin": margin, "periods": periods, "termination": term}


def _run_chunks(spec: SweepSpec, chunk_ids: list, chunk_size: int) -> list:
    total = spec.axis_x.n_points * spec.axis_y.n_points
    out = []
    for c in chunk_ids:
        cells = np.arange(c * chunk_size, min((c + 1) * chunk_size, total))
        out.append((c, _run_chunk(spec, cells)))
    return out


def run_sweep(spec: SweepSpec, workers: int = 1, chunk_size: int = CHUNK_SIZE) -> SweepResult:
    """Integrate every grid cell to ``t_end``, then classify and count periods.

    Chunk ``c`` goes to worker ``c % workers``; the merge is by chunk index.
    Failed cells keep their termination status and never abort the sweep.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    n_y, n_x = spec.shape
    total = n_x * n_y
    n_chunks = -(-total // chunk_size)
    workers = min(workers, n_chunks)
    plan = [list(range(w, n_chunks, workers)) for w in range(workers)]
    if workers == 1:
        parts = _run_chunks(spec, plan[0], chunk_size)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunks, spec, ids, chunk_size) for ids in plan]
            parts = [p for fut in futures for p in fut.result()]
    parts.sort(key=lambda p: p[0])

    def cat(key):
        return np.concatenate([p[1][key] for p in parts]).reshape(n_y, n_x, *(
            (5,) if key == "final" else ()))

    result = SweepResult(
        spec=spec, x=cat("x"), y=cat("y"), final_state=cat("final"),
        outcome=cat("outcome"), margin=cat("margin"), periods=cat("periods"),
        termination=cat("termination"))
    result.boundary_cells = outcome_boundary_cells(result.outcome)
    return result


def outcome_boundary_cells(outcome: np.ndarray) -> list:
    """Pairs of neighbouring cells ``((j, i), (j2, i2))`` whose outcomes differ."""
    pairs = []
    n_y, n_x = outcome.shape
    for j in range(n_y):
        for i in range(n_x):
            if i + 1 < n_x and outcome[j, i] != outcome[j, i + 1]:
                pairs.append(((j, i), (j, i + 1)))
            if j + 1 < n_y and outcome[j, i] != outcome[j + 1, i]:
                pairs.append(((j, i), (j + 1, i)))
    return pairs


def extract_boundary(result: SweepResult, field: str = "margin") -> list:
    """Midpoints ``(x, y)`` of grid edges across which ``field`` changes sign.

    Cells with a NaN value are skipped.
    """
    v = getattr(result, field) if isinstance(field, str) else np.asarray(field)
    return boundary_midpoints(result.x, result.y, v)


def boundary_midpoints(x, y, values) -> list:
    s = np.sign(np.asarray(values, dtype=float))
    pts = []
    for a, b in (((slice(None), slice(None, -1)), (slice(None), slice(1, None))),
                 ((slice(None, -1), slice(None)), (slice(1, None), slice(None)))):
        sa, sb = s[a], s[b]
        hit = (sa != sb) & np.isfinite(sa) & np.isfinite(sb)
        xm = 0.5 * (x[a] + x[b])
        ym = 0.5 * (y[a] + y[b])
        pts.extend(zip(xm[hit].tolist(), ym[hit].tolist()))
    return sorted(pts, key=lambda p: (p[1], p[0]))
