"""Post-processing of trajectories: who won, how many oscillations, and how
well Green's bookkeeping identities hold along the computed solution."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ModelParams, smooth_step
from .integrator import Termination, Trajectory

DRAW_THRESHOLD = 1e-3
PROMINENCE_FRACTION = 1e-3


class OutcomeKind(str, Enum):
    BLUE_VICTORY = "blue"
    RED_VICTORY = "red"
    DRAW = "draw"

    def swapped(self) -> "OutcomeKind":
        return {OutcomeKind.BLUE_VICTORY: OutcomeKind.RED_VICTORY,
                OutcomeKind.RED_VICTORY: OutcomeKind.BLUE_VICTORY}.get(self, self)


class ClassificationRefused(ValueError):
    """Raised when a trajectory cannot be given an outcome."""

    def __init__(self, termination, message):
        super().__init__(message)
        self.termination = termination


@dataclass(frozen=True)
class Outcome:
    """Final verdict of an engagement.

    ``final_state`` is the raw 5-vector; the smooth step lets components dip a
    few parts per million below zero, so it is not forced into a validated
    :class:`~advdyn.core.PopulationState`.
    """

    kind: OutcomeKind
    margin: float
    final_state: np.ndarray


def classify_outcome(traj: Trajectory, draw_threshold: float = DRAW_THRESHOLD) -> Outcome:
    """Classify by the sign of ``R - B`` at the last state reached.

    Raises
    ------
    ClassificationRefused
        If the run diverged or the final state is not finite.
    """
    if len(traj) == 0 and traj.final_state is None:
        raise ValueError("empty trajectory")
    if traj.termination == Termination.DIVERGED:
        raise ClassificationRefused(traj.termination, "trajectory diverged")
    y = np.asarray(traj.final_state, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ClassificationRefused(traj.termination, "final state is not finite")
    B, R = y[traj.labels.index("B")], y[traj.labels.index("R")]
    margin = float(R - B)
    if margin > draw_threshold:
        kind = OutcomeKind.RED_VICTORY
    elif margin < -draw_threshold:
        kind = OutcomeKind.BLUE_VICTORY
    else:
        kind = OutcomeKind.DRAW
    return Outcome(kind, margin, y.copy())


def _default_reference(field: str, params: ModelParams | None):
    if params is None:
        raise ValueError("either reference or params must be given")
    side = {"B": params.capacity_B, "R": params.capacity_R}
    if field not in side:
        raise ValueError(f"no default reference for component {field!r}")
    return float(side[field])


def count_level_periods(x, reference: float, prominence_floor: float) -> int:
    """Count completed oscillations of a sampled signal about a level.

    A period is a downward crossing of ``reference`` that follows at least one
    upward crossing. Excursions to one side whose peak distance from the
    level stays below ``prominence_floor`` are merged into their neighbours,
    except for the opening stretch, which fixes the starting side.
    """
    d = np.asarray(x, dtype=float) - reference
    d = d[np.isfinite(d)]
    if d.size < 2:
        return 0
    above = d > 0
    edges = np.flatnonzero(above[1:] != above[:-1]) + 1
    starts = np.r_[0, edges]
    amp = np.maximum.reduceat(np.abs(d), starts)
    keep = amp >= prominence_floor
    keep[0] = True
    sides = above[starts][keep]
    # consecutive kept stretches on the same side are one excursion
    sides = sides[np.r_[True, sides[1:] != sides[:-1]]]
    count, seen_up = 0, False
    for a, b in zip(sides[:-1], sides[1:]):
        if b and not a:
            seen_up = True
        elif a and not b and seen_up:
            count += 1
    return count


def count_periods(traj: Trajectory, field: str = "R", reference: float | None = None, *,
                  params: ModelParams | None = None,
                  prominence_floor: float | None = None) -> int:
    """Number of completed oscillation periods of one component.

    Parameters
    ----------
    traj : Trajectory
    field : str
        Component label, e.g. ``"R"`` or ``"B"``.
    reference : float, optional
        Crossing level. Defaults to the carrying capacity of the matching side
        taken from ``params``.
    params : ModelParams, optional
    prominence_floor : float, optional
        Minimum excursion counted; defaults to ``1e-3 * |reference|``.
    """
    if reference is None:
        reference = _default_reference(field, params)
    if not np.isfinite(reference):
        raise ValueError("reference must be finite")
    if prominence_floor is None:
        prominence_floor = PROMINENCE_FRACTION * abs(reference)
    if len(traj) == 0:
        return 0
    return count_level_periods(traj.component(field), reference, prominence_floor)


def _green(traj: Trajectory) -> np.ndarray:
    return traj.component("g") + traj.component("gamma") + traj.component("Gamma")


def conservation_residual(traj: Trajectory) -> float:
    """Largest deviation of total Green from its initial value."""
    if len(traj) == 0:
        return 0.0
    G = _green(traj)
    return float(np.max(np.abs(G - G[0])))


def green_decay_rate(states, p: ModelParams) -> np.ndarray:
    """Analytic ``-dG/dt`` of the contributor model at each state."""
    y = np.asarray(states, dtype=float)
    g, ga = y[..., 2], y[..., 3]
    return p.transfer_B * ga * smooth_step(ga, p.step) + p.transfer_R * g * smooth_step(g, p.step)


def green_decay_residual(traj: Trajectory, p: ModelParams) -> float:
    """Largest mismatch between the finite-difference rate of total Green and
    the analytic decay identity, over interior samples."""
    if len(traj) < 3:
        raise ValueError("need at least 3 samples for central differences")
    G = _green(traj)
    t = traj.times
    dG = (G[2:] - G[:-2]) / (t[2:] - t[:-2])
    return float(np.max(np.abs(dG + green_decay_rate(traj.states[1:-1], p))))
