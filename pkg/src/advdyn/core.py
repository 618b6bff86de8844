"""Shared numeric primitives: parameter bundles, population states, the
smooth extinction step and the support-modulation factor.

Every function here accepts plain floats or numpy arrays and broadcasts, so
the same code serves a single trajectory and a batch of sweep cells.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

#: Absolute slack allowed below zero in population components.
POSITIVITY_TOL = 1e-6

#: Smallest admissible standing population in the modulation denominator.
MIN_STANDING_POPULATION = 1e-6

STATE_FIELDS = ("B", "R", "g", "gamma", "Gamma")


def _all(cond) -> bool:
    return bool(np.all(cond))


@dataclass(frozen=True)
class SmoothStepParams:
    """Shape of the tanh step that pins populations at zero.

    The transition is centred at ``extinction_offset_scale / steepness``.
    """

    steepness: float = 1e6
    extinction_offset_scale: float = 4.0

    def __post_init__(self):
        if not _all(np.asarray(self.steepness) > 0):
            raise ValueError(f"steepness must be > 0, got {self.steepness!r}")
        if not _all(np.asarray(self.extinction_offset_scale) > 0):
            raise ValueError(
                "extinction_offset_scale must be > 0, "
                f"got {self.extinction_offset_scale!r}")

    @property
    def threshold(self):
        """Population value at which the step equals one half."""
        return self.extinction_offset_scale / self.steepness


@dataclass(frozen=True)
class ModelParams:
    """Coefficients shared by the supporter and contributor models.

    Fields may be floats or equal-length numpy arrays (one entry per sweep
    cell). Lethalities only enter the supporter model and transfers only the
    contributor model.
    """

    lethality_R: float = 1.0
    lethality_B: float = 1.0
    transfer_B: float = 1.0
    transfer_R: float = 1.0
    capacity_R: float = 1.0
    capacity_B: float = 1.0
    standing_population: float = 1.0
    step: SmoothStepParams = field(default_factory=SmoothStepParams)

    def __post_init__(self):
        for name in ("lethality_R", "lethality_B", "transfer_B", "transfer_R"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not _all(np.isfinite(value)) or not _all(value >= 0):
                raise ValueError(f"{name} must be finite and >= 0")
        for name in ("capacity_R", "capacity_B"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not _all(np.isfinite(value)) or not _all(value > 0):
                raise ValueError(f"{name} must be finite and > 0")
        standing = np.asarray(self.standing_population, dtype=float)
        if not _all(standing >= MIN_STANDING_POPULATION):
            raise ValueError(
                "standing_population must be >= "
                f"{MIN_STANDING_POPULATION:g}; values near zero make the "
                "modulation factor blow up")

    def swapped(self) -> "ModelParams":
        """Exchange the Blue and Red roles."""
        return replace(
            self,
            lethality_R=self.lethality_B, lethality_B=self.lethality_R,
            transfer_B=self.transfer_R, transfer_R=self.transfer_B,
            capacity_R=self.capacity_B, capacity_B=self.capacity_R,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: _plain(v) for k, v in d.items()} | {
            "step": {k: _plain(v) for k, v in d["step"].items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        d = dict(d)
        step = d.pop("step", None)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        if step is not None:
            step = step if isinstance(step, SmoothStepParams) else SmoothStepParams(**step)
            d["step"] = step
        return cls(**d)


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass(frozen=True)
class PopulationState:
    """Blue, Red and the three Green sub-populations at one instant.

    ``g`` supports Red, ``gamma`` supports Blue, ``Gamma`` is neutral.
    """

    B: float
    R: float
    g: float
    gamma: float
    Gamma: float

    def __post_init__(self):
        arr = self.as_array()
        if not _all(np.isfinite(arr)):
            raise ValueError("population state must be finite")
        if not _all(arr >= -POSITIVITY_TOL):
            raise ValueError(
                f"population components must be >= -{POSITIVITY_TOL:g}: {arr}")

    def __array__(self, dtype=None, copy=None):
        return self.as_array() if dtype is None else self.as_array().astype(dtype)

    def as_array(self) -> np.ndarray:
        return np.array([self.B, self.R, self.g, self.gamma, self.Gamma], dtype=float)

    @classmethod
    def from_array(cls, y) -> "PopulationState":
        y = np.asarray(y, dtype=float)
        if y.shape != (5,):
            raise ValueError(f"expected a 5-vector, got shape {y.shape}")
        return cls(*(float(v) for v in y))

    def total_green(self) -> float:
        return self.g + self.gamma + self.Gamma

    def swapped(self) -> "PopulationState":
        return PopulationState(self.R, self.B, self.gamma, self.g, self.Gamma)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in STATE_FIELDS}


def smooth_step(x, p: SmoothStepParams = SmoothStepParams()):
    """Smooth Heaviside-like step, ``0.5 * (tanh(a * (x - c / a)) + 1)``.

    Parameters
    ----------
    x : float or ndarray
        Population value(s).
    p : SmoothStepParams
        ``a`` is ``p.steepness`` and ``c`` is ``p.extinction_offset_scale``.

    Returns
    -------
    float or ndarray in [0, 1]
    """
    a = p.steepness
    return 0.5 * (np.tanh(a * (x - p.extinction_offset_scale / a)) + 1.0)


def support_modulation(supporting, detracting, standing=1.0):
    """Combat-effectiveness factor ``supporting / (detracting + standing)``."""
    denom = np.asarray(detracting) + standing
    if not _all(denom > 0):
        raise ValueError("detracting + standing population must be > 0")
    return supporting / denom
