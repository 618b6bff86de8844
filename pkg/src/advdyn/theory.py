"""Closed-form predictors for the symmetric reductions.

Supporter side: the annihilation threshold on the carrying capacity and the
conserved relation between B and g. Contributor side: the stalemate
timescale and the period and count of the linearised oscillations.

Predictors that are only meaningful inside an applicability window return a
:class:`TheoryPrediction` carrying a validity flag instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class TheoryPrediction:
    value: float
    valid: bool
    validity_note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _log_ratio(G0, g0):
    if not (G0 > 2 * g0 > 0):
        raise ValueError(f"need G0 > 2*g0 > 0, got G0={G0!r}, g0={g0!r}")
    return math.log(G0 * (1 + g0) / (G0 - 2 * g0))


def rho(lethality_R, G0, g0) -> float:
    """``kL / (G0 + 2) * ln(G0 (1 + g0) / (G0 - 2 g0))``."""
    if lethality_R < 0:
        raise ValueError("lethality_R must be >= 0")
    return lethality_R / (G0 + 2) * _log_ratio(G0, g0)


def annihilation_threshold(B0, lethality_R, G0, g0) -> float:
    """Critical carrying capacity ``B0 + rho - sqrt(rho (rho + 2 B0))``.

    Capacities above it let the symmetric supporter system run B down to
    zero. Evaluated in the cancellation-free form
    ``B0**2 / (B0 + rho + sqrt(rho (rho + 2 B0)))``.
    """
    if not B0 > 0:
        raise ValueError("B0 must be > 0")
    r = rho(lethality_R, G0, g0)
    return B0 * B0 / (B0 + r + math.sqrt(r * (r + 2 * B0)))


def annihilation_threshold_approx(B0, lethality_R, G0, g0) -> TheoryPrediction:
    """Leading term of the threshold for large lethality,
    ``B0**2 (G0 + 2) / (2 kL ln(...))``; valid while ``|2 B0 / rho| < 1``."""
    if not B0 > 0:
        raise ValueError("B0 must be > 0")
    L = _log_ratio(G0, g0)
    r = rho(lethality_R, G0, g0)
    if r == 0:
        return TheoryPrediction(math.inf, False, "rho = 0: expansion undefined")
    value = B0 * B0 * (G0 + 2) / (2 * lethality_R * L)
    ratio = abs(2 * B0 / r)
    valid = ratio < 1
    note = f"|2 B0 / rho| = {ratio:.6g}" + (" < 1" if valid else " >= 1: expansion not valid")
    return TheoryPrediction(value, valid, note)


@dataclass(frozen=True)
class AnnihilationVerdict:
    annihilates: bool
    branch: str          # "capacity_at_least_B0" or "threshold"
    threshold: float


def annihilation_verdict(B0, lethality_R, capacity_R, G0, g0) -> AnnihilationVerdict:
    """Whether the symmetric supporter system drives B to zero.

    With ``B0 <= capacity`` the supporters never defect and B always decays;
    otherwise the capacity must exceed :func:`annihilation_threshold`.
    The branch that decided is reported.
    """
    thr = annihilation_threshold(B0, lethality_R, G0, g0)
    if B0 <= capacity_R:
        return AnnihilationVerdict(True, "capacity_at_least_B0", thr)
    return AnnihilationVerdict(capacity_R > thr, "threshold", thr)


def h_of_B(B, B0, g0, G0, lethality_R, capacity_R):
    """Auxiliary function of the conserved B-g relation."""
    if not G0 > 2 * g0:
        raise ValueError("need G0 > 2*g0")
    B = np.asarray(B, dtype=float)
    expo = (G0 + 2) / (2 * lethality_R * capacity_R) * (B - B0) * (B + B0 - 2 * capacity_R)
    return (1 + g0) / (G0 - 2 * g0) * np.exp(expo)


def g_of_B(B, B0, g0, G0, lethality_R, capacity_R):
    """Supporter count g on the symmetric trajectory through (B0, g0),
    as a function of B: ``(G0 h - 1) / (1 + 2 h)``."""
    h = h_of_B(B, B0, g0, G0, lethality_R, capacity_R)
    if np.any(h <= -0.5):
        raise ValueError("h(B) <= -1/2: outside the relation's domain")
    g = (G0 * h - 1) / (1 + 2 * h)
    return float(g) if np.ndim(g) == 0 else g


def stalemate_timescale(g0, Gamma0, capacity_R) -> float:
    """Time ``(g0 + Gamma0/2) / kC`` after which oscillations die out."""
    if not capacity_R > 0:
        raise ValueError("capacity_R must be > 0")
    return (g0 + 0.5 * Gamma0) / capacity_R


def discriminant(transfer_B, capacity_R, Gamma0) -> float:
    return (transfer_B - 1) ** 2 - 4 * capacity_R * Gamma0


def oscillation_condition(transfer_B, capacity_R, Gamma0) -> bool:
    """``kT < 1 + 2 sqrt(kC Gamma0)`` (strict)."""
    if capacity_R * Gamma0 < 0:
        raise ValueError("capacity_R * Gamma0 must be >= 0")
    return bool(transfer_B < 1 + 2 * math.sqrt(capacity_R * Gamma0))


def _oscillatory(transfer_B, capacity_R, Gamma0):
    cond = oscillation_condition(transfer_B, capacity_R, Gamma0)
    d = discriminant(transfer_B, capacity_R, Gamma0)
    if not cond:
        return False, f"kT >= 1 + 2 sqrt(kC Gamma0) = {1 + 2 * math.sqrt(capacity_R * Gamma0):.6g}"
    if d >= 0:
        return False, f"discriminant {d:.6g} >= 0: no oscillation"
    return True, f"discriminant {d:.6g} < 0"


def oscillation_period(transfer_B, capacity_R, Gamma0) -> TheoryPrediction:
    """``T = 4 pi / sqrt(|(kT - 1)**2 - 4 kC Gamma0|)`` of the linear oscillator."""
    d = discriminant(transfer_B, capacity_R, Gamma0)
    valid, note = _oscillatory(transfer_B, capacity_R, Gamma0)
    value = 4 * math.pi / math.sqrt(abs(d)) if d != 0 else math.inf
    return TheoryPrediction(value, valid, note)


def oscillation_count(g0, Gamma0, transfer_B, capacity_R) -> TheoryPrediction:
    """Number of linear-oscillator periods that fit in the stalemate timescale,
    ``(2 g0 + Gamma0) sqrt(|D|) / (8 pi kC)``."""
    t_f = stalemate_timescale(g0, Gamma0, capacity_R)
    period = oscillation_period(transfer_B, capacity_R, Gamma0)
    value = t_f / period.value if math.isfinite(period.value) else 0.0
    return TheoryPrediction(value, period.valid, period.validity_note)


def predict(*, B0, g0, Gamma0, lethality_R, capacity_R, transfer_B, G0=None) -> dict:
    """Bundle every predictor for one set of inputs.

    ``G0`` is the total Green of the symmetric supporter reduction and
    defaults to ``2 g0 + Gamma0``.
    """
    if G0 is None:
        G0 = 2 * g0 + Gamma0
    approx = annihilation_threshold_approx(B0, lethality_R, G0, g0)
    verdict = annihilation_verdict(B0, lethality_R, capacity_R, G0, g0)
    return {
        "input": {"B0": B0, "g0": g0, "Gamma0": Gamma0, "G0": G0,
                  "lethality_R": lethality_R, "capacity_R": capacity_R,
                  "transfer_B": transfer_B},
        "rho": rho(lethality_R, G0, g0),
        "threshold_exact": annihilation_threshold(B0, lethality_R, G0, g0),
        "threshold_approx": approx.to_dict(),
        "annihilation": {"predicted": verdict.annihilates, "branch": verdict.branch},
        "t_f": stalemate_timescale(g0, Gamma0, capacity_R),
        "oscillatory": oscillation_condition(transfer_B, capacity_R, Gamma0),
        "period": oscillation_period(transfer_B, capacity_R, Gamma0).to_dict(),
        "count": oscillation_count(g0, Gamma0, transfer_B, capacity_R).to_dict(),
    }
