"""Vector fields for the supporter and contributor models and for the
reduced, perturbative and integro-differential systems derived from them.

Each public ``*_rhs`` function validates its input and returns the time
derivative as an ndarray. The matching ``*_field`` factories return an
unchecked ``f(t, y)`` closure for the integrator; ``y`` may carry leading
batch dimensions, with the state components on the last axis.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from .core import ModelParams, smooth_step

#: Exponent ceiling for the Green-reconstruction exponential.
EXPONENT_CAP = 700.0


def _finite(y, what="state"):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError(f"non-finite {what}: {y}")
    return y


def _cols(y):
    return [y[..., i] for i in range(y.shape[-1])]


class _Vector:
    def __array__(self, dtype=None, copy=None):
        arr = np.array(astuple(self), dtype=float)
        return arr if dtype is None else arr.astype(dtype)

    def as_array(self) -> np.ndarray:
        return np.asarray(self)

    @classmethod
    def from_array(cls, y):
        return cls(*(float(v) for v in np.asarray(y, dtype=float)))


@dataclass(frozen=True)
class ReducedSupporterState(_Vector):
    """Symmetric supporter state with ``R = B`` and ``gamma = g``."""
    B: float
    g: float


@dataclass(frozen=True)
class ReducedContributorState(_Vector):
    """Symmetric contributor state with ``R = B`` and ``gamma = g``."""
    B: float
    g: float
    Gamma: float


@dataclass(frozen=True)
class PerturbationState(_Vector):
    """Contributor state written as ``B = capacity + eps``."""
    eps: float
    g: float
    Gamma: float


@dataclass(frozen=True)
class AlphaState(_Vector):
    """Running integral of eps, eps itself, and the running integral of eps**2."""
    alpha: float
    alpha_dot: float
    quad_integral: float

    def __post_init__(self):
        if self.quad_integral < 0:
            raise ValueError("quad_integral must be >= 0")


# -- full models ------------------------------------------------------------

def supporter_field(p: ModelParams):
    kLR, kLB = p.lethality_R, p.lethality_B
    kCR, kCB = p.capacity_R, p.capacity_B
    s0, step = p.standing_population, p.step

    def f(t, y):
        B, R, g, ga, Ga = y[..., 0], y[..., 1], y[..., 2], y[..., 3], y[..., 4]
        th = smooth_step(y[..., :4], step)
        out = np.empty(np.shape(y))
        out[..., 0] = -kLR * (g / (ga + s0)) * R * th[..., 0]
        out[..., 1] = -kLB * (ga / (g + s0)) * B * th[..., 1]
        dg = g * Ga * R * (1.0 - R / kCR * th[..., 2])
        dga = ga * Ga * B * (1.0 - B / kCB * th[..., 3])
        out[..., 2] = dg
        out[..., 3] = dga
        out[..., 4] = -dg - dga
        return out

    return f


def contributor_field(p: ModelParams):
    kTB, kTR = p.transfer_B, p.transfer_R
    kCR, kCB = p.capacity_R, p.capacity_B
    step = p.step

    def f(t, y):
        B, R, g, ga, Ga = y[..., 0], y[..., 1], y[..., 2], y[..., 3], y[..., 4]
        th = smooth_step(y[..., :4], step)
        thg, thga = th[..., 2], th[..., 3]
        # contributors feeding each side
        to_red = kTR * g * thg
        to_blue = kTB * ga * thga
        flow_g = g * Ga * R * (1.0 - R / kCR * thg)
        flow_ga = ga * Ga * B * (1.0 - B / kCB * thga)
        out = np.empty(np.shape(y))
        out[..., 0] = to_blue - R * th[..., 0]
        out[..., 1] = to_red - B * th[..., 1]
        out[..., 2] = flow_g - to_red
        out[..., 3] = flow_ga - to_blue
        out[..., 4] = -flow_g - flow_ga
        return out

    return f


def supporter_rhs(s, p: ModelParams) -> np.ndarray:
    """Time derivative of (B, R, g, gamma, Gamma) in the supporter model.

    Green is conserved: the last component is computed as minus the sum of
    the two supporter derivatives.
    """
    return supporter_field(p)(0.0, _finite(s))


def contributor_rhs(s, p: ModelParams) -> np.ndarray:
    """Time derivative of (B, R, g, gamma, Gamma) in the contributor model.

    Total Green decays at the rate at which contributors are transferred,
    ``transfer_B * gamma * step(gamma) + transfer_R * g * step(g)``.
    """
    return contributor_field(p)(0.0, _finite(s))


# -- reduced symmetric systems ---------------------------------------------

def reduced_supporter_field(lethality_R, capacity_R, G0):
    def f(t, y):
        B, g = _cols(y)
        return np.stack([
            -lethality_R * g / (1.0 + g) * B,
            g * (G0 - 2.0 * g) * B * (1.0 - B / capacity_R),
        ], axis=-1)
    return f


def reduced_supporter_rhs(s, lethality_R, capacity_R, G0) -> np.ndarray:
    """Supporter model on the symmetric manifold, step factors dropped."""
    y = _finite(s)
    if G0 <= 0:
        raise ValueError("G0 must be > 0")
    if np.any(y[..., 1] == -1.0):
        raise ValueError("g = -1 is a pole of the modulation factor")
    return reduced_supporter_field(lethality_R, capacity_R, G0)(0.0, y)


def reduced_contributor_field(transfer_B, capacity_R):
    def f(t, y):
        B, g, Ga = _cols(y)
        flow = g * Ga * B * (1.0 - B / capacity_R)
        return np.stack([-B + transfer_B * g, flow - transfer_B * g, -2.0 * flow], axis=-1)
    return f


def reduced_contributor_rhs(s, transfer_B, capacity_R) -> np.ndarray:
    """Contributor model on the symmetric manifold, step factors dropped."""
    return reduced_contributor_field(transfer_B, capacity_R)(0.0, _finite(s))


def perturbation_field(transfer_B, capacity_R):
    def f(t, y):
        eps, g, Ga = _cols(y)
        return np.stack([
            -capacity_R - eps + transfer_B * g,
            -g * Ga * eps - transfer_B * g,
            2.0 * g * Ga * eps,
        ], axis=-1)
    return f


def perturbation_rhs(s, transfer_B, capacity_R) -> np.ndarray:
    """Reduced contributor system linearised in ``eps = B - capacity_R``."""
    return perturbation_field(transfer_B, capacity_R)(0.0, _finite(s))


# -- second-order forms in alpha = integral of eps ---------------------------

def alpha_exponent(y, transfer_B, capacity_R, memory=True):
    """Exponent of the exponential that reconstructs Gamma from alpha."""
    a, ad, q = _cols(np.asarray(y))
    inner = capacity_R * a + q if memory else capacity_R * a
    return (ad * ad + 2.0 * inner) / transfer_B


def _forcing(t, transfer_B, capacity_R, g0, Gamma0):
    return transfer_B * (g0 + 0.5 * Gamma0 - capacity_R * t) - capacity_R


def _alpha_field(transfer_B, capacity_R, g0, Gamma0, memory):
    def f(t, y):
        a, ad, q = _cols(y)
        expo = np.minimum(alpha_exponent(y, transfer_B, capacity_R, memory), EXPONENT_CAP)
        add = (_forcing(t, transfer_B, capacity_R, g0, Gamma0)
               - 0.5 * transfer_B * Gamma0 * np.exp(expo)
               - (transfer_B + 1.0) * ad - transfer_B * a)
        return np.stack([ad, add, ad * ad], axis=-1)
    return f


def alpha_integro_field(transfer_B, capacity_R, g0, Gamma0):
    return _alpha_field(transfer_B, capacity_R, g0, Gamma0, memory=True)


def alpha_forced_autonomous_field(transfer_B, capacity_R, g0, Gamma0):
    return _alpha_field(transfer_B, capacity_R, g0, Gamma0, memory=False)


def alpha_linear_field(transfer_B, capacity_R, g0, Gamma0):
    def f(t, y):
        a, ad, q = _cols(y)
        add = (transfer_B * (g0 - capacity_R * t) - capacity_R
               - (transfer_B + 1.0) * ad - (transfer_B + capacity_R * Gamma0) * a)
        return np.stack([ad, add, ad * ad], axis=-1)
    return f


def alpha_integro_rhs(s, transfer_B, capacity_R, g0, Gamma0, t=0.0) -> np.ndarray:
    """Derivative of (alpha, alpha_dot, quad_integral) with the memory term.

    The exponent is clipped at ``EXPONENT_CAP``; use :func:`alpha_overflow`
    to detect that the clip was reached.
    """
    return alpha_integro_field(transfer_B, capacity_R, g0, Gamma0)(t, _finite(s))


def alpha_forced_autonomous_rhs(s, transfer_B, capacity_R, g0, Gamma0, t=0.0) -> np.ndarray:
    """As :func:`alpha_integro_rhs` with the memory integral left out of the exponent."""
    return alpha_forced_autonomous_field(transfer_B, capacity_R, g0, Gamma0)(t, _finite(s))


def alpha_linear_rhs(s, transfer_B, capacity_R, g0, Gamma0, t=0.0) -> np.ndarray:
    """Linear constant-coefficient oscillator obtained by dropping eps**2 and
    linearising the exponential in alpha."""
    return alpha_linear_field(transfer_B, capacity_R, g0, Gamma0)(t, _finite(s))


def alpha_overflow(transfer_B, capacity_R, memory=True):
    """Divergence guard for the integrator: True where the exponent hits the cap."""
    def guard(t, y):
        return alpha_exponent(y, transfer_B, capacity_R, memory) >= EXPONENT_CAP
    return guard


def alpha_initial_state() -> AlphaState:
    return AlphaState(0.0, 0.0, 0.0)


def perturbation_from_alpha(t, y, transfer_B, capacity_R, g0, Gamma0):
    """Recover (eps, g, Gamma) from alpha-form samples.

    Gamma follows from the exponential relation and g from the summed
    balance ``eps + g + Gamma/2 = g0 + Gamma0/2 - capacity*t - alpha``.
    """
    y = np.asarray(y, dtype=float)
    a, ad, _ = _cols(y)
    expo = np.minimum(alpha_exponent(y, transfer_B, capacity_R, True), EXPONENT_CAP)
    Gamma = Gamma0 * np.exp(expo)
    g = g0 + 0.5 * Gamma0 - capacity_R * np.asarray(t) - a - ad - 0.5 * Gamma
    return np.stack([ad, g, Gamma], axis=-1)


def linear_characteristic_discriminant(transfer_B, capacity_R, Gamma0):
    """Discriminant of the characteristic polynomial of the linear alpha equation."""
    return (transfer_B - 1.0) ** 2 - 4.0 * capacity_R * Gamma0
