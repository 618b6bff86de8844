"""Blue/Red/Green adversarial population dynamics: models, integration,
parameter sweeps and closed-form predictors."""

__version__ = "0.1.0"

from .core import (ModelParams, PopulationState, SmoothStepParams,  # noqa: E402
                   smooth_step, support_modulation)
from .integrator import IntegratorConfig, Termination, Trajectory, integrate  # noqa: E402

__all__ = [
    "ModelParams", "PopulationState", "SmoothStepParams", "smooth_step",
    "support_modulation", "IntegratorConfig", "Termination", "Trajectory",
    "integrate", "__version__",
]
