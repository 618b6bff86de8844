"""Supporter model: who wins as the Green carrying capacity changes.

Runs both starting states at two capacities, prints the winner and the
Green conservation residual, and checks the result against the closed-form
annihilation threshold.
"""
import numpy as np

from advdyn import theory
from advdyn.analysis import classify_outcome, conservation_residual
from advdyn.core import ModelParams
from advdyn.integrator import IntegratorConfig, integrate
from advdyn.models import supporter_field

STARTS = {"blue ahead": [2.0, 1.0, 1.0, 1.0, 3.0], "even": [1.5, 1.5, 1.0, 2.0, 3.0]}


def main():
    cfg = IntegratorConfig(t_end=50)
    for label, y0 in STARTS.items():
        for kc in (2.0, 1.0):
            p = ModelParams(lethality_R=1, lethality_B=1, capacity_R=kc, capacity_B=kc)
            tr = integrate(supporter_field(p), y0, cfg)
            out = classify_outcome(tr)
            print(f"{label:>10}  kC={kc:g}  winner={out.kind.value:<5} margin={out.margin:+.4f}  "
                  f"|G-G0|={conservation_residual(tr):.1e}")

    B0, g0, G0 = 1.5, 1.0, 5.0
    print("\nannihilation threshold on kC for symmetric fights (B0=1.5, g0=1, G0=5)")
    for kl in (2.0, 5.0, 10.0, 20.0):
        exact = theory.annihilation_threshold(B0, kl, G0, g0)
        approx = theory.annihilation_threshold_approx(B0, kl, G0, g0)
        print(f"  kL={kl:>4g}  exact={exact:.4f}  large-kL={approx.value:.4f}  "
              f"(valid: {approx.valid})")


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
