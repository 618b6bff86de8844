"""Contributor model: a symmetric stalemate that oscillates until Green runs dry.

Integrates the reduced three-variable system, counts oscillations about the
carrying capacity and compares them with the linearised period and count.
"""
import numpy as np

from advdyn import theory
from advdyn.analysis import count_level_periods
from advdyn.integrator import IntegratorConfig, integrate
from advdyn.models import reduced_contributor_field

B0, G0_SMALL, GAMMA0 = 1.0, 3.0, 20.0


def main():
    for kc in (0.5, 1.0, 2.0, 3.0):
        tr = integrate(reduced_contributor_field(1.0, kc), [B0, G0_SMALL, GAMMA0],
                       IntegratorConfig(t_end=50), labels=("B", "g", "Gamma"))
        B = tr.states[:, 0]
        n = count_level_periods(B, kc, 1e-3 * kc)
        t_f = theory.stalemate_timescale(G0_SMALL, GAMMA0, kc)
        period = theory.oscillation_period(1.0, kc, GAMMA0)
        count = theory.oscillation_count(G0_SMALL, GAMMA0, 1.0, kc)
        print(f"kC={kc:<4g} t_f={t_f:6.2f}  periods about kC: {n}  "
              f"linear period={period.value:.3f}  linear count={count.value:.2f}  "
              f"B range=[{B.min():.3f}, {B.max():.3f}]")


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
