"""Effective viscous flux and the commutator G on a random state.

Builds a band-limited state, evaluates B, F and G, and checks the two
evaluation routes of G against each other.
"""

import numpy as np

from vkns2d import FluidState, Grid, Params
from vkns2d.diagnostics import commutator_G, desjardins_F, effective_viscous_flux, quantities_DYX
from vkns2d.spectral import band_limited_noise


def main():
    g = Grid(64)
    p = Params(mu=1.0, beta=2.0, gamma=2.0)
    f = band_limited_noise(g, np.random.default_rng(7), band=8, count=3)
    rho = 1 + 0.4 * f[0] / np.abs(f[0]).max()
    state = FluidState.from_velocity(g, 0.0, rho, f[1:])

    B = effective_viscous_flux(state, p)
    F = desjardins_F(state, p)
    D2, Y2, X2 = quantities_DYX(state, p)
    GA, GB = commutator_G(state, "A"), commutator_G(state, "B")
    print(f"mean B = {g.mean(B):+.3e}   |B|_2 = {g.norm(B):.4f}")
    print(f"F in [{F.min():.4f}, {F.max():.4f}]")
    print(f"D^2 = {D2:.4f}   Y^2 = {Y2:.4f}   X^2 = {X2:.4f}")
    print(f"|G|_inf = {np.abs(GA).max():.4f}   route A vs B: {np.abs(GA - GB).max():.1e}")


if __name__ == "__main__":
    main()
