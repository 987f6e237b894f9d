"""A run that is driven towards vacuum and aborts with a clear status.

Weak viscosity and a strong compressive velocity push the density below
the floor; the simulation stops with status ``vacuum-breach`` instead of
producing garbage.
"""

from vkns2d import Grid, InitConfig, Params, StepControl, initial_state, simulate


def main():
    p = Params(mu=0.01, beta=1.1, gamma=1.4)
    cfg = InitConfig(kind="random-band-limited", seed=1, band=4, rho_amplitude=1.5, u_amplitude=20.0)
    init = initial_state(Grid(32), cfg)
    print(f"initial density range [{init.rho.min():.3f}, {init.rho.max():.3f}]")
    res = simulate(init, p, StepControl(t_end=0.2, output_interval=0.1))
    print(f"status: {res.status} after {res.steps} steps (last good sample at t={res.state.t:.4g})")
    print(res.reason)


if __name__ == "__main__":
    main()
