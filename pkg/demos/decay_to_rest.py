"""Perturbed fluid relaxing to rest.

Runs the beta = gamma = 2 perturbation on a 64^2 grid and prints how the
density deviation, the velocity gradient and the energy evolve, together
with the running sup of the density and the energy budget.

    python3 demos/decay_to_rest.py [t_end]
"""

import sys

from vkns2d import Grid, InitConfig, Monitor, Params, StepControl, initial_state, simulate


def main(t_end=5.0):
    p = Params(mu=1.0, beta=2.0, gamma=2.0)
    init = initial_state(Grid(64), InitConfig(rho_amplitude=0.3, u_amplitude=0.5, mode=(1, 1)))
    mon = Monitor(p)
    res = simulate(init, p, StepControl(cfl=0.5, t_end=t_end, output_interval=0.5), mon)
    E0 = mon.records[0].E
    print(f"{'t':>5} {'|rho-1|_2':>11} {'|grad u|_2':>11} {'E':>10} {'E+diss-E0':>11} {'rho_hat':>8}")
    for r in mon.records:
        print(f"{r.t:5.1f} {r.rho_dev_L2:11.3e} {r.grad_u_L2:11.3e} {r.E:10.6f} "
              f"{r.E + r.dissipation - E0:11.2e} {r.rho_hat:8.4f}")
    print(f"{res.status} after {res.steps} steps")


if __name__ == "__main__":
    main(float(sys.argv[1]) if len(sys.argv) > 1 else 5.0)
