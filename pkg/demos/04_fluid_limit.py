"""
Integrating the fluid limit
===========================

March the delayed recursions for f, l and the transport of w_i, starting
from a perturbed equilibrium, and check first-order convergence in dt.
"""

import numpy as np

from tangle_fluid import fluid, validate_params

params = validate_params(dict(epsilon=0.05, batch_size=20, delays=[1, 2],
                              probs=[0.5, 0.5], horizon=80))

# raise f and l by 50% of f* at time 0 and watch l relax
s = fluid.integrate(params, 80, fluid.EquilibriumPerturbed(0.5), dt=0.05)
print("l(t) every 10 time units:", np.round(s.l[::200], 4))
print("discrete equilibrium at dt=0.05:", fluid.discrete_equilibrium(params, 0.05))

# the pending level dt * sum(w) stays equal to l - f along the run
print("max |dt sum w - (l - f)|:", np.abs(s.w_total - (s.l - s.f)).max())

# halving dt halves the change in the end state
ends = []
for dt in (0.1, 0.05, 0.025):
    run = fluid.integrate(params, 10, fluid.EquilibriumPerturbed(0.2), dt=dt)
    ends.append(np.array([run.f[-1], run.l[-1]]))
    d = fluid.diagnostics(run)
    print(f"dt={dt}: f={run.f[-1]:.6f} l={run.l[-1]:.6f} xi={d.xi_hat:.4f} "
          f"gamma={d.gamma_hat:.4f} m={d.m_hat:.4f} w_residual={d.w_residual:.2e}")
print("Richardson ratio:", np.abs(ends[0] - ends[1]).max() / np.abs(ends[1] - ends[2]).max())

# a start with f = l leaves the admissible region
try:
    fluid.integrate(params, 5, fluid.Constants(0.01, 0.01))
except fluid.BlowUp as exc:
    print("rejected:", exc)
