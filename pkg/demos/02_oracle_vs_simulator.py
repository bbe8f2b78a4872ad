"""
Exact one-tick expectations
===========================

Enumerate every type assignment and parent choice on a tiny tip set, then
compare with simulator averages and the large-L approximations.
"""

import numpy as np

from tangle_fluid import sim
from tangle_fluid.oracle import FREE, enumerate_expectations, instance, leading_order_expectations
from tangle_fluid.params import make_rng

# two free tips and one arrival: each of the 4 parent pairs hits 1 or 2 tips
inst = instance([FREE, FREE], 1, [1.0], [1])
print("E[F_1] exact:", enumerate_expectations(inst).F[0])
print("E[F_1] leading order:", leading_order_expectations(inst).F[0])

# a free tip and a type-2 pending tip that a type-1 POW can overtake
inst = instance([FREE, FREE, (1, 2)], 2, [0.4, 0.6], [1, 3])
exact = enumerate_expectations(inst)
lead = leading_order_expectations(inst)

params = inst.to_params()
free, pending = inst.free_and_pending()
rng = make_rng(1)
trials = 20_000
F = np.zeros((trials, 2))
J = np.zeros(trials)
for t in range(trials):
    state = sim.state_from_tips(params, free, pending)
    _, rec = sim.step(state, rng)
    F[t] = rec.free_selected
    J[t] = rec.jump(1, 0, 2)

for k in range(2):
    print(f"F_{k + 1}: exact {float(exact.F[k]):.4f}  simulated {F[:, k].mean():.4f}"
          f"  leading order {float(lead.F[k]):.4f}")
print(f"J_21(2): exact {float(exact.J[(1, 0, 2)]):.4f}  simulated {J.mean():.4f}"
      f"  leading order {float(lead.J[(1, 0, 2)]):.4f}")

# the gap to the leading order shrinks as the tip set grows
for L in (2, 4, 6):
    inst = instance([FREE] * (L // 2) + [(0, 0)] * (L // 2), 1, [1.0], [1])
    gap = enumerate_expectations(inst).F[0] - leading_order_expectations(inst).F[0]
    print(f"L={L}: exact minus leading order = {gap}")
