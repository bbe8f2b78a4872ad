"""
Equilibrium of the fluid limit
==============================

Solve for the stationary tip level with one, two and three POW delays and
look at the pending-tip profiles.
"""

from pathlib import Path

from tangle_fluid import equilibrium_general, equilibrium_m2
from tangle_fluid.svg import line_chart

out = Path("demo_output")
out.mkdir(exist_ok=True)

# one delay: l = 2 h exactly
print("M=1, h=1.5:", equilibrium_general(delays=(1.5,), probs=(1.0,)).l_star)

# two delays: closed-form equation and the general solver agree
a = equilibrium_m2(delays=(1, 2), probs=(0.5, 0.5), dt=0.01)
b = equilibrium_general(delays=(1, 2), probs=(0.5, 0.5), dt=0.01)
print("M=2 transcendental equation:", a.l_star, "residual", a.residual)
print("M=2 general solver:         ", b.l_star)

# w_1 = p_1 in the closed form ignores inflow from type-2 jumps
print("boundary-consistent w_1 minus p_1:", a.notes["w1_boundary_gap"])

# three delays
c = equilibrium_general(delays=(1, 2, 3), probs=(1 / 3, 1 / 3, 1 / 3), dt=0.01)
print("M=3:", c.l_star, "boundary values", [round(x, 4) for x in c.notes["boundary"]])

line_chart([(f"w_{i + 1}", g, w) for i, (g, w) in enumerate(zip(c.u_grid, c.profiles))],
           out / "profiles.svg", title="stationary profiles, M=3", xlabel="u", ylabel="w_i(u)")
