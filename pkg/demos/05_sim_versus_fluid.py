"""
Simulation versus fluid limit
=============================

Start the fluid from each replica's own history and measure the running
deviation g(t) together with the relative error in the tip count.
"""

from pathlib import Path

from tangle_fluid import fluid, harness, sim, validate_params
from tangle_fluid.params import derive_replica_seed
from tangle_fluid.svg import line_chart

out = Path("demo_output")
out.mkdir(exist_ok=True)

params = validate_params(dict(epsilon=0.05, batch_size=20, delays=[1, 2],
                              probs=[0.5, 0.5], horizon=50, seed=7))

report = harness.compare(params, 5, delta=1.5)
for r in report.replicas:
    print(f"replica {r.index}: g(T)={r.gT:.3f} (F {r.comp_F:.3f}, L {r.comp_L:.3f}, "
          f"W {r.comp_W:.3f})  sup |L/lambda - l|/l = {r.rel_L_sup:.3f}")
t = report.tail
print(f"P(g(T) > {t.delta}) = {t.p_hat:.2f}, Wilson 95% [{t.low:.2f}, {t.high:.2f}]")

# overlay of one replica, in the format of a tip-count figure
traj = sim.run(params, derive_replica_seed(params.seed, 0))
series = fluid.integrate(params, params.horizon, fluid.FromSim(traj))
c = traj.counts()
line_chart([("L/lambda", c["tick"] * params.epsilon, c["L"] / params.lam),
            ("l", series.t, series.l)],
           out / "sim_vs_fluid.svg", title="lambda=400, N=20", ylabel="tips / lambda")
