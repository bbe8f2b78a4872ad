"""
Convergence in lambda
=====================

Grow lambda with N = lambda^(3/4) and watch the median deviation g(T) fall.
"""

from tangle_fluid import harness, validate_params

base = validate_params(dict(epsilon=0.25, batch_size=50, delays=[1, 2],
                            probs=[0.5, 0.5], horizon=20, seed=11))
study = harness.convergence_study(base, [100, 200, 400], replicas=10, delta=1.5)

# epsilon is snapped so that every delay and the horizon stay on the grid
for note in study.adjustments:
    print(note)
for row in study.rows:
    rep = row.report
    print(f"lambda={row.lam:>5}: N={row.params.batch_size:>3} epsilon={row.params.epsilon:.4f} "
          f"median g(T)={rep.median_gT:.3f} IQR={rep.iqr_gT:.3f} "
          f"P(g>1.5)={rep.tail.p_hat:.2f}")
print("strictly decreasing:", study.strictly_decreasing)
