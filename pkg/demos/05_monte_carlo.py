"""
Monte-Carlo view of the inequality
==================================

Ratios E[sqrt(tau)] / E[B*(tau)] for a few stopping rules, and the capped
square-root moments of the region hitting time on both sides of t0.
"""
import warnings

from bdgsharp import mc

warnings.simplefilter("ignore", mc.HorizonSaturationWarning)

for name, r in mc.run_battery(n_paths=100_000, dt=1e-4, seed=1).items():
    print(f"{name:<16} ratio={r.ratio:.4f} +- {r.std_error:.4f}  capped={r.tail_fraction:.3%}")

cfg = mc.PathConfig(dt=1e-3, horizon=1e4, n_paths=50_000, seed=2, geometric_from=1.0)
for thr in (0.7, 1.2):
    rows = mc.moment_dichotomy(thr, cfg, [10, 100, 1e3, 1e4])
    print(thr, [round(r.mean, 3) for r in rows])
