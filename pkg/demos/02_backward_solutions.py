"""
Backward solutions of the integro-differential equation
=======================================================

Below the critical constant every pasting point gives a solution that falls
through the floor; slightly above it a band of pasting points escapes upward.
Grids are written to CSV for plotting.
"""
from pathlib import Path

import numpy as np

from bdgsharp.oide import SolverParams, pasting_gap, solve

out = Path("demo_output")
out.mkdir(exist_ok=True)

for C in (1.25, 1.274):
    print(f"C = {C}")
    for t0 in np.linspace(0.8, 1.0, 9):
        g = solve(SolverParams(C=C, t0=float(t0)))
        g.to_csv(out / f"solution_C{C}_t0{t0:.3f}.csv")
        print(f"  t0={t0:.3f}  {g.regime.value:<14} t_end={g.t_end:.4f} "
              f"U(t_end)={g.us[-1]:+.4f}  kink={pasting_gap(g):+.4f}")
