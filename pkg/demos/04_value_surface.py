"""
The extended value function and its hedge
=========================================

Builds U(t, b, b*) from the critical solution, checks the heat equation, the
boundary identity beyond t0 and the failure of concavity along Brownian
increments.
"""
import warnings

import numpy as np

from bdgsharp.critical import ScanResolutionWarning, bounded_solution, find_regime_interval
from bdgsharp.extension import (ExtendedValue, HedgeEvaluator, boundary_derivatives,
                                concavity_search, eval_extended, heat_residual, hedge_integrand)

warnings.simplefilter("ignore", ScanResolutionWarning)
C = 1.2726806640625
iv = find_regime_interval(C, search_range=(0.85, 0.95))
ev = ExtendedValue(bounded_solution(C, "lower", interval=iv))
print("critical pasting point", ev.t0)

he = HedgeEvaluator(ev)
for t in (0.25, 0.5, 1.0, 1.5):
    row = [eval_extended(ev, t, b, 1.0) for b in (0.0, 0.5, 1.0)]
    print(f"t={t}: U(b=0,.5,1) = {np.round(row, 5)}  H(b=.5) = {hedge_integrand(he, t, 0.5, 1.0):+.5f}")

print("heat residual", heat_residual(ev, 0.5, 0.3, 1.0))
db, dbs = boundary_derivatives(ev, 1.3)
print("db + db* =", db + dbs, "vs -C =", -C)

best = concavity_search(ev)
print("largest concavity margin", best)
