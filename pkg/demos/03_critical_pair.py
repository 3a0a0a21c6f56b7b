"""
Locating the critical pair
==========================

The PlusInfinity band (t1, t2) shrinks as C decreases and closes at the
critical constant. This takes a few minutes on one core.
"""
import warnings

from bdgsharp.critical import ScanResolutionWarning, find_critical, find_regime_interval

warnings.simplefilter("ignore", ScanResolutionWarning)

for C in (1.30, 1.28, 1.274, 1.2728):
    iv = find_regime_interval(C, search_range=(0.6, 1.3))
    if iv is None:
        print(f"C={C}: no band")
    else:
        print(f"C={C}: band ({iv.t1:.4f}, {iv.t2:.4f}) width {iv.width:.4f}")

res = find_critical(1.0)
print(res.to_json())
