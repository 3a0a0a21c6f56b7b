"""
Hitting-time densities and corridor exits
=========================================

Tabulates f^h and g, checks their moments, and shows how E[sqrt(sigma^h)]
compares with h for small corridors.
"""
import numpy as np

from bdgsharp import densities as d

s = np.linspace(0.05, 4.0, 8)
for h in (0.1, 0.5, 1.0):
    print(f"f^{h}:", np.round(d.eval_fh(h, s), 5))
print("g   :", np.round(d.eval_g(s), 5))

# mass and mean of f^h; the mean is h (2 - h)
for h in (0.1, 0.5, 1.0):
    print(h, d.fh_moment(h, 0.0), d.fh_moment(h, 1.0), h * (2 - h))

# g integrates s to 2
print("int s g(s) ds =", d.g_moment(1.0))

# exit from the widened corridor: mean h(2+h), half moment much larger than h
for h in (0.3, 0.1, 0.01, 0.001):
    hm = d.half_moment_sigma(h)
    print(f"h={h:<6} E sigma={d.sigma_mean(h):.6f}  E sqrt(sigma)={hm:.6f}  ratio={hm / h:.3f}")
