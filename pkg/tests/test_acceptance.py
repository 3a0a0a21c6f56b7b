"""End-to-end acceptance checks; each prints a PASS/FAIL line in the summary."""
import math
import warnings

import numpy as np
import pytest

from bdgsharp import densities as d
from bdgsharp import mc
from bdgsharp.critical import (SearchConfig, ScanResolutionWarning, bounded_solution,
                               find_regime_interval)
from bdgsharp.extension import (ConcavityLattice, boundary_derivatives, concavity_margin,
                                concavity_search, eval_extended, heat_residual)
from bdgsharp.oide import pasting_gap

from conftest import record

C_REF = 1.27267
T0_REF = 0.9036


def test_criterion_01_critical_constant(critical_run):
    res, elapsed = critical_run
    ok = abs(res.c_hat - C_REF) <= 5e-3 and abs(res.t0_hat - T0_REF) <= 5e-2 and elapsed <= 600
    record(1, ok, f"c_hat={res.c_hat:.6f} t0_hat={res.t0_hat:.4f} time={elapsed:.0f}s")
    assert abs(res.c_hat - C_REF) <= 5e-3
    assert abs(res.t0_hat - T0_REF) <= 5e-2
    assert elapsed <= 600


def test_criterion_02_regime_interval():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScanResolutionWarning)
        iv = find_regime_interval(1.274)
        none = find_regime_interval(1.25)
    ok1 = iv is not None and abs(iv.t1 - 0.85) <= 0.03
    ok2 = iv is not None and abs(iv.t2 - 0.95) <= 0.03
    detail = f"C=1.274 (t1,t2)=({iv.t1:.4f},{iv.t2:.4f}); C=1.25 interval={none}"
    record(2, ok1 and ok2 and none is None, detail)
    assert none is None
    assert ok1, detail
    assert ok2, detail


def test_criterion_03_ordering(critical_run):
    res, _ = critical_run
    ok = res.c_hat < 1.5 and res.c_hat < math.sqrt(3.0)
    record(3, ok, f"c_hat={res.c_hat:.6f} < 1.5 and < sqrt(3)")
    assert ok


def test_criterion_04_density_identities():
    errs = []
    for h in (0.1, 0.3, 0.5, 0.9):
        errs.append(abs(d.fh_moment(h, 0.0) - 1.0) <= 1e-8)
        errs.append(abs(d.fh_moment(h, 1.0) - h * (2 - h)) <= 1e-8)
    g_err = abs(d.g_moment(1.0) - 2.0)
    s = np.linspace(0.2, 5.0, 200)
    rel = max(float(np.max(np.abs(d.fh_small(h, s) - d.fh_spectral(h, s)) / d.fh_spectral(h, s)))
              for h in (0.1, 0.3, 0.5, 0.9))
    rel = max(rel, float(np.max(np.abs(d.g_small(s) - d.g_spectral(s)) / d.g_spectral(s))))
    ok = all(errs) and g_err <= 1e-6 and rel <= 1e-10
    record(4, ok, f"g mean err={g_err:.1e} dual-series rel={rel:.1e}")
    assert ok


def test_criterion_05_corridor_exit():
    h, step = 0.2, 1e-6
    deriv = -(-3 * d.laplace_sigma(0, h) + 4 * d.laplace_sigma(step, h)
              - d.laplace_sigma(2 * step, h)) / (2 * step)
    ratios = [d.half_moment_sigma(x) / x for x in (0.1, 0.01, 0.001)]
    ok = abs(deriv - h * (2 + h)) <= 1e-5 and ratios[0] < ratios[1] < ratios[2]
    record(5, ok, f"-L'(0)={deriv:.8f} vs {h * (2 + h):.8f}; ratios={[round(r, 4) for r in ratios]}")
    assert ok


def test_criterion_06_nonsmooth_pasting(critical_interval, critical_grid):
    C, _ = critical_interval
    gap = pasting_gap(critical_grid)
    cfg = SearchConfig().halved()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScanResolutionWarning)
        iv2 = find_regime_interval(C, 1.0, (0.85, 0.95), cfg)
    gap2 = pasting_gap(bounded_solution(C, "lower", 1.0, cfg, interval=iv2)) if iv2 else float("nan")
    ok = abs(gap) > 0.01 and abs(gap - gap2) <= 1e-3
    record(6, ok, f"gap={gap:.6f} halved={gap2:.6f}")
    assert ok


def test_criterion_07_extension_invariants(critical_ev):
    ev = critical_ev
    scale_ok = all(
        eval_extended(ev, t, b * bs, bs) == bs * eval_extended(ev, t / bs ** 2, b, 1.0)
        for t, b, bs in ((0.4, 0.3, 1.5), (1.2, -0.9, 0.7), (0.05, 0.0, 2.0)))
    worst_lb = min(eval_extended(ev, t, b, 1.0) - (math.sqrt(t) - ev.C)
                   for t in np.linspace(0.05, 3.0, 20) for b in np.linspace(-1.0, 1.0, 20))
    heat = max(abs(heat_residual(ev, t, b, 1.0)) for t, b in ((0.5, 0.3), (0.9, -0.6), (1.5, 0.5)))
    ident = max(abs(sum(boundary_derivatives(ev, t)) + ev.C) for t in (1.0, 1.5, 2.0))
    ok = scale_ok and worst_lb >= 0 and heat <= 1e-3 and ident <= 1e-6
    record(7, ok, f"scaling={scale_ok} min(U-floor)={worst_lb:.2e} heat={heat:.1e} "
                  f"|db+db*+C|={ident:.1e}")
    assert ok


def test_criterion_08_bdg_monte_carlo():
    res = mc.run_battery(n_paths=1_000_000, dt=1e-4, seed=0, t0_hat=T0_REF)
    bad = [k for k, r in res.items() if r.ratio > C_REF + 3 * r.std_error]
    near = res["boundary-t0hat"].ratio
    parts = " ".join(f"{k}={r.ratio:.4f}({r.std_error:.4f})" for k, r in res.items())
    ok = not bad and near >= 1.20
    record(8, ok, parts)
    assert not bad
    assert near >= 1.20


def test_criterion_09_moment_dichotomy():
    growth = {}
    for thr in (0.7, 1.2):
        cfg = mc.PathConfig(dt=1e-4, horizon=1e4, n_paths=200_000, seed=0, geometric_from=1.0)
        rows = mc.moment_dichotomy(thr, cfg, [10.0, 100.0, 1e3, 1e4])
        growth[thr] = rows[-1].mean / rows[-2].mean - 1
    ok = growth[0.7] < 0.10 and growth[1.2] > 0.25
    record(9, ok, f"growth 1e3->1e4: 0.7 -> {growth[0.7]:.2%}, 1.2 -> {growth[1.2]:.2%}")
    assert growth[0.7] < 0.10
    assert growth[1.2] > 0.25


def _q99_with_se(deficit, rng, n_boot=200):
    q = float(np.quantile(deficit, 0.99))
    boot = [np.quantile(rng.choice(deficit, len(deficit)), 0.99) for _ in range(n_boot)]
    return q, float(np.std(boot))


def test_criterion_10_hedging(critical_interval, critical_table):
    C, _ = critical_interval
    stop = mc.RegionHitOnBoundary(T0_REF)
    out = {}
    for dt in (1e-4, 2.5e-5):
        cfg = mc.PathConfig(dt=dt, horizon=10.0, n_paths=100_000, seed=0)
        ens = mc.simulate_paths(cfg, stop, critical_table)
        gap = mc.payoff_values(ens, mc.HedgeGap(critical_table, C))
        out[dt] = (float(np.mean(-gap <= 0.05)), _q99_with_se(-gap, np.random.default_rng(1)),
                   float(gap.mean()), float(gap.std(ddof=1) / math.sqrt(len(gap))))
    frac = out[1e-4][0]
    (q1, s1), (q2, s2) = out[1e-4][1], out[2.5e-5][1]
    ratio = q1 / q2
    ratio_se = ratio * math.hypot(s1 / q1, s2 / q2)
    mean_ok = out[1e-4][2] >= -3 * out[1e-4][3]
    ok = frac >= 0.99 and abs(ratio - 2.0) <= 3 * ratio_se and mean_ok
    record(10, ok, f"fraction={frac:.4f} q99 slack {q1:.4f}->{q2:.4f} ratio={ratio:.2f}"
                   f"+-{ratio_se:.2f} mean gap={out[1e-4][2]:.4f}")
    assert frac >= 0.99
    assert abs(ratio - 2.0) <= 3 * ratio_se
    assert mean_ok


def test_criterion_11_concavity(critical_ev):
    best = concavity_search(critical_ev, ConcavityLattice())
    inf = concavity_margin(critical_ev, (0.5, 0.2, 1.0), 1e-4, 1e-4)
    ok = best.margin > 0 and inf <= 1e-6
    record(11, ok, f"best margin={best.margin:.4f} at d={best.d} a={best.alpha:.3g} "
                   f"b={best.beta:.3g}; infinitesimal={inf:.1e}")
    assert ok
