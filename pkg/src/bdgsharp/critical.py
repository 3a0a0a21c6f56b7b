"""Regime intervals in t0 and the critical pair (C_hat, t0_hat).

For C above the critical value the set of t0 whose backward solution diverges to
+inf is an interval (t1, t2); it shrinks to the point t0_hat as C decreases to
C_hat and is empty below.
"""
from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize_scalar

from .oide import (Regime, RegimeThresholds, SolutionGrid, SolverParams, StepPolicy,
                   solve)


class ScanResolutionWarning(UserWarning):
    pass


class BracketError(RuntimeError):
    pass


def default_workers() -> int:
    env = os.environ.get("BDGSHARP_THREADS")
    if env:
        return max(1, int(env))
    return 1


@dataclass(frozen=True)
class SearchConfig:
    c_range: tuple = (1.0, 1.6)
    t0_range: tuple = (0.3, 2.0)
    n_scan: int = 64
    tol_c: float = 1e-5
    tol_t0: float = 0.02
    edge_tol: float = 1e-4
    refine: bool = True
    t_min: float = 1e-5
    grid: StepPolicy = field(default_factory=StepPolicy)
    thresholds: RegimeThresholds = field(default_factory=RegimeThresholds)
    workers: int = 1

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("c_range", "t0_range"):
            if k in d:
                d[k] = tuple(d[k])
        if isinstance(d.get("grid"), dict):
            d["grid"] = StepPolicy(**d["grid"])
        if isinstance(d.get("thresholds"), dict):
            d["thresholds"] = RegimeThresholds(**d["thresholds"])
        return cls(**d)

    def halved(self):
        d = self.to_dict()
        d["grid"] = self.grid.halved()
        return SearchConfig.from_dict(d)


@dataclass(frozen=True)
class RegimeInterval:
    C: float
    t1: float
    t2: float
    p: float = 1.0
    t1_bracket: tuple = ()
    t2_bracket: tuple = ()

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ValueError("need t1 < t2")

    @property
    def width(self):
        return self.t2 - self.t1


@dataclass
class CriticalResult:
    c_hat: float
    t0_hat: float
    c_bracket: tuple
    t0_bracket: tuple
    p: float
    tol_c: float
    tol_t0: float
    config: SearchConfig = None
    n_solves: int = 0

    def to_dict(self):
        d = {
            "c_hat": self.c_hat,
            "t0_hat": self.t0_hat,
            "c_bracket": list(self.c_bracket),
            "t0_bracket": list(self.t0_bracket),
            "p": self.p,
            "tol_c": self.tol_c,
            "tol_t0": self.tol_t0,
            "n_solves": self.n_solves,
        }
        if self.config is not None:
            d["config"] = self.config.to_dict()
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


# --- classification -------------------------------------------------------------

def _params(C, t0, p, cfg, t_min=None):
    return SolverParams(C=C, t0=t0, p=p, t_min=cfg.t_min if t_min is None else t_min,
                        grid=cfg.grid)


def classify(C, t0, p=1.0, cfg: SearchConfig = SearchConfig()):
    """(regime, t_exit); Inconclusive is retried once with a lower floor, then
    counted as MinusInfinity."""
    g = solve(_params(C, t0, p, cfg), cfg.thresholds)
    if g.regime == Regime.INCONCLUSIVE:
        g = solve(_params(C, t0, p, cfg, t_min=0.1 * cfg.t_min), cfg.thresholds)
        if g.regime == Regime.INCONCLUSIVE:
            return Regime.MINUS_INFINITY, g.t_end
    return g.regime, g.t_end


def _score(reg, t_exit):
    # perturbations grow like exp(1/(2t)); a solution leaving the band at t_exit
    # started off with a signed amplitude of roughly this size
    mag = math.exp(-0.5 / max(t_exit, 1e-300))
    if reg == Regime.PLUS_INFINITY:
        return mag
    if reg == Regime.BOUNDED:
        return 0.0
    return -mag


def _classify_star(args):
    return classify(*args)


def _scan(C, ts, p, cfg):
    jobs = [(C, float(t), p, cfg) for t in ts]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            return list(ex.map(_classify_star, jobs))
    return [classify(*j) for j in jobs]


def _bisect_edge(C, t_in, t_out, p, cfg, tol):
    """Shrink [t_in, t_out] (plus at t_in, not plus at t_out) below tol."""
    n = 0
    while abs(t_out - t_in) > tol:
        mid = 0.5 * (t_in + t_out)
        reg, _ = classify(C, mid, p, cfg)
        n += 1
        if reg == Regime.PLUS_INFINITY:
            t_in = mid
        else:
            t_out = mid
    return t_in, t_out, n


class _Counter:
    n = 0


def _find_plus(C, p, lo, hi, cfg, counter):
    ts = np.linspace(lo, hi, cfg.n_scan)
    res = _scan(C, ts, p, cfg)
    counter.n += len(ts)
    plus = [i for i, (r, _) in enumerate(res) if r == Regime.PLUS_INFINITY]
    if plus:
        scores = [_score(*r) for r in res]
        i = max(plus, key=lambda j: scores[j])
        return ts, res, float(ts[i])
    if not cfg.refine:
        return ts, res, None
    scores = np.array([_score(*r) for r in res])
    i = int(np.argmax(scores))
    a = ts[max(i - 1, 0)]
    b = ts[min(i + 1, len(ts) - 1)]

    def neg(t0):
        counter.n += 1
        return -_score(*classify(C, float(t0), p, cfg))

    opt = minimize_scalar(neg, bounds=(a, b), method="bounded",
                          options={"xatol": cfg.edge_tol})
    if -opt.fun > 0:
        return ts, res, float(opt.x)
    return ts, res, None


def find_regime_interval(C, p=1.0, search_range=None, cfg: SearchConfig | None = None,
                         edge_tol=None, _counter=None):
    """Interval (t1, t2) of t0 giving PlusInfinity at this C, or None."""
    cfg = cfg or SearchConfig()
    lo, hi = search_range or cfg.t0_range
    if not 0 < lo < hi:
        raise ValueError("search range must satisfy 0 < lo < hi")
    tol = cfg.edge_tol if edge_tol is None else edge_tol
    counter = _counter or _Counter()
    ts, res, t_plus = _find_plus(C, p, lo, hi, cfg, counter)
    if t_plus is None:
        return None
    is_plus = np.array([r == Regime.PLUS_INFINITY for r, _ in res])
    if is_plus.sum() and np.any(np.diff(is_plus.astype(int)) == 1) and \
            np.sum(np.diff(is_plus.astype(int)) == 1) > 1:
        warnings.warn("more than one PlusInfinity run in the scan", ScanResolutionWarning)
    # nearest non-plus scan points around the witness
    left = ts[(ts < t_plus) & ~is_plus]
    right = ts[(ts > t_plus) & ~is_plus]
    in_l = ts[(ts <= t_plus) & is_plus]
    in_r = ts[(ts >= t_plus) & is_plus]
    l_out = left.max() if left.size else lo
    r_out = right.min() if right.size else hi
    # contiguous plus run: innermost plus point adjacent to each edge
    l_in = in_l[in_l > l_out].min() if np.any(in_l > l_out) else t_plus
    r_in = in_r[in_r < r_out].max() if np.any(in_r < r_out) else t_plus
    if left.size == 0 or right.size == 0:
        warnings.warn("PlusInfinity at the end of the search range", ScanResolutionWarning)
    t1_in, t1_out, n1 = _bisect_edge(C, l_in, l_out, p, cfg, tol)
    t2_in, t2_out, n2 = _bisect_edge(C, r_in, r_out, p, cfg, tol)
    counter.n += n1 + n2
    step = (hi - lo) / (cfg.n_scan - 1)
    t1 = 0.5 * (t1_in + t1_out)
    t2 = 0.5 * (t2_in + t2_out)
    if t2 - t1 < 2 * step:
        warnings.warn(f"interval at C={C} narrower than two scan steps", ScanResolutionWarning)
    return RegimeInterval(C=float(C), t1=float(t1), t2=float(t2), p=float(p),
                          t1_bracket=(float(min(t1_in, t1_out)), float(max(t1_in, t1_out))),
                          t2_bracket=(float(min(t2_in, t2_out)), float(max(t2_in, t2_out))))


def find_critical(p=1.0, cfg: SearchConfig | None = None) -> CriticalResult:
    """Outer bisection on C with predicate 'a PlusInfinity interval exists'."""
    cfg = cfg or SearchConfig()
    counter = _Counter()
    lo, hi = cfg.c_range

    def predicate(C):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ScanResolutionWarning)
            return find_regime_interval(C, p, cfg.t0_range, cfg, edge_tol=cfg.edge_tol,
                                        _counter=counter)

    iv_hi = predicate(hi)
    if iv_hi is None:
        raise BracketError(f"no PlusInfinity interval at C={hi}")
    if predicate(lo) is not None:
        raise BracketError(f"PlusInfinity interval already at C={lo}")
    while hi - lo > cfg.tol_c or iv_hi.width > cfg.tol_t0:
        if hi - lo < 1e-12:
            break
        mid = 0.5 * (lo + hi)
        iv = predicate(mid)
        if iv is None:
            lo = mid
        else:
            hi, iv_hi = mid, iv
    return CriticalResult(c_hat=float(hi), t0_hat=0.5 * (iv_hi.t1 + iv_hi.t2),
                          c_bracket=(float(lo), float(hi)),
                          t0_bracket=(iv_hi.t1, iv_hi.t2), p=p, tol_c=cfg.tol_c,
                          tol_t0=cfg.tol_t0, config=cfg, n_solves=counter.n)


def _agreeing_part(g_in: SolutionGrid, g_out: SolutionGrid, agree_tol):
    """Length of the prefix of g_in on which g_out agrees within agree_tol."""
    t_lo = max(g_in.t_end, g_out.t_end)
    ok = g_in.ts >= t_lo
    diff = np.abs(g_in.us[ok] - g_out(g_in.ts[ok]))
    bad = np.nonzero(diff > agree_tol)[0]
    return int(bad[0]) if bad.size else int(ok.sum())


def bounded_solution(C, which="lower", p=1.0, cfg: SearchConfig | None = None,
                     interval: RegimeInterval | None = None, edge_tol=1e-11,
                     agree_tol=1e-4) -> SolutionGrid:
    """Near-bounded solution at the edge t1(C) ('lower') or t2(C) ('upper').

    The edge is bisected to ``edge_tol``; the solutions just inside and just
    outside the PlusInfinity interval are computed and the grid is kept down to
    the first point where they separate by more than ``agree_tol``.
    """
    cfg = cfg or SearchConfig()
    if which not in ("lower", "upper"):
        raise ValueError("which must be 'lower' or 'upper'")
    iv = interval or find_regime_interval(C, p, cfg.t0_range, cfg)
    if iv is None:
        raise BracketError(f"no PlusInfinity interval at C={C}")
    if which == "lower":
        t_out, t_in = iv.t1_bracket
    else:
        t_in, t_out = iv.t2_bracket
    t_in, t_out, _ = _bisect_edge(C, t_in, t_out, p, cfg, edge_tol)
    g_in = solve(_params(C, t_in, p, cfg), cfg.thresholds)
    g_out = solve(_params(C, t_out, p, cfg), cfg.thresholds)
    n = max(_agreeing_part(g_in, g_out, agree_tol), 2)
    pr = _params(C, t_in, p, cfg, t_min=min(cfg.t_min, float(g_in.ts[n - 1]) * 0.5))
    return SolutionGrid(pr, g_in.ts[:n].copy(), g_in.us[:n].copy(), Regime.BOUNDED_APPROXIMANT,
                        float(g_in.us[n - 1]), g_in.left_derivative_at_t0,
                        g_in.dus[:n].copy(), g_in.n_rejected)


def critical_solution(result: CriticalResult, which="lower", cfg=None) -> SolutionGrid:
    """Bounded-approximant at the witness side of the critical bracket."""
    cfg = cfg or result.config or SearchConfig()
    C = result.c_bracket[1]
    iv = find_regime_interval(C, result.p, (result.t0_bracket[0] - 0.05, result.t0_bracket[1] + 0.05), cfg)
    return bounded_solution(C, which, result.p, cfg, interval=iv)
