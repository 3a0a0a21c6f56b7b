"""Monte-Carlo checks on Brownian paths with running maximum of |B|.

Paths are simulated with exact Gaussian increments. Within each step the
maximum of the Brownian bridge between the endpoints is drawn when it could
exceed the current running maximum, which removes the O(sqrt(dt)) bias of the
discrete maximum.

Random streams: paths are grouped in blocks of ``block_size``; block k draws
from ``np.random.Generator(PCG64(SeedSequence([seed, k])))`` and simulates its
paths in order. A path is reproduced by replaying its block, and blocks can be
distributed over processes without changing any result.
"""
from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numba as nb
import numpy as np

STOP_FIXED, STOP_REGION, STOP_BOUNDARY, STOP_CORRIDOR = 0, 1, 2, 3


class HorizonSaturationWarning(UserWarning):
    pass


# --- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class PathConfig:
    """Simulation grid and ensemble.

    ``geometric_from``: when set, steps grow as ``dt * t / geometric_from`` once
    t exceeds it, keeping the resolution relative to the elapsed time fixed.
    """
    dt: float = 1e-4
    horizon: float = 50.0
    n_paths: int = 10000
    seed: int = 0
    start: tuple = (0.0, 0.0, 0.0)
    bridge: bool = True
    geometric_from: float | None = None
    block_size: int = 256

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise ValueError("dt and horizon must be positive")
        if self.dt > self.horizon / 100:
            raise ValueError("need dt <= horizon / 100")
        if self.n_paths < 1 or self.block_size < 1:
            raise ValueError("n_paths and block_size must be >= 1")
        t, b, bs = self.start
        if t < 0 or abs(b) > bs:
            raise ValueError("start state outside the domain")
        if self.geometric_from is not None and self.geometric_from <= 0:
            raise ValueError("geometric_from must be positive")

    def to_dict(self):
        d = asdict(self)
        d["start"] = list(self.start)
        return d

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return PathConfig(**d)


@dataclass(frozen=True)
class FixedTime:
    t: float


@dataclass(frozen=True)
class RegionHit:
    """First t >= not_before with t >= threshold * B*(t)**2."""
    threshold: float
    not_before: float = 1.0


@dataclass(frozen=True)
class RegionHitOnBoundary:
    """As RegionHit, and additionally |B(t)| = B*(t). With a (0,0,0) start the
    test only begins after the first step."""
    threshold: float
    not_before: float = 0.0


@dataclass(frozen=True)
class CorridorExit:
    """First time |B| reaches 1 + h (start on |b| = 1 for the corridor frame)."""
    h: float


@dataclass(frozen=True)
class CappedAt:
    T: float
    inner: object


def _describe(stop):
    if isinstance(stop, CappedAt):
        return {"kind": "CappedAt", "T": stop.T, "inner": _describe(stop.inner)}
    d = asdict(stop)
    d["kind"] = type(stop).__name__
    return d


def _unpack(stop, config):
    cap = config.horizon
    while isinstance(stop, CappedAt):
        cap = min(cap, stop.T)
        stop = stop.inner
    if isinstance(stop, FixedTime):
        return STOP_FIXED, stop.t, 0.0, 0.0, cap
    if isinstance(stop, RegionHit):
        return STOP_REGION, stop.threshold, stop.not_before, 0.0, cap
    if isinstance(stop, RegionHitOnBoundary):
        return STOP_BOUNDARY, stop.threshold, stop.not_before, 0.0, cap
    if isinstance(stop, CorridorExit):
        return STOP_CORRIDOR, 0.0, 0.0, 1.0 + stop.h, cap
    raise TypeError(f"unknown stopping rule {stop!r}")


# payoffs -------------------------------------------------------------------------

@dataclass(frozen=True)
class SqrtTau:
    pass


@dataclass(frozen=True)
class BStar:
    pass


@dataclass(frozen=True)
class SqrtTauMinusCBStar:
    C: float


@dataclass(frozen=True)
class HedgeGap:
    """int_0^tau H dB - (tau^(p/2) - C B*(tau)**p); nonnegative in the limit."""
    table: object
    C: float


# --- results --------------------------------------------------------------------

@dataclass
class MCEstimate:
    mean: float
    std_error: float
    n_effective: int
    tail_fraction: float

    def to_dict(self):
        return asdict(self)


@dataclass
class PathEnsemble:
    config: PathConfig
    stop: object
    tau: np.ndarray
    bstar: np.ndarray
    b: np.ndarray
    hedge_integral: np.ndarray
    capped: np.ndarray
    steps: int = 0

    @property
    def tail_fraction(self):
        return float(self.capped.mean())

    def write_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "tau", "bstar", "b", "hedge_integral", "capped"])
            for i in range(len(self.tau)):
                w.writerow([i, repr(float(self.tau[i])), repr(float(self.bstar[i])),
                            repr(float(self.b[i])), repr(float(self.hedge_integral[i])),
                            int(self.capped[i])])


# --- kernel ---------------------------------------------------------------------

@nb.njit(cache=True)
def _hedge_lookup(t, b, m, p, H, dt_tab, dz_tab, t_max):
    if m <= 0.0 or b == 0.0:
        return 0.0
    tp = t / (m * m)
    bp = b / m
    if bp > 1.0:
        bp = 1.0
    elif bp < -1.0:
        bp = -1.0
    sgn = 1.0 if bp > 0 else -1.0
    scale = m ** (p - 1.0)
    if tp >= t_max:
        return -p * bp * tp ** (0.5 * p - 1.0) * scale
    z = math.sqrt(max(0.0, 1.0 - abs(bp)))
    x = tp / dt_tab
    i = int(x)
    if i > H.shape[0] - 2:
        i = H.shape[0] - 2
    y = z / dz_tab
    j = int(y)
    if j > H.shape[1] - 2:
        j = H.shape[1] - 2
    fx = x - i
    fz = y - j
    v = ((1 - fx) * (1 - fz) * H[i, j] + fx * (1 - fz) * H[i + 1, j]
         + (1 - fx) * fz * H[i, j + 1] + fx * fz * H[i + 1, j + 1])
    return sgn * v * scale


@nb.njit(cache=True)
def _run_block(rng, n, dt, t0, b0, m0, geo, kind, thr, not_before, level, t_fix, cap,
               bridge, hedge, p, H, dt_tab, dz_tab, t_max,
               out_tau, out_m, out_b, out_h, out_cap):
    steps = 0
    for i in range(n):
        t = t0
        b = b0
        m = m0
        hint = 0.0
        capped = False
        tau = t0
        while True:
            if kind == STOP_FIXED and t >= t_fix:
                tau = t
                break
            if t >= cap:
                tau = t
                capped = True
                break
            h = dt
            if geo > 0.0 and t > geo:
                h = dt * t / geo
            if geo > 0.0 and t < geo and t + h > geo:
                h = geo - t
            if not_before > t and t + h > not_before:
                h = not_before - t
            if kind == STOP_FIXED and t + h > t_fix:
                h = t_fix - t
            if t + h > cap:
                h = cap - t
            if hedge:
                Hv = _hedge_lookup(t, b, m, p, H, dt_tab, dz_tab, t_max)
            bn = b + math.sqrt(h) * rng.standard_normal()
            if hedge:
                hint += Hv * (bn - b)
            newmax = False
            hi = max(abs(b), abs(bn))
            if hi > m:
                m = hi
                newmax = True
            if bridge:
                for sgn in (1.0, -1.0):
                    a1 = sgn * b
                    b1 = sgn * bn
                    # crossing probability exp(-2 (m-a1)(m-b1)/h) below 1e-17 is skipped
                    if 2.0 * (m - a1) * (m - b1) < 40.0 * h:
                        e = rng.standard_exponential()
                        mx = 0.5 * (a1 + b1 + math.sqrt((b1 - a1) ** 2 + 2.0 * h * e))
                        if mx > m:
                            m = mx
                            newmax = True
            t_prev = t
            t = t + h
            b = bn
            steps += 1
            if kind == STOP_REGION:
                if t >= not_before and t >= thr * m * m:
                    tau = t
                    if not newmax:
                        # B* was constant over the step: the threshold was met
                        # exactly when t reached thr * B*^2
                        tau = max(t_prev, not_before, thr * m * m)
                    break
            elif kind == STOP_BOUNDARY:
                if newmax and t >= not_before and t >= thr * m * m:
                    tau = t
                    break
            elif kind == STOP_CORRIDOR:
                if m >= level:
                    m = level
                    tau = t
                    break
        out_tau[i] = tau
        out_m[i] = m
        out_b[i] = b
        out_h[i] = hint
        out_cap[i] = capped
    return steps


_EMPTY_H = np.zeros((2, 2))


def _block_job(args):
    (seed, k, n, config, stop_t, hedge_arrays) = args
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(k)])))
    kind, thr, not_before, level, cap = stop_t
    tau = np.empty(n)
    m = np.empty(n)
    b = np.empty(n)
    hi = np.empty(n)
    capped = np.empty(n, dtype=np.bool_)
    if hedge_arrays is None:
        H, dt_tab, dz_tab, t_max, p, use_h = _EMPTY_H, 1.0, 1.0, 1.0, 1.0, False
    else:
        H, dt_tab, dz_tab, t_max, p = hedge_arrays
        use_h = True
    t0, b0, m0 = (float(x) for x in config.start)
    geo = float(config.geometric_from) if config.geometric_from else 0.0
    t_fix = thr if kind == STOP_FIXED else 0.0
    steps = _run_block(rng, n, config.dt, t0, b0, m0, geo, kind, thr, not_before, level,
                       t_fix, cap, config.bridge, use_h, p, H, dt_tab, dz_tab, t_max,
                       tau, m, b, hi, capped)
    return tau, m, b, hi, capped, steps


def default_workers() -> int:
    env = os.environ.get("BDGSHARP_THREADS")
    return max(1, int(env)) if env else 1


def simulate_paths(config: PathConfig, stop, hedge_table=None, workers=None) -> PathEnsemble:
    """Run the ensemble and keep per-path (tau, B*(tau), B(tau), int H dB, capped)."""
    stop_t = _unpack(stop, config)
    if stop_t[0] == STOP_FIXED:
        # rules are only checked at grid times; FixedTime beyond the cap is capped
        pass
    hedge_arrays = None
    if hedge_table is not None:
        tg, zg = hedge_table.t_grid, hedge_table.z_grid
        hedge_arrays = (np.ascontiguousarray(hedge_table.H), float(tg[1] - tg[0]),
                        float(zg[1] - zg[0]), float(tg[-1]), float(hedge_table.p))
    bs = config.block_size
    jobs = []
    for k, start in enumerate(range(0, config.n_paths, bs)):
        jobs.append((config.seed, k, min(bs, config.n_paths - start), config, stop_t, hedge_arrays))
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_block_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        parts = [_block_job(j) for j in jobs]
    cat = [np.concatenate([pt[i] for pt in parts]) for i in range(5)]
    steps = int(sum(pt[5] for pt in parts))
    return PathEnsemble(config, stop, cat[0], cat[1], cat[2], cat[3], cat[4], steps)


def _estimate(x, tail):
    n = len(x)
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    return MCEstimate(float(np.mean(x)), sd / math.sqrt(n), n, tail)


def payoff_values(ens: PathEnsemble, payoff):
    if isinstance(payoff, SqrtTau):
        return np.sqrt(ens.tau)
    if isinstance(payoff, BStar):
        return ens.bstar
    if isinstance(payoff, SqrtTauMinusCBStar):
        return np.sqrt(ens.tau) - payoff.C * ens.bstar
    if isinstance(payoff, HedgeGap):
        p = payoff.table.p
        return ens.hedge_integral - (ens.tau ** (0.5 * p) - payoff.C * ens.bstar ** p)
    raise TypeError(f"unknown payoff {payoff!r}")


def _warn_tail(tail):
    if tail > 0.01:
        warnings.warn(f"{100 * tail:.2f}% of paths reached the horizon cap",
                      HorizonSaturationWarning)


def simulate(config: PathConfig, stop, payoff, workers=None) -> MCEstimate:
    table = payoff.table if isinstance(payoff, HedgeGap) else None
    ens = simulate_paths(config, stop, table, workers)
    tail = ens.tail_fraction
    _warn_tail(tail)
    return _estimate(payoff_values(ens, payoff), tail)


@dataclass
class RatioEstimate:
    ratio: float
    std_error: float
    n_effective: int
    tail_fraction: float
    mean_sqrt_tau: float
    mean_bstar: float

    def to_dict(self):
        return asdict(self)


def ratio_from_ensemble(ens: PathEnsemble) -> RatioEstimate:
    x = np.sqrt(ens.tau)
    y = ens.bstar
    n = len(x)
    mx, my = float(np.mean(x)), float(np.mean(y))
    r = mx / my
    cov = np.cov(x, y)
    var = (cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1]) / (my * my)
    return RatioEstimate(r, math.sqrt(max(var, 0.0) / n), n, ens.tail_fraction, mx, my)


def bdg_ratio(config: PathConfig, stop, workers=None) -> RatioEstimate:
    """E[sqrt(tau)] / E[B*(tau)] with a delta-method standard error."""
    ens = simulate_paths(config, stop, None, workers)
    _warn_tail(ens.tail_fraction)
    return ratio_from_ensemble(ens)


@dataclass
class DichotomyRow:
    cap: float
    mean: float
    std_error: float
    tail_fraction: float


def moment_dichotomy(threshold, config: PathConfig, cap_grid, workers=None):
    """E[sqrt(rho ^ cap)] for rho = inf{s >= 1: s >= threshold * B*(s)**2}.

    One ensemble is run up to the largest cap; smaller caps reuse its paths.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    caps = sorted(float(c) for c in cap_grid)
    cfg = config.replace(horizon=max(config.horizon, caps[-1]))
    ens = simulate_paths(cfg, CappedAt(caps[-1], RegionHit(threshold, 1.0)), None, workers)
    rows = []
    for c in caps:
        x = np.sqrt(np.minimum(ens.tau, c))
        e = _estimate(x, float(np.mean(ens.tau >= c)))
        rows.append(DichotomyRow(c, e.mean, e.std_error, e.tail_fraction))
    return rows


@dataclass
class HedgingReport:
    fraction: float
    slack: float
    mean_gap: float
    gap_std_error: float
    deficit_q99: float
    n_paths: int
    tail_fraction: float

    def to_dict(self):
        return asdict(self)


def hedging_check(table, C, config: PathConfig, stop, slack=0.05, workers=None) -> HedgingReport:
    """Fraction of paths with tau^(p/2) - C B*(tau)^p <= int H dB + slack.

    ``table`` is a HedgeTable for the value function at the critical pair;
    the stochastic integral is the left-point sum over the simulation grid.
    """
    ens = simulate_paths(config, stop, table, workers)
    gap = payoff_values(ens, HedgeGap(table, C))
    deficit = -gap
    return HedgingReport(
        fraction=float(np.mean(deficit <= slack)),
        slack=slack,
        mean_gap=float(np.mean(gap)),
        gap_std_error=float(np.std(gap, ddof=1) / math.sqrt(len(gap))),
        deficit_q99=float(np.quantile(deficit, 0.99)),
        n_paths=len(gap),
        tail_fraction=ens.tail_fraction,
    )


def to_json(record: dict, config: PathConfig | None = None, stop=None, path=None):
    out = dict(record)
    if config is not None:
        out["config"] = config.to_dict()
    if stop is not None:
        out["stop"] = _describe(stop)
    text = json.dumps(out, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


# --- standard battery ---------------------------------------------------------------

@dataclass(frozen=True)
class BatteryRule:
    name: str
    stop: object
    horizon: float = 50.0
    geometric_from: float | None = 1.0


def standard_battery(t0_hat=0.9036):
    """Stopping rules from (0, 0, 0) used for the BDG ratio checks.

    The near-optimal rule stops on the boundary once t >= t0_hat B*^2. Its
    ratio depends on horizon / dt, so it runs with a long horizon on the
    geometric grid; heavy-tailed rules are capped at 50.
    """
    return [
        BatteryRule("fixed-1", FixedTime(1.0), 2.0, None),
        BatteryRule("region-0.5", RegionHit(0.5, 0.01)),
        BatteryRule("region-t0hat", RegionHit(t0_hat, 0.01)),
        BatteryRule("boundary-0.5", RegionHitOnBoundary(0.5), 5e8),
        BatteryRule("boundary-t0hat", RegionHitOnBoundary(t0_hat), 5e8),
        BatteryRule("boundary-1.2", RegionHitOnBoundary(1.2)),
    ]


def run_battery(n_paths=1_000_000, dt=1e-4, seed=0, t0_hat=0.9036, rules=None, workers=None):
    """bdg_ratio for every battery rule; returns {name: RatioEstimate}."""
    out = {}
    for k, rule in enumerate(rules or standard_battery(t0_hat)):
        cfg = PathConfig(dt=dt, horizon=rule.horizon, n_paths=n_paths, seed=seed + 1000 * k,
                         geometric_from=rule.geometric_from)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HorizonSaturationWarning)
            out[rule.name] = bdg_ratio(cfg, rule.stop, workers)
    return out
