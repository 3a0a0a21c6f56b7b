"""The value function U(t, b, b*) built from a one-dimensional solution U(t).

On the boundary |b| = b* = 1 the value is U(t). Inside, the process runs until
|B| first reaches 1, which takes a time with density f^{1-|b|}, so

    U(t, b, 1) = int_0^inf U(t + s) f^{1-|b|}(s) ds,

and Brownian scaling gives U(t, b, b*) = b***p U(t / b***2, b / b*, 1).
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .densities import DEFAULT_SERIES, SeriesParams, DomainError, eval_fh, eval_g
from .oide import SolutionGrid
from .quadrature import QuadSpec, integrate

_CONV_QUAD = QuadSpec(rel_tol=1e-11, abs_tol=1e-13, max_subdivisions=20000)


@dataclass
class ExtendedValue:
    base: SolutionGrid
    series: SeriesParams = DEFAULT_SERIES
    quad: QuadSpec = _CONV_QUAD
    extrapolation_window: float = 0.02

    def __post_init__(self):
        pr = self.base.params
        self.C, self.t0, self.p = pr.C, pr.t0, pr.p
        t_end = self.base.t_end
        # below the last reliable grid point the bounded solution is continued
        # linearly with the chord slope over the last window
        w = min(self.extrapolation_window, 0.5 * (self.t0 - t_end))
        self._t_end = t_end
        self._u_end = float(self.base(t_end))
        self._slope = (float(self.base(t_end + w)) - self._u_end) / w

    # one-dimensional profile --------------------------------------------------
    def profile(self, t):
        """U(t, 1, 1) for any t >= 0."""
        t = np.asarray(t, dtype=float)
        out = np.asarray(t ** (0.5 * self.p) - self.C, dtype=float).copy()
        mid = (t < self.t0) & (t >= self._t_end)
        if np.any(mid):
            out[mid] = self.base(t[mid])
        low = t < self._t_end
        if np.any(low):
            out[low] = self._u_end + self._slope * (t[low] - self._t_end)
        return float(out) if out.ndim == 0 else out

    def _conv(self, tp, h):
        """int_0^inf [U(tp + s) - U(tp)] f^h(s) ds."""
        u0 = float(self.profile(tp))
        x = self.t0 - tp
        hh = h * h
        pts = [0.05 * hh, 0.25 * hh, hh, 4 * hh, 1.0]

        def f(s):
            return (self.profile(tp + s) - u0) * eval_fh(h, s, self.series)

        total = 0.0
        if x > 0:
            total += integrate(f, 0.0, x, self.quad, points=[q for q in pts if q < x]).value
            a = x
        else:
            a = 0.0
        half_p = 0.5 * self.p
        base = self.C + u0

        def fa(s):
            return ((tp + s) ** half_p - base) * eval_fh(h, s, self.series)

        # the density is negligible beyond 60 time units
        upper = a + 60.0
        total += integrate(fa, a, upper, self.quad, points=[q for q in pts if a < q < upper] + [a + 2.0]).value
        return total

    def value_scaled(self, tp, bp):
        """U(tp, bp, 1)."""
        h = 1.0 - abs(bp)
        if h <= 0.0:
            return float(self.profile(tp))
        return float(self.profile(tp)) + self._conv(tp, h)


def eval_extended(ev: ExtendedValue, t, b, bstar):
    """U(t, b, b*) on D = {t >= 0, |b| <= b*}."""
    t, b, bstar = float(t), float(b), float(bstar)
    if t < 0 or bstar < 0 or abs(b) > bstar:
        raise DomainError(f"state ({t}, {b}, {bstar}) outside the domain")
    if bstar == 0.0:
        return t ** (0.5 * ev.p)
    tp = t / (bstar * bstar)
    bp = b / bstar
    return bstar ** ev.p * ev.value_scaled(tp, bp)


def boundary_derivatives(ev: ExtendedValue, t):
    """(U_b, U_b*) at (t, 1, 1); U_b = -int [U(t+s) - U(t)] g(s) ds."""
    t = float(t)
    if t <= 0:
        raise DomainError("t must be positive")
    if t == ev.t0:
        raise DomainError("one-sided limits differ at t0")
    q = QuadSpec(rel_tol=1e-10, abs_tol=1e-12, max_subdivisions=20000, singular_exponent=-0.5)
    u0 = float(ev.profile(t))
    half_p = 0.5 * ev.p

    def near(s):
        return (ev.profile(t + s) - u0) * eval_g(s, ev.series)

    def far(s):
        return ((t + s) ** half_p - ev.C - u0) * eval_g(s, ev.series)

    if t < ev.t0:
        x = ev.t0 - t
        integral = integrate(near, 0.0, x, q).value
        integral += integrate(far, x, math.inf, QuadSpec(rel_tol=1e-11, abs_tol=1e-13)).value
    else:
        integral = integrate(far, 0.0, math.inf, q).value
    db = -integral
    dbstar = 0.0 if t < ev.t0 else -db - ev.C
    return db, dbstar


@dataclass
class HedgeEvaluator:
    value: ExtendedValue
    fd_step: float = 1e-4

    def __post_init__(self):
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")


def hedge_integrand(he: HedgeEvaluator, t, b, bstar, fd_step=None):
    """dU/db at (t, b, b*) by finite differences; one-sided near |b| = b*."""
    ev = he.value
    t, b, bstar = float(t), float(b), float(bstar)
    if t < 0 or bstar < 0 or abs(b) > bstar:
        raise DomainError(f"state ({t}, {b}, {bstar}) outside the domain")
    if bstar == 0.0 or b == 0.0:
        return 0.0
    d = (he.fd_step if fd_step is None else fd_step) * bstar

    def U(x):
        return eval_extended(ev, t, x, bstar)

    if abs(b) + d <= bstar:
        return (U(b + d) - U(b - d)) / (2 * d)
    sgn = 1.0 if b > 0 else -1.0
    # second-order one-sided stencil pointing into the interior
    return sgn * (3 * U(b) - 4 * U(b - sgn * d) + U(b - 2 * sgn * d)) / (2 * d)


def heat_residual(ev: ExtendedValue, t, b, bstar, dt=1e-4, db=1e-2):
    """U_t + U_bb / 2 by central differences at an interior point."""
    ut = (eval_extended(ev, t + dt, b, bstar) - eval_extended(ev, t - dt, b, bstar)) / (2 * dt)
    u0 = eval_extended(ev, t, b, bstar)
    ubb = (eval_extended(ev, t, b + db, bstar) - 2 * u0 + eval_extended(ev, t, b - db, bstar)) / db ** 2
    return ut + 0.5 * ubb


# --- concavity ------------------------------------------------------------------

@dataclass(frozen=True)
class ConcavityTriple:
    d: tuple
    alpha: float
    beta: float
    margin: float

    @property
    def d_alpha(self):
        t, b, bs = self.d
        return (t + self.alpha ** 2, b + self.alpha, max(bs, abs(b + self.alpha)))

    @property
    def d_beta(self):
        t, b, bs = self.d
        return (t + self.beta ** 2, b - self.beta, max(bs, abs(b - self.beta)))


def concavity_margin(ev: ExtendedValue, d, alpha, beta):
    """p U(d_alpha) + q U(d_beta) - U(d) with p = beta/(alpha+beta), q = alpha/(alpha+beta)."""
    t, b, bs = d
    da = (t + alpha ** 2, b + alpha, max(bs, abs(b + alpha)))
    dbt = (t + beta ** 2, b - beta, max(bs, abs(b - beta)))
    pw = beta / (alpha + beta)
    qw = alpha / (alpha + beta)
    return pw * eval_extended(ev, *da) + qw * eval_extended(ev, *dbt) - eval_extended(ev, *d)


@dataclass(frozen=True)
class ConcavityLattice:
    t_ratios: tuple = tuple(np.linspace(0.5, 1.3, 9))
    b_ratios: tuple = tuple(np.linspace(0.8, 1.0, 5))
    alphas: tuple = tuple(np.geomspace(0.01, 0.5, 6))
    betas: tuple = tuple(np.geomspace(0.01, 0.5, 6))
    bstar: float = 1.0

    def points(self):
        for tr, br in itertools.product(self.t_ratios, self.b_ratios):
            yield (float(tr * self.bstar ** 2), float(br * self.bstar), float(self.bstar))


def concavity_search(ev: ExtendedValue, lattice: ConcavityLattice = ConcavityLattice(),
                     return_all=False):
    """Triple with the largest concavity margin on the lattice."""
    if not (lattice.t_ratios and lattice.b_ratios and lattice.alphas and lattice.betas):
        raise ValueError("empty lattice")
    cache = {}

    def U(state):
        if state not in cache:
            cache[state] = eval_extended(ev, *state)
        return cache[state]

    out = []
    for d in lattice.points():
        t, b, bs = d
        for a, be in itertools.product(lattice.alphas, lattice.betas):
            da = (t + a * a, b + a, max(bs, abs(b + a)))
            dbt = (t + be * be, b - be, max(bs, abs(b - be)))
            m = (be * U(da) + a * U(dbt)) / (a + be) - U(d)
            out.append(ConcavityTriple(d, float(a), float(be), float(m)))
    best = max(out, key=lambda c: c.margin)
    return (best, out) if return_all else best


# --- surfaces and tables ----------------------------------------------------------

def surface_rows(ev: ExtendedValue, ts, bs, bstar=1.0, fd_step=1e-4):
    he = HedgeEvaluator(ev, fd_step)
    rows = []
    for t in ts:
        for b in bs:
            rows.append((float(t), float(b), float(bstar), eval_extended(ev, t, b, bstar),
                         hedge_integrand(he, t, b, bstar)))
    return rows


def write_surface_csv(rows, path_or_file):
    """Columns: t, b, bstar, U, H."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(["t", "b", "bstar", "U", "H"])
        for r in rows:
            w.writerow([repr(float(x)) for x in r])
    finally:
        if own:
            fh.close()


def _dfh_dh(h, s, n_small=8, n_spec=12):
    """d f^h(s) / dh for a column of h values against a row of s values."""
    h = np.asarray(h, dtype=float)[:, None, None]
    s = np.asarray(s, dtype=float)[None, :, None]
    out = np.empty((h.shape[0], s.shape[1]))
    sm = s[0, :, 0] < 1.0
    if np.any(sm):
        ss = s[:, sm]
        n = np.arange(-n_small, n_small + 1)[None, None, :]
        x1 = 4.0 * n + h
        x2 = 4.0 * n + 2.0 - h
        d1 = (1 - x1 * x1 / ss) * np.exp(-x1 * x1 / (2 * ss))
        d2 = (1 - x2 * x2 / ss) * np.exp(-x2 * x2 / (2 * ss))
        out[:, sm] = ((d1 - d2).sum(-1)) / np.sqrt(2 * np.pi * ss[..., 0] ** 3)
    if np.any(~sm):
        ss = s[:, ~sm]
        a = ((2.0 * np.arange(n_spec) + 1.0) * math.pi / 2.0)[None, None, :]
        out[:, ~sm] = (a * a * np.cos(a * h) * np.exp(-0.5 * a * a * ss)).sum(-1)
    return out


def _graded_nodes(a, b, first, n_panels, n=12):
    """Gauss-Legendre nodes on [a, b] graded geometrically away from a."""
    if b - a <= first:
        edges = np.array([a, b])
    else:
        edges = np.concatenate([[a], a + np.geomspace(first, b - a, n_panels)])
    x, w = np.polynomial.legendre.leggauss(n)
    lo, hi = edges[:-1, None], edges[1:, None]
    return (0.5 * (lo + hi) + 0.5 * (hi - lo) * x).ravel(), (0.5 * (hi - lo) * w).ravel()


@dataclass
class HedgeTable:
    """H(t', b') = dU/db at (t', b', 1) on a grid in (t', z) with z = sqrt(1-|b'|)."""
    t_grid: np.ndarray
    z_grid: np.ndarray
    H: np.ndarray           # shape (len(t_grid), len(z_grid)), value for b' > 0
    p: float
    t_max: float = field(init=False)

    def __post_init__(self):
        self.t_max = float(self.t_grid[-1])

    def __call__(self, tp, bp):
        """Bilinear lookup with sign and the large-t' asymptote -p b' t'**(p/2-1)."""
        tp = float(tp)
        bp = float(bp)
        if bp == 0.0:
            return 0.0
        sgn = 1.0 if bp > 0 else -1.0
        if tp >= self.t_max:
            return -self.p * bp * tp ** (0.5 * self.p - 1.0)
        z = math.sqrt(max(0.0, 1.0 - abs(bp)))
        dt = self.t_grid[1] - self.t_grid[0]
        dz = self.z_grid[1] - self.z_grid[0]
        i = min(int(tp / dt), len(self.t_grid) - 2)
        j = min(int(z / dz), len(self.z_grid) - 2)
        fx = tp / dt - i
        fz = z / dz - j
        H = self.H
        v = ((1 - fx) * (1 - fz) * H[i, j] + fx * (1 - fz) * H[i + 1, j]
             + (1 - fx) * fz * H[i, j + 1] + fx * fz * H[i + 1, j + 1])
        return sgn * v


def hedge_table(ev: ExtendedValue, t_max=8.0, n_t=801, n_z=101) -> HedgeTable:
    """Tabulate dU/db(t', b', 1) = -d/dh int [U(t'+s) - U(t')] f^h(s) ds for b' >= 0.

    The h-derivative of f^h is taken analytically. At h = 0 the entry is the
    boundary derivative -int [U(t'+s) - U(t')] g(s) ds.
    """
    t_grid = np.linspace(0.0, t_max, n_t)
    z_grid = np.linspace(0.0, 1.0, n_z)
    hs = z_grid[1:] ** 2
    H = np.empty((n_t, n_z))
    half_p = 0.5 * ev.p
    for i, tp in enumerate(t_grid):
        u0 = float(ev.profile(tp))
        x = ev.t0 - tp
        if x > 1e-9:
            s1, w1 = _graded_nodes(0.0, x, 1e-7, 40)
            s2, w2 = _graded_nodes(x, x + 60.0, 1e-7 if x < 1e-3 else 1e-3, 30)
            s = np.concatenate([s1, s2])
            w = np.concatenate([w1, w2])
        else:
            s, w = _graded_nodes(0.0, 60.0, 1e-7, 60)
        du = np.where(s < x, ev.profile(tp + s) - u0, (tp + s) ** half_p - ev.C - u0)
        D = _dfh_dh(hs, s)
        H[i, 1:] = -(D * w) @ du
        # h -> 0: f^h / h -> g, so the derivative tends to g
        gs = eval_g(s)
        H[i, 0] = -(gs * w) @ du
    return HedgeTable(t_grid, z_grid, H, ev.p)
