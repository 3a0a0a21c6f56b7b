"""Backward integration of the integro-differential equation

    2 t U'(t) = p U(t) + I(t),   I(t) = int_0^inf [U(t+s) - U(t)] g(s) ds,

with U(t) = t**(p/2) - C for t >= t0, from t0 down toward 0.

The history integral is evaluated by product integration: U is linear between
grid points and the cell moments of g (its tail G and first moment M1) are known
in closed form. At fixed t the integral is affine in the unknown value u = U(t),
I = A - B u, so each step needs a single pass over the history.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import erfc

from .densities import g_tail, g_first_moment


class Regime(str, enum.Enum):
    BOUNDED = "Bounded"
    PLUS_INFINITY = "PlusInfinity"
    MINUS_INFINITY = "MinusInfinity"
    INCONCLUSIVE = "Inconclusive"
    BOUNDED_APPROXIMANT = "Bounded-approximant"


@dataclass(frozen=True)
class StepPolicy:
    """Adaptive step control for the backward sweep.

    ``t2_factor`` caps the step at ``t2_factor * t**2``: perturbations of the
    backward problem grow at the local rate 1/(2 t**2).
    """
    initial_step: float = 1e-3
    min_step: float = 1e-12
    max_step: float = 1e-2
    tol: float = 1e-6
    rel_tol: float = 1e-4
    t2_factor: float = 0.05

    def __post_init__(self):
        if not (0 < self.min_step <= self.initial_step and self.min_step <= self.max_step):
            raise ValueError("inconsistent step bounds")
        if not (self.tol > 0 and self.rel_tol >= 0 and self.t2_factor > 0):
            raise ValueError("tol and t2_factor must be positive")

    def halved(self) -> "StepPolicy":
        return StepPolicy(self.initial_step / 2, self.min_step, self.max_step / 2,
                          self.tol / 4, self.rel_tol / 4, self.t2_factor / 2)


@dataclass(frozen=True)
class SolverParams:
    C: float
    t0: float
    p: float = 1.0
    t_min: float = 1e-5
    grid: StepPolicy = field(default_factory=StepPolicy)
    max_steps: int = 20000

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not 0 < self.p < 2:
            raise ValueError("p must lie in (0, 2)")
        if not 0 < self.t_min < self.t0:
            raise ValueError("need 0 < t_min < t0")

    def floor(self, t):
        return np.asarray(t, dtype=float) ** (0.5 * self.p) - self.C

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("grid"), dict):
            d["grid"] = StepPolicy(**d["grid"])
        return cls(**d)


@dataclass(frozen=True)
class RegimeThresholds:
    blowup_hi: float = 5.0
    crossing_margin: float = 0.0

    def __post_init__(self):
        if not self.blowup_hi > 0:
            raise ValueError("blowup_hi must be positive")
        if self.crossing_margin < 0:
            raise ValueError("crossing_margin must be >= 0")


class StepSizeUnderflow(RuntimeError):
    def __init__(self, message, grid):
        super().__init__(message)
        self.grid = grid


@dataclass
class SolutionGrid:
    params: SolverParams
    ts: np.ndarray            # strictly decreasing, ts[0] = t0
    us: np.ndarray
    regime: Regime
    u_at_floor: float
    left_derivative_at_t0: float
    dus: np.ndarray = None    # U'(ts) from the equation
    n_rejected: int = 0
    _interp: object = field(default=None, repr=False, compare=False)

    @property
    def t_end(self) -> float:
        return float(self.ts[-1])

    def analytic_floor(self, t):
        return self.params.floor(t)

    def _pchip(self):
        if self._interp is None:
            if len(self.ts) >= 2:
                self._interp = PchipInterpolator(self.ts[::-1], self.us[::-1], extrapolate=True)
        return self._interp

    def __call__(self, t):
        """U(t) for t >= t_end: grid interpolation below t0, closed form above."""
        t = np.asarray(t, dtype=float)
        out = np.asarray(self.params.floor(t), dtype=float).copy()
        inside = t < self.params.t0
        if np.any(inside):
            f = self._pchip()
            out[inside] = f(t[inside]) if f is not None else self.us[0]
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params.p
        out = 0.5 * p * t ** (0.5 * p - 1.0)
        inside = t < self.params.t0
        if np.any(inside):
            out = np.where(inside, self._pchip().derivative()(t), out)
        return float(out) if np.ndim(out) == 0 else out

    def rows(self):
        fl = self.params.floor(self.ts)
        return [(float(t), float(u), float(f)) for t, u, f in zip(self.ts, self.us, fl)]

    def to_csv(self, path_or_file, header=True):
        """Columns: t, U, analytic_floor."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            if header:
                w.writerow(["t", "U", "analytic_floor"])
            for r in self.rows():
                w.writerow([repr(x) for x in r])
        finally:
            if own:
                fh.close()


# --- integral coefficients ------------------------------------------------------

_NS = np.arange(1, 6)[:, None]
_SGN = (-1.0) ** _NS
_NS2 = _NS ** 2
_KS = ((2.0 * np.arange(8) + 1.0) * math.pi / 2.0)[:, None]

_XG, _WG = np.polynomial.legendre.leggauss(24)
# graded panels in v on [0, 1] for s = x + v**2, then linear panels on [x+1, x+60]
_VE = np.concatenate([[0.0], np.geomspace(1e-4, 1.0, 13)])
_V = (0.5 * (_VE[:-1, None] + _VE[1:, None]) + 0.5 * np.diff(_VE)[:, None] * _XG).ravel()
_VW = (0.5 * np.diff(_VE)[:, None] * _WG).ravel() * 2.0 * _V
_SE = np.linspace(1.0, 60.0, 8)
_S2 = (0.5 * (_SE[:-1, None] + _SE[1:, None]) + 0.5 * np.diff(_SE)[:, None] * _XG).ravel()
_S2W = (0.5 * np.diff(_SE)[:, None] * _WG).ravel()
_FAR_S = np.concatenate([_V ** 2, _S2])
_FAR_W = np.concatenate([_VW, _S2W])


def _g_fast(s):
    out = np.empty_like(s)
    sm = s < 1.0
    x = s[sm]
    m2 = 4.0 * _NS2
    out[sm] = (1.0 + 2.0 * (_SGN * (1.0 - m2 / x) * np.exp(-m2 / (2 * x))).sum(0)) / np.sqrt(2 * np.pi * x ** 3)
    x = s[~sm]
    out[~sm] = (_KS ** 2 * np.exp(-0.5 * _KS ** 2 * x)).sum(0)
    return out


def _moments(s):
    """(G(s), M1(s)) for an ascending array s > 0."""
    if s[-1] < 1.0:
        th = 1.0 + 2.0 * (_SGN * np.exp(-2.0 / s) ** _NS2).sum(0)
        Gv = np.sqrt(2.0 / (np.pi * s)) * th
        Mv = s * Gv - 8.0 * (_SGN * _NS * erfc(_NS * np.sqrt(2.0 / s))).sum(0)
        return Gv, Mv
    return np.asarray(g_tail(s)), np.asarray(g_first_moment(s))


def far_coefficients(t, t0, C, p):
    """(A, B) with int_{t0-t}^inf [U(t+s) - u] g(s) ds = A - B u."""
    x = max(t0 - t, 0.0)
    s = x + _FAR_S
    a0 = t0 ** (0.5 * p)
    A = float(_FAR_W @ (((t + s) ** (0.5 * p) - a0) * _g_fast(s)))
    if x <= 0.0:
        return A, 0.0
    Gx = float(g_tail(x))
    return A + (a0 - C) * Gx, Gx


def history_coefficients(t, T, U, t0, C, p):
    """(A, B) with I(t) = A - B u, given U on the ascending history T (T[0] > t).

    The history is the set of grid points in (t, t0]; U is linear between
    consecutive points and between t and T[0].
    """
    A, B = far_coefficients(t, t0, C, p)
    if len(T) == 0:
        return A, B
    s = T - t
    Gv, Mv = _moments(s)
    # cell [0, s0]: slope (U0 - u)/s0 against int_0^s0 s g(s) ds
    A += U[0] * Mv[0] / s[0]
    B += Mv[0] / s[0]
    if len(T) > 1:
        beta = np.diff(U) / np.diff(s)
        alpha0 = U[:-1] - beta * s[:-1]
        Gd = Gv[:-1] - Gv[1:]
        Md = Mv[1:] - Mv[:-1]
        A += float(alpha0 @ Gd + beta @ Md)
        B += float(Gd.sum())
    return A, B


def integral_term(t, grid: SolutionGrid, u=None):
    """I(t) = int_0^inf [U(t+s) - U(t)] g(s) ds using the grid as history."""
    pr = grid.params
    if t <= 0:
        raise ValueError("t must be positive")
    if t >= pr.t0:
        A, B = far_coefficients(t, t, 0.0, pr.p)
        return A
    if u is None:
        u = grid(t)
    keep = grid.ts > t * (1 + 1e-15)
    T = grid.ts[keep][::-1]
    U = grid.us[keep][::-1]
    A, B = history_coefficients(t, T, U, pr.t0, pr.C, pr.p)
    return A - B * u


def rhs(t, grid: SolutionGrid, u=None):
    """U'(t) = (p U(t) + I(t)) / (2 t); the closed-form slope for t > t0."""
    pr = grid.params
    if t > pr.t0:
        return 0.5 * pr.p * t ** (0.5 * pr.p - 1.0)
    if u is None:
        u = grid(t)
    return (pr.p * u + integral_term(t, grid, u)) / (2.0 * t)


def _analytic_grid(params):
    u0 = float(params.floor(params.t0))
    g = SolutionGrid(params, np.array([params.t0]), np.array([u0]), Regime.INCONCLUSIVE,
                     u0, float("nan"))
    return g


def solve(params: SolverParams, thresholds: RegimeThresholds | None = None) -> SolutionGrid:
    """Integrate backward from t0 with a Heun/Euler embedded pair."""
    thr = thresholds or RegimeThresholds()
    C, t0, p, t_min = params.C, params.t0, params.p, params.t_min
    pol = params.grid
    half_p = 0.5 * p

    cap = 1024
    ts = np.empty(cap)
    us = np.empty(cap)
    ds = np.empty(cap)
    t = t0
    u = t0 ** half_p - C
    A, _ = far_coefficients(t0, t0, C, p)
    d = (p * u + A) / (2.0 * t0)
    ts[0], us[0], ds[0] = t, u, d
    k = 1
    h = pol.initial_step
    n_rej = 0
    regime = None

    def pack(reg):
        g = SolutionGrid(params, ts[:k].copy(), us[:k].copy(), reg, float(us[k - 1]),
                         float(ds[0]), ds[:k].copy(), n_rej)
        return g

    while True:
        if t <= t_min * (1.0 + 1e-12):
            fl = ts[:k] ** half_p - C
            mono = np.all(np.diff(us[:k]) <= 0.0)
            above = np.all(us[:k] >= fl - thr.crossing_margin)
            regime = Regime.BOUNDED if (mono and above) else Regime.INCONCLUSIVE
            break
        if k >= params.max_steps:
            regime = Regime.INCONCLUSIVE
            break
        h = min(h, pol.max_step, pol.t2_factor * t * t, t - t_min)
        if h < pol.min_step and t - t_min > pol.min_step:
            raise StepSizeUnderflow(f"step underflow at t={t:g}", pack(Regime.INCONCLUSIVE))
        tn = t - h
        T = ts[k - 1::-1]
        U = us[k - 1::-1]
        A, B = history_coefficients(tn, T, U, t0, C, p)
        up = u - h * d
        dp = (p * up + A - B * up) / (2.0 * tn)
        err = 0.5 * h * abs(dp - d)
        # mixed tolerance on the deviation from the floor, which carries the
        # growing mode once the solution starts to diverge
        tol = pol.tol + pol.rel_tol * abs(u - (t ** half_p - C))
        if err > tol and h > pol.min_step:
            n_rej += 1
            h = max(pol.min_step, h * max(0.2, 0.9 * math.sqrt(tol / err)))
            continue
        un = u - 0.5 * h * (d + dp)
        dn = (p * un + A - B * un) / (2.0 * tn)
        t, u, d = tn, un, dn
        if k == cap:
            cap *= 2
            ts, us, ds = (np.resize(a, cap) for a in (ts, us, ds))
        ts[k], us[k], ds[k] = t, u, d
        k += 1
        dev = u - (t ** half_p - C)
        if dev > thr.blowup_hi:
            regime = Regime.PLUS_INFINITY
            break
        if dev < -thr.crossing_margin:
            regime = Regime.MINUS_INFINITY
            break
        fac = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * math.sqrt(tol / err)))
        h = h * fac
    return pack(regime)


def pasting_gap(grid: SolutionGrid) -> float:
    """U'(t0-) minus the slope of t**(p/2) - C at t0."""
    pr = grid.params
    return grid.left_derivative_at_t0 - 0.5 * pr.p * pr.t0 ** (0.5 * pr.p - 1.0)
