"""Exit-time densities of reflected Brownian motion and related transforms.

``f^h(s)`` is the density of the first time ``|B|`` hits 1 when ``|B(0)| = 1 - h``,
and ``g(s) = lim f^h(s) / h`` is its derivative in ``h`` at the boundary. Each is
evaluated with a Gaussian image series for small ``s`` and with the dual
eigenfunction series, with rates ``a_k = (2k+1) pi / 2``, for large ``s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaincc, gamma as gamma_fn

from .quadrature import QuadSpec, integrate

SQRT2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class SeriesParams:
    """Truncation and branch switch for the two series representations."""
    n_terms_small: int = 20
    n_terms_spectral: int = 60
    s_switch: float = 1.0
    abs_tol: float = 1e-14

    def __post_init__(self):
        if self.n_terms_small < 1 or self.n_terms_spectral < 1:
            raise ValueError("term counts must be >= 1")
        if not self.s_switch > 0:
            raise ValueError("s_switch must be positive")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


DEFAULT_SERIES = SeriesParams()


def _rates(n):
    return (2.0 * np.arange(n) + 1.0) * (math.pi / 2.0)


def _as_s(s):
    arr = np.asarray(s, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("s must be positive")
    return arr


def _check_h(h, allow_one=True):
    h = float(h)
    ok = 0.0 < h <= 1.0 if allow_one else 0.0 < h < 1.0
    if not ok:
        raise DomainError(f"h={h} outside the admissible range")
    return h


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


# --- f^h ---------------------------------------------------------------------

def fh_small(h, s, n_terms=20):
    """Image series, accurate for small s."""
    s = np.asarray(s, dtype=float)[..., None]
    n = np.arange(-n_terms, n_terms + 1)
    x1 = 4.0 * n + h
    x2 = 4.0 * n + 2.0 - h
    terms = x1 * np.exp(-x1 * x1 / (2 * s)) + x2 * np.exp(-x2 * x2 / (2 * s))
    return terms.sum(-1) / np.sqrt(2 * np.pi * s[..., 0] ** 3)


def fh_spectral(h, s, n_terms=60):
    """Eigenfunction series, accurate for large s."""
    s = np.asarray(s, dtype=float)[..., None]
    a = _rates(n_terms)
    return (a * np.sin(a * h) * np.exp(-0.5 * a * a * s)).sum(-1)


def eval_fh(h, s, params: SeriesParams = DEFAULT_SERIES):
    """Density f^h(s) of the hitting time of 1 by |B| started at 1 - h.

    ``h = 1`` (start at 0) is accepted as well; ``s`` may be an array.
    """
    h = _check_h(h)
    arr = _as_s(s)
    small = arr < params.s_switch
    out = np.empty_like(arr)
    out[small] = fh_small(h, arr[small], params.n_terms_small)
    out[~small] = fh_spectral(h, arr[~small], params.n_terms_spectral)
    return _out(np.maximum(out, 0.0), s)


def fh_cdf(h, s, params: SeriesParams = DEFAULT_SERIES):
    """P(rho^h <= s)."""
    h = _check_h(h)
    arr = _as_s(s)
    out = np.empty_like(arr)
    small = arr < params.s_switch
    if np.any(small):
        ss = arr[small][:, None]
        n = np.arange(-params.n_terms_small, params.n_terms_small + 1)
        x1 = 4.0 * n + h
        x2 = 4.0 * n + 2.0 - h
        r = np.sqrt(2 * ss)
        out[small] = (np.sign(x1) * erfc(np.abs(x1) / r)
                      + np.sign(x2) * erfc(np.abs(x2) / r)).sum(-1)
    if np.any(~small):
        out[~small] = 1.0 - fh_survival_spectral(h, arr[~small], params.n_terms_spectral)
    return _out(np.clip(out, 0.0, 1.0), s)


def fh_survival_spectral(h, s, n_terms=60):
    s = np.asarray(s, dtype=float)[..., None]
    a = _rates(n_terms)
    return (2.0 / a * np.sin(a * h) * np.exp(-0.5 * a * a * s)).sum(-1)


def fh_tail_moment(h, order, s_cut, n_terms=60):
    """int_{s_cut}^inf s**order f^h(s) ds from the eigenfunction series."""
    a = _rates(n_terms)
    c = 0.5 * a * a
    k = order + 1.0
    tail = gammaincc(k, c * s_cut) * gamma_fn(k) / c ** k
    return float((a * np.sin(a * h) * tail).sum())


def fh_moment(h, order=1.0, s_cut=50.0, params: SeriesParams = DEFAULT_SERIES,
              quad: QuadSpec | None = None):
    """int_0^inf s**order f^h(s) ds by quadrature on (0, s_cut] plus exact tail."""
    h = _check_h(h)
    quad = quad or QuadSpec(rel_tol=1e-12, abs_tol=1e-14)
    pts = [min(h * h, 0.5), params.s_switch, 4.0]
    body = integrate(lambda s: s ** order * eval_fh(h, s, params), 0.0, s_cut, quad, points=pts)
    return body.value + fh_tail_moment(h, order, s_cut, params.n_terms_spectral)


# --- g ------------------------------------------------------------------------

def g_small(s, n_terms=20):
    s = np.asarray(s, dtype=float)[..., None]
    n = np.arange(1, n_terms + 1)
    m2 = (2.0 * n) ** 2
    terms = (-1.0) ** n * (1.0 - m2 / s) * np.exp(-m2 / (2 * s))
    return (1.0 + 2.0 * terms.sum(-1)) / np.sqrt(2 * np.pi * s[..., 0] ** 3)


def g_spectral(s, n_terms=60):
    s = np.asarray(s, dtype=float)[..., None]
    a = _rates(n_terms)
    return (a * a * np.exp(-0.5 * a * a * s)).sum(-1)


def eval_g(s, params: SeriesParams = DEFAULT_SERIES):
    """g(s) = lim_{h -> 0} f^h(s) / h."""
    arr = _as_s(s)
    small = arr < params.s_switch
    out = np.empty_like(arr)
    out[small] = g_small(arr[small], params.n_terms_small)
    out[~small] = g_spectral(arr[~small], params.n_terms_spectral)
    return _out(out, s)


# Closed forms used by the integro-differential solver. For s < 1 a handful of
# image terms suffice, for s >= 1 three eigenmodes do (errors below 1e-15).
_NS = np.arange(1, 6)
_SGN = (-1.0) ** _NS
_KS = _rates(8)


def g_tail(s):
    """G(s) = int_s^inf g(u) du."""
    arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(arr)
    small = arr < 1.0
    if np.any(small):
        x = arr[small][:, None]
        th = 1.0 + 2.0 * (_SGN * np.exp(-2.0 * _NS ** 2 / x)).sum(-1)
        out[small] = np.sqrt(2.0 / (np.pi * arr[small])) * th
    if np.any(~small):
        x = arr[~small][:, None]
        out[~small] = 2.0 * np.exp(-0.5 * _KS ** 2 * x).sum(-1)
    return _out(out.reshape(np.shape(s)), s)


def g_first_moment(s):
    """M1(s) = int_0^s u g(u) du; tends to 2 as s -> inf."""
    arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(arr)
    small = arr < 1.0
    if np.any(small):
        x = arr[small]
        corr = (_SGN * _NS * erfc(_NS * np.sqrt(2.0 / x[:, None]))).sum(-1)
        out[small] = x * np.asarray(g_tail(x)) - 8.0 * corr
    if np.any(~small):
        x = arr[~small][:, None]
        c = 0.5 * _KS ** 2
        out[~small] = 2.0 - (4.0 / _KS ** 2 * np.exp(-c * x) * (1.0 + c * x)).sum(-1)
    return _out(out.reshape(np.shape(s)), s)


def g_moment(order=1.0, s_cut=50.0, params: SeriesParams = DEFAULT_SERIES,
             quad: QuadSpec | None = None):
    """int_0^inf s**order g(s) ds for order > 1/2."""
    if order <= 0.5:
        raise DomainError("g has no moment of order <= 1/2")
    quad = quad or QuadSpec(rel_tol=1e-12, abs_tol=1e-14)
    body = integrate(lambda s: s ** order * eval_g(s, params), 0.0, s_cut, quad,
                     points=[0.05, params.s_switch, 4.0])
    a = _rates(params.n_terms_spectral)
    c = 0.5 * a * a
    k = order + 1.0
    tail = float((a * a * gammaincc(k, c * s_cut) * gamma_fn(k) / c ** k).sum())
    return body.value + tail


# --- corridor exit ------------------------------------------------------------

def laplace_sigma(theta, h):
    """E[exp(-theta * sigma^h)] = cosh(sqrt(2 theta)) / cosh((1+h) sqrt(2 theta))."""
    h = _check_h(h)
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0):
        raise DomainError("theta must be >= 0")
    u = np.sqrt(2.0 * th)
    k = 1.0 + h
    val = np.exp(-h * u) * (1.0 + np.exp(-2.0 * u)) / (1.0 + np.exp(-2.0 * k * u))
    return _out(val, theta)


def sigma_mean(h):
    """E[sigma^h] = h (2 + h)."""
    h = _check_h(h)
    return h * (2.0 + h)


def _half_moment_integrands(h):
    k = 1.0 + h

    def first(u):
        # sinh(h u) / (u cosh(k u)^2)
        e = np.exp(-2.0 * k * u)
        return (np.exp((h - 2 * k) * u) - np.exp(-(h + 2 * k) * u)) * 2.0 / (1.0 + e) ** 2 / u

    def second(u):
        # cosh(u) tanh(k u) / (u cosh(k u))
        e = np.exp(-2.0 * k * u)
        ratio = np.exp(-h * u) * (1.0 + np.exp(-2.0 * u)) / (1.0 + e)
        return ratio * np.tanh(k * u) / u

    return first, second


def half_moment_sigma(h, quad: QuadSpec | None = None, cutoff=1e-14):
    """E[(sigma^h)**(1/2)] from the Laplace transform.

    Uses E[X^(1/2)] = Gamma(1/2)^-1 int theta^(-1/2) (-L'(theta)) dtheta with
    u = sqrt(2 theta), split at u = 1 and truncated where the integrands drop
    below ``cutoff``.
    """
    h = _check_h(h)
    quad = quad or QuadSpec(rel_tol=1e-11, abs_tol=1e-15, max_subdivisions=5000)
    first, second = _half_moment_integrands(h)
    # the second integrand is bounded by 2 exp(-h u), the first decays faster
    u_max = max(2.0, math.log(2.0 / cutoff) / h)
    pts = [p for p in (10.0, 1.0 / h) if 1.0 < p < u_max]
    i1 = integrate(first, 0.0, 1.0, quad).value + integrate(first, 1.0, u_max, quad, points=pts).value
    i2 = integrate(second, 0.0, 1.0, quad).value + integrate(second, 1.0, u_max, quad, points=pts).value
    return math.sqrt(2.0 / math.pi) * (i1 + h * i2)


@dataclass(frozen=True)
class CorridorExit:
    """Exit time sigma^h of |B| from (-(1+h), 1+h) started on the old boundary."""
    h: float
    theta_grid: tuple = field(default_factory=lambda: tuple(np.geomspace(1e-3, 1e3, 25)))

    def __post_init__(self):
        _check_h(self.h)
        if any(t <= 0 for t in self.theta_grid):
            raise ValueError("theta_grid must be positive")

    def laplace(self, theta=None):
        theta = self.theta_grid if theta is None else theta
        return laplace_sigma(np.asarray(theta, dtype=float), self.h)

    def mean(self):
        return sigma_mean(self.h)

    def half_moment(self):
        return half_moment_sigma(self.h)
