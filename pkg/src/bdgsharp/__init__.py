"""Numerical tools for the sharp p = 1 Burkholder-Davis-Gundy constant of
Brownian motion stopped at bounded times."""
from .densities import eval_fh, eval_g, laplace_sigma, half_moment_sigma, SeriesParams
from .quadrature import QuadSpec, integrate
from .oide import Regime, SolverParams, StepPolicy, SolutionGrid, solve, pasting_gap
from .critical import SearchConfig, CriticalResult, find_critical, find_regime_interval
from .extension import ExtendedValue, eval_extended, boundary_derivatives, hedge_table

__version__ = "0.1.0"
