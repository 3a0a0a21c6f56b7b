import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdgsharp.densities import DomainError
from bdgsharp.extension import (ConcavityLattice, ExtendedValue, HedgeEvaluator,
                                boundary_derivatives, concavity_margin, concavity_search,
                                eval_extended, heat_residual, hedge_integrand, surface_rows,
                                write_surface_csv)
from bdgsharp.oide import SolverParams, StepPolicy, solve


def test_boundary_value_is_profile(critical_ev):
    ev = critical_ev
    for t in (0.3, 0.7, 1.5):
        assert eval_extended(ev, t, 1.0, 1.0) == pytest.approx(float(ev.profile(t)), abs=1e-15)
    assert eval_extended(ev, 2.0, -1.0, 1.0) == pytest.approx(math.sqrt(2.0) - ev.C, abs=1e-15)


def test_zero_maximum():
    g = solve(SolverParams(C=1.274, t0=0.9))
    ev = ExtendedValue(g)
    assert eval_extended(ev, 0.49, 0.0, 0.0) == pytest.approx(0.7)
    with pytest.raises(DomainError):
        eval_extended(ev, 0.5, 1.2, 1.0)


@settings(max_examples=25, deadline=None)
@given(t=st.floats(0.05, 2.0), r=st.floats(-1.0, 1.0), bstar=st.floats(0.3, 2.0))
def test_scaling_identity(critical_ev, t, r, bstar):
    ev = critical_ev
    b = r * bstar
    lhs = eval_extended(ev, t, b, bstar)
    rhs = bstar ** ev.p * eval_extended(ev, t / bstar ** 2, b / bstar, 1.0)
    assert lhs == rhs


@settings(max_examples=25, deadline=None)
@given(t=st.floats(0.0, 3.0), r=st.floats(-1.0, 1.0))
def test_lower_bound(critical_ev, t, r):
    ev = critical_ev
    assert eval_extended(ev, t, r, 1.0) >= math.sqrt(t) - ev.C - 1e-12


def test_even_in_b(critical_ev):
    for t, b in ((0.4, 0.3), (1.1, 0.8)):
        assert eval_extended(critical_ev, t, b, 1.0) == eval_extended(critical_ev, t, -b, 1.0)


@pytest.mark.parametrize("t", [1.0, 1.3, 2.5])
def test_boundary_identity_beyond_t0(critical_ev, t):
    db, dbs = boundary_derivatives(critical_ev, t)
    assert db + dbs == pytest.approx(-critical_ev.C, abs=1e-6)
    with pytest.raises(DomainError):
        boundary_derivatives(critical_ev, critical_ev.t0)


def test_oide_consistency_on_refined_grid():
    # 2 t U'(t) - p U(t) = -U_b(t, 1, 1) at grid points below t0
    g = solve(SolverParams(C=1.2726806640625, t0=0.8982, grid=StepPolicy().halved(),
                           max_steps=200000))
    ev = ExtendedValue(g)
    for t in (0.3, 0.6, 0.85):
        i = int(np.argmin(abs(g.ts - t)))
        tt = float(g.ts[i])
        lhs = 2 * tt * g.dus[i] - g.us[i]
        assert lhs == pytest.approx(-boundary_derivatives(ev, tt)[0], abs=1e-5)


@pytest.mark.parametrize("t,b", [(0.5, 0.3), (1.5, 0.6), (0.2, -0.5)])
def test_heat_equation(critical_ev, t, b):
    assert abs(heat_residual(critical_ev, t, b, 1.0)) <= 1e-3


def test_hedge_integrand(critical_ev):
    he = HedgeEvaluator(critical_ev)
    assert hedge_integrand(he, 0.5, 0.0, 1.0) == 0.0
    a = hedge_integrand(he, 0.5, 0.5, 1.0)
    assert hedge_integrand(he, 0.5, -0.5, 1.0) == pytest.approx(-a, rel=1e-10)
    assert hedge_integrand(he, 0.5, 0.5, 1.0, fd_step=2e-4) == pytest.approx(a, abs=1e-7)
    # on the boundary the one-sided stencil reproduces U_b
    db, _ = boundary_derivatives(critical_ev, 1.2)
    assert hedge_integrand(he, 1.2, 1.0, 1.0) == pytest.approx(db, abs=1e-5)


def test_hedge_table_matches_integrand(critical_ev, critical_table):
    he = HedgeEvaluator(critical_ev)
    for tp, bp in ((0.5, 0.5), (1.2, 0.99), (0.3, -0.7), (3.0, 0.2)):
        assert critical_table(tp, bp) == pytest.approx(hedge_integrand(he, tp, bp, 1.0), abs=2e-4)
    assert critical_table(0.5, 1.0) == pytest.approx(boundary_derivatives(critical_ev, 0.5)[0],
                                                     abs=1e-4)


def test_concavity_violation(critical_ev):
    small = ConcavityLattice(t_ratios=(0.8, 1.0), b_ratios=(1.0,), alphas=(0.1, 0.5),
                             betas=(0.1, 0.5))
    best = concavity_search(critical_ev, small)
    assert best.margin > 0
    d_a = best.d_alpha
    assert d_a[2] >= abs(d_a[1])
    assert concavity_margin(critical_ev, (0.5, 0.2, 1.0), 1e-4, 1e-4) <= 1e-6


def test_surface_csv(critical_ev):
    rows = surface_rows(critical_ev, [0.5, 1.0], [-0.5, 0.5])
    buf = io.StringIO()
    write_surface_csv(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,b,bstar,U,H"
    assert len(lines) == 5
