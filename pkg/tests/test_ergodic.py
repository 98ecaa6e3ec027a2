"""Long-time behaviour: convergence to the stationary family, ergodic value,
and the averaged value normalization."""

import math
from fractions import Fraction

import numpy as np
import pytest

from riccati_nash.core import CostStencil, GameSpec
from riccati_nash.ergodic import (
    ConvergenceReport,
    convergence_sweep,
    ergodic_value,
    value_normalization_check,
)
from riccati_nash.errors import UncertifiedSymbol, WindowMismatch
from riccati_nash.genfun import (
    ContourPlan,
    build_symbol,
    certify_symbol,
    directed_chain_oracle,
    ergodic_coefficients,
    extract_coefficients,
)
from riccati_nash.riccati import certify_decay, integrate_backward

NU = 1.5
CHAIN = CostStencil(np.array([[NU * NU, -NU], [-NU, 1.0]]), np.zeros((2, 2)))


@pytest.fixture(scope="module")
def sym():
    return certify_symbol(CHAIN, rho=1.4, t_max=8.0)


# -- ergodic value -----------------------------------------------------------

def test_ergodic_value_of_zero_matrix():
    ev = ergodic_value(np.zeros((4, 4)))
    assert ev.value == 0.0
    assert math.isnan(ev.tail_bound)
    with pytest.raises(WindowMismatch):
        ergodic_value(np.zeros(3))


def test_ergodic_value_scales_with_dimension():
    m = np.diag([1.0, 0.25, 0.0625])
    assert ergodic_value(m, d=3).value == 3.0 * ergodic_value(m).value


def test_chain_partial_trace_approaches_sqrt2():
    # exact rational partial sums of the oracle diagonal
    partial = sum(float(directed_chain_oracle(h, h)) for h in range(200))
    assert partial == pytest.approx(1.4141958151533793, rel=1e-14)
    gap = abs(partial - math.sqrt(2.0))
    # alternating-tail bound from the last kept term, with a small cushion
    bound = abs(float(directed_chain_oracle(199, 199))) * (2.0 / 3.0) * 199
    assert gap <= 1.05 * bound
    assert gap <= 2e-5


def test_certified_tail_covers_window_growth(sym):
    plan16 = ContourPlan.for_symbol(sym, 16)
    cb16 = ergodic_coefficients(sym, plan16, 16)
    cb32 = ergodic_coefficients(sym, ContourPlan.for_symbol(sym, 32), 32)
    game = GameSpec(mode="shift_invariant", horizon=1.0, stencil=CHAIN)
    cert = certify_decay(integrate_backward(game, steps=64, truncation=16),
                         1.45)
    ev16 = ergodic_value(cb16, certificate=cert)
    ev32 = ergodic_value(cb32, certificate=cert)
    assert abs(ev16.value - ev32.value) <= ev16.tail_bound
    assert ev16.tail_bound <= 1e-4


# -- convergence sweeps ------------------------------------------------------

def test_report_validation():
    with pytest.raises(WindowMismatch):
        ConvergenceReport(horizons=(1.0,), l1_gaps=(0.1,), trace_gaps=(0.1,),
                          lam=1.0, mu_estimate=0.0, fitted_rate=-1.0)
    with pytest.raises(WindowMismatch):
        ConvergenceReport(horizons=(2.0, 1.0), l1_gaps=(0.1, 0.1),
                          trace_gaps=(0.1, 0.1), lam=1.0, mu_estimate=0.0,
                          fitted_rate=-1.0)
    with pytest.raises(WindowMismatch):
        ConvergenceReport(horizons=(1.0, 2.0), l1_gaps=(-0.1, 0.1),
                          trace_gaps=(0.1, 0.1), lam=1.0, mu_estimate=0.0,
                          fitted_rate=-1.0)


def test_sweep_gates(sym):
    with pytest.raises(UncertifiedSymbol):
        convergence_sweep(build_symbol(CHAIN), [1.0, 2.0], 8)
    with pytest.raises(WindowMismatch):
        convergence_sweep(sym, [1.0], 8)
    with pytest.raises(UncertifiedSymbol):
        convergence_sweep(sym, [1.0, 16.0], 8)  # beyond compat_t_max


def test_sweep_converges_at_the_boundary_rate(sym):
    rep = convergence_sweep(sym, [1.0, 2.0, 4.0], 16)
    assert all(b < a for a, b in zip(rep.l1_gaps, rep.l1_gaps[1:]))
    assert all(b < a for a, b in zip(rep.trace_gaps, rep.trace_gaps[1:]))
    assert rep.lam == pytest.approx(1.7580806277804324, rel=1e-10)
    assert rep.mu_estimate == pytest.approx(-0.6935116099275892, rel=1e-6)
    # fitted slope tracks -2 eps with eps = min Re xi on the contour radius
    eps = math.sqrt(0.45)
    assert 0.8 <= rep.fitted_rate / (-2.0 * eps) <= 1.25


def test_lambda_is_additive_in_dimension(sym):
    r1 = convergence_sweep(sym, [0.5, 1.0], 8, d=1, n_quad=33)
    r3 = convergence_sweep(sym, [0.5, 1.0], 8, d=3, n_quad=33)
    assert r3.lam == 3.0 * r1.lam


def test_minus_branch_is_not_the_long_time_limit(sym):
    plan = ContourPlan.for_symbol(sym, 16)
    cbar = ergodic_coefficients(sym, plan, 16)
    for horizon in (1.0, 4.0):
        c0 = extract_coefficients(sym, plan, horizon, 16)
        assert np.abs(c0 + cbar).sum() >= 1.0


def test_stationary_terminal_data_freezes_the_sweep(sym):
    # seeding g with the stationary window makes every horizon agree with
    # cbar up to extraction noise
    w = 8
    plan = ContourPlan.for_symbol(sym, w)
    cb = ergodic_coefficients(sym, plan, w)
    stat = CostStencil(CHAIN.padded(w)[0], cb)
    ssym = certify_symbol(stat, rho=1.4, t_max=1.0)
    rep = convergence_sweep(ssym, [0.5, 1.0], w, n_quad=17)
    assert max(rep.l1_gaps) <= 1e-8
    assert max(rep.trace_gaps) <= 1e-8


# -- value normalization -----------------------------------------------------

def test_normalized_value_gap_vanishes_at_the_terminal_edge(sym):
    rep = value_normalization_check(sym, 2.0, [0.0, 0.5, 1.0], np.ones(16), 16,
                                    n_quad=33)
    assert rep.fractions[-1] == 1.0
    assert rep.gaps[-1] == 0.0
    with pytest.raises(WindowMismatch):
        value_normalization_check(sym, 2.0, [0.0, 1.5], np.ones(16), 16)


def test_normalized_value_gap_halves_with_the_horizon(sym):
    x = np.ones(16)
    gaps = {}
    for horizon in (2.0, 4.0, 8.0):
        rep = value_normalization_check(sym, horizon, [0.0, 0.5, 1.0], x, 16,
                                        n_quad=33)
        gaps[horizon] = rep.max_gap
    assert 0.35 <= gaps[4.0] / gaps[2.0] <= 0.65
    assert 0.35 <= gaps[8.0] / gaps[4.0] <= 0.65


def test_zero_state_value_gap_is_pure_constant_term(sym):
    # with x = 0 the gap is |eta(0)/T - lambda| ~ C/T; C stabilizes near 0.7
    cs = []
    for horizon in (2.0, 4.0, 8.0):
        rep = value_normalization_check(sym, horizon, [0.0, 0.5, 1.0],
                                        np.zeros(16), 16, n_quad=33)
        cs.append(rep.max_gap * horizon)
    assert all(0.6 <= c <= 0.75 for c in cs)
    assert max(cs) - min(cs) <= 0.03
