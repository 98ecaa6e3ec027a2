"""Gauge sequence tests.

The exponential-bump family has closed-form entries, so most expectations
here are frozen analytic values rather than regression snapshots.
"""

import math

import numpy as np
import pytest

from riccati_nash.errors import (
    NonPositiveAlpha,
    NonPositiveSequence,
    TailBoundFailure,
    WindowMismatch,
)
from riccati_nash.seqtools import (
    DecaySequence,
    build_domination_witness,
    certify_self_controlled,
    convolve,
    exponential_tilt,
    fold_cyclic,
    make_exponential_fourier_seq,
)

E2PI = math.exp(-2.0 * math.pi)


def test_exponential_family_entries_match_closed_form():
    beta = make_exponential_fourier_seq(2.0, radius=8)
    # beta_i = 2a/(a^2+i^2) (1 - (-1)^i e^{-a pi}) at a=2
    assert beta.value(0) == pytest.approx(1.0 - E2PI, abs=1e-15)
    assert beta.value(1) == pytest.approx(0.8 * (1.0 + E2PI), abs=1e-15)
    assert beta.value(0) == pytest.approx(0.998132557268292, abs=1e-14)
    assert beta.value(1) == pytest.approx(0.8014939541853665, abs=1e-14)
    # i=2 halves the i=0 entry exactly: 2a/(a^2+4) = a/4 at a=2
    assert beta.value(2) == 0.5 * beta.value(0)
    assert beta.value(-1) == beta.value(1)
    assert beta.alpha == 2.0
    assert not beta.certified


def test_window_mass_brackets_full_sum():
    # sum over all of Z is exactly 2*pi, independent of alpha
    for alpha in (0.5, 2.0, 7.0):
        beta = make_exponential_fourier_seq(alpha, radius=256)
        gap = 2.0 * math.pi - beta.l1_window()
        assert 0.0 < gap <= beta.tail_l1()


def test_sequence_validation():
    with pytest.raises(NonPositiveAlpha):
        make_exponential_fourier_seq(0.0)
    with pytest.raises(NonPositiveAlpha):
        make_exponential_fourier_seq(-1.0)
    with pytest.raises(NonPositiveSequence):
        make_exponential_fourier_seq(1.0, radius=0)
    with pytest.raises(NonPositiveSequence):
        DecaySequence(entries=np.array([1.0, 0.0]))
    with pytest.raises(NonPositiveSequence):
        DecaySequence(entries=np.array([1.0, np.inf]))
    with pytest.raises(NonPositiveSequence):
        DecaySequence(entries=np.array([1.0, 0.5]), tail_constant=-1.0)
    with pytest.raises(NonPositiveSequence):
        DecaySequence(entries=np.ones((2, 2)))


def test_window_accessors():
    beta = DecaySequence(entries=np.array([1.0, 0.5, 0.25]))
    assert beta.radius == 2
    assert np.array_equal(beta.two_sided(), [0.25, 0.5, 1.0, 0.5, 0.25])
    assert beta.l1_window() == 2.5
    assert beta.tail_l1() == 0.0
    with pytest.raises(WindowMismatch):
        beta.value(3)


# -- convolution -------------------------------------------------------------

def test_delta_is_convolution_identity():
    beta = make_exponential_fourier_seq(1.0, radius=6)
    delta = np.zeros(13)
    delta[6] = 1.0
    out = convolve(delta, beta)
    assert np.array_equal(out, beta.two_sided())


def test_cyclic_convolution_small_case():
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([4.0, 5.0, 6.0])
    out = convolve(a, b, mode="cyclic", n=3)
    assert np.array_equal(out, [31.0, 31.0, 28.0])


def test_fold_cyclic_wraps_two_sided_window():
    win = DecaySequence(entries=np.array([1.0, 0.5, 0.25]))
    out = fold_cyclic(win, 3)
    # i in {-2, 1} -> slot 1, i in {-1, 2} -> slot 2
    assert np.array_equal(out, [1.0, 0.75, 0.75])
    passthrough = fold_cyclic(np.array([3.0, 1.0, 2.0]), 3)
    assert np.array_equal(passthrough, [3.0, 1.0, 2.0])
    with pytest.raises(WindowMismatch):
        fold_cyclic(win, 6)


def test_convolve_gates():
    beta = make_exponential_fourier_seq(1.0, radius=4)
    with pytest.raises(WindowMismatch):
        convolve(beta, make_exponential_fourier_seq(1.0, radius=5))
    with pytest.raises(WindowMismatch):
        convolve(beta, beta, mode="cyclic")
    with pytest.raises(WindowMismatch):
        convolve(beta, beta, mode="linear")
    with pytest.raises(WindowMismatch):
        convolve(np.ones(4), np.ones(4))  # even length has no center


# -- self-control certificates ----------------------------------------------

def test_center_ratio_stays_under_four():
    # (beta * beta)_0 / beta_0 -> pi (1 + e^{-alpha pi}) as the window grows
    beta = make_exponential_fourier_seq(2.0, radius=256)
    ratio = convolve(beta, beta)[beta.radius] / beta.value(0)
    assert ratio < 4.0
    assert ratio == pytest.approx(math.pi * (1.0 + E2PI), abs=1e-6)


def test_certified_constant_frozen_values():
    c200 = certify_self_controlled(make_exponential_fourier_seq(2.0, 200))
    c256 = certify_self_controlled(make_exponential_fourier_seq(2.0, 256))
    assert c200.certified and c256.certified
    assert c200.csc_constant == pytest.approx(12.599442412712685, rel=1e-12)
    assert c256.csc_constant == pytest.approx(12.599646099525401, rel=1e-12)
    # both sit a tail-padding hair above the edge limit 4 pi (1 + e^{-alpha pi})
    edge = 4.0 * math.pi * (1.0 + E2PI)
    assert c200.csc_constant < c256.csc_constant
    assert c256.csc_constant == pytest.approx(edge, rel=1e-3)
    assert np.array_equal(c200.entries,
                          make_exponential_fourier_seq(2.0, 200).entries)


def test_certificate_scales_linearly_with_the_gauge():
    base = make_exponential_fourier_seq(2.0, 128)
    c1 = certify_self_controlled(base).csc_constant
    doubled = DecaySequence(entries=2.0 * base.entries,
                            tail_constant=2.0 * base.tail_constant,
                            alpha=base.alpha)
    c2 = certify_self_controlled(doubled).csc_constant
    assert c2 == 2.0 * c1  # powers of two keep the scaling exact


def test_compact_gauge_constant_is_exact():
    beta = DecaySequence(entries=np.array([1.0, 0.5, 0.25]))
    assert certify_self_controlled(beta).csc_constant == 3.0


def test_tail_bound_gate():
    beta = make_exponential_fourier_seq(2.0)
    with pytest.raises(TailBoundFailure):
        certify_self_controlled(beta, tol_tail=1e-6)
    with pytest.raises(TailBoundFailure):
        certify_self_controlled(beta, tol_tail=4.0)
    assert certify_self_controlled(beta, tol_tail=6.0).certified


# -- tilting -----------------------------------------------------------------

def test_tilt_entries_and_tail():
    beta = make_exponential_fourier_seq(2.0, radius=16)
    tilted = exponential_tilt(beta, 0.5)
    i = np.arange(17)
    np.testing.assert_allclose(tilted.entries, beta.entries * np.exp(-0.5 * i),
                               rtol=1e-15)
    assert tilted.tail_constant == pytest.approx(
        beta.tail_constant * math.exp(-0.5 * 17), rel=1e-15)
    assert tilted.alpha == beta.alpha
    assert not tilted.certified
    with pytest.raises(NonPositiveAlpha):
        exponential_tilt(beta, 0.0)


@pytest.mark.parametrize("gamma,expected", [(0.1, 10.807640), (1.0, 8.729168)])
def test_tilt_keeps_self_control(gamma, expected):
    beta = make_exponential_fourier_seq(2.0, radius=200)
    c0 = certify_self_controlled(beta).csc_constant
    tilted = certify_self_controlled(exponential_tilt(beta, gamma))
    assert tilted.csc_constant == pytest.approx(expected, rel=1e-5)
    assert tilted.csc_constant < c0


# -- domination witnesses ----------------------------------------------------

def test_domination_witness_brute_force():
    beta = DecaySequence(entries=np.array([1.0, 0.5, 0.25]))
    theta = np.array([[0.1, 0.05], [0.05, 0.2]])
    wit = build_domination_witness(beta, theta)
    b = beta.entries[:2]
    outer = np.outer(b, b)
    assert wit.theta_bound == np.max(theta / outer)
    d = outer + theta
    worst = 0.0
    for h_i in range(2):
        for k in range(2):
            s = sum(d[j, 0] * d[h_i - j, k] for j in range(h_i + 1))
            worst = max(worst, s / outer[h_i, k])
    assert wit.conv_bound == pytest.approx(worst, rel=1e-15)


def test_domination_witness_gates():
    beta = DecaySequence(entries=np.array([1.0, 0.5, 0.25]))
    with pytest.raises(WindowMismatch):
        build_domination_witness(beta, np.zeros((2, 3)))
    with pytest.raises(WindowMismatch):
        build_domination_witness(beta, np.zeros((4, 4)))
    with pytest.raises(NonPositiveSequence):
        build_domination_witness(beta, np.array([[-0.1, 0.0], [0.0, 0.0]]))
