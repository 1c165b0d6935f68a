"""Interference-layer probabilities: Bessel averages, yields, patterns."""

import math

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from aqcka import optics
from aqcka.model import ChannelModel, ProtocolConfig


def lossless(eta, p_d=0.0):
    return ChannelModel(distance_km=0.0, alpha_db_per_km=0.0, eta_det=eta, p_d=p_d)


def test_bessel_i0_pinned_values():
    assert optics.bessel_i0(0.0) == 1.0
    assert optics.bessel_i0(1.0) == pytest.approx(1.2660658777520084, rel=1e-13)
    assert optics.bessel_i0(2.0) == pytest.approx(2.2795853023360673, rel=1e-13)


def test_bessel_i0_matches_scipy():
    xs = np.linspace(0.0, 30.0, 61)
    ours = np.array([optics.bessel_i0(x) for x in xs])
    ref = scipy.special.i0(xs)
    assert np.allclose(ours, ref, rtol=1e-10)


def test_bessel_i0_even():
    assert optics.bessel_i0(-1.7) == pytest.approx(optics.bessel_i0(1.7), rel=1e-14)


def test_bessel_integral_identity():
    # I0(x*sqrt(a^2+b^2)) equals the phase average of exp(-x(a cos + b sin))
    theta = np.linspace(0.0, 2.0 * np.pi, 4097)
    for a, b, x in [(1.0, 0.0, 0.5), (0.6, 0.8, 1.0), (0.3, 0.4, 2.0), (1.0, 1.0, 0.25)]:
        integrand = np.exp(-x * (a * np.cos(theta) + b * np.sin(theta)))
        avg = np.trapezoid(integrand, theta) / (2.0 * np.pi)
        assert avg == pytest.approx(optics.bessel_i0(x * math.hypot(a, b)), rel=1e-9)


def test_single_photon_yields_without_darks():
    table = optics.single_photon_yields(lossless(0.4))
    assert table.y00 == 0.0
    assert table.y10 == pytest.approx(0.2, rel=1e-12)
    assert table.y01 == table.y10
    assert table.y11 == pytest.approx(0.26, rel=1e-12)


def test_single_photon_yields_dark_floor():
    p_d = 1e-4
    table = optics.single_photon_yields(lossless(0.5, p_d))
    assert table.y00 == pytest.approx(2 * p_d * (1 - p_d), rel=1e-12)


def test_single_photon_yields_closed_form_grid():
    for eta in (0.05, 0.3, 0.7, 0.95):
        for p_d in (0.0, 1e-8, 1e-3):
            table = optics.single_photon_yields(lossless(eta, p_d))
            ep = eta / 2.0
            assert table.y10 == pytest.approx((2 * p_d * (1 - ep) + ep) * (1 - p_d), rel=1e-12)
            expect11 = (2 * p_d * (1 - ep) ** 2 + 2 * ep * (1 - eta) + ep * ep / 2) * (1 - p_d)
            assert table.y11 == pytest.approx(expect11, rel=1e-12)
            for y in (table.y00, table.y01, table.y10, table.y11):
                assert 0.0 <= y <= 1.0


def test_pattern_yields_three_users():
    eta = 0.8
    table = optics.pattern_yields(3, lossless(eta))
    assert len(table) == 8
    assert table[("L", "L", "L")] == pytest.approx(eta**3 / 16, rel=1e-12)
    assert table[("R", "R", "R")] == 0.0
    assert all(0.0 <= v <= 1.0 for v in table.values())


def test_pattern_yields_four_users():
    eta = 0.8
    table = optics.pattern_yields(4, lossless(eta))
    assert len(table) == 16
    assert table[("L", "L", "L", "L")] == pytest.approx(eta**4 / 64, rel=1e-12)
    assert table[("R", "L", "L", "L")] == 0.0


def test_pattern_yields_reflection_symmetry():
    # the channel does not distinguish users, so any cyclic rotation of a
    # pattern carries the same probability
    table = optics.pattern_yields(3, lossless(0.6, 1e-6))
    for pattern, value in table.items():
        rotated = pattern[1:] + pattern[:1]
        assert table[rotated] == pytest.approx(value, rel=1e-12)


def test_port_click_prob_cyclic_shift():
    ch = ChannelModel(distance_km=10.0)
    kvec = (0.33, 0.08, 0.0)
    rotated = (kvec[-1],) + kvec[:-1]
    for i in range(3):
        assert optics.port_click_prob(kvec, i, ch) == pytest.approx(
            optics.port_click_prob(rotated, (i + 1) % 3, ch), rel=1e-12
        )


def test_total_click_prob_sums_lone_ports():
    ch = ChannelModel(distance_km=10.0)
    kvec = (0.33, 0.08, 0.0)
    total = optics.total_click_prob(kvec, ch)
    parts = sum(optics.port_click_prob(kvec, i, ch) for i in range(3))
    assert total == pytest.approx(parts, rel=1e-12)
    assert 0.0 <= total <= 1.0


def test_marginal_probabilities_are_symmetric():
    cfg = ProtocolConfig()
    q_port = optics.marginal_port_click_prob(cfg)
    q_tot = optics.marginal_total_click_prob(cfg)
    assert q_tot == pytest.approx(cfg.n_users * q_port, rel=1e-12)
    assert 0.0 < q_port < 1.0


def test_detector_click_probs_vacuum():
    el, er = optics.detector_click_probs((0.0, 0.0, 0.0), np.zeros(3), lossless(0.85))
    assert np.all(el == 0.0)
    assert np.all(er == 0.0)


def test_detector_click_probs_dark_floor():
    p_d = 1e-3
    el, er = optics.detector_click_probs((0.0, 0.0, 0.0), np.zeros(3), lossless(0.85, p_d))
    assert np.allclose(el, p_d, rtol=1e-9)
    assert np.allclose(er, p_d, rtol=1e-9)


@given(
    eta=st.floats(min_value=1e-3, max_value=1.0),
    p_d=st.floats(min_value=0.0, max_value=1e-2),
)
@settings(max_examples=100, deadline=None)
def test_yields_stay_probabilities(eta, p_d):
    table = optics.single_photon_yields(lossless(eta, p_d))
    for y in (table.y00, table.y01, table.y10, table.y11):
        assert 0.0 <= y <= 1.0
