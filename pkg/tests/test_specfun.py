from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracstage.specfun import (
    SeriesControl,
    SpecialFunctionError,
    caputo_power,
    gamma,
    log_gamma,
    mittag_leffler,
)
from oracles import caputo_quadrature


@pytest.mark.parametrize(
    "x, expected",
    [(1.0, 1.0), (0.5, 1.7724538509055160), (1.5, 0.8862269254527580), (5.0, 24.0), (0.1, 9.513507698668732)],
)
def test_gamma_values(x, expected):
    assert gamma(x) == pytest.approx(expected, rel=1e-14)


def test_gamma_matches_math_gamma_on_a_sweep():
    xs = np.linspace(0.05, 20.0, 400)
    rel = [abs(gamma(x) / math.gamma(x) - 1.0) for x in xs]
    assert max(rel) < 1e-13


def test_gamma_small_argument_uses_reflection():
    assert gamma(0.05) == pytest.approx(math.gamma(0.05), rel=1e-13)


@pytest.mark.parametrize("x", [0.0, -0.5, -3.0, math.nan])
def test_gamma_domain_error(x):
    with pytest.raises(SpecialFunctionError):
        gamma(x)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.1, max_value=10.0))
def test_gamma_recurrence(x):
    assert gamma(x + 1.0) == pytest.approx(x * gamma(x), rel=1e-12)


def test_log_gamma_large_argument():
    assert log_gamma(200.0) == pytest.approx(math.lgamma(200.0), rel=1e-14)


def test_mittag_leffler_examples():
    assert mittag_leffler(1, 1, 1.0) == pytest.approx(2.718281828459045, abs=1e-15)
    assert mittag_leffler(1, 2, -1.0) == pytest.approx(0.6321205588285577, abs=1e-15)
    assert mittag_leffler(0.5, 1.5, 0.0) == pytest.approx(1.1283791670955126, abs=1e-15)


def test_mittag_leffler_closed_forms_on_50_points():
    for z in np.linspace(-2.0, 2.0, 50):
        assert abs(mittag_leffler(1.0, 1.0, z) - math.exp(z)) <= 1e-12
        assert abs(mittag_leffler(1.0, 2.0, z) - math.expm1(z) / z) <= 1e-12


def test_mittag_leffler_half_order_closed_form():
    # E_{1/2,1}(z) = exp(z^2) erfc(-z)
    for z in (-1.0, -0.3, 0.4, 1.1):
        assert mittag_leffler(0.5, 1.0, z) == pytest.approx(math.exp(z * z) * math.erfc(-z), rel=1e-12)


def test_mittag_leffler_term_budget_exhausted():
    with pytest.raises(SpecialFunctionError):
        mittag_leffler(1.0, 1.0, -30.0, SeriesControl(max_terms=10))


def test_caputo_power_examples():
    assert caputo_power(0, 0.5, 0.7) == 0.0
    assert caputo_power(1, 0.5, 1.0) == pytest.approx(1.1283791670955126, rel=1e-14)
    # 1/Gamma(1.1) evaluated independently
    assert caputo_power(1, 0.9, 1.0) == pytest.approx(1.0511370061117775, rel=1e-13)
    assert caputo_power(1, 0.9, 1.0) == pytest.approx(1.0 / math.gamma(1.1), rel=1e-14)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_caputo_power_one_matches_quadrature(alpha, t):
    q = caputo_quadrature(lambda s: np.ones_like(s), alpha, t)
    assert caputo_power(1, alpha, t) == pytest.approx(q, abs=1e-8)


@pytest.mark.parametrize("p", [0.2, -1.0])
def test_caputo_power_domain_error(p):
    with pytest.raises(SpecialFunctionError):
        caputo_power(p, 0.5, 1.0)


def test_caputo_power_two_matches_quadrature():
    q = caputo_quadrature(lambda s: 2.0 * s, 0.4, 0.8)
    assert caputo_power(2, 0.4, 0.8) == pytest.approx(q, abs=1e-8)
