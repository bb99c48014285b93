from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracpme.asymptotics import (
    asymptotic_error,
    decompose,
    exponents,
    moment_fields,
    product_weights,
    rate_fit,
    time_integral_transform,
    verify_pointwise_estimates,
)
from fracpme.elliptic import ExteriorDatum
from fracpme.forward import TimeSeriesField, solve_ivp
from fracpme.params import ParameterError, SimulationParameters
from fracpme.pipeline import make_datum

DATUM_SPEC = {"shape": "bump", "center": -1.25, "radius": 0.25, "normalize": True}


def _series(times, values, n_points=3):
    slices = np.repeat(np.asarray(values, dtype=float)[:, None], n_points, axis=1)
    return TimeSeriesField(np.asarray(times, dtype=float), slices, "v")


@pytest.mark.parametrize("rule", ["trapezoid", "implicit"])
@given(beta=st.floats(-0.9, 4.0), T=st.floats(0.1, 5.0))
@settings(max_examples=40, deadline=None)
def test_product_weights_exact_for_constants(rule, beta, T):
    times = np.linspace(0.0, T, 17)
    w = product_weights(times, beta, rule)
    assert w.sum() == pytest.approx(T ** (beta + 1.0) / (beta + 1.0), rel=1e-10)


@given(beta=st.floats(-0.5, 3.0), T=st.floats(0.5, 3.0))
@settings(max_examples=40, deadline=None)
def test_trapezoid_weights_exact_for_linear(beta, T):
    times = np.linspace(0.0, T, 9)
    w = product_weights(times, beta, "trapezoid")
    # int_0^T (T-t)^beta t dt = T^(beta+2) / ((beta+1)(beta+2))
    exact = T ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0))
    assert w @ times == pytest.approx(exact, rel=1e-9)


def test_product_weights_rejects_bad_input():
    with pytest.raises(ValueError):
        product_weights(np.linspace(0, 1, 5), -1.0)
    with pytest.raises(ValueError):
        product_weights(np.linspace(0, 1, 5), 1.0, "simpson")


def test_implicit_weights_use_right_endpoints():
    w = product_weights(np.linspace(0.0, 1.0, 5), 0.0, "implicit")
    assert w[0] == 0.0
    np.testing.assert_allclose(w[1:], 0.25)


@pytest.mark.parametrize("alpha", [1.5, 3.0])
def test_transform_of_constant(alpha):
    T, c = 2.0, 0.7
    V = time_integral_transform(_series(np.linspace(0, T, 33), np.full(33, c)), alpha, T)
    np.testing.assert_allclose(V, c * T ** (1 + alpha) / (1 + alpha), rtol=1e-12)


def test_transform_alpha_zero_linear_in_time():
    times = np.linspace(0.0, 1.5, 11)
    V = time_integral_transform(_series(times, times), 0.0)
    np.testing.assert_allclose(V, 1.5 ** 2 / 2, rtol=1e-12)


def test_transform_requires_v_series_and_matching_horizon():
    s = _series(np.linspace(0, 1, 9), np.ones(9))
    with pytest.raises(ValueError):
        time_integral_transform(TimeSeriesField(s.times, s.slices, "u"), 2.0)
    with pytest.raises(ValueError):
        time_integral_transform(s, 2.0, T=2.0)


@pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
def test_moment_fields_constant_state(T):
    params = SimulationParameters(s=0.5, m=2.0, alpha=2.0, T=T)
    lam = np.array([0.0, 1.0, 3.0])
    M, N = moment_fields(_series(np.linspace(0, T, 41), np.ones(41)), lam, params)
    np.testing.assert_allclose(M, T ** 2, rtol=1e-12)
    np.testing.assert_allclose(N, lam * T ** 3 / 3, rtol=1e-12)


def test_moment_N_vanishes_without_absorption():
    params = SimulationParameters(s=0.5, m=3.0, alpha=2.0, T=1.0)
    times = np.linspace(0, 1, 21)
    _, N = moment_fields(_series(times, np.sin(3 * times)), np.zeros(3), params)
    assert np.all(N == 0.0)


@pytest.mark.parametrize("m,alpha", [(2.0, 1.0), (2.0, 0.5), (3.0, 0.4)])
def test_alpha_at_or_below_threshold_rejected(m, alpha):
    with pytest.raises(ParameterError):
        SimulationParameters(s=0.5, m=m, alpha=alpha, T=1.0)


def test_exponents_default():
    e = exponents(SimulationParameters(s=0.5, m=2.0, alpha=3.0, T=1.0))
    assert e["M"] == pytest.approx(1.0)
    assert e["N_derived"] == pytest.approx(2.0)
    assert e["N_printed"] == pytest.approx(5.0)
    assert e["HsV"] == pytest.approx(4.0)


@pytest.fixture(scope="module")
def params():
    return SimulationParameters(s=0.5, m=2.0, alpha=3.0, T=1.0)


@pytest.fixture(scope="module")
def solved(small_pack, params):
    datum = make_datum(small_pack.layout, DATUM_SPEC, small_pack, h=1e3)
    sol = solve_ivp(small_pack, params.m, datum, params.T, 64, 1e-10)
    return datum, decompose(small_pack, sol.to_variable("v", params.m), datum, params)


def test_decompose_zero_datum(small_pack, params):
    lay = small_pack.layout
    datum = ExteriorDatum(lay.zeros(), 1.0, lay.mask_w1)
    sol = solve_ivp(small_pack, params.m, datum, params.T, 16)
    b = decompose(small_pack, sol.to_variable("v", params.m), datum, params)
    assert not np.any(b.V) and not np.any(b.V0) and not np.any(b.R)
    assert b.sign == 0
    ws = verify_pointwise_estimates(small_pack, b, params, datum)
    assert all(w.sample_size == 0 and w.worst_case_input == "vacuous" for w in ws)


def test_remainder_vanishes_off_omega(solved):
    _, b = solved
    assert b.exterior_mismatch <= 1e-8
    assert not b.flags


def test_remainder_identity_closes_with_minus_sign(solved):
    _, b = solved
    assert b.residual_minus <= 0.05
    assert b.residual_minus < b.residual_plus
    assert b.sign == -1


def test_trapezoid_transform_flags_nothing_off_omega(small_pack, params, solved):
    datum, _ = solved
    sol = solve_ivp(small_pack, params.m, datum, params.T, 64, 1e-10)
    b = decompose(small_pack, sol.to_variable("v", params.m), datum, params, transform_rule="trapezoid")
    # exterior values are constant in time, so both rules agree there
    assert b.exterior_mismatch <= 1e-8


def test_asymptotic_error_positive_and_finite(small_pack, solved):
    _, b = solved
    for variant in ("homogeneous", "shifted"):
        e = asymptotic_error(small_pack, b, variant)
        assert np.isfinite(e) and e > 0.0


def test_witnesses_finite_for_positive_solution(small_pack, params, solved):
    datum, b = solved
    ws = {w.name: w for w in verify_pointwise_estimates(small_pack, b, params, datum)}
    assert b.sign_definite
    for name in ("M_pointwise", "N_pointwise_derived", "M_L2", "N_L2_derived", "HsV", "C1_smallness"):
        assert np.isfinite(ws[name].empirical_constant) and ws[name].empirical_constant > 0
        assert "majorized" not in ws[name].details
    assert "condition_holds" in ws["C1_smallness"].details


def test_decompose_rejects_mismatched_horizon(small_pack, params, solved):
    datum, _ = solved
    sol = solve_ivp(small_pack, params.m, datum, 0.5, 16)
    with pytest.raises(ValueError):
        decompose(small_pack, sol.to_variable("v", params.m), datum, params)


@pytest.mark.parametrize("slope", [-0.5, -2.0 / 3.0])
def test_rate_fit_recovers_exact_power(slope):
    h = np.logspace(2, 5, 4)
    fit = rate_fit(h, 3.0 * h ** slope, expected=slope)
    assert fit.slope == pytest.approx(slope, abs=1e-12)
    assert fit.monotone and not fit.warnings
    assert fit.within(1e-9)
    np.testing.assert_allclose(fit.pair_slopes, slope, atol=1e-12)


def test_rate_fit_interval_contains_slope(rng):
    h = np.logspace(2, 5, 6)
    err = h ** -0.5 * np.exp(0.05 * rng.standard_normal(6))
    fit = rate_fit(h, err)
    assert fit.ci_low <= fit.slope <= fit.ci_high
    assert fit.ci_low <= -0.5 <= fit.ci_high


@pytest.mark.parametrize(
    "h,err",
    [
        ([1e2, 1e3, 1e4], [1.0, 0.5, 0.2]),
        ([1e2, 1e3, 1e4, 5e4], [1.0, 0.5, 0.2, 0.1]),
        ([1e2, 1e3, 1e4, 1e5], [1.0, 0.5, 0.0, 0.1]),
    ],
)
def test_rate_fit_rejects_insufficient_data(h, err):
    with pytest.raises(ValueError):
        rate_fit(h, err)


def test_rate_fit_warns_on_non_monotone(caplog):
    h = np.logspace(2, 5, 4)
    with caplog.at_level(logging.WARNING, logger="fracpme.asymptotics"):
        fit = rate_fit(h, [1.0, 0.1, 0.2, 0.01])
    assert not fit.monotone and fit.warnings
    assert any("monotone" in r.message for r in caplog.records)
