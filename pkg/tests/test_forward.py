from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracpme.elliptic import ExteriorDatum, bump_datum
from fracpme.forward import (
    MeasurementRecord,
    TimeSeriesField,
    energy_functional,
    nonlinear_dn_map,
    pme_apply,
    power_map,
    solve_ivp,
    step_implicit,
)
from fracpme.operators import CoefficientFields, assemble_operator, smooth_bump, sobolev_norm

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# -- pointwise maps ------------------------------------------------------------------


def test_power_map_zero():
    assert np.all(power_map(np.zeros(4), 2.5) == 0.0)


@given(z=arrays(float, 16, elements=finite), m=st.floats(1.1, 5.0))
def test_power_map_inverse_pair(z, m):
    back = power_map(power_map(z, m), 1.0 / m)
    assert np.allclose(back, z, rtol=1e-12, atol=1e-12)


@given(a=arrays(float, 16, elements=finite), b=arrays(float, 16, elements=finite), m=st.floats(1.1, 5.0))
def test_power_map_monotone(a, b, m):
    assert np.all((power_map(a, m) - power_map(b, m)) * (a - b) >= 0.0)


def test_energy_closed_form(layout512):
    om = layout512.mask_omega
    val = energy_functional(np.ones(om.size), 2.0, layout512.volume_element)
    # 102 nodes of weight 5/511 approximate |Omega| = 1
    assert val == pytest.approx(1.0 / 3.0, rel=0.01)
    assert energy_functional(np.zeros(5), 2.0) == 0.0


@given(a=arrays(float, 12, elements=finite), b=arrays(float, 12, elements=finite))
def test_energy_convex(a, b):
    mid = energy_functional(0.5 * (a + b), 2.0)
    assert mid <= 0.5 * energy_functional(a, 2.0) + 0.5 * energy_functional(b, 2.0) + 1e-9 * (1 + mid)


def test_pme_apply_zero_and_linear_limit(small_pack, rng):
    om = small_pack.layout.mask_omega
    assert np.all(pme_apply(small_pack, np.zeros(om.size), 2.0) == 0.0)
    z = rng.standard_normal(om.size)
    A = small_pack.Ls_matrix[np.ix_(om, om)]
    assert np.allclose(pme_apply(small_pack, z, 1.0), A @ z, atol=1e-12)


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_pme_monotone_pairing(small_pack, seed):
    rng = np.random.default_rng(seed)
    om = small_pack.layout.mask_omega
    z1, z2 = rng.standard_normal((2, om.size))
    # <A z1 - A z2, z1 - z2> in the H^-s pairing reduces to the l2 pairing of the powers
    assert (power_map(z1, 2.0) - power_map(z2, 2.0)) @ (z1 - z2) >= 0.0


# -- stepping ---------------------------------------------------------------------------


def test_step_zero_fixed_point(small_pack):
    n = small_pack.layout.mask_omega.size
    w, info = step_implicit(small_pack, 2.0, np.zeros(n), 0.01, np.zeros(n))
    assert np.all(w == 0.0) and info.newton_iterations == 0


def test_step_rejects_bad_dt(small_pack):
    n = small_pack.layout.mask_omega.size
    with pytest.raises(ValueError):
        step_implicit(small_pack, 2.0, np.zeros(n), 0.0, np.zeros(n))


@pytest.mark.parametrize("m", [2.0, 3.0])
def test_step_residual_and_equation(small_pack, rng, m):
    om = small_pack.layout.mask_omega
    A = small_pack.Ls_matrix[np.ix_(om, om)]
    lam = small_pack.coeffs.lam[om]
    wk = np.abs(rng.standard_normal(om.size))
    f = rng.standard_normal(om.size)
    dt = 0.05
    w, info = step_implicit(small_pack, m, wk, dt, f)
    assert info.residual <= 1e-9
    lhs = w + dt * (A @ power_map(w, m) + lam * w)
    assert np.allclose(lhs, wk + dt * f, atol=1e-7 * np.max(np.abs(wk + dt * f)))


def test_energy_dissipation_random_states(small_pack):
    """f = 0 and lambda >= 0: the stored energy never increases across a step."""
    lay = small_pack.layout
    om = lay.mask_omega
    rng = np.random.default_rng(2024)
    for trial in range(20):
        w = rng.standard_normal(om.size) * rng.uniform(0.1, 10.0)
        for _ in range(5):
            before = energy_functional(w, 2.0, lay.volume_element)
            w, info = step_implicit(small_pack, 2.0, w, 0.02, np.zeros(om.size))
            after = energy_functional(w, 2.0, lay.volume_element)
            assert after <= before * (1.0 + 1e-12)


def manufactured_error(pack, m: float, K: int, T: float = 1.0) -> float:
    """Max error at T against w*(t, x) = t exp(-t) b(x) with the exact forcing at t_{k+1}."""
    lay = pack.layout
    om = lay.mask_omega
    b = smooth_bump(lay.points[om], [0.5], [0.4])
    lam = pack.coeffs.lam[om]
    A = pack.Ls_matrix[np.ix_(om, om)]

    def wstar(t):
        return t * np.exp(-t) * b

    def forcing(t):
        dw = (1.0 - t) * np.exp(-t) * b
        return dw + A @ power_map(wstar(t), m) + lam * wstar(t)

    dt = T / K
    w = np.zeros(om.size)
    for k in range(K):
        w, _ = step_implicit(pack, m, w, dt, forcing((k + 1) * dt), tol=1e-11)
    return float(np.max(np.abs(w - wstar(T))))


@pytest.mark.parametrize("m", [2.0, 3.0])
def test_manufactured_first_order(small_pack, m):
    Ks = [16, 32, 64, 128]
    errs = [manufactured_error(small_pack, m, K) for K in Ks]
    order = -np.polyfit(np.log(Ks), np.log(errs), 1)[0]
    assert abs(order - 1.0) <= 0.15


# -- IVP and DN maps -----------------------------------------------------------------


def test_zero_datum_zero_solution(small_pack):
    lay = small_pack.layout
    d = ExteriorDatum(lay.zeros(), 1.0, lay.mask_w1)
    sol = solve_ivp(small_pack, 2.0, d, 1.0, 16)
    assert np.all(sol.slices == 0.0)
    rec = nonlinear_dn_map(small_pack, sol, 2.0, d)
    assert np.all(rec.values == 0.0)


@pytest.fixture(scope="module")
def bump_solution(small_pack):
    d = bump_datum(small_pack.layout, [-1.25], [0.25], h=20.0)
    return d, solve_ivp(small_pack, 2.0, d, 1.0, 32)


def test_ivp_initial_and_exterior(small_pack, bump_solution):
    d, sol = bump_solution
    lay = small_pack.layout
    om, ex = lay.mask_omega, lay.mask_exterior
    assert np.all(sol.slices[0, om] == 0.0)
    g_u = power_map(d.values, 0.5)
    assert np.all(sol.slices[:, ex] == g_u[ex])
    # disjoint supports: w g = 0 on every slice
    w = sol.slices.copy()
    w[:, ex] = 0.0
    assert np.all(w * g_u == 0.0)
    assert sol.meta["max_step_residual"] <= 1e-9
    assert sol.meta["fallback_steps"] == 0


def test_ivp_bounded(bump_solution):
    _, sol = bump_solution
    peaks = np.max(np.abs(sol.slices), axis=1)
    assert np.all(np.isfinite(peaks)) and peaks.max() < 10 * peaks[0]


def test_ivp_rejects_short_mesh(small_pack, bump_solution):
    with pytest.raises(ValueError):
        solve_ivp(small_pack, 2.0, bump_solution[0], 1.0, 4)


def test_self_convergence_order(small_pack):
    d = bump_datum(small_pack.layout, [-1.25], [0.25], h=20.0)
    om = small_pack.layout.mask_omega
    finals = [solve_ivp(small_pack, 2.0, d, 1.0, K).slices[-1, om] for K in (32, 64, 128)]
    order = np.log2(np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2]))
    assert order == pytest.approx(1.0, abs=0.15)


def test_record_equivalence(small_pack, bump_solution):
    d, sol = bump_solution
    a = nonlinear_dn_map(small_pack, sol, 2.0, d, "Lambda")
    b = nonlinear_dn_map(small_pack, sol.to_variable("v", 2.0), 2.0, d, "Lambda_tilde")
    assert np.allclose(a.values, b.values, rtol=1e-13, atol=1e-13 * np.max(np.abs(a.values)))
    with pytest.raises(ValueError):
        nonlinear_dn_map(small_pack, sol, 2.0, d, "Lambda_tilde")


def test_record_sees_absorption(small_pack, bump_solution):
    d, sol = bump_solution
    lay = small_pack.layout
    plain = assemble_operator(lay, CoefficientFields(small_pack.coeffs.gamma, lay.zeros()), 0.5)
    a = nonlinear_dn_map(small_pack, sol, 2.0, d)
    b = nonlinear_dn_map(plain, solve_ivp(plain, 2.0, d, 1.0, 32), 2.0, d)
    assert np.linalg.norm(a.values - b.values) > 1e-6 * np.linalg.norm(a.values)


def test_record_rejects_nonfinite(layout128):
    d = ExteriorDatum(layout128.zeros(), 1.0, layout128.mask_w1)
    with pytest.raises(ValueError):
        MeasurementRecord(d, "Lambda", np.array([0.0, 1.0]), layout128.mask_w2, np.array([[np.nan]]))


def test_variable_conversion_roundtrip(bump_solution):
    _, sol = bump_solution
    back = sol.to_variable("v", 2.0).to_variable("u", 2.0)
    assert np.allclose(back.slices, sol.slices, rtol=1e-13, atol=0)
    with pytest.raises(ValueError):
        TimeSeriesField(sol.times, sol.slices, "w").to_variable("u", 2.0)


def test_difference_quotients_bounded_in_dual_norm(small_pack):
    """max_k |(w_{k+1} - w_k)/dt|_{H^-s} stays bounded as the time mesh is refined."""
    lay = small_pack.layout
    om = lay.mask_omega
    d = bump_datum(lay, [-1.25], [0.25], h=20.0)
    peaks = []
    for K in (32, 64, 128):
        sol = solve_ivp(small_pack, 2.0, d, 1.0, K)
        dq = np.diff(sol.slices[:, om], axis=0) / sol.dt
        peaks.append(max(sobolev_norm(small_pack, -small_pack.s, lay.extend(q, om)) for q in dq))
    assert np.all(np.isfinite(peaks))
    assert max(peaks) / min(peaks) <= 1.5
