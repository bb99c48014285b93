"""Time-integral transform, moment fields, estimate witnesses and the high-amplitude decomposition.

For the ``v = u^m`` series the transform ``V(x) = int_0^T (T-t)^alpha v dt``
turns the parabolic problem into an elliptic one for ``V``.  Integrating the
``v`` equation by parts in ``t`` gives ``(L^s V)|_Omega = -(M + N)`` with the
moment fields

    M = alpha int_0^T (T-t)^(alpha-1) v^(1/m) dt,   N = lam int_0^T (T-t)^alpha v^(1/m) dt,

and ``V = T^(1+alpha)/(1+alpha) * h g0`` off Omega.  Writing
``V = C_alpha T^(1+alpha) h V0 + R`` with ``V0`` the linear exterior solution
isolates a remainder ``R`` whose size grows like ``h^(1/m)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .elliptic import ExteriorDatum, solve_exterior
from .forward import TimeSeriesField, power_map
from .operators import EstimateWitness, OperatorPack, sobolev_norm, weighted_norm
from .params import ParameterError, SimulationParameters

logger = logging.getLogger(__name__)

RULES = ("trapezoid", "implicit")


def product_weights(times: np.ndarray, beta: float, rule: str = "trapezoid") -> np.ndarray:
    """Nodal weights for ``int_0^T (T-t)^beta phi(t) dt`` with the weight integrated exactly.

    ``rule="trapezoid"`` integrates the weight against the piecewise-linear
    interpolant of ``phi`` (exact for linear ``phi``).  ``rule="implicit"``
    holds ``phi`` at its right-endpoint value on each step, matching the
    implicit Euler stepper: the value at ``t_k`` stands for ``(t_{k-1}, t_k]``.
    Both are exact for ``phi`` constant in time.  Needs ``beta > -1``.
    """
    if not beta > -1.0:
        raise ValueError(f"weight exponent must exceed -1, got {beta}")
    times = np.asarray(times, dtype=float)
    T = times[-1]
    sig = T - times
    sig[-1] = 0.0
    p1 = sig ** (beta + 1.0)
    I0 = (p1[:-1] - p1[1:]) / (beta + 1.0)
    w = np.zeros(times.size)
    if rule == "implicit":
        w[1:] = I0
        return w
    if rule != "trapezoid":
        raise ValueError(f"unknown rule {rule!r}")
    dt = np.diff(times)
    p2 = sig ** (beta + 2.0)
    # int sigma^beta (t - t_k) dt with t - t_k = sigma_k - sigma
    I1 = sig[:-1] * I0 - (p2[:-1] - p2[1:]) / (beta + 2.0)
    w[:-1] += I0 - I1 / dt
    w[1:] += I1 / dt
    return w


def _require_v(series: TimeSeriesField) -> np.ndarray:
    if series.variable_tag != "v":
        raise ValueError(f"expected a v series, got {series.variable_tag!r}")
    return series.slices


def time_integral_transform(series: TimeSeriesField, alpha: float, T: float | None = None, rule: str = "trapezoid") -> np.ndarray:
    """``V(x) = int_0^T (T-t)^alpha v(x, t) dt`` for a ``v`` series."""
    v = _require_v(series)
    times = series.times
    if T is not None and not math.isclose(T, times[-1], rel_tol=1e-12):
        raise ValueError(f"series ends at {times[-1]}, not T={T}")
    return product_weights(times, alpha, rule) @ v


def moment_fields(
    series: TimeSeriesField,
    lam: np.ndarray,
    params: SimulationParameters,
    rule: str = "trapezoid",
) -> tuple[np.ndarray, np.ndarray]:
    """Moment fields ``M`` and ``N`` of a ``v`` series (full-box arrays)."""
    if not params.alpha > params.m_conj - 1.0:
        raise ParameterError("alpha must exceed m' - 1")
    v = _require_v(series)
    w = power_map(v, 1.0 / params.m)
    times = series.times
    M = params.alpha * (product_weights(times, params.alpha - 1.0, rule) @ w)
    N = lam * (product_weights(times, params.alpha, rule) @ w)
    return M, N


@dataclass
class TransformBundle:
    """Transform ``V``, moments ``M``/``N``, linear part ``V0`` and remainder ``R``.

    ``residual_minus`` and ``residual_plus`` are the relative Omega misfits of
    ``(L^s R)|_Omega = -(M + N)`` and ``= +(M + N)``; ``sign`` records which closes.
    """

    V: np.ndarray
    M: np.ndarray
    N: np.ndarray
    V0: np.ndarray
    R: np.ndarray
    C_alpha: float
    h: float
    alpha: float
    T: float
    V_abs: np.ndarray
    sign_definite: bool
    exterior_mismatch: float = 0.0
    residual_minus: float = float("nan")
    residual_plus: float = float("nan")
    flags: list = field(default_factory=list)

    @property
    def sign(self) -> int:
        if not np.isfinite(self.residual_minus):
            return 0
        return -1 if self.residual_minus <= self.residual_plus else 1


def decompose(
    pack: OperatorPack,
    series: TimeSeriesField,
    datum: ExteriorDatum,
    params: SimulationParameters,
    transform_rule: str = "implicit",
    moment_rule: str = "trapezoid",
    exterior_tol: float = 1e-8,
) -> TransformBundle:
    """Split ``V`` into ``C_alpha T^(1+alpha) h V0 + R`` and check the remainder equation.

    ``series`` is the ``v`` series of a converged solve with the datum's
    amplitude.  ``R`` must vanish off Omega; a larger exterior mismatch
    (relative to ``max |V|``) is flagged as an inconsistent ``C_alpha`` or
    quadrature.
    """
    layout = pack.layout
    om, ex = layout.mask_omega, layout.mask_exterior
    vol = layout.volume_element
    T, alpha, h = params.T, params.alpha, datum.h
    if not math.isclose(series.times[-1], T, rel_tol=1e-12):
        raise ValueError("series horizon differs from params.T")
    V = time_integral_transform(series, alpha, T, transform_rule)
    abs_series = TimeSeriesField(series.times, np.abs(series.slices), "v")
    V_abs = time_integral_transform(abs_series, alpha, T, transform_rule)
    M, N = moment_fields(series, pack.coeffs.lam, params, moment_rule)
    V0 = solve_exterior(pack, layout.zeros(), datum.g0).u
    lead = params.C_alpha * T ** (1.0 + alpha) * h
    R = V - lead * V0
    bundle = TransformBundle(
        V=V, M=M, N=N, V0=V0, R=R, C_alpha=params.C_alpha, h=h, alpha=alpha, T=T,
        V_abs=V_abs, sign_definite=bool(np.all(series.slices >= 0.0) or np.all(series.slices <= 0.0)),
    )
    scale = np.max(np.abs(V))
    if scale == 0.0:
        return bundle
    bundle.exterior_mismatch = float(np.max(np.abs(R[ex])) / scale)
    if bundle.exterior_mismatch > exterior_tol:
        bundle.flags.append("exterior mismatch: inconsistent C_alpha or time quadrature")
        logger.warning("exterior mismatch %.3e exceeds %.1e", bundle.exterior_mismatch, exterior_tol)
    LsR = (pack.Ls_matrix @ R)[om]
    src = (M + N)[om]
    denom = weighted_norm(src, vol)
    if denom > 0.0:
        bundle.residual_minus = weighted_norm(LsR + src, vol) / denom
        bundle.residual_plus = weighted_norm(LsR - src, vol) / denom
    return bundle


def asymptotic_error(pack: OperatorPack, bundle: TransformBundle, variant: str = "homogeneous") -> float:
    """``H^{-s}`` surrogate of ``h^{-1} L^s V - C_alpha T^(1+alpha) L^s V0`` on the box."""
    lead = bundle.C_alpha * bundle.T ** (1.0 + bundle.alpha)
    diff = pack.Ls_matrix @ (bundle.V / bundle.h - lead * bundle.V0)
    return sobolev_norm(pack, -pack.s, diff, variant)


# ---------------------------------------------------------------------------
# Estimate witnesses
# ---------------------------------------------------------------------------


def _pointwise_witness(name, num, den, sample_idx) -> EstimateWitness:
    ok = den > 0.0
    if not np.any(ok):
        return EstimateWitness(name, float("nan"), 0, "vacuous")
    ratio = np.abs(num[ok]) / den[ok]
    k = int(np.argmax(ratio))
    return EstimateWitness(name, float(ratio[k]), int(ok.sum()), f"node {int(sample_idx[ok][k])}")


def exponents(params: SimulationParameters) -> dict:
    a, m, mc = params.alpha, params.m, params.m_conj
    return {
        "M": a / mc - 1.0 / m,
        "N_derived": (a + 1.0) / mc,
        "N_printed": a + mc,
        "HsV": 1.0 + a,
    }


def verify_pointwise_estimates(
    pack: OperatorPack,
    bundle: TransformBundle,
    params: SimulationParameters,
    datum: ExteriorDatum,
) -> list[EstimateWitness]:
    """Empirical constants for the Hölder bounds on ``M`` and ``N``, their ``L^2``
    versions, the ``H^s`` growth bound on ``V`` and the smallness condition.

    For a sign-changing ``v`` the bounds are evaluated against the transform of
    ``|v|`` and the witnesses are marked ``majorized``.
    """
    layout = pack.layout
    om = layout.mask_omega
    vol = layout.volume_element
    T, m = bundle.T, params.m
    e = exponents(params)
    Vmaj = bundle.V if bundle.sign_definite else bundle.V_abs
    Vroot = np.abs(Vmaj[om]) ** (1.0 / m)
    lam = np.abs(pack.coeffs.lam[om])
    tag = {} if bundle.sign_definite else {"majorized": True}

    out = [
        _pointwise_witness("M_pointwise", bundle.M[om], T ** e["M"] * Vroot, om),
        _pointwise_witness("N_pointwise_derived", bundle.N[om], T ** e["N_derived"] * lam * Vroot, om),
        _pointwise_witness("N_pointwise_printed", bundle.N[om], T ** e["N_printed"] * lam * Vroot, om),
    ]
    V_l2 = weighted_norm(Vmaj[om], vol)
    M_l2 = weighted_norm(bundle.M[om], vol)
    N_l2 = weighted_norm(bundle.N[om], vol)
    for name, num, expo in (
        ("M_L2", M_l2, e["M"]),
        ("N_L2_derived", N_l2, e["N_derived"]),
        ("N_L2_printed", N_l2, e["N_printed"]),
    ):
        den = T ** expo * V_l2 ** (1.0 / m)
        if den > 0.0:
            out.append(EstimateWitness(name, num / den, 1, "omega"))
        else:
            out.append(EstimateWitness(name, float("nan"), 0, "vacuous"))

    V_hs = sobolev_norm(pack, pack.s, bundle.V)
    g_hs = sobolev_norm(pack, pack.s, datum.g0)
    growth = T ** e["HsV"] * bundle.h * g_hs
    if growth > 0.0 and V_hs > 0.0:
        out.append(EstimateWitness("HsV", V_hs / growth, 1, "box"))
        mix = T ** e["M"] + T ** e["N_printed"]
        mix_derived = T ** e["M"] + T ** e["N_derived"]
        C1 = V_hs / (mix * V_hs ** (1.0 / m) + growth)
        out.append(
            EstimateWitness(
                "C1_smallness",
                C1,
                1,
                "box",
                {
                    "condition_value": 1.0 - C1 * mix,
                    "condition_holds": bool(1.0 - C1 * mix >= 0.5),
                    "condition_value_derived_exponent": 1.0 - C1 * mix_derived,
                },
            )
        )
    else:
        out.append(EstimateWitness("HsV", float("nan"), 0, "vacuous"))
        out.append(EstimateWitness("C1_smallness", float("nan"), 0, "vacuous", {"condition_holds": True}))
    for w in out:
        w.details.update(tag)
        w.details["T"] = T
    return out


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


@dataclass
class RateFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    pair_slopes: np.ndarray
    monotone: bool
    expected: float | None = None
    warnings: list = field(default_factory=list)

    def within(self, tol: float) -> bool:
        return self.expected is not None and abs(self.slope - self.expected) <= tol


def rate_fit(h_values, errors, expected: float | None = None, confidence: float = 0.95) -> RateFit:
    """Least-squares slope of ``log error`` against ``log h`` with a t-interval.

    Needs at least four amplitudes spanning three decades.  A non-monotone
    error sequence is fitted anyway and reported with a warning.
    """
    h = np.asarray(h_values, dtype=float)
    err = np.asarray(errors, dtype=float)
    if h.size < 4 or h.size != err.size:
        raise ValueError("rate fit needs at least four (h, error) pairs")
    if np.log10(h.max() / h.min()) < 3.0 - 1e-12:
        raise ValueError("amplitudes must span at least three decades")
    if np.any(err <= 0.0) or np.any(h <= 0.0):
        raise ValueError("amplitudes and errors must be positive")
    order = np.argsort(h)
    x, y = np.log(h[order]), np.log(err[order])
    reg = stats.linregress(x, y)
    tq = stats.t.ppf(0.5 + 0.5 * confidence, x.size - 2)
    pair = np.diff(y) / np.diff(x)
    monotone = bool(np.all(np.diff(y) < 0.0) or np.all(np.diff(y) > 0.0))
    fit = RateFit(
        slope=float(reg.slope),
        intercept=float(reg.intercept),
        ci_low=float(reg.slope - tq * reg.stderr),
        ci_high=float(reg.slope + tq * reg.stderr),
        pair_slopes=pair,
        monotone=monotone,
        expected=expected,
    )
    if not monotone:
        fit.warnings.append("error sequence is not monotone in h")
        logger.warning("rate fit: error sequence is not monotone in h")
    return fit
