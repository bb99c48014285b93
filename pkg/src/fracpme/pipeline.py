"""Stage runners shared by the command line and the acceptance suite.

Each stage takes an :class:`ExperimentConfig` (through a :class:`Workbench`
that caches operator packs) and returns plain result objects; writing files
is left to :mod:`fracpme.cli`.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .asymptotics import (
    RateFit,
    TransformBundle,
    asymptotic_error,
    decompose,
    exponents,
    rate_fit,
    verify_pointwise_estimates,
)
from .checks import (
    box_doubling_study,
    exterior_stability,
    fft_discrepancy,
    gaussian_sandwich,
    heat_row_sums,
    kernel_band,
    random_smooth_samples,
    spectral_invariants,
)
from .config import ExperimentConfig
from .elliptic import ExteriorDatum, linear_dn_map, solve_exterior
from .forward import MeasurementRecord, TimeSeriesField, nonlinear_dn_map, solve_ivp
from .operators import (
    DomainLayout,
    EstimateWitness,
    OperatorPack,
    assemble_operator,
    build_layout,
    constant_coefficients,
    jump_kernel,
    smooth_bump,
)
from .params import SimulationParameters
from .recovery import (
    RecoveryReport,
    UCPReport,
    dn_distance,
    record_norm,
    recover_lambda,
    reduce_to_linear_dn,
    ucp_diagnostic,
)

logger = logging.getLogger(__name__)


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# shared state
# ---------------------------------------------------------------------------


def make_datum(layout: DomainLayout, spec: dict, pack: OperatorPack | None = None, h: float = 1.0) -> ExteriorDatum:
    """Exterior datum from the ``datum`` config section.

    With ``normalize`` the bump is rescaled so that the linear exterior
    solution for ``pack`` peaks at 1 on Omega, which puts the amplitude list
    on a common scale across layouts and coefficients.
    """
    mask = layout.mask_w1
    g0 = np.zeros(layout.n_points)
    if spec.get("shape", "bump") == "bump":
        g0[mask] = smooth_bump(layout.points[mask], np.atleast_1d(spec["center"]), np.atleast_1d(spec["radius"]))
    elif spec["shape"] != "zero":
        raise ValueError(f"unknown datum shape {spec['shape']!r}")
    if spec.get("normalize", False) and np.any(g0):
        if pack is None:
            raise ValueError("normalisation needs an operator pack")
        V0 = solve_exterior(pack, layout.zeros(), g0).u
        g0 = g0 / float(np.max(np.abs(V0[layout.mask_omega])))
    return ExteriorDatum(g0=g0, h=float(h), support_mask=mask)


class Workbench:
    """Config plus lazily assembled operator packs, one per coefficient pair."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._packs: dict[int, OperatorPack] = {}
        self._datum: ExteriorDatum | None = None

    @property
    def layout(self) -> DomainLayout:
        return self.config.layout

    @property
    def params(self) -> SimulationParameters:
        return self.config.params

    def pack(self, index: int = 0) -> OperatorPack:
        if index not in self._packs:
            self._packs[index] = assemble_operator(self.layout, self.config.coefficient_fields(index), self.params.s)
        return self._packs[index]

    def datum(self, h: float | None = None) -> ExteriorDatum:
        if self._datum is None:
            self._datum = make_datum(self.layout, self.config.datum, self.pack(0))
        amp = self.config.datum["amplitude"] if h is None else h
        return self._datum.with_amplitude(amp)


# ---------------------------------------------------------------------------
# operator verification
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    value: float
    limit: float
    passed: bool
    details: dict = field(default_factory=dict)


def _check(name, value, limit, passed, **details) -> CheckResult:
    return CheckResult(name, float(value), float(limit), bool(passed), details)


def verify_stage(wb: Workbench) -> tuple[list[CheckResult], list[EstimateWitness]]:
    """Operator invariants, gamma = 1 oracle, kernel laws and exterior stability."""
    cfg = wb.config
    lay = wb.layout
    checks: list[CheckResult] = []
    witnesses: list[EstimateWitness] = []

    inv = spectral_invariants(wb.pack(0))
    checks.append(_check("L_symmetry", inv["L_symmetry"], 1e-12, inv["L_symmetry"] <= 1e-12))
    checks.append(_check("Ls_symmetry", inv["Ls_symmetry"], 1e-12, inv["Ls_symmetry"] <= 1e-12))
    checks.append(_check("min_eigenvalue", inv["min_eigenvalue"], 0.0, inv["min_eigenvalue"] > 0.0))
    checks.append(_check("spectral_reconstruction", inv["reconstruction"], 1e-12, inv["reconstruction"] <= 1e-12))
    checks.append(_check("s1_equals_L", inv["s1_vs_L"], 1e-12, inv["s1_vs_L"] <= 1e-12))
    checks.append(_check("s_continuity", inv["s_continuity"], float("inf"), math.isfinite(inv["s_continuity"])))

    one_d = lay.dimension == 1
    for s in cfg.section("verify")["s_list"]:
        flat = assemble_operator(lay, constant_coefficients(lay), s)
        if one_d:
            box = lay.box[0]
            gap = fft_discrepancy(lay, s, pack=flat)
            checks.append(_check(f"fft_oracle_s={s:g}", gap, 0.02, gap <= 0.02))
            study = box_doubling_study(box, lay.n_grid, s, lay.omega[0], lay.w1[0], lay.w2[0])
            plain = box_doubling_study(box, lay.n_grid, s, lay.omega[0], lay.w1[0], lay.w2[0], symbol="continuum")
            checks.append(
                _check(f"box_doubling_s={s:g}", study.ratio, 2.0, study.ratio >= 2.0,
                       base=study.base, doubled=study.doubled, n_grid=list(study.n_grid),
                       continuum_ratio=plain.ratio)
            )
        K = jump_kernel(flat)
        sym = float(np.nanmax(np.abs(K.values - K.values.T)) / np.nanmax(np.abs(K.values)))
        checks.append(_check(f"kernel_symmetry_s={s:g}", sym, 1e-12, sym <= 1e-12))
        band = kernel_band(flat, K)
        witnesses.append(band)
        checks.append(_check(f"kernel_band_s={s:g}", band.empirical_constant, 3.0,
                             band.empirical_constant <= 3.0 and band.details["positive"]))
        checks.append(_check(f"kernel_calibration_s={s:g}", K.calibration_residual, 1e-6,
                             K.calibration_residual <= 1e-6, constant=K.constant,
                             theoretical=K.theoretical_constant, truncation=K.truncation_residual))

    K = jump_kernel(wb.pack(0))
    witnesses.append(kernel_band(wb.pack(0), K))
    sandwich = gaussian_sandwich(wb.pack(0), times=(0.01, 0.03, 0.1, 0.3, 1.0))
    witnesses.extend(sandwich)
    finite = all(math.isfinite(w.empirical_constant) and w.details["c_lower"] > 0 for w in sandwich)
    worst = max(w.empirical_constant for w in sandwich)
    checks.append(_check("gaussian_sandwich", worst, float("inf"), finite))
    rows = heat_row_sums(wb.pack(0), 0.01)
    checks.append(_check("heat_row_sums_t=0.01", float(np.max(np.abs(rows - 1.0))), 1e-3,
                         np.max(np.abs(rows - 1.0)) <= 1e-3))

    if one_d:
        omega = lay.omega[0]
        (blo, bhi), (olo, ohi) = lay.box[0], omega
        gap = 0.25 * min(olo - blo, bhi - ohi)
        windows = [(blo + gap, olo - gap), (ohi + gap, bhi - gap)]
        samples = random_smooth_samples(omega, windows, int(cfg.section("verify")["samples"]), seed=cfg.seed)
        consts = []
        for n in (lay.n_grid // 2, lay.n_grid, 2 * lay.n_grid):
            sub = build_layout(lay.box, n, lay.omega, lay.w1, lay.w2)
            pack = assemble_operator(sub, cfg.pairs[0].fields(sub), wb.params.s)
            w = exterior_stability(pack, samples)
            w.details["n_grid"] = n
            witnesses.append(w)
            consts.append(w.empirical_constant)
            checks.append(_check(f"exterior_residual_n={n}", w.details["max_residual"], 1e-10,
                                 w.details["max_residual"] <= 1e-10))
        spread = max(consts) / min(consts) - 1.0
        checks.append(_check("exterior_stability_spread", spread, 0.10, spread <= 0.10, constants=consts))
    return checks, witnesses


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


@dataclass
class ForwardResult:
    series: TimeSeriesField
    record: MeasurementRecord
    richardson_order: float
    self_differences: list


def richardson_order(pack: OperatorPack, m: float, datum: ExteriorDatum, T: float, n_steps: int, tol: float) -> tuple[float, list]:
    """Observed temporal order from solves with ``K``, ``2K`` and ``4K`` steps (u on Omega at T)."""
    om = pack.layout.mask_omega
    finals = [solve_ivp(pack, m, datum, T, n_steps * 2 ** k, tol).slices[-1, om] for k in range(3)]
    d1 = float(np.linalg.norm(finals[0] - finals[1]))
    d2 = float(np.linalg.norm(finals[1] - finals[2]))
    order = math.log2(d1 / d2) if d1 > 0 and d2 > 0 else float("nan")
    return order, [d1, d2]


def forward_stage(wb: Workbench, pair: int = 0, refine: bool = True) -> ForwardResult:
    cfg = wb.config
    pack, datum, m = wb.pack(pair), wb.datum(), wb.params.m
    series = solve_ivp(pack, m, datum, wb.params.T, cfg.n_steps, cfg.tol)
    record = nonlinear_dn_map(pack, series, m, datum)
    order, diffs = (float("nan"), [])
    if refine:
        order, diffs = richardson_order(pack, m, datum, wb.params.T, cfg.n_steps, cfg.tol)
    return ForwardResult(series, record, order, diffs)


# ---------------------------------------------------------------------------
# asymptotics
# ---------------------------------------------------------------------------


@dataclass
class AmplitudeRun:
    h: float
    error_homogeneous: float
    error_shifted: float
    exterior_mismatch: float
    residual_minus: float
    residual_plus: float
    record: MeasurementRecord
    meta: dict


@dataclass
class AsymptoticResult:
    runs: list[AmplitudeRun]
    fit: RateFit
    fit_shifted: RateFit
    reduced: np.ndarray
    direct: np.ndarray
    reduction_errors: list
    reduction_warnings: list
    tolerance: float = 0.15

    @property
    def expected(self) -> float:
        return self.fit.expected

    @property
    def passed(self) -> bool:
        return abs(self.fit.slope - self.fit.expected) <= self.tolerance

    @property
    def reduction_error(self) -> float:
        return self.reduction_errors[-1]

    @property
    def reduction_monotone(self) -> bool:
        e = np.asarray(self.reduction_errors)
        return bool(np.all(np.diff(e) < 0.0))


def amplitude_run(pack: OperatorPack, params: SimulationParameters, datum: ExteriorDatum, n_steps: int, tol: float) -> tuple[AmplitudeRun, TransformBundle]:
    """Forward solve at one amplitude, decomposition and the ``H^-s`` error."""
    series = solve_ivp(pack, params.m, datum, params.T, n_steps, tol)
    record = nonlinear_dn_map(pack, series, params.m, datum)
    bundle = decompose(pack, series.to_variable("v", params.m), datum, params)
    run = AmplitudeRun(
        h=datum.h,
        error_homogeneous=asymptotic_error(pack, bundle, "homogeneous"),
        error_shifted=asymptotic_error(pack, bundle, "shifted"),
        exterior_mismatch=bundle.exterior_mismatch,
        residual_minus=bundle.residual_minus,
        residual_plus=bundle.residual_plus,
        record=record,
        meta=dict(series.meta),
    )
    return run, bundle


def asymptotic_stage(wb: Workbench, pair: int = 0, jobs: int = 1, h_list=None) -> AsymptoticResult:
    cfg, params = wb.config, wb.params
    pack = wb.pack(pair)
    hs = list(cfg.h_list if h_list is None else h_list)
    expected = 1.0 / params.m - 1.0

    def one(h):
        return amplitude_run(pack, params, wb.datum(h), cfg.n_steps, cfg.tol)[0]

    runs = _map(one, hs, jobs)
    fit = rate_fit([r.h for r in runs], [r.error_homogeneous for r in runs], expected)
    fit_s = rate_fit([r.h for r in runs], [r.error_shifted for r in runs], expected)
    direct = linear_dn_map(pack, wb.datum())
    errs, warns = [], []
    for k in range(2, len(runs) + 1):
        red = reduce_to_linear_dn([r.record for r in runs[:k]], params)
        errs.append(float(np.linalg.norm(red.estimate - direct) / np.linalg.norm(direct)))
        warns = red.warnings
    return AsymptoticResult(runs, fit, fit_s, red.estimate, direct, errs, warns + fit.warnings)


@dataclass
class WitnessStudy:
    T_list: list
    witnesses: dict  # name -> list of constants per T
    spreads: dict
    majorized: bool
    n_exponent_fit: float
    n_exponent_derived: float
    n_exponent_printed: float
    smallness: dict
    residual_sign: int
    tolerance: float = 0.20

    @property
    def primary(self) -> list[str]:
        """Witnesses whose T-stability is asserted (printed-exponent variants are reported only)."""
        return [k for k in self.witnesses if not k.endswith("_printed") and k != "C1_smallness"] + ["C1_smallness"]

    @property
    def passed(self) -> bool:
        ok = all(
            np.all(np.isfinite(self.witnesses[k])) and self.spreads[k] <= self.tolerance for k in self.primary
        )
        near_derived = abs(self.n_exponent_fit - self.n_exponent_derived) < abs(self.n_exponent_fit - self.n_exponent_printed)
        return bool(ok and near_derived)


def smallness_harness(pack, params, datum, n_steps, tol, max_halvings: int = 8) -> dict:
    """Halve ``T`` until ``1 - C1 (T^a + T^b) >= 1/2`` holds for the fitted ``C1``."""
    history = []
    T = params.T
    for _ in range(max_halvings + 1):
        p = params.with_T(T)
        _, bundle = amplitude_run(pack, p, datum, n_steps, tol)
        w = {x.name: x for x in verify_pointwise_estimates(pack, bundle, p, datum)}["C1_smallness"]
        history.append({"T": T, "C1": w.empirical_constant, "condition_value": w.details.get("condition_value")})
        if w.details.get("condition_holds", False):
            return {"T_admissible": T, "reruns": len(history) - 1, "history": history, "holds": True}
        T *= 0.5
    return {"T_admissible": float("nan"), "reruns": len(history) - 1, "history": history, "holds": False}


def witness_stage(wb: Workbench, pair: int = 0, jobs: int = 1) -> WitnessStudy:
    """Estimate witnesses at several horizons with the rescaled amplitude ``witness_h``."""
    cfg, params = wb.config, wb.params
    sec = cfg.section("asymptotics")
    T_list = [float(t) for t in sec["T_list"]]
    pack = wb.pack(pair)
    datum = wb.datum(float(sec["witness_h"]))
    om = wb.layout.mask_omega

    def one(T):
        p = params.with_T(T)
        _, bundle = amplitude_run(pack, p, datum, cfg.n_steps, cfg.tol)
        ws = verify_pointwise_estimates(pack, bundle, p, datum)
        Vroot = np.abs(bundle.V[om]) ** (1.0 / p.m)
        lam = np.abs(pack.coeffs.lam[om])
        ok = (Vroot > 0) & (lam > 0)
        q = float(np.max(np.abs(bundle.N[om][ok]) / (lam[ok] * Vroot[ok]))) if np.any(ok) else float("nan")
        return ws, q, bundle

    out = _map(one, T_list, jobs)
    table: dict[str, list] = {}
    majorized = False
    for ws, _, _ in out:
        for w in ws:
            table.setdefault(w.name, []).append(w.empirical_constant)
            majorized |= bool(w.details.get("majorized", False))
    spreads = {k: float(np.nanmax(v) / np.nanmin(v) - 1.0) if np.all(np.isfinite(v)) else float("inf") for k, v in table.items()}
    qs = np.array([q for _, q, _ in out])
    slope = float(stats.linregress(np.log(T_list), np.log(qs)).slope) if np.all(qs > 0) else float("nan")
    e = exponents(params)
    small = smallness_harness(pack, params, datum, cfg.n_steps, cfg.tol)
    sign = out[len(out) // 2][2].sign
    return WitnessStudy(T_list, table, spreads, majorized, slope, e["N_derived"], e["N_printed"], small, sign)


# ---------------------------------------------------------------------------
# recovery and uniqueness
# ---------------------------------------------------------------------------


@dataclass
class RecoveryResult:
    report: RecoveryReport
    refined: RecoveryReport | None
    threshold: float


def recovery_stage(wb: Workbench, pair: int = 0, refine: bool = True) -> RecoveryResult:
    cfg = wb.config
    pack, datum, m = wb.pack(pair), wb.datum(), wb.params.m
    rel = float(cfg.section("recovery")["threshold"])
    om = wb.layout.mask_omega

    def run(pk, dt, K):
        sol = solve_ivp(pk, m, dt, wb.params.T, K, cfg.tol)
        thr = rel * float(np.max(np.abs(sol.slices[:, pk.layout.mask_omega])))
        return recover_lambda(pk, sol, m, thr, truth=pk.coeffs.lam[pk.layout.mask_omega])

    report = run(pack, datum, cfg.n_steps)
    refined = None
    if refine:
        lay = wb.layout
        fine = build_layout(lay.box, 2 * lay.n_grid, lay.omega, lay.w1, lay.w2, lay.dimension)
        fpack = assemble_operator(fine, cfg.pairs[pair].fields(fine), wb.params.s)
        fdatum = make_datum(fine, cfg.datum, fpack, datum.h)
        refined = run(fpack, fdatum, 2 * cfg.n_steps)
    del om
    return RecoveryResult(report, refined, rel)


def probe_battery(layout: DomainLayout, count: int = 5) -> list[dict]:
    """Datum specs for ``count`` bumps of different position and width inside W1."""
    (lo, hi) = layout.w1[0]
    width = hi - lo
    specs = []
    for k in range(count):
        frac = (k + 1) / (count + 1)
        radius = width * (0.2 + 0.1 * (k % 3))
        center = lo + radius + frac * (width - 2 * radius)
        specs.append({"shape": "bump", "center": center, "radius": radius, "normalize": True})
    return specs


@dataclass
class UniquenessResult:
    names: list
    distances: np.ndarray  # probe x pair: distance to pair 0
    floors: np.ndarray  # probe: solver floor of pair 0
    identical: np.ndarray  # probe: distance between two assemblies of pair 0
    norms: np.ndarray

    def separated(self, j: int) -> bool:
        return bool(np.any(self.distances[:, j] >= 10.0 * self.floors))

    @property
    def identical_ok(self) -> bool:
        return bool(np.all(self.identical <= 10.0 * self.floors))


def uniqueness_stage(wb: Workbench, h: float | None = None) -> UniquenessResult:
    """DN distances of every configured pair to pair 0 over the probe battery.

    The floor is the distance between the default solve and one with a
    hundredfold tighter step tolerance, bounded below by machine precision
    times the record norm.
    """
    cfg, params = wb.config, wb.params
    lay = wb.layout
    vol = lay.volume_element
    amp = cfg.datum["amplitude"] if h is None else h
    specs = probe_battery(lay, int(cfg.section("recovery")["probes"]))
    twin = assemble_operator(lay, cfg.coefficient_fields(0), params.s)
    P = len(cfg.pairs)
    dist = np.zeros((len(specs), P))
    floors = np.zeros(len(specs))
    ident = np.zeros(len(specs))
    norms = np.zeros(len(specs))

    def record(pack, datum, tol):
        sol = solve_ivp(pack, params.m, datum, params.T, cfg.n_steps, tol)
        return nonlinear_dn_map(pack, sol, params.m, datum)

    for i, spec in enumerate(specs):
        datum = make_datum(lay, spec, wb.pack(0), amp)
        ref = record(wb.pack(0), datum, cfg.tol)
        tight = record(wb.pack(0), datum, cfg.tol * 1e-2)
        norms[i] = record_norm(ref, vol)
        floors[i] = max(dn_distance(ref, tight, vol), np.finfo(float).eps * norms[i])
        ident[i] = dn_distance(ref, record(twin, datum, cfg.tol), vol)
        for j in range(1, P):
            dist[i, j] = dn_distance(ref, record(wb.pack(j), datum, cfg.tol), vol)
    return UniquenessResult([p.name for p in cfg.pairs], dist, floors, ident, norms)


def ucp_stage(wb: Workbench, probe_count: int = 64) -> list[dict]:
    """Continuation proxy on nested observation sets for ``s`` and for the local case ``s = 1``."""
    lay = wb.layout
    sets = {
        "box": np.arange(lay.n_points),
        "exterior": lay.mask_exterior,
        "w1+w2": np.union1d(lay.mask_w1, lay.mask_w2),
        "w2": lay.mask_w2,
    }
    out = []
    local = wb.pack(0).with_power(1.0)
    for name, W in sets.items():
        frac: UCPReport = ucp_diagnostic(wb.pack(0), W, probe_count, wb.config.seed)
        loc: UCPReport = ucp_diagnostic(local, W, probe_count, wb.config.seed)
        out.append({"W": name, "n_observed": int(len(W)), "proxy": frac.proxy, "probe_minimum": frac.probe_minimum,
                    "proxy_local": loc.proxy, "n_modes": frac.n_modes,
                    "minimizer_mass_on_W": frac.minimizer_mass_on_W, "label": frac.label})
    return out
