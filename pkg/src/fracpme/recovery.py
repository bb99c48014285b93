"""Inverse-problem side: reduction of nonlinear DN data to the linear map,
pointwise absorption recovery, DN distances and a continuation diagnostic."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .asymptotics import product_weights
from .forward import MeasurementRecord, TimeSeriesField, power_map
from .operators import OperatorPack
from .params import SimulationParameters

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e-3


class RecoveryError(RuntimeError):
    """Recovery impossible with the data given (e.g. nothing above threshold)."""


@dataclass
class RecoveryReport:
    """Recovered absorption on Omega with validity mask and error columns.

    ``lambda_hat`` is NaN off ``valid_mask``.  Error arrays are NaN when no
    ground truth was supplied.
    """

    points: np.ndarray
    lambda_hat: np.ndarray
    valid_mask: np.ndarray
    truth: np.ndarray | None = None
    pointwise_error: np.ndarray | None = None
    relative_error: np.ndarray | None = None
    time_index: np.ndarray | None = None
    dn_distance: float = float("nan")
    rate_slope: float = float("nan")

    @property
    def max_relative_error(self) -> float:
        if self.relative_error is None:
            return float("nan")
        return float(np.max(self.relative_error[self.valid_mask]))

    @property
    def max_abs_error(self) -> float:
        if self.pointwise_error is None:
            return float("nan")
        return float(np.max(self.pointwise_error[self.valid_mask]))

    def rows(self):
        """``(x, lambda_hat, truth, rel_error, valid)`` tuples for tabular output."""
        truth = self.truth if self.truth is not None else np.full(self.lambda_hat.shape, np.nan)
        rel = self.relative_error if self.relative_error is not None else np.full(self.lambda_hat.shape, np.nan)
        for i in range(self.lambda_hat.size):
            yield (*self.points[i], self.lambda_hat[i], truth[i], rel[i], int(self.valid_mask[i]))


# ---------------------------------------------------------------------------
# nonlinear -> linear DN reduction
# ---------------------------------------------------------------------------


@dataclass
class ReductionResult:
    estimate: np.ndarray
    amplitudes: np.ndarray
    raw: np.ndarray
    pair_extrapolations: np.ndarray
    pair_disagreement: float
    warnings: list = field(default_factory=list)


def reduce_to_linear_dn(
    records: list[MeasurementRecord],
    params: SimulationParameters,
    rule: str = "implicit",
    disagreement_tol: float = 0.10,
) -> ReductionResult:
    """Estimate ``Lambda_lin g0`` on W2 from nonlinear records at growing amplitude.

    Each record is transformed in time, divided by ``h C_alpha T^(1+alpha)``
    and the last two amplitudes are combined by Richardson extrapolation
    assuming an error ``~ h^(1/m - 1)``.
    """
    if len(records) < 2:
        raise ValueError("need records at two or more amplitudes")
    recs = sorted(records, key=lambda r: r.datum.h)
    g0 = recs[0].datum.g0
    for r in recs[1:]:
        if not np.array_equal(r.datum.g0, g0):
            raise ValueError("records must share the datum profile g0")
        if not np.array_equal(r.times, recs[0].times) or not np.array_equal(r.mask, recs[0].mask):
            raise ValueError("records must share the time mesh and observation mask")
    times = recs[0].times
    T = float(times[-1])
    scale = params.C_alpha * T ** (1.0 + params.alpha)
    w = product_weights(times, params.alpha, rule)
    hs = np.array([r.datum.h for r in recs])
    raw = np.array([(w @ r.values) / (r.datum.h * scale) for r in recs])
    if not np.any(g0):
        zero = np.zeros(raw.shape[1])
        return ReductionResult(zero, hs, raw, np.zeros((len(recs) - 1, raw.shape[1])), 0.0)

    p = 1.0 / params.m - 1.0
    ext = []
    for a, b in zip(range(len(recs) - 1), range(1, len(recs))):
        r = (hs[b] / hs[a]) ** p
        ext.append((raw[b] - r * raw[a]) / (1.0 - r))
    ext = np.array(ext)
    best = ext[-1]
    norm = np.linalg.norm(best)
    disagreement = float(np.linalg.norm(ext[-2] - best) / norm) if len(ext) > 1 and norm > 0 else 0.0
    result = ReductionResult(best, hs, raw, ext, disagreement)
    if disagreement > disagreement_tol:
        msg = f"extrapolations from consecutive amplitude pairs disagree by {disagreement:.1%}"
        result.warnings.append(msg)
        logger.warning(msg)
    return result


# ---------------------------------------------------------------------------
# absorption recovery
# ---------------------------------------------------------------------------


def recover_lambda(
    pack: OperatorPack,
    solution: TimeSeriesField,
    m: float,
    threshold: float | None = None,
    truth: np.ndarray | None = None,
) -> RecoveryReport:
    """Pointwise ``lambda = -(du/dt + L^s u^m) / u`` on Omega.

    At each Omega node the time node with the largest ``|u|`` is used.  Nodes
    where that value does not exceed ``threshold`` (default ``1e-3 max |u|``)
    are left out.  ``du/dt`` uses second-order differences (centered inside,
    one-sided at the ends) and ``L^s`` the assembled matrix.  ``truth`` is an
    Omega array of the true absorption, if known.
    """
    if solution.variable_tag != "u":
        raise ValueError("recover_lambda expects a u series")
    layout = pack.layout
    om = layout.mask_omega
    u_om = solution.slices[:, om]
    peak = float(np.max(np.abs(u_om)))
    if threshold is None:
        threshold = DEFAULT_THRESHOLD * peak
    dudt = np.gradient(u_om, solution.dt, axis=0, edge_order=2)
    Lv = (power_map(solution.slices, m) @ pack.Ls_matrix)[:, om]

    k = np.argmax(np.abs(u_om), axis=0)
    cols = np.arange(om.size)
    u_sel = u_om[k, cols]
    valid = np.abs(u_sel) > threshold
    if not np.any(valid):
        raise RecoveryError("no Omega node exceeds the threshold; raise the datum amplitude")
    lam_hat = np.full(om.size, np.nan)
    lam_hat[valid] = -(dudt[k, cols] + Lv[k, cols])[valid] / u_sel[valid]

    report = RecoveryReport(layout.points[om], lam_hat, valid, time_index=k)
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        err = np.abs(lam_hat - truth)
        scale = np.where(np.abs(truth) > 0.0, np.abs(truth), 1.0)
        report.truth = truth
        report.pointwise_error = err
        report.relative_error = err / scale
    return report


# ---------------------------------------------------------------------------
# DN distances
# ---------------------------------------------------------------------------


def dn_distance(rec1: MeasurementRecord, rec2: MeasurementRecord, volume_element: float = 1.0) -> float:
    """Space-time weighted l2 distance between two records (trapezoid in time)."""
    if rec1.times.shape != rec2.times.shape or not np.allclose(rec1.times, rec2.times, rtol=0, atol=1e-14):
        raise ValueError("records live on different time meshes")
    if not np.array_equal(rec1.mask, rec2.mask):
        raise ValueError("records use different observation masks")
    wt = np.zeros(rec1.times.size)
    dt = np.diff(rec1.times)
    wt[:-1] += 0.5 * dt
    wt[1:] += 0.5 * dt
    diff = rec1.values - rec2.values
    return float(np.sqrt(volume_element * np.sum(wt[:, None] * diff ** 2)))


def record_norm(rec: MeasurementRecord, volume_element: float = 1.0) -> float:
    zero = MeasurementRecord(rec.datum, rec.map_kind, rec.times, rec.mask, np.zeros_like(rec.values))
    return dn_distance(rec, zero, volume_element)


# ---------------------------------------------------------------------------
# continuation diagnostic
# ---------------------------------------------------------------------------


@dataclass
class UCPReport:
    """Smallest value of ``|u|_W^2 + |L^s u|_W^2`` over unit ``u`` in a low-mode space.

    Diagnostic only: a discrete proxy for how strongly smallness on W
    propagates, not a verification of unique continuation.
    """

    proxy: float
    probe_minimum: float
    minimizer_sup: float
    minimizer_mass_on_W: float
    n_observed: int
    n_modes: int
    probe_count: int
    label: str = "diagnostic"

    def as_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in self.__dict__.items()}


def ucp_diagnostic(pack: OperatorPack, W: np.ndarray, probe_count: int = 64, seed: int = 0, n_modes: int = 8) -> UCPReport:
    """Minimise ``(|u|_W^2 + |L^s u|_W^2) / |u|^2`` over the lowest ``n_modes`` eigenmodes.

    Without the restriction the minimum is zero for any ``W`` with fewer than
    half the nodes, by counting dimensions alone.  Capping the mode count at
    ``|W|`` keeps the proxy about resolved functions.  The exact minimum is
    the smallest eigenvalue of the projected ``P + L^s P L^s`` (``P`` the
    indicator of ``W``); random unit probes in the same space give an upper
    bound reported alongside.
    """
    W = np.asarray(W)
    if W.size == 0:
        raise ValueError("observation mask is empty")
    k = int(min(n_modes, W.size, pack.eigenvalues.size))
    Q = pack.eigenvectors[:, :k]
    mu = pack.eigenvalues[:k] ** pack.s
    QW = Q[W]
    # in mode coordinates: L^s Q = Q diag(mu)
    B = QW.T @ QW + (mu[:, None] * (QW.T @ QW)) * mu[None, :]
    B = 0.5 * (B + B.T)
    vals, vecs = linalg.eigh(B)
    u = Q @ vecs[:, 0]
    rng = np.random.default_rng(seed)
    probes = rng.standard_normal((k, probe_count))
    probes /= np.linalg.norm(probes, axis=0)
    rq = np.einsum("ij,ij->j", probes, B @ probes)
    return UCPReport(
        proxy=float(max(vals[0], 0.0)),
        probe_minimum=float(rq.min()) if probe_count else float("nan"),
        minimizer_sup=float(np.max(np.abs(u)) / np.sqrt(pack.volume_element)),
        minimizer_mass_on_W=float(np.sum(u[W] ** 2)),
        n_observed=int(W.size),
        n_modes=k,
        probe_count=int(probe_count),
    )
