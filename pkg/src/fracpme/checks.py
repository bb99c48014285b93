"""Property checks for the discrete operator and the exterior solver.

Each check returns plain numbers or :class:`EstimateWitness` records so the
CLI can serialise them and the test-suite can assert on them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .elliptic import solve_exterior
from .operators import (
    DomainLayout,
    EstimateWitness,
    KernelMatrix,
    OperatorPack,
    assemble_operator,
    build_layout,
    constant_coefficients,
    heat_kernel,
    pairwise_distance,
    sobolev_norm,
)
from .oracles import fft_fractional_laplacian

logger = logging.getLogger(__name__)


def compact_gaussian(points: np.ndarray, center=0.5, radius=0.49, sharpness=8.0) -> np.ndarray:
    """``exp(-a r^2 / (1 - r^2))`` for ``r < 1``: smooth, compactly supported, Gaussian-like core.

    Its spectrum decays faster than the standard bump's, which keeps the
    grid error of the FFT comparison well below the truncation error.
    """
    points = np.atleast_2d(points)
    r2 = np.sum(((points - np.asarray(center, dtype=float)) / radius) ** 2, axis=1)
    out = np.zeros(points.shape[0])
    inside = r2 < 1.0
    out[inside] = np.exp(-sharpness * r2[inside] / (1.0 - r2[inside]))
    return out


# ---------------------------------------------------------------------------
# gamma = 1 against the Fourier symbol
# ---------------------------------------------------------------------------


def fft_discrepancy(layout: DomainLayout, s: float, profile=compact_gaussian, region=None, pack=None, symbol: str = "continuum") -> float:
    """Relative l2 gap between ``L^s profile`` on the box and the FFT oracle.

    ``region`` is a coordinate interval restricting the comparison (default:
    the layout's own box), so boxes of different size can be compared on a
    common window.  ``symbol`` selects the oracle's Fourier symbol.
    """
    if pack is None:
        pack = assemble_operator(layout, constant_coefficients(layout), s)
    u = profile(layout.points)
    ours = pack.Ls_matrix @ u
    ref = fft_fractional_laplacian(profile, layout, s, symbol=symbol)
    keep = np.ones(layout.n_points, dtype=bool)
    if region is not None:
        lo, hi = region
        x = layout.points[:, 0]
        keep = (x > lo) & (x < hi)
    return float(np.linalg.norm((ours - ref)[keep]) / np.linalg.norm(ref[keep]))


@dataclass
class DoublingStudy:
    s: float
    base: float
    doubled: float
    n_grid: tuple[int, int]
    symbol: str = "lattice"

    @property
    def ratio(self) -> float:
        return self.base / self.doubled


def box_doubling_study(
    box, n_grid: int, s: float, omega=(0.0, 1.0), w1=(-1.5, -1.0), w2=(1.5, 2.0),
    profile=compact_gaussian, symbol: str = "lattice",
) -> DoublingStudy:
    """FFT discrepancy on ``box`` and on the box of twice the length (same centre, same spacing).

    Both are measured on the original box window.  The default lattice symbol
    removes the common discretisation error, which otherwise floors the gap
    for large ``s`` and hides the effect of moving the walls.
    """
    lo, hi = box
    mid, half = 0.5 * (lo + hi), hi - lo
    big = (mid - half, mid + half)
    n_big = 2 * n_grid - 1
    base = fft_discrepancy(build_layout(box, n_grid, omega, w1, w2), s, profile, region=box, symbol=symbol)
    doubled = fft_discrepancy(build_layout(big, n_big, omega, w1, w2), s, profile, region=box, symbol=symbol)
    return DoublingStudy(s, base, doubled, (n_grid, n_big), symbol)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def _interior_window(layout: DomainLayout, margin: float) -> np.ndarray:
    return np.flatnonzero(layout.boundary_distance() >= margin - 1e-12)


def kernel_band(pack: OperatorPack, kernel: KernelMatrix, min_sep: float | None = None, max_sep: float | None = None) -> EstimateWitness:
    """Band ``[C1, C2]`` for ``K(x, y) |x - y|^(n + 2s)``.

    Pairs are taken with separation in ``[min_sep, max_sep]`` (default
    ``[10 spacing, box/4]``) and both points at least ``box/4`` from the walls,
    where truncation does not dominate.  The constant is ``C2 / C1``.
    """
    layout = pack.layout
    L = float(np.min(layout.box_lengths))
    min_sep = 10.0 * layout.h if min_sep is None else min_sep
    max_sep = 0.25 * L if max_sep is None else max_sep
    idx = _interior_window(layout, 0.25 * L)
    pts = layout.points[idx]
    d = pairwise_distance(pts)
    K = kernel.values[np.ix_(idx, idx)]
    sel = (d >= min_sep - 1e-12) & (d <= max_sep + 1e-12)
    if not np.any(sel):
        return EstimateWitness("kernel_band", float("nan"), 0, "vacuous")
    scaled = K[sel] * d[sel] ** (layout.dimension + 2.0 * pack.s)
    lo, hi = float(scaled.min()), float(scaled.max())
    return EstimateWitness(
        "kernel_band",
        hi / lo if lo > 0 else float("inf"),
        int(sel.sum()),
        f"separations [{min_sep:.4g}, {max_sep:.4g}]",
        {"C1": lo, "C2": hi, "positive": bool(np.all(K[~np.isnan(K)] > 0.0))},
    )


def gaussian_sandwich(pack: OperatorPack, times=(0.01, 0.03, 0.1, 0.3, 1.0), spread: float = 4.0) -> list[EstimateWitness]:
    """Fitted constants of ``c1 t^(-n/2) e^(-|x-y|^2/(a1 t)) <= p_t <= c2 t^(-n/2) e^(-|x-y|^2/(a2 t))``.

    The decay rates are fixed from the bounds of gamma (``a2 = 8 max gamma``,
    ``a1 = 2 min gamma``) and the prefactors are fitted over node pairs at
    least ``box/4`` from the walls with ``|x - y| <= spread sqrt(t)``.
    """
    layout = pack.layout
    n = layout.dimension
    gam = pack.coeffs.gamma
    a_up, a_lo = 8.0 * float(gam.max()), 2.0 * float(gam.min())
    idx = _interior_window(layout, 0.25 * float(np.min(layout.box_lengths)))
    d2 = pairwise_distance(layout.points[idx]) ** 2
    out = []
    for t in times:
        p = heat_kernel(pack, t)[np.ix_(idx, idx)]
        sel = d2 <= spread ** 2 * t
        scaled = p[sel] * t ** (n / 2.0)
        c_up = float(np.max(scaled * np.exp(d2[sel] / (a_up * t))))
        c_lo = float(np.min(scaled * np.exp(d2[sel] / (a_lo * t))))
        out.append(
            EstimateWitness(
                f"gaussian_sandwich_t={t:g}",
                c_up / c_lo if c_lo > 0 else float("inf"),
                int(sel.sum()),
                f"t={t:g}",
                {"t": t, "c_lower": c_lo, "c_upper": c_up, "a_lower": a_lo, "a_upper": a_up},
            )
        )
    return out


def heat_row_sums(pack: OperatorPack, t: float, margin: float | None = None) -> np.ndarray:
    """Volume-weighted row sums of the heat kernel on rows ``margin`` away from the walls."""
    layout = pack.layout
    margin = 0.25 * float(np.min(layout.box_lengths)) if margin is None else margin
    idx = _interior_window(layout, margin)
    return heat_kernel(pack, t)[idx].sum(axis=1) * layout.volume_element


# ---------------------------------------------------------------------------
# spectral invariants
# ---------------------------------------------------------------------------


def spectral_invariants(pack: OperatorPack, ds: float = 1e-6) -> dict:
    """Symmetry, positivity, eigen-consistency and s-continuity of the assembled operator."""
    L, Ls = pack.L_matrix, pack.Ls_matrix
    Q, lam = pack.eigenvectors, pack.eigenvalues
    scale = float(np.max(np.abs(Ls)))
    recon = (Q * lam ** pack.s) @ Q.T
    s1 = pack.with_power(1.0).Ls_matrix
    s_lo = max(pack.s - ds, 1e-6)
    s_hi = min(pack.s + ds, 1.0)
    jump = float(np.max(np.abs(pack.with_power(s_hi).Ls_matrix - pack.with_power(s_lo).Ls_matrix)) / scale)
    eig_residual = float(np.max(np.abs(Ls @ Q[:, :5] - Q[:, :5] * lam[:5] ** pack.s)) / scale)
    return {
        "L_symmetry": float(np.max(np.abs(L - L.T)) / np.max(np.abs(L))),
        "Ls_symmetry": float(np.max(np.abs(Ls - Ls.T)) / scale),
        "min_eigenvalue": float(lam[0]),
        "reconstruction": float(np.max(np.abs(recon - Ls)) / scale),
        "eigenvector_residual": eig_residual,
        "s1_vs_L": float(np.max(np.abs(s1 - L)) / np.max(np.abs(L))),
        "s_continuity": jump / (s_hi - s_lo),
    }


# ---------------------------------------------------------------------------
# exterior-problem stability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothSample:
    """Continuum description of a forcing ``f`` in Omega and a datum ``g`` in the exterior."""

    f_centers: np.ndarray
    f_radii: np.ndarray
    f_amps: np.ndarray
    g_centers: np.ndarray
    g_radii: np.ndarray
    g_amps: np.ndarray

    @staticmethod
    def _field(points, centers, radii, amps):
        out = np.zeros(points.shape[0])
        for c, r, a in zip(centers, radii, amps):
            out += a * compact_gaussian(points, c, r, sharpness=1.0)
        return out

    def sample(self, layout: DomainLayout) -> tuple[np.ndarray, np.ndarray]:
        f = self._field(layout.points, self.f_centers, self.f_radii, self.f_amps)
        g = self._field(layout.points, self.g_centers, self.g_radii, self.g_amps)
        f[layout.mask_exterior] = 0.0
        g[layout.mask_omega] = 0.0
        return f, g


def random_smooth_samples(omega, windows, count: int, seed: int = 0, terms: int = 3) -> list[SmoothSample]:
    """Random sums of compact bumps: ``f`` inside ``omega``, ``g`` inside the 1-D ``windows``.

    ``omega`` and each window are ``(lo, hi)`` intervals; bumps are kept
    strictly inside them so they do not depend on the grid.
    """
    rng = np.random.default_rng(seed)
    out = []
    wins = np.asarray(windows, dtype=float)
    for _ in range(count):
        lo, hi = omega
        fr = rng.uniform(0.05, 0.2, terms) * (hi - lo)
        fc = rng.uniform(lo + fr, hi - fr)
        pick = rng.integers(0, len(wins), terms)
        gw = wins[pick]
        gr = rng.uniform(0.1, 0.3, terms) * (gw[:, 1] - gw[:, 0])
        gc = rng.uniform(gw[:, 0] + gr, gw[:, 1] - gr)
        out.append(
            SmoothSample(
                fc[:, None], fr, rng.standard_normal(terms),
                gc[:, None], gr, rng.standard_normal(terms),
            )
        )
    return out


def exterior_stability(pack: OperatorPack, samples: list[SmoothSample], rtol: float = 1e-10) -> EstimateWitness:
    """Largest ``|u|_{H^s} / (|f|_{H^-s} + |g|_{H^s})`` over the samples (shifted surrogate norms)."""
    s = pack.s
    best, worst, max_res = 0.0, -1, 0.0
    for k, smp in enumerate(samples):
        f, g = smp.sample(pack.layout)
        sol = solve_exterior(pack, f, g, rtol=rtol)
        max_res = max(max_res, sol.residual)
        den = sobolev_norm(pack, -s, f) + sobolev_norm(pack, s, g)
        if den == 0.0:
            continue
        ratio = sobolev_norm(pack, s, sol.u) / den
        if ratio > best:
            best, worst = ratio, k
    return EstimateWitness(
        "exterior_stability",
        best if worst >= 0 else float("nan"),
        len(samples),
        f"sample {worst}",
        {"max_residual": max_res},
    )
