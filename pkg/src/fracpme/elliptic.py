"""Linear fractional exterior Dirichlet problem and its Dirichlet-to-Neumann map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .operators import DomainLayout, OperatorPack, weighted_norm


class SolverError(RuntimeError):
    """Linear or nonlinear solve that failed its residual target."""


@dataclass(frozen=True, eq=False)
class ExteriorDatum:
    """Time-independent exterior datum on the ``v = u^m`` side.

    ``g0`` is the profile (a full-box grid function vanishing off
    ``support_mask``) and ``h`` its amplitude, so the prescribed ``v`` values
    are ``h * g0`` and the ``u`` values are their signed ``1/m`` power.
    """

    g0: np.ndarray
    h: float
    support_mask: np.ndarray

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"amplitude h must be positive, got {self.h}")
        outside = np.ones(self.g0.shape[0], dtype=bool)
        outside[self.support_mask] = False
        if np.any(self.g0[outside] != 0.0):
            raise ValueError("g0 must vanish outside its support mask")

    @property
    def values(self) -> np.ndarray:
        """The ``v``-side exterior values ``h * g0``."""
        return self.h * self.g0

    def with_amplitude(self, h: float) -> "ExteriorDatum":
        return ExteriorDatum(g0=self.g0, h=float(h), support_mask=self.support_mask)


def bump_datum(layout: DomainLayout, center, radius, h: float = 1.0, mask: np.ndarray | None = None) -> ExteriorDatum:
    """Smooth bump profile supported in the nodes of ``mask`` (default ``mask_w1``)."""
    from .operators import smooth_bump

    mask = layout.mask_w1 if mask is None else mask
    g0 = np.zeros(layout.n_points)
    g0[mask] = smooth_bump(layout.points[mask], center, radius)
    return ExteriorDatum(g0=g0, h=float(h), support_mask=mask)


@dataclass(frozen=True)
class ExteriorSolution:
    u: np.ndarray
    residual: float


def solve_exterior(pack: OperatorPack, f: np.ndarray, g: np.ndarray, rtol: float = 1e-10) -> ExteriorSolution:
    """Solve ``(L^s u)|_Omega = f``, ``u = g`` off Omega.

    ``f`` and ``g`` are full-box grid functions; ``f`` must vanish off Omega
    and ``g`` on Omega.  The Omega block is factorised by dense Cholesky.
    The returned residual is relative to ``|f| + |L^s g|`` on Omega.
    """
    layout = pack.layout
    om, ex = layout.mask_omega, layout.mask_exterior
    if np.any(f[ex] != 0.0):
        raise ValueError("f must be supported in omega")
    if np.any(g[om] != 0.0):
        raise ValueError("g must be supported in the exterior")
    Ls = pack.Ls_matrix
    A = Ls[np.ix_(om, om)]
    coupling = Ls[np.ix_(om, ex)] @ g[ex]
    rhs = f[om] - coupling
    try:
        factor = linalg.cho_factor(A)
    except linalg.LinAlgError as exc:
        raise SolverError(f"omega block is not positive definite: {exc}") from exc
    u = g.astype(float).copy()
    u[om] = linalg.cho_solve(factor, rhs)
    vol = layout.volume_element
    r = A @ u[om] + coupling - f[om]
    denom = weighted_norm(f[om], vol) + weighted_norm(coupling, vol)
    rel = weighted_norm(r, vol) / denom if denom > 0.0 else weighted_norm(r, vol)
    if rel > rtol:
        raise SolverError(f"exterior solve residual {rel:.3e} exceeds {rtol:.1e}")
    return ExteriorSolution(u=u, residual=rel)


def linear_dn_map(pack: OperatorPack, datum: ExteriorDatum, observe: np.ndarray | None = None) -> np.ndarray:
    """``(L^s u)`` on ``observe`` (default W2) for the ``L^s u = 0`` exterior problem with ``u = g0``.

    The datum amplitude is ignored: the map acts on the profile ``g0``.
    Values are pointwise (per unit volume); multiply by the volume element
    to get the pairing against indicator functions.
    """
    layout = pack.layout
    observe = layout.mask_w2 if observe is None else observe
    sol = solve_exterior(pack, layout.zeros(), datum.g0)
    return (pack.Ls_matrix @ sol.u)[observe]
