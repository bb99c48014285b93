"""Forward fractional porous-medium problem with absorption.

The initial-exterior problem is solved through ``w = u - g`` on Omega, which
obeys ``dw/dt + (L^s w^m)|_Omega + lam w = f`` with ``f = -(L^s g^m)|_Omega``
and ``w(0) = 0``.  Time stepping is implicit Euler; each step is a strictly
convex minimisation in ``v = w^m`` solved by damped Newton.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .elliptic import ExteriorDatum, SolverError
from .operators import OperatorPack, weighted_norm

logger = logging.getLogger(__name__)

NEWTON_FLOOR = 1e-8
MAX_HALVINGS = 40


def power_map(z, p: float) -> np.ndarray:
    """Signed power ``|z|^(p-1) z``."""
    z = np.asarray(z, dtype=float)
    if p == 1.0:
        return z.copy()
    return np.sign(z) * np.abs(z) ** p


def energy_functional(z: np.ndarray, m: float, volume_element: float = 1.0) -> float:
    """``1/(m+1) * integral |z|^(m+1)`` over the nodes given."""
    return float(volume_element * np.sum(np.abs(z) ** (m + 1.0)) / (m + 1.0))


def pme_apply(pack: OperatorPack, z: np.ndarray, m: float) -> np.ndarray:
    """``(L^s z^m)|_Omega`` for ``z`` given on Omega and extended by zero."""
    om = pack.layout.mask_omega
    full = pack.layout.extend(power_map(z, m), om)
    return (pack.Ls_matrix @ full)[om]


@dataclass
class StepInfo:
    newton_iterations: int = 0
    residual: float = 0.0
    fallback: bool = False
    halvings: int = 0
    state_newton: bool = False


@dataclass
class TimeSeriesField:
    """Grid functions on a uniform time mesh; ``slices[k]`` lives at ``times[k]``."""

    times: np.ndarray
    slices: np.ndarray
    variable_tag: str
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def to_variable(self, tag: str, m: float) -> "TimeSeriesField":
        """Convert between the ``u`` and ``v = u^m`` representations."""
        if tag == self.variable_tag:
            return self
        if (self.variable_tag, tag) == ("u", "v"):
            data = power_map(self.slices, m)
        elif (self.variable_tag, tag) == ("v", "u"):
            data = power_map(self.slices, 1.0 / m)
        else:
            raise ValueError(f"cannot convert {self.variable_tag!r} to {tag!r}")
        return TimeSeriesField(self.times, data, tag, dict(self.meta))


@dataclass
class MeasurementRecord:
    """``L^s v`` restricted to an observation mask at every time node."""

    datum: ExteriorDatum
    map_kind: str
    times: np.ndarray
    mask: np.ndarray
    values: np.ndarray
    solver_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("measurement record contains non-finite values")


class _StepSystem:
    """Scaled step equation ``F(y) = a y^(1/m) + c A y - b`` with ``v = sv * y``."""

    def __init__(self, A, lam, m, dt, rhs, sv):
        self.A = A
        self.m = m
        self.sv = sv
        self.sw = sv ** (1.0 / m)
        self.a = 1.0 + dt * lam
        self.c = dt * sv / self.sw
        self.b = rhs / self.sw

    def residual(self, y):
        return self.a * power_map(y, 1.0 / self.m) + self.c * (self.A @ y) - self.b

    def jacobian(self, y):
        d = self.a * np.maximum(np.abs(y), NEWTON_FLOOR) ** (1.0 / self.m - 1.0) / self.m
        J = self.c * self.A
        J[np.diag_indices_from(J)] += d
        return J

    # the same equation in z = y^(1/m): G(z) = a z + c A z^m - b
    def residual_z(self, z):
        return self.a * z + self.c * (self.A @ power_map(z, self.m)) - self.b

    def jacobian_z(self, z):
        J = self.c * self.A * (self.m * np.abs(z) ** (self.m - 1.0))[None, :]
        J[np.diag_indices_from(J)] += self.a
        return J


def _damped_newton(residual, jacobian, x, res, vol, tol, max_iter, symmetric):
    """Newton with step halving until the residual norm decreases.

    Returns ``(x, res, iterations, halvings, converged)``.  Gives up when 40
    halvings fail to decrease the residual, when three iterations in a row
    each fail to halve it, or after ``max_iter`` iterations.
    """
    halvings, slow = 0, 0
    for it in range(max_iter):
        if res <= tol:
            return x, res, it, halvings, True
        F = residual(x)
        try:
            delta = linalg.solve(jacobian(x), -F, assume_a="pos" if symmetric else "gen")
        except linalg.LinAlgError:
            return x, res, it, halvings, False
        step = 1.0
        for k in range(MAX_HALVINGS + 1):
            x_try = x + step * delta
            r_try = weighted_norm(residual(x_try), vol)
            if not np.isfinite(r_try):
                raise SolverError("non-finite residual in Newton iteration")
            if r_try < res:
                break
            step *= 0.5
        else:
            return x, res, it, halvings, False
        halvings += k
        slow = slow + 1 if r_try > 0.5 * res else 0
        x, res = x_try, r_try
        if slow >= 3 and res > tol:
            return x, res, it + 1, halvings, False
    return x, res, max_iter, halvings, res <= tol


def _scalar_solve(a, b, c, m, iters=200):
    """Root of ``a y^(1/m) + b y = c`` per component (monotone, bisection)."""
    bound = np.maximum(np.abs(c) / b, (np.abs(c) / a) ** m) + 1e-300
    lo, hi = -bound, bound.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = a * power_map(mid, 1.0 / m) + b * mid - c
        pos = g > 0.0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    return 0.5 * (lo + hi)


def _jacobi_sweeps(sys: _StepSystem, y, vol, tol, max_sweeps=20000, relax=0.5):
    A = sys.A
    diag = np.diag(A)
    off = A - np.diag(diag)
    for sweep in range(max_sweeps):
        c = sys.b - sys.c * (off @ y)
        y_new = _scalar_solve(sys.a, sys.c * diag, c, sys.m)
        y = (1.0 - relax) * y + relax * y_new
        res = weighted_norm(sys.residual(y), vol)
        if not np.isfinite(res):
            raise SolverError("non-finite residual in fixed-point sweep")
        if res <= tol:
            return y, res, sweep + 1
    raise SolverError(f"fixed-point sweep did not converge; last residual {res:.3e}")


def step_implicit(
    pack: OperatorPack,
    m: float,
    w_k: np.ndarray,
    dt: float,
    f_next: np.ndarray,
    tol: float = 1e-9,
    scale: float | None = None,
    max_iter: int = 30,
    lam: np.ndarray | None = None,
) -> tuple[np.ndarray, StepInfo]:
    """One implicit Euler step on Omega.

    Solves ``w + dt (A w^m + lam w) = w_k + dt f_next`` where ``A`` is the
    Omega block of ``L^s``.  Unknowns are rescaled by ``scale`` (a typical
    magnitude of ``v = w^m``) and the residual is measured in the weighted l2
    norm of the rescaled equation, i.e. relative to ``scale**(1/m)``.

    Newton runs on ``v`` first (symmetric Jacobian, derivative floored at
    ``NEWTON_FLOOR``).  If it stalls, Newton on ``w`` itself takes over, and a
    damped nonlinear Jacobi sweep is the last resort.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    layout = pack.layout
    om = layout.mask_omega
    vol = layout.volume_element
    lam_om = pack.coeffs.lam[om] if lam is None else lam
    rhs = w_k + dt * f_next
    info = StepInfo()
    if not np.any(rhs):
        return np.zeros_like(rhs), info

    A = pack.Ls_matrix[np.ix_(om, om)]
    if scale is None:
        scale = max(np.max(np.abs(power_map(w_k, m))), np.max(np.abs(rhs)) ** m)
    sys = _StepSystem(A, lam_om, m, dt, rhs, float(scale))

    # start from the better of the previous state and the operator-free predictor
    y_prev = power_map(w_k, m) / sys.sv
    y_pred = power_map(sys.b / sys.a, m)
    r_prev = weighted_norm(sys.residual(y_prev), vol)
    r_pred = weighted_norm(sys.residual(y_pred), vol)
    y, res = (y_prev, r_prev) if r_prev <= r_pred else (y_pred, r_pred)

    y, res, its, halv, ok = _damped_newton(sys.residual, sys.jacobian, y, res, vol, tol, max_iter, True)
    info.newton_iterations, info.halvings = its, halv
    if not ok:
        # near-zero components defeat Newton on y^(1/m); retry in the state variable
        logger.debug("v-Newton stalled at residual %.3e; switching to the state variable", res)
        z = power_map(y, 1.0 / m)
        z, res, its, halv, ok = _damped_newton(sys.residual_z, sys.jacobian_z, z, res, vol, tol, max_iter, False)
        y = power_map(z, m)
        info.newton_iterations += its
        info.halvings += halv
        info.state_newton = True
    if not ok:
        logger.info("Newton stalled at residual %.3e; finishing with fixed-point sweeps", res)
        y, res, _ = _jacobi_sweeps(sys, y, vol, tol)
        info.fallback = True
    info.residual = res
    return power_map(y * sys.sv, 1.0 / m), info


def solve_ivp(
    pack: OperatorPack,
    m: float,
    datum: ExteriorDatum,
    T: float,
    n_steps: int = 64,
    tol: float = 1e-9,
) -> TimeSeriesField:
    """Solve the initial-exterior problem for a time-independent exterior datum.

    Returns the ``u`` series on the full box at ``n_steps + 1`` uniform nodes
    of ``[0, T]``.  ``u`` equals the signed ``1/m`` power of ``h * g0`` off
    Omega at every node and vanishes on Omega at ``t = 0``.
    """
    if n_steps < 8:
        raise ValueError(f"n_steps must be at least 8, got {n_steps}")
    layout = pack.layout
    om = layout.mask_omega
    g_v = datum.values
    if np.any(g_v[om] != 0.0):
        raise ValueError("exterior datum must vanish on omega")
    g_u = power_map(g_v, 1.0 / m)
    f = -(pack.Ls_matrix @ g_v)[om]
    times = np.linspace(0.0, T, n_steps + 1)
    dt = T / n_steps
    slices = np.empty((n_steps + 1, layout.n_points))
    slices[0] = g_u
    w = np.zeros(om.size)
    scale = float(np.max(np.abs(g_v))) if np.any(g_v) else 1.0
    iters, max_res, fallbacks, state_steps = [], 0.0, 0, 0
    for k in range(1, n_steps + 1):
        w, info = step_implicit(pack, m, w, dt, f, tol=tol, scale=scale)
        iters.append(info.newton_iterations)
        max_res = max(max_res, info.residual)
        fallbacks += int(info.fallback)
        state_steps += int(info.state_newton)
        slices[k] = g_u
        slices[k, om] = w
    meta = {
        "n_steps": n_steps,
        "dt": dt,
        "newton_iterations_total": int(np.sum(iters)),
        "newton_iterations_max": int(np.max(iters)),
        "max_step_residual": float(max_res),
        "fallback_steps": fallbacks,
        "state_newton_steps": state_steps,
        "tolerance": tol,
        "h": datum.h,
    }
    return TimeSeriesField(times=times, slices=slices, variable_tag="u", meta=meta)


def nonlinear_dn_map(
    pack: OperatorPack,
    solution: TimeSeriesField,
    m: float,
    datum: ExteriorDatum,
    map_kind: str = "Lambda",
    observe: np.ndarray | None = None,
) -> MeasurementRecord:
    """``L^s v`` restricted to ``observe`` (default W2) at every time node.

    ``map_kind="Lambda"`` expects a ``u`` series and applies ``L^s`` to ``u^m``;
    ``"Lambda_tilde"`` expects the ``v`` series directly.  Both give the same record.
    """
    if map_kind == "Lambda":
        if solution.variable_tag != "u":
            raise ValueError("Lambda expects a u series")
        v = power_map(solution.slices, m)
    elif map_kind == "Lambda_tilde":
        if solution.variable_tag != "v":
            raise ValueError("Lambda_tilde expects a v series")
        v = solution.slices
    else:
        raise ValueError(f"unknown map kind {map_kind!r}")
    observe = pack.layout.mask_w2 if observe is None else observe
    values = (v @ pack.Ls_matrix)[:, observe]
    return MeasurementRecord(
        datum=datum,
        map_kind=map_kind,
        times=solution.times.copy(),
        mask=observe,
        values=values,
        solver_meta=dict(solution.meta),
    )
