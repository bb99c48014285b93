"""Numerical laboratory for a fractional porous-medium equation with absorption.

Forward solver, Dirichlet-to-Neumann measurements, the time-integral transform
with its high-amplitude reduction to the linear DN map, and pointwise
recovery of the absorption coefficient.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .params import ParameterError, SimulationParameters  # noqa: E402
from .operators import (  # noqa: E402
    CoefficientFields,
    DomainLayout,
    EstimateWitness,
    KernelMatrix,
    OperatorPack,
    assemble_operator,
    build_layout,
    heat_kernel,
    jump_kernel,
    sobolev_norm,
)
from .elliptic import ExteriorDatum, linear_dn_map, solve_exterior  # noqa: E402
from .forward import (  # noqa: E402
    MeasurementRecord,
    TimeSeriesField,
    energy_functional,
    nonlinear_dn_map,
    pme_apply,
    power_map,
    solve_ivp,
    step_implicit,
)
from .asymptotics import (  # noqa: E402
    TransformBundle,
    decompose,
    moment_fields,
    rate_fit,
    time_integral_transform,
    verify_pointwise_estimates,
)
from .recovery import (  # noqa: E402
    RecoveryReport,
    dn_distance,
    recover_lambda,
    reduce_to_linear_dn,
    ucp_diagnostic,
)

__all__ = [
    "CoefficientFields", "DomainLayout", "EstimateWitness", "ExteriorDatum", "KernelMatrix",
    "MeasurementRecord", "OperatorPack", "ParameterError", "RecoveryReport", "SimulationParameters",
    "TimeSeriesField", "TransformBundle", "assemble_operator", "build_layout", "decompose",
    "dn_distance", "energy_functional", "heat_kernel", "jump_kernel", "linear_dn_map",
    "moment_fields", "nonlinear_dn_map", "pme_apply", "power_map", "rate_fit", "recover_lambda",
    "reduce_to_linear_dn", "solve_exterior", "solve_ivp", "sobolev_norm", "step_implicit",
    "time_integral_transform", "ucp_diagnostic", "verify_pointwise_estimates",
]
