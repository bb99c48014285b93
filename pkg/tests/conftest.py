from __future__ import annotations

import numpy as np
import pytest

from fracpme.config import default_config
from fracpme.operators import (
    CoefficientFields,
    assemble_operator,
    build_layout,
    constant_coefficients,
    smooth_bump,
)
from fracpme.pipeline import Workbench

BOX, OMEGA, W1, W2 = (-2.0, 3.0), (0.0, 1.0), (-1.5, -1.0), (1.5, 2.0)


def variable_coefficients(layout, lam_on: bool = True) -> CoefficientFields:
    """gamma = 1 + bump/2 on Omega and lambda = 1 + x^2 there."""
    om = layout.mask_omega
    gamma = np.ones(layout.n_points)
    gamma[om] += 0.5 * smooth_bump(layout.points[om], [0.5], [0.45])
    lam = np.zeros(layout.n_points)
    if lam_on:
        lam[om] = 1.0 + layout.points[om, 0] ** 2
    return CoefficientFields(gamma, lam)


@pytest.fixture(scope="session")
def layout512():
    return build_layout(BOX, 512, OMEGA, W1, W2)


@pytest.fixture(scope="session")
def layout128():
    return build_layout(BOX, 128, OMEGA, W1, W2)


@pytest.fixture(scope="session")
def flat_pack(layout512):
    return assemble_operator(layout512, constant_coefficients(layout512), 0.5)


@pytest.fixture(scope="session")
def var_pack(layout512):
    return assemble_operator(layout512, variable_coefficients(layout512), 0.5)


@pytest.fixture(scope="session")
def small_pack(layout128):
    return assemble_operator(layout128, variable_coefficients(layout128), 0.5)


@pytest.fixture(scope="session")
def workbench():
    return Workbench(default_config())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """``report(n, parts)`` records ``criterion n: PASS/FAIL`` from ``(label, ok)`` parts."""

    def report(n: int, parts: list[tuple[str, bool]]) -> bool:
        ok = all(p for _, p in parts)
        detail = "; ".join(f"{label} [{'ok' if p else 'FAIL'}]" for label, p in parts)
        ACCEPTANCE_LINES[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[n])
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
