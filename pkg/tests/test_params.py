from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracpme.params import ParameterError, SimulationParameters


def test_conjugate_exponent_exact():
    p = SimulationParameters(0.5, 2.0, 3.0, 1.0)
    assert p.m_conj == 2.0
    assert 1.0 / p.m + 1.0 / p.m_conj == 1.0


@given(m=st.floats(1.01, 20.0), s=st.floats(0.01, 0.99))
def test_conjugate_identity(m, s):
    p = SimulationParameters(s, m, m / (m - 1.0), 1.0)
    assert abs(1.0 / p.m + 1.0 / p.m_conj - 1.0) < 1e-14


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(s=0.0, m=2.0, alpha=3.0, T=1.0),
        dict(s=1.0, m=2.0, alpha=3.0, T=1.0),
        dict(s=0.5, m=1.0, alpha=3.0, T=1.0),
        dict(s=0.5, m=2.0, alpha=3.0, T=0.0),
        dict(s=0.5, m=2.0, alpha=1.0, T=1.0),  # alpha must exceed m' - 1 = 1
        dict(s=0.5, m=3.0, alpha=0.4, T=1.0),
    ],
)
def test_rejects_out_of_range(kwargs):
    with pytest.raises(ParameterError):
        SimulationParameters(**kwargs)


def test_C_alpha_and_with_T():
    p = SimulationParameters(0.3, 3.0, 2.0, 1.0)
    assert p.C_alpha == pytest.approx(1.0 / 3.0)
    q = p.with_T(0.5)
    assert q.T == 0.5 and q.alpha == p.alpha and q.m_conj == p.m_conj
