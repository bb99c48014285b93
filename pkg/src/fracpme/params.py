"""Scalar parameters shared by the forward, asymptotic and recovery stages."""

from __future__ import annotations

from dataclasses import dataclass, field


class ParameterError(ValueError):
    """Raised when a parameter set violates its admissible range."""


@dataclass(frozen=True)
class SimulationParameters:
    """Fractional power ``s``, nonlinearity ``m``, transform exponent ``alpha``
    and time horizon ``T``.

    ``m_conj`` is the Hölder conjugate ``m / (m - 1)`` and is derived, not passed.
    The transform exponent must exceed ``m_conj - 1``.
    """

    s: float
    m: float
    alpha: float
    T: float
    m_conj: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"s must lie in (0, 1), got {self.s}")
        if not self.m > 1.0:
            raise ParameterError(f"m must exceed 1, got {self.m}")
        if not self.T > 0.0:
            raise ParameterError(f"T must be positive, got {self.T}")
        object.__setattr__(self, "m_conj", self.m / (self.m - 1.0))
        if not self.alpha > self.m_conj - 1.0:
            raise ParameterError(
                f"alpha must exceed m' - 1 = {self.m_conj - 1.0:.6g}, got {self.alpha}"
            )

    @property
    def C_alpha(self) -> float:
        """Exact value of ``T**-(1+alpha) * int_0^T (T-t)**alpha dt``."""
        return 1.0 / (1.0 + self.alpha)

    def with_T(self, T: float) -> "SimulationParameters":
        return SimulationParameters(s=self.s, m=self.m, alpha=self.alpha, T=T)
