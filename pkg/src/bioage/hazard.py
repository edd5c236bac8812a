"""Gompertz mortality expressed in biological age.

The law is pinned by two hazard values: ``lambda0`` at age ``kappa0`` and
``lambdaT`` at the terminal age ``kappaT``. The modal/dispersion pair
``(m, b)`` is derived from the pins and vice versa.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HazardModel:
    """Gompertz hazard ``lambda(a) = lambda0 * (lambdaT/lambda0)**((a-kappa0)/(kappaT-kappa0))``."""

    lambda0: float = 0.005
    lambdaT: float = 1.0
    kappa0: float = 60.0
    kappaT: float = 110.0

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError(f"lambda0 must be positive, got {self.lambda0}")
        if not self.lambdaT > self.lambda0:
            raise ValueError(
                f"lambdaT must exceed lambda0 (got lambda0={self.lambda0}, lambdaT={self.lambdaT})"
            )
        if not self.kappaT > self.kappa0:
            raise ValueError(f"kappaT must exceed kappa0 (got {self.kappa0}, {self.kappaT})")

    @classmethod
    def from_pinned(cls, lambda0, lambdaT, kappa0, kappaT) -> "HazardModel":
        return cls(float(lambda0), float(lambdaT), float(kappa0), float(kappaT))

    @classmethod
    def from_gompertz(cls, m, b, kappa0, kappaT) -> "HazardModel":
        """Build the model from mode ``m`` and dispersion ``b`` (both in years)."""
        if not b > 0:
            raise ValueError(f"b must be positive, got {b}")
        lam0 = np.exp((kappa0 - m) / b) / b
        lamT = np.exp((kappaT - m) / b) / b
        return cls(float(lam0), float(lamT), float(kappa0), float(kappaT))

    @property
    def horizon(self) -> float:
        """Years from ``kappa0`` until ageing stops."""
        return self.kappaT - self.kappa0

    @property
    def b(self) -> float:
        return self.horizon / np.log(self.lambdaT / self.lambda0)

    @property
    def m(self) -> float:
        b = self.b
        return self.kappa0 - b * np.log(b * self.lambda0)

    def hazard(self, a):
        """Hazard rate per year at biological age ``a``. Not clamped outside the pins."""
        return self.lambda0 * np.exp((np.asarray(a, dtype=float) - self.kappa0) / self.b)

    __call__ = hazard

    def gompertz_survival(self, s):
        """Survival over ``s`` years under deterministic ageing from ``kappa0``.

        Pure Gompertz form ``exp(b*lambda0*(1 - exp(s/b)))``; the hazard keeps
        growing past ``kappaT``.
        """
        s = np.asarray(s, dtype=float)
        return np.exp(-self.gompertz_cumulative_hazard(s))

    def gompertz_cumulative_hazard(self, s):
        s = np.asarray(s, dtype=float)
        return self.b * self.lambda0 * np.expm1(s / self.b)

    def cumulative_hazard(self, s):
        """Integrated hazard over ``[0, s]`` for deterministic ageing that stops at ``kappaT``.

        Beyond the horizon the hazard stays at ``lambdaT``.
        """
        s = np.asarray(s, dtype=float)
        T = self.horizon
        inside = self.gompertz_cumulative_hazard(np.minimum(s, T))
        return inside + self.lambdaT * np.maximum(s - T, 0.0)

    def survival(self, s):
        return np.exp(-self.cumulative_hazard(s))
