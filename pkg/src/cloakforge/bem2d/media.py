"""Material parameters for the two-region problem."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Medium:
    """Homogeneous, isotropic medium.

    Parameters
    ----------
    eps : float
        Relative permittivity (dimensionless, > 0).
    mu : float
        Relative permeability (dimensionless, > 0).
    omega : float
        Angular frequency in radians per unit time (> 0).
    """

    eps: float
    mu: float
    omega: float

    def __post_init__(self):
        if not (self.eps > 0 and self.mu > 0 and self.omega > 0):
            raise ValueError("medium requires eps > 0, mu > 0, omega > 0")

    @property
    def k(self) -> float:
        """Wavenumber k = omega * sqrt(mu * eps)."""
        return self.omega * math.sqrt(self.mu * self.eps)

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.k


def vacuum(omega: float) -> Medium:
    """Background medium with eps = mu = 1."""
    return Medium(eps=1.0, mu=1.0, omega=omega)
