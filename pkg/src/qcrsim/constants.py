"""Physical constants (exact 2019 SI values)."""

from dataclasses import dataclass
import math


@dataclass(frozen=True)
class PhysConstants:
    e: float = 1.602176634e-19
    h: float = 6.62607015e-34
    k_B: float = 1.380649e-23

    @property
    def hbar(self) -> float:
        return self.h / (2 * math.pi)

    @property
    def R_K(self) -> float:
        """Resistance quantum h/e^2 in ohms."""
        return self.h / self.e**2


CONST = PhysConstants()

E_CHARGE = CONST.e
H_PLANCK = CONST.h
HBAR = CONST.hbar
K_B = CONST.k_B
R_K = CONST.R_K

#: joules per electronvolt
EV = E_CHARGE
