from __future__ import annotations

import numpy as np
import numpy.typing as npt

# Dense complex matrix with row/column port semantics
ComplexMat = npt.NDArray[np.complex128]
RealVec = npt.NDArray[np.float64]

# Free-space constants (SI)
C0 = 299_792_458.0
MU0 = 4e-7 * np.pi
EPS0 = 1.0 / (MU0 * C0**2)
ETA0 = float(np.sqrt(MU0 / EPS0))

DEFAULT_Z0 = 50.0

# Channel formulation tags
FORMULATION_IMPEDANCE = "impedance"
FORMULATION_SCATTERING = "scattering"
FORMULATION_COMM_THEORY = "comm-theory"

# Port groups in assembly order
PORT_GROUPS: tuple[str, ...] = ("T", "S", "R", "O")

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_PRECONDITION = 4


def wavenumber(wavelength: float) -> float:
    """Free-space wavenumber κ = 2π/λ in rad/m."""
    return 2.0 * np.pi / wavelength
