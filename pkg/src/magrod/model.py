"""Rod parameters, dimensionless groups and the 18-component state layout.

All computation inside the package is dimensionless.  Dimensional data only
enters through :func:`nondimensionalize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

# Frequency-scaling constant of the SET data set.
SET_F = 500.5639

# Slices into the 18-vector (x, F, M, d1, d2, d3).
X = slice(0, 3)
F = slice(3, 6)
M = slice(6, 9)
D1 = slice(9, 12)
D2 = slice(12, 15)
D3 = slice(15, 18)
DIRECTORS = slice(9, 18)
STATE_DIM = 18


class ParameterError(ValueError):
    """Raised when a parameter lies outside its physical domain."""


@dataclass(frozen=True)
class DimensionalParams:
    L: float
    A: float
    E: float
    EI1: float
    EI2: float
    G: float
    rho: float = 1.0
    B0: float = 0.0
    I_current: float = 0.0
    T_dim: float = 0.0
    gamma_v: float = 0.0

    def __post_init__(self):
        for name in ("L", "A", "E", "EI1", "EI2", "G", "rho"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be finite and positive, got {v!r}")
        if self.EI1 < self.EI2:
            raise ParameterError("EI1 must be >= EI2 (d1 is the stiff axis)")
        for name in ("B0", "I_current", "T_dim", "gamma_v"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")


@dataclass(frozen=True)
class RodParams:
    """Dimensionless groups governing the rod equations.

    ``P`` rotary inertia ratio, ``R`` anisotropy, ``B`` magnetic load,
    ``Gamma`` = 2G/E, ``gamma`` viscoelastic damping, ``omega`` whirl rate,
    ``T`` end force and ``f`` the frequency-scaling constant.
    """

    P: float
    R: float
    B: float = 0.0
    Gamma: float = 0.76923
    gamma: float = 0.0
    omega: float = 0.0
    T: float = 0.0
    f: float = 1.0

    def __post_init__(self):
        for fld in fields(self):
            v = getattr(self, fld.name)
            if not math.isfinite(v):
                raise ParameterError(f"{fld.name} must be finite, got {v!r}")
        if not 0 < self.R <= 1:
            raise ParameterError(f"R must lie in (0, 1], got {self.R}")
        if self.P <= 0:
            raise ParameterError(f"P must be positive, got {self.P}")
        if self.Gamma <= 0:
            raise ParameterError(f"Gamma must be positive, got {self.Gamma}")
        if self.f <= 0:
            raise ParameterError(f"f must be positive, got {self.f}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be non-negative, got {self.gamma}")

    def with_(self, **changes) -> "RodParams":
        return replace(self, **changes)

    @property
    def stiffness(self) -> np.ndarray:
        """Diagonal of the bending/torsion stiffness (units of 1/f)."""
        return np.array([1.0, self.R, 0.5 * self.Gamma * (1.0 + self.R)]) / self.f

    def rescale_f(self, f_new: float) -> "RodParams":
        """Express the same physical problem with another scaling constant.

        Loads scale with 1/f and the reference frequency with sqrt(f), so
        rates shrink by sqrt(f) and the damping group grows by it.
        """
        ratio = self.f / f_new
        root = math.sqrt(ratio)
        return replace(
            self,
            f=f_new,
            B=self.B * ratio,
            T=self.T * ratio,
            omega=self.omega * root,
            gamma=self.gamma / root,
        )


def nondimensionalize(d: DimensionalParams, f: float) -> RodParams:
    if not (math.isfinite(f) and f > 0):
        raise ParameterError(f"f must be finite and positive, got {f!r}")
    I1 = d.EI1 / d.E
    I2 = d.EI2 / d.E
    omega_c = math.sqrt(f * d.EI1 / (d.rho * d.A * d.L**4))
    return RodParams(
        P=I1 / (d.A * d.L**2),
        R=I2 / I1,
        B=d.B0 * d.I_current * d.L**3 / (f * d.EI1),
        Gamma=2.0 * d.G / d.E,
        gamma=d.gamma_v * omega_c,
        omega=0.0,
        T=d.T_dim * d.L**2 / (f * d.EI1),
        f=f,
    )


def set_dimensional() -> DimensionalParams:
    """Table data for the short electrodynamic tether.

    G is not tabulated; it is back-computed from Gamma = 0.76923.  The density
    only enters through the damping group and is left at 1.
    """
    E = 1.32e11
    return DimensionalParams(L=100.0, A=2.879e-11, E=E, EI1=38.0, EI2=21.0, G=0.76923 * E / 2.0)


def set_preset() -> RodParams:
    return RodParams(P=0.001, R=0.5526, Gamma=0.76923, f=SET_F)


def trivial_state(s, T: float = 0.0) -> np.ndarray:
    """Straight untwisted rod; ``s`` scalar or array, returns (..., 18).

    The axial force equals ``+T`` so that the end condition F(0).e3 = T holds
    (T > 0 is tension).
    """
    s = np.asarray(s, dtype=float)
    st = np.zeros(s.shape + (STATE_DIM,))
    st[..., 2] = s
    st[..., 5] = T
    st[..., 9] = st[..., 13] = st[..., 17] = 1.0
    return st


def directors(st: np.ndarray) -> np.ndarray:
    """Rows are d1, d2, d3 (components in the e-frame); shape (..., 3, 3)."""
    st = np.asarray(st)
    return st[..., DIRECTORS].reshape(st.shape[:-1] + (3, 3))


def orthonormality_defect(st: np.ndarray) -> float:
    D = directors(st)
    gram = D @ np.swapaxes(D, -1, -2)
    return float(np.max(np.abs(gram - np.eye(3))))
