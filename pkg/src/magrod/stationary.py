"""Steady whirling (and static) equilibria: the 18-dimensional O(1) problem."""

from __future__ import annotations

import numpy as np

from .bvp import BvpSolution, BvpSystem, make_mesh
from .model import STATE_DIM, RodParams, orthonormality_defect, trivial_state

PARAM_NAMES = ("B", "omega", "T", "P", "R", "Gamma", "f", "gamma")


def curvatures(M, p):
    """Eliminate curvatures in favour of moments via the constitutive law."""
    M = np.asarray(M)
    k = np.empty_like(M)
    k[..., 0] = p.f * M[..., 0]
    k[..., 1] = p.f * M[..., 1] / p.R
    k[..., 2] = 2.0 * p.f * M[..., 2] / (p.Gamma * (1.0 + p.R))
    return k


def stationary_rhs(s, st, p: RodParams) -> np.ndarray:
    """Right-hand side of the O(1) equations; ``st`` has shape (..., 18)."""
    st = np.asarray(st)
    x, y = st[..., 0], st[..., 1]
    F1, F2, F3 = st[..., 3], st[..., 4], st[..., 5]
    M1, M2, M3 = st[..., 6], st[..., 7], st[..., 8]
    d11, d12, d13 = st[..., 9], st[..., 10], st[..., 11]
    d21, d22, d23 = st[..., 12], st[..., 13], st[..., 14]
    d31, d32, d33 = st[..., 15], st[..., 16], st[..., 17]
    f, R, P, B, w2 = p.f, p.R, p.P, p.B, p.omega**2
    tors = 2.0 * f / (p.Gamma * (1.0 + R))
    k1, k2, k3 = f * M1, f * M2 / R, tors * M3

    out = np.empty(st.shape, dtype=np.result_type(st, float))
    out[..., 0:3] = st[..., 15:18]
    out[..., 3] = F2 * k3 - F3 * k2 - B * (d32 * d11 - d31 * d12) - w2 * (x * d11 + y * d12)
    out[..., 4] = F3 * k1 - F1 * k3 - B * (d32 * d21 - d31 * d22) - w2 * (x * d21 + y * d22)
    out[..., 5] = F1 * k2 - F2 * k1 - w2 * (x * d31 + y * d32)
    out[..., 6] = tors * M3 * M2 - f * M2 * M3 / R + F2 + P * w2 * d23 * (d22 * d11 - d21 * d12)
    out[..., 7] = -tors * M3 * M1 + f * M1 * M3 - F1 + P * R * w2 * d13 * (d21 * d12 - d11 * d22)
    out[..., 8] = (
        f * M2 * M1 / R
        - f * M1 * M2
        + P * R * w2 * d13 * (d12 * d31 - d11 * d32)
        + P * w2 * d23 * (d22 * d31 - d21 * d32)
    )
    # d_i' = kappa x d_i with kappa = k1 d1 + k2 d2 + k3 d3 (e-frame components)
    kap = k1[..., None] * st[..., 9:12] + k2[..., None] * st[..., 12:15] + k3[..., None] * st[..., 15:18]
    for sl in (slice(9, 12), slice(12, 15), slice(15, 18)):
        out[..., sl] = np.cross(kap, st[..., sl])
    return out


def stationary_bc(st0, st1, p: RodParams) -> np.ndarray:
    """18 welded-end residuals; the orthonormality rows sit at s = 0."""
    st0 = np.asarray(st0)
    st1 = np.asarray(st1)
    d1, d2, d3 = st0[9:12], st0[12:15], st0[15:18]
    F_e3 = st0[3] * d1[2] + st0[4] * d2[2] + st0[5] * d3[2]
    return np.array(
        [
            st0[0],
            st0[1],
            F_e3 - p.T,
            d3[0],
            d3[1],
            d1[1],
            st1[0],
            st1[1],
            st1[2] - 1.0,
            st1[15],
            st1[16],
            st1[10],
            d1 @ d1 - 1.0,
            d2 @ d2 - 1.0,
            d3 @ d3 - 1.0,
            d1 @ d2,
            d1 @ d3,
            d2 @ d3,
        ]
    )


def params_from_vector(pvec, names=PARAM_NAMES) -> RodParams:
    vals = dict(zip(names, (float(v) for v in pvec)))
    return RodParams(**{k: vals[k] for k in ("P", "R", "B", "Gamma", "gamma", "omega", "T", "f")})


def param_dict(p: RodParams) -> dict:
    return {name: getattr(p, name) for name in PARAM_NAMES}


class _FastParams:
    """Attribute view of a parameter vector that skips validation."""

    __slots__ = PARAM_NAMES

    def __init__(self, pvec):
        for name, v in zip(PARAM_NAMES, pvec):
            setattr(self, name, float(v))


class StationarySystem(BvpSystem):
    """The O(1) boundary-value problem as a :class:`BvpSystem`."""

    n = STATE_DIM
    par_names = PARAM_NAMES
    nbc = 18
    nint = 0

    def rhs(self, s, U, p):
        return stationary_rhs(s, U, _FastParams(p))

    def bc(self, ua, ub, p):
        return stationary_bc(ua, ub, _FastParams(p))

    def monitors(self) -> dict:
        return {
            "measure1": measure1,
            "measure2": measure2,
            "defect": lambda sol: orthonormality_defect(sol.y),
        }

    def symmetry(self, v):
        """End-swap action on node-value perturbations."""
        return swap_ends_linear(v)


def trivial_solution(p: RodParams, mesh=None) -> BvpSolution:
    mesh = mesh or make_mesh()
    return BvpSolution.from_function(StationarySystem(), mesh, lambda s: trivial_state(s, p.T), param_dict(p))


def measure1(sol: BvpSolution) -> float:
    """Integral of |x(s)| (first centreline coordinate)."""
    _, Y, w = sol.quadrature()
    return float(np.dot(w, np.abs(Y[:, 0])))


def measure2(sol: BvpSolution) -> float:
    """Integral of x(s) y(s)."""
    _, Y, w = sol.quadrature()
    return float(np.dot(w, Y[:, 0] * Y[:, 1]))


# -- symmetries --------------------------------------------------------------


def rotate_about_axis(st, phi):
    """Rotate centreline and directors by ``phi`` about e3 (moments/forces unchanged)."""
    st = np.array(st, dtype=float, copy=True)
    c, s = np.cos(phi), np.sin(phi)
    Q = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    for sl in (slice(0, 3), slice(9, 12), slice(12, 15), slice(15, 18)):
        st[..., sl] = st[..., sl] @ Q.T
    return st


# Linear part of the end-swap symmetry s -> 1-s composed with a half turn
# about e1 through the midpoint.
_SWAP_SIGNS = np.array(
    [1, -1, -1, -1, 1, 1, -1, 1, 1, 1, -1, -1, -1, 1, 1, -1, 1, 1],
    dtype=float,
)


def swap_ends(sol: BvpSolution) -> BvpSolution:
    """Image of an equilibrium under the end-swap symmetry.

    Maps (x, y, z)(s) to (x, -y, z(0) + 1 - z)(1-s) and flips the sign of the
    components that change under the half turn.  Requires a mesh symmetric
    about s = 1/2.
    """
    new = sol.copy()
    z0 = sol.y[0, 2]
    new.y = sol.y[::-1] * _SWAP_SIGNS
    new.y[:, 2] += z0 + 1.0
    # stage slopes: reverse intervals and stages, derivative flips sign
    new.K = -sol.K[::-1, ::-1] * _SWAP_SIGNS
    return new


def swap_ends_linear(v: np.ndarray) -> np.ndarray:
    """Action of :func:`swap_ends` on node-value perturbations (N+1, 18)."""
    out = v[::-1] * _SWAP_SIGNS
    out[:, 2] += v[0, 2]
    return out
