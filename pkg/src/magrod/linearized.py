"""First-order perturbations of a whirling equilibrium.

The perturbation unknowns at each station are ``(xt, alpha, Ft, Mt)``: the
centreline displacement in the rotating frame, the small rotation of the
director frame and the force and moment perturbations, the last three in
components on the unperturbed directors.  Solutions of the form
``u(s) exp(lambda t)`` lead to a linear ODE in ``s`` whose coefficients are
the 3x3 matrices built by :func:`lin_matrices`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bvp import BvpSolution, BvpSystem, fd_jac
from .model import STATE_DIM
from .stationary import PARAM_NAMES, _FastParams, stationary_bc, stationary_rhs

LIN_DIM = 12
XT = slice(0, 3)
ALPHA = slice(3, 6)
FT = slice(6, 9)
MT = slice(9, 12)

LAMBDA_NAMES = ("lam_r", "lam_i")
COMPOSITE_PARAMS = PARAM_NAMES + LAMBDA_NAMES

_C4 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


# End-swap action on one perturbation copy (reversal s -> 1-s plus these
# signs): xt and alpha behave like the centreline, Ft and Mt like F and M.
PERTURBATION_SWAP_SIGNS = np.array([1, -1, -1, 1, -1, -1, -1, 1, 1, -1, 1, 1], dtype=float)


def swap_ends_perturbation(v: np.ndarray) -> np.ndarray:
    """Image of perturbation node values (N+1, 12) under the end swap.

    The axial displacement is pinned at s = 1 only, so the image is shifted
    by a rigid axial translation to keep that condition.
    """
    out = v[::-1] * PERTURBATION_SWAP_SIGNS
    out[:, 2] += v[0, 2]
    return out


class DegenerateDampingError(ArithmeticError):
    """The constitutive law cannot be solved for alpha' (1 + gamma*lambda = 0)."""


@dataclass(frozen=True)
class LinMatrices:
    """Coefficient matrices at one or many stations (trailing shape 3x3)."""

    B1: np.ndarray
    B2: np.ndarray
    B3: np.ndarray
    B4: np.ndarray
    B5: np.ndarray
    B6: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    C3: np.ndarray
    C4: np.ndarray
    C5: np.ndarray
    C6: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    D4: np.ndarray


def _mat(rows):
    """Stack nested lists of broadcastable arrays into (..., 3, 3)."""
    cols = [np.stack(np.broadcast_arrays(*r), axis=-1) for r in rows]
    return np.stack(np.broadcast_arrays(*cols), axis=-2)


def _skew(v0, v1, v2):
    z = np.zeros_like(v0)
    return _mat([[z, -v2, v1], [v2, z, -v0], [-v1, v0, z]])


def lin_matrices(st, p) -> LinMatrices:
    """Evaluate B1..B6, C1..C6, D1..D4 on base state(s) ``st`` (..., 18).

    Curvatures come from the constitutive law and the arclength derivatives
    of the base force and moment from the equilibrium equations, so only
    the state itself is needed.
    """
    st = np.asarray(st, dtype=float)
    shape = st.shape[:-1]
    f, R, P, B, Gam, gam, w = p.f, p.R, p.P, p.B, p.Gamma, p.gamma, p.omega
    tq = 0.5 * Gam * (1.0 + R)

    F1, F2, F3 = st[..., 3], st[..., 4], st[..., 5]
    M1, M2, M3 = st[..., 6], st[..., 7], st[..., 8]
    d1, d2, d3 = st[..., 9:12], st[..., 12:15], st[..., 15:18]
    d11, d12, d13 = d1[..., 0], d1[..., 1], d1[..., 2]
    d21, d22, d23 = d2[..., 0], d2[..., 1], d2[..., 2]
    d31, d32, d33 = d3[..., 0], d3[..., 1], d3[..., 2]
    k1, k2, k3 = f * M1, f * M2 / R, f * M3 / tq

    der = stationary_rhs(0.0, st, p)
    dF1, dF2, dF3 = der[..., 3], der[..., 4], der[..., 5]
    dM1, dM2, dM3 = der[..., 6], der[..., 7], der[..., 8]
    z = np.zeros(shape)

    B1 = _skew(k1, k2, k3)
    B2 = w**2 * _mat([[d11, d12, z], [d21, d22, z], [d31, d32, z]])
    B3 = -_skew(F1, F2, F3)
    mag12 = B * (d22 * d11 - d21 * d12)
    B4 = _mat(
        [
            [F2 * k2 + F3 * k3 - mag12, dF3 - F1 * k2, -dF2 - F1 * k3],
            [-dF3 - F2 * k1, F3 * k3 + F1 * k1 - mag12, dF1 - F2 * k3],
            [
                dF2 - F3 * k1 - B * (d22 * d31 - d21 * d32),
                -dF1 - F3 * k2 + B * (d12 * d31 - d11 * d32),
                F1 * k1 + F2 * k2,
            ],
        ]
    )
    B5 = _mat([[d11, d12, d13], [d21, d22, d23], [d31, d32, d33]])
    B6 = 2.0 * w * _mat([[d12, -d11, z], [d22, -d21, z], [d32, -d31, z]])

    # omega = w e3, so omega.d_i = w d_i3 and (d_a x omega).d_b = w (d_a x e3).d_b
    wd1, wd2, wd3 = w * d13, w * d23, w * d33

    def trip(a, b):
        # (a x omega) . b
        return w * (a[..., 1] * b[..., 0] - a[..., 0] * b[..., 1])

    C2 = -_skew(M1, M2, M3)
    C3 = _mat(
        [
            [
                M3 * k3 + M2 * k2 - P * wd3 * trip(d2, d1) - P * wd2 * trip(d3, d1),
                dM3 - M1 * k2 - P * R * wd1 * trip(d1, d3),
                -dM2 - M1 * k3 - F1 + P * R * wd1 * trip(d1, d2) + P * wd1 * trip(d2, d1),
            ],
            [
                -dM3 - M2 * k1 + P * wd2 * trip(d2, d3),
                M3 * k3 + M1 * k1 + P * R * wd3 * trip(d1, d2) + P * R * wd1 * trip(d3, d2),
                dM1 - M2 * k3 - F2 - P * R * wd2 * trip(d1, d2) - P * wd2 * trip(d2, d1),
            ],
            [
                dM2 - M3 * k1 + F1 - P * wd3 * trip(d2, d3),
                -dM1 - M3 * k2 + F2 + P * R * wd3 * trip(d1, d3),
                M2 * k2
                + M1 * k1
                + P * (1 - R) * wd2 * trip(d1, d3)
                + P * (1 - R) * wd1 * trip(d2, d3),
            ],
        ]
    )
    C4 = np.broadcast_to(_C4, shape + (3, 3)).copy()
    C5 = np.broadcast_to(P * np.diag([1.0, R, 1.0 + R]), shape + (3, 3)).copy()

    e3 = np.array([0.0, 0.0, 1.0])

    def tri(a, c, b):
        # (a x (omega x c)) . b
        wc = w * np.cross(e3, c)
        return np.einsum("...i,...i->...", np.cross(a, wc), b)

    C6 = (
        2.0
        * P
        * _mat(
            [
                [tri(d2, d3, d1), z, -tri(d2, d1, d1)],
                [z, -R * tri(d1, d3, d2), R * tri(d1, d2, d2)],
                [tri(d2, d3, d3), -R * tri(d1, d3, d3), R * tri(d1, d2, d3) - tri(d2, d1, d3)],
            ]
        )
    )

    stiff = np.array([1.0, R, tq]) / f
    D1 = np.broadcast_to(-np.diag(stiff), shape + (3, 3)).copy()
    D2 = _mat(
        [
            [z, k3 / f, -M2 - (1 - R) * k2 / f],
            [-R * k3 / f, z, M1 - (1 - R) * k1 / f],
            [M2 - k2 * (R - tq) / f, -M1 + k1 * (1 - tq) / f, z],
        ]
    )
    D3 = (gam / f) * _mat([[z, -k3, k2], [R * k3, z, -R * k1], [-tq * k2, tq * k1, z]])
    D4 = -gam * D1
    return LinMatrices(B1, B2, B3, B4, B5, B6, C1=B1, C2=C2, C3=C3, C4=C4, C5=C5, C6=C6, D1=D1, D2=D2, D3=D3, D4=D4)


def _mv(A, v):
    return np.einsum("...ij,...j->...i", A, v)


def linearized_rhs(s, lin, st, lam, p, mats: LinMatrices | None = None):
    """Derivative of the perturbation ``lin`` (..., 12), real or complex.

    ``lam`` is the (complex) exponent of the time dependence.  The
    constitutive relation is solved for alpha' first; the remaining
    equations then give xt', Ft' and Mt' explicitly.
    """
    lin = np.asarray(lin)
    m = mats if mats is not None else lin_matrices(st, p)
    xt, al, Ft, Mt = lin[..., XT], lin[..., ALPHA], lin[..., FT], lin[..., MT]
    diag = np.diagonal(m.D1 - lam * m.D4, axis1=-2, axis2=-1)
    if np.any(np.abs(diag) < 1e-300):
        raise DegenerateDampingError(f"1 + gamma*lambda vanishes for lambda = {lam}")
    dal = (lam * _mv(m.D3, al) - _mv(m.D2, al) - Mt) / diag
    # alpha x d3 with alpha on the base directors: D^T (alpha_2, -alpha_1, 0)
    D = np.asarray(st)[..., 9:18].reshape(np.shape(st)[:-1] + (3, 3))
    t = np.stack([al[..., 1], -al[..., 0], np.zeros_like(al[..., 0])], axis=-1)
    dxt = np.einsum("...ji,...j->...i", D, t)
    dFt = -_mv(m.B1, Ft) - _mv(m.B2, xt) - _mv(m.B3, dal) - _mv(m.B4, al) + (lam**2) * _mv(m.B5, xt) + lam * _mv(m.B6, xt)
    dMt = -_mv(m.C1, Mt) - _mv(m.C2, dal) - _mv(m.C3, al) - _mv(m.C4, Ft) + (lam**2) * _mv(m.C5, al) + lam * _mv(m.C6, al)
    return np.concatenate([dxt, dal, dFt, dMt], axis=-1)


def linearized_bc(lin0, lin1):
    """Twelve homogeneous end conditions on one perturbation copy.

    Order: xt(0), yt(0), Ft(0).e3, alpha(0), xt(1) (three), alpha(1).
    ``Ft`` is stored on the base directors, which coincide with the fixed
    frame at the welded ends.
    """
    lin0 = np.asarray(lin0)
    lin1 = np.asarray(lin1)
    return np.concatenate([lin0[..., 0:2], lin0[..., 8:9], lin0[..., ALPHA], lin1[..., XT], lin1[..., ALPHA]], axis=-1)


def eigen_norm_density(lin):
    """Pointwise density xt.xt + alpha.alpha of one real perturbation copy."""
    lin = np.asarray(lin)
    return np.sum(lin[..., XT] ** 2, axis=-1) + np.sum(lin[..., ALPHA] ** 2, axis=-1)


class CompositeSystem(BvpSystem):
    """Equilibrium equations coupled to perturbation copies.

    ``mode="imag_only"`` carries one real 12-component copy ``v`` and uses
    ``Re(L(lambda) v)`` as its right-hand side; this is the exact equation
    whenever the odd powers of lambda drop out (omega = gamma = 0) and
    lambda is purely real or purely imaginary.  ``mode="full"`` carries the
    real and imaginary parts of a complex perturbation (state layout: base,
    real copy, imaginary copy).  With ``normalize`` each copy gets the
    integral condition  int (xt.xt + alpha.alpha) ds = target.

    The axial force of a perturbation is conserved along the rod, but the
    collocation scheme keeps it only up to discretisation error.  With
    ``symmetric_ends`` the condition Ft.e3 = 0 is imposed on the sum of its
    two end values, so the discrete problem inherits the end-swap symmetry
    exactly; otherwise it is imposed at s = 0.
    """

    par_names = COMPOSITE_PARAMS

    def __init__(self, mode: str = "full", normalize: bool = True, targets=(1.0, 1.0), symmetric_ends: bool = False):
        if mode not in ("imag_only", "full"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.copies = 1 if mode == "imag_only" else 2
        self.n = STATE_DIM + LIN_DIM * self.copies
        self.nbc = self.n
        self.normalize = normalize
        self.targets = tuple(float(t) for t in targets[: self.copies])
        self.nint = self.copies if normalize else 0
        self.symmetric_ends = symmetric_ends

    # helpers ---------------------------------------------------------------

    def _lam(self, p):
        return complex(p[-2], p[-1])

    def _lin_part(self, U, mats, lam):
        base = U[:, :STATE_DIM]
        if self.copies == 1:
            v = U[:, STATE_DIM:]
            return np.real(linearized_rhs(None, v, base, lam, None, mats))
        u = U[:, STATE_DIM : STATE_DIM + LIN_DIM] + 1j * U[:, STATE_DIM + LIN_DIM :]
        d = linearized_rhs(None, u, base, lam, None, mats)
        return np.concatenate([d.real, d.imag], axis=-1)

    def rhs(self, s, U, p):
        U = np.asarray(U, dtype=float)
        fp = _FastParams(p)
        base = U[:, :STATE_DIM]
        mats = lin_matrices(base, fp)
        return np.concatenate([stationary_rhs(s, base, fp), self._lin_part(U, mats, self._lam(p))], axis=-1)

    def jac(self, s, U, p, free):
        U = np.asarray(U, dtype=float)
        m, n = U.shape
        # base columns and parameters by differences, perturbation columns exactly
        fu, fp = fd_jac(self.rhs, s, U, p, free, cols=range(STATE_DIM))
        base = U[:, :STATE_DIM]
        mats = lin_matrices(base, _FastParams(p))
        lam = self._lam(p)
        # L e_j for all unit vectors at once, shape (m, 12, 12)
        Le = np.moveaxis(linearized_rhs(None, np.eye(LIN_DIM)[:, None, :], base, lam, None, mats), 0, -1)
        a, b = STATE_DIM, STATE_DIM + LIN_DIM
        if self.copies == 1:
            fu[:, a:, a:] = np.real(Le)
        else:
            # real copy column u = e_j, imaginary copy column u = i e_j
            fu[:, a:b, a:b], fu[:, b:, a:b] = Le.real, Le.imag
            fu[:, a:b, b:], fu[:, b:, b:] = -Le.imag, Le.real
        return fu, fp

    def bc(self, ua, ub, p):
        fp = _FastParams(p)
        parts = [stationary_bc(ua[:STATE_DIM], ub[:STATE_DIM], fp)]
        for c in range(self.copies):
            sl = slice(STATE_DIM + LIN_DIM * c, STATE_DIM + LIN_DIM * (c + 1))
            r = linearized_bc(ua[sl], ub[sl])
            if self.symmetric_ends:
                r[2] += ub[sl][8]
            parts.append(r)
        return np.concatenate(parts)

    def integrands(self, s, U, p):
        U = np.asarray(U)
        cols = []
        for c in range(self.nint):
            sl = slice(STATE_DIM + LIN_DIM * c, STATE_DIM + LIN_DIM * (c + 1))
            cols.append(eigen_norm_density(U[:, sl]) - self.targets[c])
        return np.stack(cols, axis=-1) if cols else np.zeros((len(U), 0))


def copy_norms(sol: BvpSolution):
    """Values of int (xt.xt + alpha.alpha) ds for each perturbation copy."""
    _, Y, _ = sol.quadrature()
    out = []
    for start in range(STATE_DIM, sol.n, LIN_DIM):
        out.append(sol.integrate(eigen_norm_density(Y[:, start : start + LIN_DIM])))
    return out
