"""Closed-form and brute-force reference values.

Buckling roots of the welded characteristic function, natural frequencies of
the unloaded rod, and a finite-difference eigenvalue solver for the
straight-rod linearisation.  These are independent of the collocation code
and are used to seed and to check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, eigs, splu

from .model import RodParams, trivial_state

SQRT3 = math.sqrt(3.0)


class NumericRangeError(ArithmeticError):
    pass


class RootSearchError(RuntimeError):
    pass


def trivial_solution(s, T: float = 0.0) -> np.ndarray:
    return trivial_state(s, T)


def chi(beta):
    """Welded-rod buckling characteristic function (real or complex argument)."""
    b = beta
    r = SQRT3
    ch = np.cosh(r * b / 2)
    sh = np.sinh(r * b / 2)
    return (
        2 * np.cos(b)
        + np.cos(2 * b)
        - 2 * (np.cos(b / 2) + np.cos(1.5 * b)) * ch
        + (2 - np.cos(b)) * np.cosh(r * b)
        - r * np.sin(b) * np.sinh(r * b)
        - 2 * r * (np.sin(b / 2) - np.sin(1.5 * b)) * sh
    )


def chi_scaled(beta):
    return chi(beta) / np.cosh(SQRT3 * np.real(beta))


def _chi_slope_scaled(beta: float) -> float:
    # complex-step derivative, exact to rounding
    h = 1e-30
    return float(np.imag(chi(beta + 1j * h)) / h / math.cosh(SQRT3 * beta))


@dataclass(frozen=True)
class BucklingRoot:
    beta: float
    B_f1: float
    B_scaled: float
    multiplicity: int = 2


def chi_roots(n: int, R: float = 1.0, f: float = 1.0, step: float = 0.05, upper: float = 40.0):
    """First ``n`` positive roots of chi.

    The roots are double (chi touches zero), so the scan looks for sign
    changes of chi' and keeps the stationary points where the scaled chi
    vanishes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if upper > 400:
        raise NumericRangeError("scaled chi overflows beyond beta ~ 400")
    grid = np.arange(0.1, upper + step, step)
    slopes = np.array([_chi_slope_scaled(b) for b in grid])
    roots = []
    for a, b, sa, sb in zip(grid[:-1], grid[1:], slopes[:-1], slopes[1:]):
        if sa == 0.0 or sa * sb < 0:
            beta = brentq(_chi_slope_scaled, a, b, xtol=1e-14, rtol=1e-15)
            if abs(chi_scaled(beta)) < 1e-8:
                B1 = math.sqrt(R) * beta**3
                roots.append(BucklingRoot(beta, B1, B1 / f))
                if len(roots) == n:
                    return roots
    raise RootSearchError(f"found only {len(roots)} roots in [0.1, {upper}]")


def critical_loads(p: RodParams, n: int = 3) -> list[float]:
    return [r.B_scaled for r in chi_roots(n, p.R, p.f)]


# ---------------------------------------------------------------------------
# unloaded rod natural frequencies


class Mode(NamedTuple):
    value: float
    family: str  # "x", "y" or "torsion"
    order: int


def _wavenumbers(mu, P, stiff):
    disc = np.sqrt(mu**4 * P**2 + 4 * mu**2 / stiff)
    a = np.sqrt(0.5 * mu**2 * P + 0.5 * disc)
    b = np.sqrt(0.5 * disc - 0.5 * mu**2 * P)
    return a, b


def _clamped_condition(mu, P, stiff):
    a, b = _wavenumbers(mu, P, stiff)
    # divided by cosh(b) to stay O(1)
    return (a**2 - b**2) * np.sin(a) * np.tanh(b) - 2 * a * b * (1.0 / np.cosh(b) - np.cos(a))


def _family_roots(P, stiff, n, mu_max=None):
    roots = []
    step = 0.25
    mu = step
    prev = _clamped_condition(mu, P, stiff)
    limit = mu_max or 1e6
    while len(roots) < n:
        nxt = mu + step
        if nxt > limit:
            raise RootSearchError(f"bracket exhausted: {len(roots)} roots in (0, {limit}]")
        val = _clamped_condition(nxt, P, stiff)
        if prev * val < 0:
            roots.append(brentq(_clamped_condition, mu, nxt, args=(P, stiff), xtol=1e-14))
        mu, prev = nxt, val
    return roots


def unperturbed_bending_eigs(P: float, R: float, n: int, f: float = 1.0) -> list[Mode]:
    """Lowest ``n`` bending frequencies of the unloaded welded rod.

    The x family bends about d2 (stiffness R), the y family about d1.
    Frequencies are returned in units of the scaled reference frequency
    (divide the f = 1 values by sqrt(f)).
    """
    if P <= 0 or not 0 < R <= 1:
        raise ValueError("need P > 0 and 0 < R <= 1")
    modes = [Mode(mu, "x", i + 1) for i, mu in enumerate(_family_roots(P, R, n))]
    modes += [Mode(mu, "y", i + 1) for i, mu in enumerate(_family_roots(P, 1.0, n))]
    modes.sort(key=lambda m: m.value)
    scale = 1.0 / math.sqrt(f)
    return [Mode(m.value * scale, m.family, m.order) for m in modes[:n]]


def torsional_eigs(P: float, Gamma: float, n: int, f: float = 1.0) -> list[Mode]:
    base = math.pi * math.sqrt(Gamma / (2.0 * P * f))
    return [Mode(k * base, "torsion", k) for k in range(1, n + 1)]


def unperturbed_spectrum(p: RodParams, n: int) -> list[Mode]:
    modes = unperturbed_bending_eigs(p.P, p.R, n, p.f) + torsional_eigs(p.P, p.Gamma, n, p.f)
    modes.sort(key=lambda m: m.value)
    return modes[:n]


# ---------------------------------------------------------------------------
# finite-difference eigenvalue oracle for the straight rod


@dataclass(frozen=True)
class FDEigenvalue:
    lam_sq: float  # lambda^2; negative means a purely imaginary pair

    @property
    def lambda_r(self) -> float:
        return math.sqrt(self.lam_sq) if self.lam_sq > 0 else 0.0

    @property
    def lambda_i(self) -> float:
        return math.sqrt(-self.lam_sq) if self.lam_sq < 0 else 0.0


def _fd_operators(grid: int):
    """D1, D2, D4 on the interior points with clamped ghost-point closure."""
    m = grid - 1
    h = 1.0 / grid
    e = np.ones(m)
    D1 = sparse.diags([-e[:-1], e[:-1]], [-1, 1]) / (2 * h)
    D2 = sparse.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1]) / h**2
    D4 = sparse.diags([e[:-2], -4 * e[:-1], 6 * e, -4 * e[:-1], e[:-2]], [-2, -1, 0, 1, 2]).tolil()
    # x'(0) = 0 via ghost x_{-1} = x_1; x_0 = 0
    D4[0, 0] += 1.0
    D4[m - 1, m - 1] += 1.0
    return D1.tocsc(), D2.tocsc(), (D4 / h**4).tocsc()


def _neumann_d2(grid: int):
    # M3'(0) = M3'(1) = 0 on nodes 0..grid (ghost reflection)
    m = grid + 1
    h = 1.0 / grid
    e = np.ones(m)
    D2 = sparse.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1]).tolil()
    D2[0, 1] = 2.0
    D2[m - 1, m - 2] = 2.0
    return (D2 / h**2).tocsc()


def fd_eigen_oracle(p: RodParams, grid: int = 512, n: int = 5, torsion: bool = False) -> list[FDEigenvalue]:
    """Lowest eigenvalues of the straight-rod linearisation (omega = gamma = T = 0).

    The bending pair of fourth-order equations is discretised with central
    differences; lambda^2 enters linearly, giving a generalised eigenproblem
    that is solved by shift-invert about zero.
    """
    if grid < 32:
        raise ValueError("grid must be at least 32")
    if p.omega != 0 or p.gamma != 0 or p.T != 0:
        raise ValueError("the oracle covers the straight rod with omega = gamma = T = 0 only")
    f, P, R, B = p.f, p.P, p.R, p.B
    D1, D2, D4 = _fd_operators(grid)
    m = grid - 1
    Id = sparse.identity(m, format="csc")
    A = sparse.bmat([[D4, -(f * B / R) * D1], [f * B * D1, D4]], format="csc")
    C = sparse.bmat([[f * P * D2 - (f / R) * Id, None], [None, f * P * D2 - f * Id]], format="csc")
    k = min(n + 4, 2 * m - 2)
    # shift-invert by hand: the largest nu of A^{-1} C give the smallest lambda^2 = 1/nu
    lu = splu(A)
    op = LinearOperator(A.shape, matvec=lambda v: lu.solve(C @ v), dtype=float)
    nu = eigs(op, k=k, which="LM", return_eigenvectors=False, tol=1e-13)
    nu = nu[np.abs(nu.imag) <= 1e-8 * np.abs(nu)]
    lam_sq = sorted((1.0 / np.real(nu)), key=abs)
    out = [FDEigenvalue(float(v)) for v in lam_sq]
    if torsion:
        D2n = _neumann_d2(grid)
        # M3'' = (2 f P / Gamma) lambda^2 M3
        tv = eigs(D2n, k=n + 1, sigma=-1e-3, which="LM", return_eigenvectors=False)
        tv = np.sort(np.real(tv))[::-1]
        out += [FDEigenvalue(float(v * p.Gamma / (2 * f * P))) for v in tv if v < -1e-6]
        out.sort(key=lambda e: abs(e.lam_sq))
    return out[:n]
