"""Curves of codimension-two points in the (B, omega) plane.

A secondary pitchfork is followed as an equilibrium together with a
normalised null vector of its linearisation at lambda = 0; B is released
and omega drives the continuation.  A Hopf point is followed as an
equilibrium with a complex eigenpair on the imaginary axis: lambda_r is
held at zero while lambda_i and B are released.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bvp import BvpSolution, ConvergenceError, SingularJacobianError, solve_newton
from .continuation import StepControl
from .eigen import _fix_sign, _null_vectors, _stack
from .linearized import PERTURBATION_SWAP_SIGNS, CompositeSystem, copy_norms, swap_ends_perturbation
from .model import STATE_DIM
from .stationary import _SWAP_SIGNS, swap_ends_linear

KINDS = ("hopf_lambda1", "hopf_lambda2", "secondary_pitchfork")


class SeedError(ValueError):
    """The seed does not describe the requested kind of point."""


@dataclass
class Codim2Curve:
    kind: str
    gamma: float
    points: list = field(default_factory=list)  # (B, omega, lambda_i)
    closed: bool = False
    exits: list = field(default_factory=list)  # (B, omega) where the curve left the box
    reasons: list = field(default_factory=list)  # why each half stopped
    solutions: list = field(default_factory=list)

    def column(self, j: int) -> np.ndarray:
        return np.array([p[j] for p in self.points], dtype=float)


def _mesh_is_symmetric(mesh) -> bool:
    nodes = mesh.nodes
    return bool(np.allclose(nodes + nodes[::-1], 1.0, atol=1e-14))


def _symmetrize(sol: BvpSolution) -> BvpSolution:
    """Even part of the equilibrium, odd part of the null vector."""
    out = sol.copy()
    y, K = sol.y, sol.K
    b, v = slice(0, STATE_DIM), slice(STATE_DIM, None)
    yb = y[::-1, b] * _SWAP_SIGNS
    yb[:, 2] += y[0, 2] + 1.0
    out.y[:, b] = 0.5 * (y[:, b] + yb)
    out.K[:, :, b] = 0.5 * (K[:, :, b] - K[::-1, ::-1, b] * _SWAP_SIGNS)
    out.y[:, v] = 0.5 * (y[:, v] - swap_ends_perturbation(y[:, v]))
    out.K[:, :, v] = 0.5 * (K[:, :, v] + K[::-1, ::-1, v] * PERTURBATION_SWAP_SIGNS)
    return out


def _project_pitchfork(dy, dp):
    out = np.empty_like(dy)
    out[:, :STATE_DIM] = 0.5 * (dy[:, :STATE_DIM] + swap_ends_linear(dy[:, :STATE_DIM]))
    out[:, STATE_DIM:] = 0.5 * (dy[:, STATE_DIM:] - swap_ends_perturbation(dy[:, STATE_DIM:]))
    return out, dp


def _pitchfork_start(base: BvpSolution, tol: float):
    """Seed solution and the Newton projection used along the curve.

    When the mesh allows it, the
    equilibrium is kept end-swap symmetric and the null vector
    antisymmetric: the extended system is singular in the full space at a
    symmetry-breaking pitchfork and regular only within that subspace.
    """
    (dy, dK), = _null_vectors(base, "imag", 0.0, 1)
    guess = _stack(base, [(dy, dK)], 0.0, 0.0)
    scale = _fix_sign(dy, dK, base) / math.sqrt(copy_norms(guess)[0])
    guess = _stack(base, [(scale * dy, scale * dK)], 0.0, 0.0)
    project = None
    if _mesh_is_symmetric(base.mesh):
        odd = swap_ends_perturbation(guess.y[:, STATE_DIM:])
        if np.linalg.norm(odd + guess.y[:, STATE_DIM:]) < np.linalg.norm(odd - guess.y[:, STATE_DIM:]):
            guess = _symmetrize(guess)
            project = _project_pitchfork
    sol = solve_newton(CompositeSystem("imag_only", normalize=True, symmetric_ends=True), guess, free=("B",), tol=tol, max_iter=20, project=project)
    return sol, project


def pitchfork_seed(base: BvpSolution, tol: float = 1e-9) -> BvpSolution:
    """Equilibrium plus unit null vector at lambda = 0, converged with B free.

    ``base`` is an equilibrium at (or near) a steady bifurcation, e.g. the
    solution attached to a BP event.
    """
    return _pitchfork_start(base, tol)[0]


def hopf_seed(sol: BvpSolution, tol: float = 1e-10) -> BvpSolution:
    """Pin lambda_r = 0 on a full composite solution near a Hopf point."""
    if sol.y.shape[1] != STATE_DIM + 24:
        raise SeedError("a Hopf seed must be a full complex eigenpair solution")
    if abs(sol.params["lam_i"]) < 1e-6:
        raise SeedError("lambda_i vanishes: not a Hopf point")
    guess = sol.copy()
    guess.params["lam_r"] = 0.0
    return solve_newton(CompositeSystem("full", normalize=True), guess, free=("lam_i", "B"), tol=tol, max_iter=20)


def _extrapolate(prev: BvpSolution, last: BvpSolution, r: float) -> BvpSolution:
    guess = last.copy()
    guess.y = last.y + r * (last.y - prev.y)
    guess.K = last.K + r * (last.K - prev.K)
    for k, v in last.params.items():
        guess.params[k] = v + r * (v - prev.params[k])
    return guess


def _plane(sol):
    return np.array([sol.params["B"], sol.params["omega"]])


def _solve_fixed(system, guess, fixed, extra_free, tol, max_iter, project=None):
    """Newton with the coordinate ``fixed`` held and the other one released."""
    other = "omega" if fixed == "B" else "B"
    return solve_newton(system, guess, free=tuple(extra_free) + (other,), tol=tol, max_iter=max_iter, project=project)


def _half_curve(system, start, extra_free, box, step, direction, max_points, tol, closure_tol, project=None):
    """One direction of a curve in the (B, omega) plane.

    Local parameterisation: the coordinate changing fastest along the last
    secant is prescribed, the other one is solved for together with the
    eigenvalue unknowns.  Extended systems at symmetry-breaking pitchforks
    are singular in pseudo-arclength form, which this avoids.
    """
    (b_lo, b_hi), (w_lo, w_hi) = box
    origin = _plane(start)
    h0 = min(step.initial, 1e-3)
    first = start.copy()
    first.params["omega"] += direction * h0
    try:
        nxt = _solve_fixed(system, first, "omega", extra_free, tol, 20, project)
    except (ConvergenceError, SingularJacobianError):
        first = start.copy()
        first.params["B"] += direction * h0
        nxt = _solve_fixed(system, first, "B", extra_free, tol, 20, project)
    pts = [start, nxt]
    h = step.initial
    far = False
    reason = "max points"
    while len(pts) < max_points:
        prev, last = pts[-2], pts[-1]
        sec = _plane(last) - _plane(prev)
        seclen = float(np.hypot(*sec))
        if seclen == 0.0:
            reason = "stalled"
            break
        tdir = sec / seclen
        fixed = "omega" if abs(tdir[1]) >= abs(tdir[0]) else "B"
        guess = _extrapolate(prev, last, h / seclen)
        target = _plane(last) + h * tdir
        guess.params["B"], guess.params["omega"] = float(target[0]), float(target[1])
        try:
            new = _solve_fixed(system, guess, fixed, extra_free, tol, 8, project)
        except (ConvergenceError, SingularJacobianError):
            new = None
        if new is not None:
            move = _plane(new) - _plane(last)
            dist = float(np.hypot(*move))
            if dist == 0.0 or float(move @ tdir) < 0.5 * dist or dist > 3.0 * h:
                new = None
        if new is None:
            h *= 0.5
            if h < step.min:
                reason = "step underflow"
                break
            continue
        pts.append(new)
        B, w = _plane(new)
        if not (b_lo <= B <= b_hi and w_lo <= w <= w_hi):
            reason = "left box"
            break
        d = float(np.hypot(*(_plane(new) - origin)))
        if d > 3.0 * closure_tol:
            far = True
        elif far and d < closure_tol:
            reason = "closed"
            break
        if len(new.history) - 1 <= 3:
            h = min(2.0 * h, step.max)
    return pts, reason


def trace_codim2(
    kind: str,
    seed: BvpSolution,
    box=((0.0, 4.0), (0.0, 8.0)),
    gamma: float | None = None,
    step: StepControl = StepControl(0.02, 1e-6, 0.1),
    max_points: int = 600,
    closure_tol: float | None = None,
    tol: float = 1e-9,
) -> Codim2Curve:
    """Follow a pitchfork or Hopf point through the (B, omega) plane.

    ``seed`` is a stationary solution at a steady bifurcation for
    ``secondary_pitchfork`` and a full eigenpair solution at a Hopf point for
    the two Hopf kinds (the kind only labels which eigenvalue is followed).
    ``gamma`` overrides the damping of the seed.  The curve is run both ways
    from the seed unless it closes on itself first; the last points of
    halves that leave ``box`` are reported in ``exits``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    seed = seed.copy()
    seed.direction = None
    if gamma is not None:
        seed.params["gamma"] = float(gamma)
    if kind == "secondary_pitchfork":
        if seed.y.shape[1] != STATE_DIM:
            raise SeedError("a pitchfork seed must be a stationary solution")
        start, project = _pitchfork_start(seed, tol)
        system = CompositeSystem("imag_only", normalize=True, symmetric_ends=True)
        extra = ()
    else:
        start = hopf_seed(seed, tol)
        system = CompositeSystem("full", normalize=True)
        extra = ("lam_i",)
        project = None
    closure_tol = closure_tol if closure_tol is not None else 1.5 * step.max
    origin = _plane(start)
    curve = Codim2Curve(kind, float(start.params["gamma"]))
    (b_lo, b_hi), (w_lo, w_hi) = box
    if not (b_lo <= origin[0] <= b_hi and w_lo <= origin[1] <= w_hi):
        raise SeedError("seed lies outside the parameter box")

    halves = []
    for direction in (1.0, -1.0):
        try:
            pts, reason = _half_curve(system, start, extra, box, step, direction, max_points, tol, closure_tol, project)
        except (ConvergenceError, SingularJacobianError) as exc:
            pts, reason = [start], f"could not leave the seed: {exc}"
        halves.append(pts)
        curve.reasons.append(reason)
        if reason == "closed":
            curve.closed = True
            break
        if reason == "left box":
            curve.exits.append(tuple(float(v) for v in _plane(pts[-1])))
    pts = halves[0] if curve.closed else list(reversed(halves[1])) + halves[0][1:]
    curve.solutions = pts
    curve.points = [(float(p.params["B"]), float(p.params["omega"]), abs(float(p.params["lam_i"]))) for p in pts]
    return curve
