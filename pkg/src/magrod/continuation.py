"""Pseudo-arclength continuation with branch-point, fold and user-event detection.

A branch is followed in the reduced collocation unknowns (node values plus
released parameters).  The corrector appends one linear arclength equation
to the collocation system; the factorised bordered matrix then yields the
next tangent, the determinant sign used to detect branch points and
log|det|, whose sharp local minima expose branch points of even
multiplicity (where the determinant keeps its sign).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from .bvp import (
    BvpSolution,
    BvpSystem,
    ConvergenceError,
    Discretization,
    LinearRow,
    SingularJacobianError,
    apply_step,
    solve_newton,
)

log = logging.getLogger(__name__)


class UnsupportedDegeneracyError(RuntimeError):
    """Raised when a branch point has a null space of dimension above two."""


class StepControl(NamedTuple):
    initial: float = 0.02
    min: float = 1e-7
    max: float = 0.1


@dataclass
class Event:
    kind: str  # "BP", "fold", or the name of a user test function
    param: str
    value: float
    index: int  # index of the first branch point past the event
    solution: BvpSolution
    data: dict = field(default_factory=dict)


@dataclass
class BranchPoint:
    params: dict
    monitors: dict
    solution: BvpSolution
    det_sign: float
    fold: float
    log_det: float
    tests: dict


@dataclass
class Branch:
    label: str
    param: str
    system: BvpSystem
    free: tuple
    points: list = field(default_factory=list)
    events: list = field(default_factory=list)
    reason: str = ""

    def __len__(self):
        return len(self.points)

    def values(self, name: str) -> np.ndarray:
        out = []
        for pt in self.points:
            out.append(pt.monitors[name] if name in pt.monitors else pt.params[name])
        return np.array(out, dtype=float)

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]


# ---------------------------------------------------------------------------
# reduced-vector helpers


def _weights(sol: BvpSolution) -> float:
    return 1.0 / (sol.mesh.intervals + 1)


def _inner(sol, a, b) -> float:
    ny = sol.y.size
    return _weights(sol) * float(np.dot(a[:ny], b[:ny])) + float(np.dot(a[ny:], b[ny:]))


def _normalize(sol, t):
    return t / math.sqrt(_inner(sol, t, t))


def _flat(system, sol, free_all) -> np.ndarray:
    return np.concatenate([sol.y.ravel(), [sol.params[name] for name in free_all]])


def _row(system, sol, free_all, t, anchor, ds) -> LinearRow:
    """Arclength equation  <t, X(sol) - anchor> = ds  as a LinearRow."""
    ny = sol.y.size
    w = _weights(sol)
    X = _flat(system, sol, free_all)
    value = _inner(sol, t, X - anchor) - ds
    return LinearRow(w * t[:ny].reshape(sol.y.shape), t[ny:].copy(), value)


def _unit_param_direction(sol, free_all, sign=1.0):
    t = np.zeros(sol.y.size + len(free_all))
    t[-1] = sign
    return t


def tangent_at(system, sol, free_all, guide):
    """Unit tangent at ``sol`` oriented so that ``<t, guide> > 0``.

    Returns ``(t, disc)`` where ``disc`` is the bordered discretisation with
    the guide row, factorised.
    """
    X = _flat(system, sol, free_all)
    disc = Discretization(system, sol, free_all, [_row(system, sol, free_all, guide, X, 0.0)])
    e = np.zeros(disc.matrix.shape[0])
    e[-1] = 1.0
    t = _normalize(sol, disc.solve(e))
    if _inner(sol, t, guide) < 0:
        t = -t
    return t, disc


def _predict(system, sol, disc, t, ds):
    return apply_step(system, sol, disc, t, ds, with_residual=False)


def _correct(system, pred, free_all, t, anchor, ds, tol, max_iter):
    return solve_newton(
        system,
        pred,
        free=free_all,
        tol=tol,
        max_iter=max_iter,
        extra=lambda s: [_row(system, s, free_all, t, anchor, ds)],
    )


def _sigma_min(disc) -> float:
    sig, _ = disc.smallest_singular(k=1, iters=6)
    return float(sig[0])


def _logdet(system, sol, free_all, t) -> tuple[float, float]:
    """log|det| and det sign of the Jacobian bordered by ``t``."""
    X = _flat(system, sol, free_all)
    disc = Discretization(system, sol, free_all, [_row(system, sol, free_all, t, X, 0.0)])
    return disc.log_abs_det(), disc.det_sign()


# ---------------------------------------------------------------------------
# test functions


def test_functions(system, sol, param, free=(), guide=None) -> dict:
    """Determinant sign of the bordered Jacobian and the fold indicator.

    Without a guide the border is the unit vector of ``param``, so the sign
    is that of the Jacobian with respect to the state.
    """
    free_all = list(free) + [param]
    guide = _unit_param_direction(sol, free_all) if guide is None else guide
    t, disc = tangent_at(system, sol, free_all, guide)
    return {"det_sign": disc.det_sign(), "fold_indicator": float(t[-1]), "sigma_min": _sigma_min(disc)}


def nullity(system, sol, free=(), k: int = 4, rel: float = 1e-5):
    """Dimension of the null space of the collocation Jacobian at ``sol``.

    ``free`` lists parameters released alongside the state (their columns
    are part of the Jacobian).  Counts singular values below ``rel`` times
    the largest of the ``k`` smallest ones; returns ``(count, sigmas)``.
    """
    disc = Discretization(system, sol, list(free), [])
    sig, _ = disc.smallest_singular(k=k, iters=20)
    scale = sig[-1] if sig[-1] > 0 else 1.0
    return int(np.sum(sig < rel * scale)), sig


# ---------------------------------------------------------------------------
# continuation


class _Point:
    __slots__ = ("sol", "t", "disc", "det", "fold", "logdet", "tests", "X")


def _make_point(system, sol, free_all, guide, tests, want_sigma):
    pt = _Point()
    pt.sol = sol
    pt.t, pt.disc = tangent_at(system, sol, free_all, guide)
    pt.det = pt.disc.det_sign()
    pt.fold = float(pt.t[-1])
    pt.logdet = pt.disc.log_abs_det() if want_sigma else float("nan")
    pt.tests = {name: float(fn(sol)) for name, fn in tests.items()}
    pt.X = _flat(system, sol, free_all)
    return pt


def _monitor_values(system, sol, monitors):
    out = {}
    for name, fn in monitors.items():
        out[name] = float(fn(sol))
    return out


def continue_branch(
    system: BvpSystem,
    start: BvpSolution,
    param: str,
    bounds,
    step: StepControl = StepControl(),
    free=(),
    direction: float = 1.0,
    monitors: dict | None = None,
    tests: dict | None = None,
    detect=("BP", "fold"),
    degenerate: bool = True,
    max_points: int = 400,
    tol: float = 1e-10,
    max_iter: int = 8,
    label: str = "",
    stop: Callable | None = None,
    event_tol: float = 1e-8,
) -> Branch:
    """Follow a solution curve of ``system`` while ``param`` stays in ``bounds``.

    ``free`` names parameters released in addition to ``param``.  The first
    tangent follows ``start.direction`` when set (branch switching), else
    the sign of ``direction`` along ``param``.  ``tests`` maps names to
    scalar functions of a solution; their sign changes become events.
    ``stop`` may return a reason string to end the run early.
    """
    lo, hi = sorted(float(b) for b in bounds)
    free_all = list(free) + [param]
    tests = dict(tests or {})
    monitors = dict(getattr(system, "monitors", lambda: {})() if monitors is None else monitors)
    branch = Branch(label, param, system, tuple(free))
    if hi - lo <= 0:
        branch.reason = "empty parameter range"
        return branch

    sol = solve_newton(system, start, free=list(free), tol=tol, max_iter=max(max_iter, 15))
    use_switch = start.direction is not None and start.direction.size == sol.y.size + len(free_all)
    guide = start.direction if use_switch else _unit_param_direction(sol, free_all, np.sign(direction) or 1.0)
    # the switching direction orients this run only; stored points must not carry it
    sol.direction = None
    pt = _make_point(system, sol, free_all, guide, tests, degenerate and "BP" in detect)
    _append(branch, system, pt, monitors)
    if not lo <= sol.params[param] <= hi:
        branch.reason = "start outside range"
        return branch

    ds = step.initial
    history = [pt]
    while len(branch.points) < max_points:
        prev = history[-1]
        try:
            pred = _predict(system, prev.sol, prev.disc, prev.t, ds)
            new = _correct(system, pred, free_all, prev.t, prev.X, ds, tol, max_iter)
            iters = len(new.history) - 1
        except (ConvergenceError, SingularJacobianError, FloatingPointError) as exc:
            ds *= 0.5
            log.debug("corrector failed (%s); step -> %g", exc, ds)
            if ds < step.min:
                branch.reason = "step underflow"
                return branch
            continue
        cur = _make_point(system, new, free_all, prev.t, tests, degenerate and "BP" in detect)
        if _inner(new, cur.t, prev.t) < 0.3 and ds > step.min * 4:
            # tangent swung too far: likely jumped; retry with a smaller step
            ds *= 0.5
            continue
        value = new.params[param]
        if not lo <= value <= hi:
            end = _land_on_bound(system, prev, cur, free_all, param, lo if value < lo else hi, tol, max_iter, tests)
            if end is not None:
                _scan_events(branch, system, history[-1], end, free_all, param, detect, tests, tol, max_iter, event_tol)
                history.append(end)
                _append(branch, system, end, monitors)
                if degenerate and "BP" in detect and len(history) >= 3:
                    _check_det_min(branch, system, history, free_all, param, tol, max_iter)
            branch.reason = "reached bound"
            return branch
        _scan_events(branch, system, prev, cur, free_all, param, detect, tests, tol, max_iter, event_tol)
        history.append(cur)
        del history[:-3]  # only the last three are read; each holds a factorisation
        _append(branch, system, cur, monitors)
        if degenerate and "BP" in detect and len(history) >= 3:
            _check_det_min(branch, system, history, free_all, param, tol, max_iter)
        if stop is not None:
            why = stop(branch)
            if why:
                branch.reason = str(why)
                return branch
        if iters <= 3:
            ds = min(ds * 2.0, step.max)
    branch.reason = "max points"
    return branch


def _append(branch, system, pt, monitors):
    sol = pt.sol
    branch.points.append(
        BranchPoint(
            params=dict(sol.params),
            monitors=_monitor_values(system, sol, monitors),
            solution=sol,
            det_sign=pt.det,
            fold=pt.fold,
            log_det=pt.logdet,
            tests=dict(pt.tests),
        )
    )


def _land_on_bound(system, prev, cur, free_all, param, bound, tol, max_iter, tests):
    """Solve at the exact bound value, starting from an interpolated guess."""
    p0, p1 = prev.sol.params[param], cur.sol.params[param]
    if p1 == p0:
        return None
    frac = (bound - p0) / (p1 - p0)
    ds = frac * _inner(prev.sol, prev.t, cur.X - prev.X)
    guess = _predict(system, prev.sol, prev.disc, prev.t, ds)
    guess.params[param] = bound
    try:
        sol = solve_newton(system, guess, free=free_all[:-1], tol=tol, max_iter=max_iter)
    except (ConvergenceError, SingularJacobianError):
        try:
            sol = _correct(system, guess, free_all, prev.t, prev.X, ds, tol, max_iter)
        except (ConvergenceError, SingularJacobianError):
            return None
    return _make_point(system, sol, free_all, prev.t, tests, not math.isnan(cur.logdet))


def _solve_along(system, base, free_all, tau, tol, max_iter):
    sol = _correct(system, _predict(system, base.sol, base.disc, base.t, tau), free_all, base.t, base.X, tau, tol, max_iter)
    return sol


def _bisect(system, base, cur, free_all, param, fn, f_left, tol, max_iter, event_tol):
    """Bisection in arclength between ``base`` and ``cur`` on a sign test."""
    a, b = 0.0, _inner(base.sol, base.t, cur.X - base.X)
    sol_a, sol_b = base.sol, cur.sol
    for _ in range(60):
        if abs(sol_b.params[param] - sol_a.params[param]) < event_tol and abs(b - a) < 1e3 * event_tol:
            break
        m = 0.5 * (a + b)
        try:
            sol = _solve_along(system, base, free_all, m, tol, max_iter)
        except (ConvergenceError, SingularJacobianError):
            # Newton slows down next to a branch point; allow more iterations,
            # then settle for the bracket found so far
            try:
                sol = _solve_along(system, base, free_all, m, tol, 4 * max_iter)
            except (ConvergenceError, SingularJacobianError):
                if a == 0.0 and sol_b is cur.sol:
                    raise
                break
        if np.sign(fn(sol)) == np.sign(f_left):
            a, sol_a = m, sol
        else:
            b, sol_b = m, sol
    return sol_b if abs(fn(sol_b)) <= abs(fn(sol_a)) else sol_a, (a, b)


def _bordered_det(system, sol, free_all, t):
    X = _flat(system, sol, free_all)
    return Discretization(system, sol, free_all, [_row(system, sol, free_all, t, X, 0.0)]).det_sign()


def _scan_events(branch, system, prev, cur, free_all, param, detect, tests, tol, max_iter, event_tol):
    index = len(branch.points)
    if "BP" in detect:
        left = _bordered_det(system, prev.sol, free_all, prev.t)
        if left != cur.det:
            try:
                sol, _ = _bisect(
                    system, prev, cur, free_all, param, lambda s: _bordered_det(system, s, free_all, prev.t), left, tol, max_iter, event_tol
                )
                _record_bp(branch, system, sol, free_all, param, index, {"left": left, "right": cur.det, "multiplicity": "odd"})
            except (ConvergenceError, SingularJacobianError) as exc:
                log.warning("branch point refinement failed: %s", exc)
    if "fold" in detect and np.sign(prev.fold) != np.sign(cur.fold):

        def fold_of(s):
            t, _ = tangent_at(system, s, free_all, prev.t)
            return t[-1]

        try:
            sol, _ = _bisect(system, prev, cur, free_all, param, fold_of, prev.fold, tol, max_iter, event_tol)
            branch.events.append(
                Event("fold", param, float(sol.params[param]), index, sol, {"left": prev.fold, "right": cur.fold})
            )
        except (ConvergenceError, SingularJacobianError) as exc:
            log.warning("fold refinement failed: %s", exc)
    for name, fn in tests.items():
        a, b = prev.tests[name], cur.tests[name]
        if np.sign(a) != np.sign(b) and a != 0:
            try:
                sol, _ = _bisect(system, prev, cur, free_all, param, fn, a, tol, max_iter, event_tol)
                branch.events.append(Event(name, param, float(sol.params[param]), index, sol, {"left": a, "right": b}))
            except (ConvergenceError, SingularJacobianError) as exc:
                log.warning("event %s refinement failed: %s", name, exc)


def _record_bp(branch, system, sol, free_all, param, index, data):
    dim, sig = nullity(system, sol, free_all[:-1])
    data = dict(data, nullity=dim, sigma=sig.tolist())
    branch.events.append(Event("BP", param, float(sol.params[param]), index, sol, data))


def _check_det_min(branch, system, history, free_all, param, tol, max_iter, event_tol=1e-8):
    """Branch points hidden from the sign test.

    A local minimum of log|det| over three consecutive points (without a
    sign change) is refined by a bounded scalar minimisation in arclength.
    If some trial point there has the opposite determinant sign, two simple
    branch points sat inside one step and each is bisected separately;
    otherwise the minimiser is accepted as an even-multiplicity branch
    point when the Jacobian there has a numerical null space.
    """
    a, b, c = history[-3], history[-2], history[-1]
    if not (b.logdet < a.logdet and b.logdet < c.logdet):
        return
    if a.det != b.det or b.det != c.det:
        return  # handled by the sign test
    span = _inner(a.sol, a.t, c.X - a.X)
    cache = {}

    def g(tau):
        try:
            sol = _solve_along(system, a, free_all, tau, tol, max_iter)
        except (ConvergenceError, SingularJacobianError):
            return float("inf")
        val, sign = _logdet(system, sol, free_all, a.t)
        cache[tau] = (val, sol, sign)
        return val

    res = minimize_scalar(g, bounds=(0.0, span), method="bounded", options={"xatol": 1e-12 * max(1.0, span)})
    if res.x not in cache:
        g(res.x)
    flipped = sorted(tau for tau, (_, _, sign) in cache.items() if sign != a.det)
    if flipped:
        inside = flipped[len(flipped) // 2]
        for lo, hi in ((0.0, inside), (inside, span)):
            sol = _bisect_tau(system, a, free_all, param, lo, hi, tol, max_iter, event_tol)
            if sol is not None:
                _record_bp(branch, system, sol, free_all, param, len(branch.points) - 1, {"multiplicity": "odd", "pair": True})
        branch.events.sort(key=lambda e: e.index)
        return
    _, sol, _ = cache[res.x]
    dim, sig = nullity(system, sol, free_all[:-1])
    if dim:
        data = {"left": a.det, "right": c.det, "multiplicity": "even", "nullity": dim, "sigma": sig.tolist()}
        branch.events.append(Event("BP", param, float(sol.params[param]), len(branch.points) - 1, sol, data))


def _bisect_tau(system, a, free_all, param, lo, hi, tol, max_iter, event_tol):
    """Locate a determinant sign change between arclengths ``lo`` and ``hi`` from ``a``."""

    def side(tau):
        sol = _solve_along(system, a, free_all, tau, tol, max_iter)
        return sol, _logdet(system, sol, free_all, a.t)[1]

    try:
        sol_lo, s_lo = (a.sol, a.det) if lo == 0.0 else side(lo)
        sol_hi, s_hi = side(hi)
        if s_lo == s_hi:
            return None
        for _ in range(60):
            if abs(sol_hi.params[param] - sol_lo.params[param]) < event_tol:
                break
            mid = 0.5 * (lo + hi)
            sol, s = side(mid)
            if s == s_lo:
                lo, sol_lo = mid, sol
            else:
                hi, sol_hi = mid, sol
    except (ConvergenceError, SingularJacobianError) as exc:
        log.warning("branch point refinement failed: %s", exc)
        return None
    return sol_hi


# ---------------------------------------------------------------------------
# branch switching


def switch_branch(branch: Branch, event: Event, direction: float = 1.0, which_null: int = 0, step: float | None = None, tol: float = 1e-10, max_iter: int = 12) -> BvpSolution:
    """Step off a branch point onto a bifurcating branch.

    Simple branch points use the null vector of the bordered Jacobian that
    is orthogonal to the incoming tangent.  At a double branch point the
    two null vectors are split by the system's ``symmetry`` (if it has one)
    into an invariant and an anti-invariant direction; ``which_null``
    selects between them.  Returns a converged solution whose
    ``direction`` attribute orients the subsequent continuation.
    """
    if event.kind != "BP":
        raise ValueError("switch_branch needs a BP event")
    system = branch.system
    free_all = list(branch.free) + [branch.param]
    sol = event.solution
    idx = max(0, min(event.index, len(branch.points) - 1)) - 1
    guide_sol = branch.points[max(idx, 0)].solution
    guide = _flat(system, sol, free_all) - _flat(system, guide_sol, free_all)
    if not np.any(guide):
        guide = _unit_param_direction(sol, free_all)
    guide = _normalize(sol, guide)
    t_old, _ = tangent_at(system, sol, free_all, guide)
    X0 = _flat(system, sol, free_all)
    disc = Discretization(system, sol, free_all, [_row(system, sol, free_all, t_old, X0, 0.0)])
    sig, V = disc.smallest_singular(k=4, iters=20)
    dim = int(np.sum(sig < 1e-5 * sig[-1]))
    if dim > 2:
        raise UnsupportedDegeneracyError(f"null space of dimension {dim} at {branch.param}={event.value:.6g}")
    dim = max(dim, 1)
    if dim == 1:
        if which_null != 0:
            raise ValueError("simple branch point has a single null direction")
        phi = V[:, 0]
    else:
        phi = _split_by_symmetry(system, sol, V[:, :2], which_null)
    phi = _normalize(sol, phi)
    # orientation convention: the largest state component is positive
    ny = sol.y.size
    if phi[np.argmax(np.abs(phi[:ny]))] < 0:
        phi = -phi
    phi = phi * (1.0 if direction >= 0 else -1.0)
    ds = step if step is not None else 0.02
    pred = _predict(system, sol, disc, phi, ds)
    new = _correct(system, pred, free_all, phi, X0, ds, tol, max_iter)
    new.direction = phi
    return new


def _split_by_symmetry(system, sol, V, which):
    sym = getattr(system, "symmetry", None)
    if sym is None:
        return V[:, which]
    ny = sol.y.size
    shape = sol.y.shape
    images = []
    for j in range(V.shape[1]):
        v = V[:, j]
        Sv = np.concatenate([sym(v[:ny].reshape(shape)).ravel(), v[ny:]])
        images.append(Sv)
    S = np.stack(images, axis=1)
    part = V + S if which == 0 else V - S
    u, s, _ = np.linalg.svd(part, full_matrices=False)
    if s[0] < 1e-8:
        raise UnsupportedDegeneracyError("null space has no component of the requested symmetry type")
    return u[:, 0]
