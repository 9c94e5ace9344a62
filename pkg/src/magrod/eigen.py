"""Stability eigenvalues of equilibria: initialisation and tracking.

Eigenvalues are located on an equilibrium whose perturbation equations
involve lambda only through lambda^2 (no whirl, no damping), so that a
purely imaginary or purely real lambda gives a real problem.  Singular
points of that problem along a scan of |lambda| are the eigenvalues; each
null vector is then normalised and lifted to the complex form in which
lambda_r and lambda_i are both unknowns and can be followed in any
parameter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .bvp import BvpSolution, BvpSystem, Discretization, SingularJacobianError, fd_jac, solve_newton
from .continuation import Branch, Event, StepControl, continue_branch
from .linearized import (
    ALPHA,
    COMPOSITE_PARAMS,
    LIN_DIM,
    CompositeSystem,
    copy_norms,
    lin_matrices,
    linearized_bc,
    linearized_rhs,
)
from .model import STATE_DIM
from .stationary import PARAM_NAMES, _FastParams

log = logging.getLogger(__name__)

HOPF_THRESHOLD = 1e-6
# sign flips of lambda_r below this size are rounding noise (undamped, gyroscopic case)
LAMBDA_R_FLOOR = 1e-9


@dataclass
class EigenPair:
    lambda_r: float
    lambda_i: float
    solution: BvpSolution  # full composite solution (base, real copy, imaginary copy)
    index: int = 0
    diagnostics: dict = field(default_factory=dict)


@dataclass
class EigenPath:
    mode_index: int
    param: str
    samples: list = field(default_factory=list)  # (param value, lambda_r, lambda_i)
    events: list = field(default_factory=list)
    branch: Branch | None = None
    warnings: list = field(default_factory=list)

    def column(self, j: int) -> np.ndarray:
        return np.array([s[j] for s in self.samples], dtype=float)


class _FrozenPerturbation(BvpSystem):
    """One real perturbation copy on a fixed base equilibrium."""

    n = LIN_DIM
    par_names = ("lam_r", "lam_i")
    nbc = LIN_DIM
    nint = 0

    def __init__(self, base: BvpSolution):
        self.base = base
        self.rod = _FastParams([base.params[k] for k in PARAM_NAMES])
        self._cache = {}

    def _mats(self, s):
        key = np.asarray(s).tobytes()
        if key not in self._cache:
            st = self.base(s)
            self._cache[key] = (st, lin_matrices(st, self.rod))
        return self._cache[key]

    def rhs(self, s, U, p):
        st, mats = self._mats(s)
        return np.real(linearized_rhs(s, U, st, complex(p[0], p[1]), self.rod, mats))

    def jac(self, s, U, p, free):
        st, mats = self._mats(s)
        m = len(U)
        lam = complex(p[0], p[1])
        fu = np.empty((m, LIN_DIM, LIN_DIM))
        eye = np.eye(LIN_DIM)
        for j in range(LIN_DIM):
            fu[:, :, j] = np.real(linearized_rhs(s, np.broadcast_to(eye[j], (m, LIN_DIM)), st, lam, self.rod, mats))
        if free:
            _, fp = fd_jac(self.rhs, s, U, p, free, cols=())
        else:
            fp = np.zeros((m, LIN_DIM, 0))
        return fu, fp

    def bc(self, ua, ub, p):
        return linearized_bc(ua, ub)


def _check_decoupled(base: BvpSolution):
    if base.params.get("omega", 0.0) != 0.0 or base.params.get("gamma", 0.0) != 0.0:
        raise ValueError("eigenvalue initialisation needs omega = gamma = 0 (lambda must enter only through lambda^2)")


def _zero_copy(mesh, n=LIN_DIM):
    return BvpSolution(mesh, np.zeros((mesh.intervals + 1, n)), np.zeros((mesh.intervals, mesh.degree, n)), {"lam_r": 0.0, "lam_i": 0.0})


def _lam_params(kind, mu):
    return (0.0, mu) if kind == "imag" else (mu, 0.0)


def _frozen_disc(fsys, zero, kind, mu):
    zero.params["lam_r"], zero.params["lam_i"] = _lam_params(kind, mu)
    return Discretization(fsys, zero, (), [])


def scan_singular(base: BvpSolution, kind: str = "imag", mu_max: float = 5.0, step: float | None = None, mu_min: float = 1e-3):
    """Values mu in (mu_min, mu_max] where the perturbation problem is singular.

    ``kind="imag"`` uses lambda = i mu, ``kind="real"`` lambda = mu.  Simple
    roots show up as determinant sign changes; close or repeated roots as
    sharp minima of log|det| that pass a null-space check.  Returns a list
    of ``(mu, multiplicity)``.
    """
    _check_decoupled(base)
    if kind not in ("imag", "real"):
        raise ValueError("kind must be 'imag' or 'real'")
    fsys = _FrozenPerturbation(base)
    zero = _zero_copy(base.mesh)
    step = step or mu_max / 500.0
    grid = np.arange(mu_min, mu_max + 0.5 * step, step)
    sgn = np.empty(len(grid))
    ld = np.empty(len(grid))
    for i, mu in enumerate(grid):
        d = _frozen_disc(fsys, zero, kind, mu)
        sgn[i], ld[i] = d.det_sign(), d.log_abs_det()

    def signed(mu, ref):
        d = _frozen_disc(fsys, zero, kind, mu)
        try:
            return d.det_sign() * math.exp(max(min(d.log_abs_det() - ref, 600.0), -600.0))
        except SingularJacobianError:  # landed on the root to working precision
            return 0.0

    def log_det(mu):
        try:
            return _frozen_disc(fsys, zero, kind, mu).log_abs_det()
        except SingularJacobianError:
            return -np.inf

    roots = []
    for i in range(len(grid) - 1):
        if sgn[i] != sgn[i + 1]:
            ref = 0.5 * (ld[i] + ld[i + 1])
            roots.append((brentq(signed, grid[i], grid[i + 1], args=(ref,), xtol=1e-13, rtol=4 * np.finfo(float).eps), 1))
    for i in range(1, len(grid) - 1):
        if ld[i] < ld[i - 1] and ld[i] < ld[i + 1] and sgn[i - 1] == sgn[i] == sgn[i + 1]:
            res = minimize_scalar(
                log_det,
                bounds=(grid[i - 1], grid[i + 1]),
                method="bounded",
                options={"xatol": 1e-12},
            )
            sig, _ = _frozen_disc(fsys, zero, kind, res.x).smallest_singular(k=3, iters=15)
            mult = int(np.sum(sig < 1e-5 * sig[-1]))
            if mult:
                roots.append((float(res.x), max(mult, 2)))
    roots.sort()
    return roots


def _null_vectors(base, kind, mu, count):
    fsys = _FrozenPerturbation(base)
    zero = _zero_copy(base.mesh)
    disc = _frozen_disc(fsys, zero, kind, mu)
    _, V = disc.smallest_singular(k=max(count, 2) + 1, iters=20)
    out = []
    for j in range(count):
        dy, dp = disc.split(V[:, j])
        dK = disc.stage_update(dy, dp, with_residual=False)
        out.append((dy, dK))
    return out


def _fix_sign(y, K, mesh_sol):
    """Make the first clearly nonzero alpha component at the stages positive."""
    tmp = BvpSolution(mesh_sol.mesh, y, K, {})
    _, Y, _ = tmp.quadrature()
    al = Y[:, ALPHA].ravel()
    big = np.flatnonzero(np.abs(al) > 1e-6 * np.max(np.abs(al)))
    return -1.0 if big.size and al[big[0]] < 0 else 1.0


def _stack(base, parts, lam_r, lam_i):
    y = np.concatenate([base.y] + [p[0] for p in parts], axis=1)
    K = np.concatenate([base.K] + [p[1] for p in parts], axis=2)
    params = {k: float(base.params[k]) for k in PARAM_NAMES}
    params.update(lam_r=float(lam_r), lam_i=float(lam_i))
    return BvpSolution(base.mesh, y, K, params)


def eigen_init(base: BvpSolution, n_modes: int = 5, kind: str = "imag", mu_max: float | None = None, step: float | None = None, tol: float = 1e-10):
    """Three-step initialisation of the lowest ``n_modes`` eigenpairs.

    1. scan the singular points of the real perturbation problem;
    2. normalise each null vector together with the equilibrium and the
       free eigenvalue (one copy, norm 1);
    3. duplicate the copy into the real and imaginary parts of a complex
       perturbation, fix both norms to 1 and release lambda_r and lambda_i.

    ``kind`` is ``"imag"``, ``"real"`` or ``"both"``.  Returns a list of
    :class:`EigenPair` sorted by |lambda|; fewer than ``n_modes`` entries
    are returned (with a warning) if the scan range is too short.
    """
    _check_decoupled(base)
    if kind == "both":
        pairs = eigen_init(base, n_modes, "real", mu_max, step, tol) + eigen_init(base, n_modes, "imag", mu_max, step, tol)
        pairs.sort(key=lambda e: math.hypot(e.lambda_r, e.lambda_i))
        for i, e in enumerate(pairs[:n_modes]):
            e.index = i
        return pairs[:n_modes]
    if mu_max is None:
        mu_max = _default_scan_limit(base, n_modes)
    roots = scan_singular(base, kind, mu_max, step)
    pairs = []
    for mu, mult in roots:
        for dy, dK in _null_vectors(base, kind, mu, mult):
            try:
                pairs.append(_grow(base, dy, dK, kind, mu, tol))
            except Exception as exc:  # a repeated root cannot be normalised by one condition
                log.warning("could not normalise eigenfunction at mu=%.8g (multiplicity %d): %s", mu, mult, exc)
        if len(pairs) >= n_modes:
            break
    if len(pairs) < n_modes:
        log.warning("eigen_init: found %d of %d modes below |lambda| = %g", len(pairs), n_modes, mu_max)
    pairs = pairs[:n_modes]
    for i, e in enumerate(pairs):
        e.index = i
    return pairs


def _default_scan_limit(base, n_modes):
    from .oracles import unperturbed_spectrum
    from .model import RodParams

    p = RodParams(**{k: base.params[k] for k in ("P", "R", "Gamma", "f")})
    modes = unperturbed_spectrum(p, n_modes)
    return 1.2 * modes[-1].value


def _grow(base, dy, dK, kind, mu, tol):
    lam_r, lam_i = _lam_params(kind, mu)
    guess = _stack(base, [(dy, dK)], lam_r, lam_i)
    scale = 1.0 / math.sqrt(copy_norms(guess)[0])
    scale *= _fix_sign(dy, dK, base)
    guess = _stack(base, [(scale * dy, scale * dK)], lam_r, lam_i)
    free_name = "lam_i" if kind == "imag" else "lam_r"
    one = solve_newton(CompositeSystem("imag_only", normalize=True), guess, free=(free_name,), tol=tol)
    step2_shift = abs(one.params[free_name] - mu)
    v = (one.y[:, STATE_DIM:], one.K[:, :, STATE_DIM:])
    base_new = (one.y[:, :STATE_DIM], one.K[:, :, :STATE_DIM])
    full_guess = BvpSolution(
        base.mesh,
        np.concatenate([base_new[0], v[0], v[0]], axis=1),
        np.concatenate([base_new[1], v[1], v[1]], axis=2),
        dict(one.params),
    )
    full = solve_newton(CompositeSystem("full", normalize=True), full_guess, free=("lam_r", "lam_i"), tol=tol)
    step3_shift = math.hypot(full.params["lam_r"] - one.params["lam_r"], full.params["lam_i"] - one.params["lam_i"])
    return EigenPair(
        float(full.params["lam_r"]),
        float(full.params["lam_i"]),
        full,
        diagnostics={"scan_value": mu, "step2_shift": step2_shift, "step3_shift": step3_shift},
    )


# ---------------------------------------------------------------------------
# tracking


def _eigenfunction(sol):
    return sol.y[:, STATE_DIM:].ravel()


def track_eigenvalues(
    pairs,
    param: str,
    bounds,
    step: StepControl = StepControl(0.02, 1e-6, 0.1),
    direction: float = 1.0,
    max_points: int = 400,
    tol: float = 1e-10,
    stop=None,
):
    """Follow each eigenpair as ``param`` varies, with lambda_r and lambda_i free.

    Sign changes of lambda_r are reported as ``Hopf`` events when
    |lambda_i| exceeds :data:`HOPF_THRESHOLD` and as ``zero-eigenvalue``
    events otherwise; flips between values smaller than
    :data:`LAMBDA_R_FLOOR` are ignored.  Consecutive eigenfunctions whose normalised overlap
    drops below 0.5 produce a warning on the path (possible mode jump).
    """
    system = CompositeSystem("full", normalize=True)
    paths = []
    for pair in pairs:
        path = EigenPath(pair.index, param)
        br = continue_branch(
            system,
            pair.solution,
            param,
            bounds,
            step=step,
            free=("lam_r", "lam_i"),
            direction=direction,
            monitors={},
            tests={"lambda_r": lambda s: s.params["lam_r"]},
            detect=(),
            degenerate=False,
            max_points=max_points,
            tol=tol,
            label=f"lambda{pair.index + 1}",
            stop=stop,
        )
        path.branch = br
        prev = None
        for pt in br.points:
            path.samples.append((float(pt.params[param]), float(pt.params["lam_r"]), abs(float(pt.params["lam_i"]))))
            cur = _eigenfunction(pt.solution)
            if prev is not None:
                overlap = abs(np.dot(prev, cur)) / (np.linalg.norm(prev) * np.linalg.norm(cur))
                if overlap < 0.5:
                    path.warnings.append(f"eigenfunction overlap {overlap:.2f} at {param}={pt.params[param]:.6g}")
            prev = cur
        for ev in br.events:
            if max(abs(ev.data["left"]), abs(ev.data["right"])) < LAMBDA_R_FLOOR:
                continue
            lam_i = abs(ev.solution.params["lam_i"])
            kind = "Hopf" if lam_i > HOPF_THRESHOLD else "zero-eigenvalue"
            path.events.append(Event(kind, param, ev.value, ev.index, ev.solution, dict(ev.data, lambda_i=lam_i)))
        if path.warnings:
            log.warning("path %d: %s", pair.index, "; ".join(path.warnings))
        paths.append(path)
    return paths
