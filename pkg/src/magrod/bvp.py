"""Gauss-Legendre collocation for first-order boundary-value problems.

The discretisation is the implicit Runge-Kutta form of piecewise polynomial
collocation: on every mesh interval the unknowns are the node value ``y_j``
and the ``k`` stage slopes ``K_ji``.  Stage slopes are condensed out interval
by interval, so the global Newton system only involves node values and the
free scalar parameters (a block-bidiagonal matrix with borders).

Problems are described by subclassing :class:`BvpSystem`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre
from scipy import sparse
from scipy.sparse.linalg import splu


class WellPosednessError(ValueError):
    """Equation count does not match the number of unknowns."""


class SingularJacobianError(RuntimeError):
    """The Newton matrix could not be factorised."""


class ConvergenceError(RuntimeError):
    def __init__(self, msg, solution=None, history=()):
        super().__init__(msg)
        self.solution = solution
        self.history = list(history)


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray
    degree: int

    @property
    def intervals(self) -> int:
        return len(self.nodes) - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def tableau(self):
        return _gauss_tableau(self.degree)

    def collocation_points(self) -> np.ndarray:
        c = self.tableau[0]
        return (self.nodes[:-1, None] + self.h[:, None] * c[None, :]).ravel()


def make_mesh(intervals: int = 40, degree: int = 4) -> Mesh:
    if int(intervals) != intervals or intervals < 4:
        raise ValueError(f"need at least 4 intervals, got {intervals}")
    if int(degree) != degree or not 2 <= degree <= 7:
        raise ValueError(f"degree must lie in [2, 7], got {degree}")
    return Mesh(np.linspace(0.0, 1.0, int(intervals) + 1), int(degree))


_TABLEAUS: dict[int, tuple] = {}


def _gauss_tableau(k: int):
    """Gauss points ``c``, weights ``b`` and integration matrix ``A`` on [0, 1]."""
    if k not in _TABLEAUS:
        x, _ = legendre.leggauss(k)
        c = 0.5 * (x + 1.0)
        A = np.empty((k, k))
        b = np.empty(k)
        for l in range(k):
            others = np.delete(c, l)
            poly = np.poly1d(others, r=True) / np.prod(c[l] - others)
            integral = np.polyint(poly)
            b[l] = integral(1.0) - integral(0.0)
            A[:, l] = integral(c) - integral(0.0)
        _TABLEAUS[k] = (c, b, A)
    return _TABLEAUS[k]


# ---------------------------------------------------------------------------
# problem description


class BvpSystem:
    """Base class for a first-order BVP ``u' = f(s, u, p)`` on [0, 1].

    Subclasses set ``n`` (state dimension), ``par_names`` and ``nbc`` and
    implement :meth:`rhs` and :meth:`bc`.  Integral constraints are returned
    by :meth:`integrands` as an ``(m, nint)`` array whose integral over [0, 1]
    must vanish.  Jacobians default to central differences.
    """

    n: int = 0
    par_names: tuple[str, ...] = ()
    nbc: int = 0
    nint: int = 0

    def rhs(self, s, U, p):
        raise NotImplementedError

    def bc(self, ua, ub, p):
        raise NotImplementedError

    def integrands(self, s, U, p):
        return np.zeros((len(s), 0))

    # -- derivatives -------------------------------------------------------

    def jac(self, s, U, p, free):
        """Return ``(df/du, df/dp_free)`` with shapes (m, n, n), (m, n, nf)."""
        return fd_jac(self.rhs, s, U, p, free)

    def bc_jac(self, ua, ub, p, free):
        def g(v, q):
            return self.bc(v[: self.n], v[self.n :], q)

        v = np.concatenate([ua, ub])
        gu, gp = fd_jac_single(g, v, p, free)
        return gu[:, : self.n], gu[:, self.n :], gp

    def integrand_jac(self, s, U, p, free):
        """Return (dg/du (m, nint, n), dg/dp (m, nint, nf))."""
        return fd_jac(self.integrands, s, U, p, free)

    def pindex(self, name: str) -> int:
        return self.par_names.index(name)


def _steps(x):
    return 1e-7 * (1.0 + np.abs(x))


def fd_jac(fun, s, U, p, free, cols=None):
    """Central-difference Jacobian of a pointwise vector field.

    All state perturbations are stacked into one call of ``fun`` (it acts
    row by row, so the stations of the shifted copies are independent).
    """
    U = np.asarray(U, dtype=float)
    m, n = U.shape
    cols = list(range(n) if cols is None else cols)
    s = np.asarray(s)
    nc = len(cols)
    fu = None
    if nc:
        idx = np.asarray(cols)
        H = _steps(U[:, idx])  # (m, nc)
        stack = np.broadcast_to(U, (2 * nc, m, n)).copy()
        rows = np.arange(m)
        for k, b in enumerate(cols):
            stack[k, rows, b] += H[:, k]
            stack[nc + k, rows, b] -= H[:, k]
        out = fun(np.tile(s, 2 * nc), stack.reshape(2 * nc * m, n), p).reshape(2 * nc, m, -1)
        nout = out.shape[2]
        fu = np.zeros((m, nout, n))
        fu[:, :, idx] = np.transpose((out[:nc] - out[nc:]) / (2.0 * H.T[:, :, None]), (1, 2, 0))
    fp_cols = []
    for idx in free:
        hc = _steps(p[idx])
        pp = p.copy()
        pp[idx] += hc
        pm = p.copy()
        pm[idx] -= hc
        fp_cols.append((fun(s, U, pp) - fun(s, U, pm)) / (2.0 * hc))
    if fu is None:
        nout = fp_cols[0].shape[1] if fp_cols else np.asarray(fun(s, U, p)).shape[1]
        fu = np.zeros((m, nout, n))
    fp = np.stack(fp_cols, axis=-1) if fp_cols else np.zeros((m, fu.shape[1], 0))
    return fu, fp


def fd_jac_single(fun, v, p, free):
    v = np.asarray(v, dtype=float)
    g0 = np.asarray(fun(v, p))
    gu = np.zeros((len(g0), len(v)))
    for b in range(len(v)):
        hb = _steps(v[b])
        vp = v.copy()
        vp[b] += hb
        vm = v.copy()
        vm[b] -= hb
        gu[:, b] = (fun(vp, p) - fun(vm, p)) / (2.0 * hb)
    gp = np.zeros((len(g0), len(free)))
    for c, idx in enumerate(free):
        hc = _steps(p[idx])
        pp = p.copy()
        pp[idx] += hc
        pm = p.copy()
        pm[idx] -= hc
        gp[:, c] = (fun(v, pp) - fun(v, pm)) / (2.0 * hc)
    return gu, gp


# ---------------------------------------------------------------------------
# solutions


@dataclass
class BvpSolution:
    mesh: Mesh
    y: np.ndarray  # (N+1, n) node values
    K: np.ndarray  # (N, k, n) stage slopes
    params: dict
    monitors: dict = field(default_factory=dict)
    converged: bool = True
    history: list = field(default_factory=list)
    direction: np.ndarray | None = None  # preferred initial tangent (reduced unknowns)

    @property
    def n(self) -> int:
        return self.y.shape[1]

    def copy(self) -> "BvpSolution":
        return BvpSolution(
            self.mesh,
            self.y.copy(),
            self.K.copy(),
            dict(self.params),
            dict(self.monitors),
            self.converged,
            list(self.history),
            None if self.direction is None else self.direction.copy(),
        )

    def pvec(self, system: BvpSystem) -> np.ndarray:
        return np.array([float(self.params[name]) for name in system.par_names])

    def stages(self):
        """Stage abscissae (N, k), stage values (N, k, n) and weights (N, k)."""
        c, b, A = self.mesh.tableau
        h = self.mesh.h
        s = self.mesh.nodes[:-1, None] + h[:, None] * c[None, :]
        Y = self.y[:-1, None, :] + h[:, None, None] * np.einsum("il,jln->jin", A, self.K)
        w = h[:, None] * b[None, :]
        return s, Y, w

    def quadrature(self):
        s, Y, w = self.stages()
        return s.ravel(), Y.reshape(-1, self.n), w.ravel()

    def integrate(self, values: np.ndarray) -> float:
        _, _, w = self.quadrature()
        return float(np.dot(w, values))

    def __call__(self, s) -> np.ndarray:
        """Evaluate the collocation polynomial at arbitrary arclengths."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        nodes = self.mesh.nodes
        j = np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, self.mesh.intervals - 1)
        h = self.mesh.h[j]
        theta = (s - nodes[j]) / h
        c, _, _ = self.mesh.tableau
        k = len(c)
        ints = np.empty((len(s), k))
        for l in range(k):
            others = np.delete(c, l)
            poly = np.polyint(np.poly1d(others, r=True) / np.prod(c[l] - others))
            ints[:, l] = poly(theta) - poly(0.0)
        return self.y[j] + h[:, None] * np.einsum("ml,mln->mn", ints, self.K[j])

    @classmethod
    def from_function(cls, system: BvpSystem, mesh: Mesh, fun, params: dict) -> "BvpSolution":
        """Sample ``fun(s) -> (m, n)`` at the nodes; stage slopes from the rhs."""
        params = {name: float(params[name]) for name in system.par_names}
        p = np.array([params[name] for name in system.par_names])
        y = np.asarray(fun(mesh.nodes), dtype=float)
        sol = cls(mesh, y, np.zeros((mesh.intervals, mesh.degree, system.n)), params)
        s = mesh.collocation_points()
        sol.K = system.rhs(s, np.asarray(fun(s), dtype=float), p).reshape(sol.K.shape)
        return sol

    def remesh(self, system: BvpSystem, mesh: Mesh) -> "BvpSolution":
        return BvpSolution.from_function(system, mesh, self, self.params)


# ---------------------------------------------------------------------------
# Newton machinery


@dataclass
class LinearRow:
    """Extra linear equation ``ry . dy + rp . dp = rhs`` on the reduced unknowns."""

    ry: np.ndarray  # (N+1, n)
    rp: np.ndarray  # (nf,)
    value: float  # current residual of the equation


class Discretization:
    """Residuals and condensed Newton matrix of one system on one solution."""

    def __init__(self, system: BvpSystem, sol: BvpSolution, free, extra=()):
        self.system = system
        self.sol = sol
        self.free = [system.pindex(name) for name in free]
        self.extra = list(extra)
        n = system.n
        nf = len(self.free)
        N = sol.mesh.intervals
        count = system.nbc + system.nint + len(self.extra)
        if sol.y.shape != (N + 1, n):
            raise WellPosednessError(f"solution has state dimension {sol.y.shape[1]}, system expects {n}")
        if count != n + nf:
            raise WellPosednessError(
                f"{system.nbc} boundary + {system.nint} integral + {len(self.extra)} extra "
                f"conditions for {n} states + {nf} free parameters"
            )
        self._assemble()

    # -- assembly ----------------------------------------------------------

    def _assemble(self):
        sys_, sol = self.system, self.sol
        n, nf = sys_.n, len(self.free)
        mesh = sol.mesh
        N, k = mesh.intervals, mesh.degree
        c, b, A = mesh.tableau
        h = mesh.h
        p = sol.pvec(sys_)
        self.p = p

        s, Y, w = sol.stages()
        sf, Yf = s.ravel(), Y.reshape(-1, n)
        fval = sys_.rhs(sf, Yf, p).reshape(N, k, n)
        fu, fp = sys_.jac(sf, Yf, p, self.free)
        fu = fu.reshape(N, k, n, n)
        fp = fp.reshape(N, k, n, nf)

        G = sol.K - fval
        cont = sol.y[1:] - sol.y[:-1] - h[:, None] * np.einsum("i,jin->jn", b, sol.K)

        # local stage systems E dK = -G + J dy + fp dp
        E = np.zeros((N, k, n, k, n))
        eye = np.eye(n)
        for i in range(k):
            for l in range(k):
                E[:, i, :, l, :] = -h[:, None, None] * A[i, l] * fu[:, i]
            E[:, i, :, i, :] += eye
        E = E.reshape(N, k * n, k * n)
        rhs = np.concatenate([-G.reshape(N, k * n, 1), fu.reshape(N, k * n, n), fp.reshape(N, k * n, nf)], axis=2)
        try:
            W = np.linalg.solve(E, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError("singular local collocation block") from exc
        sgn, logabs = np.linalg.slogdet(E)
        self.local_sign = float(np.prod(sgn))
        self.local_logdet = float(np.sum(logabs))
        W = W.reshape(N, k, n, 1 + n + nf)
        self.W0 = W[..., 0]  # (N, k, n)
        self.WJ = W[..., 1 : 1 + n]  # (N, k, n, n)
        self.Wp = W[..., 1 + n :]  # (N, k, n, nf)

        hb = h[:, None] * b[None, :]
        Phi = eye[None] + np.einsum("ji,jiab->jab", hb, self.WJ)
        Psi = np.einsum("ji,jiac->jac", hb, self.Wp)
        rho = -cont + np.einsum("ji,jia->ja", hb, self.W0)

        # boundary conditions
        ua, ub = sol.y[0], sol.y[-1]
        bcv = np.asarray(sys_.bc(ua, ub, p), dtype=float)
        Ba, Bb, Bp = sys_.bc_jac(ua, ub, p, self.free)

        # integral constraints
        nint = sys_.nint
        if nint:
            gval = sys_.integrands(sf, Yf, p).reshape(N, k, nint)
            gu, gp = sys_.integrand_jac(sf, Yf, p, self.free)
            gu = gu.reshape(N, k, nint, n)
            gp = gp.reshape(N, k, nint, nf)
            ival = np.einsum("ji,jiq->q", w, gval)
            hA = h[:, None, None] * A[None]
            # dY_ji = dy_j + h sum_l a_il dK_jl
            dY_dy = eye[None, None] + np.einsum("jil,jlab->jiab", hA, self.WJ)
            dY_dp = np.einsum("jil,jlac->jiac", hA, self.Wp)
            dY_0 = np.einsum("jil,jla->jia", hA, self.W0)
            Iy = np.einsum("ji,jiqa,jiab->jqb", w, gu, dY_dy)
            Ip = np.einsum("ji,jiqa,jiac->qc", w, gu, dY_dp) + np.einsum("ji,jiqc->qc", w, gp)
            I0 = np.einsum("ji,jiqa,jia->q", w, gu, dY_0)
        else:
            ival = np.zeros(0)

        # sparse reduced matrix
        size = n * (N + 1) + nf
        rows, cols, vals = [], [], []
        rhs_vec = np.zeros(size)

        def add_block(r0, c0, block):
            block = np.atleast_2d(block)
            rr, cc = np.nonzero(block)
            rows.append(rr + r0)
            cols.append(cc + c0)
            vals.append(block[rr, cc])

        r = 0
        nb = sys_.nbc
        add_block(r, 0, Ba)
        add_block(r, n * N, Bb)
        if nf:
            add_block(r, n * (N + 1), Bp)
        rhs_vec[r : r + nb] = -bcv
        r += nb
        # continuity: dy_{j+1} - Phi_j dy_j - Psi_j dp = rho_j
        jj = np.arange(N)
        ia = np.arange(n)
        rr = (r + jj[:, None, None] * n + ia[None, :, None]) + np.zeros((1, 1, n), dtype=int)
        cc_prev = jj[:, None, None] * n + ia[None, None, :] + np.zeros((1, n, 1), dtype=int)
        rows.append(rr.ravel())
        cols.append(cc_prev.ravel())
        vals.append((-Phi).ravel())
        rows.append(r + np.arange(N * n))
        cols.append(n + np.arange(N * n))
        vals.append(np.ones(N * n))
        if nf:
            rr = (r + jj[:, None, None] * n + ia[None, :, None]) + np.zeros((1, 1, nf), dtype=int)
            cc = n * (N + 1) + np.arange(nf)[None, None, :] + np.zeros((N, n, 1), dtype=int)
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append((-Psi).ravel())
        rhs_vec[r : r + N * n] = rho.ravel()
        r += N * n
        for q in range(nint):
            add_block(r, 0, Iy[:, q, :].reshape(1, -1))
            if nf:
                add_block(r, n * (N + 1), Ip[q][None, :])
            rhs_vec[r] = -ival[q] - I0[q]
            r += 1
        for row in self.extra:
            add_block(r, 0, np.asarray(row.ry).reshape(1, -1))
            if nf:
                add_block(r, n * (N + 1), np.asarray(row.rp)[None, :])
            rhs_vec[r] = -row.value
            r += 1
        assert r == size
        self.matrix = sparse.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
        )
        self.rhs = rhs_vec
        self.residuals = {
            "stage": G,
            "continuity": cont,
            "bc": bcv,
            "integral": ival,
            "extra": np.array([row.value for row in self.extra]),
        }
        self._lu = None

    # -- linear algebra ----------------------------------------------------

    @property
    def residual_norm(self) -> float:
        return max((float(np.max(np.abs(v))) if np.size(v) else 0.0) for v in self.residuals.values())

    @property
    def lu(self):
        if self._lu is None:
            try:
                self._lu = splu(self.matrix, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularJacobianError(str(exc)) from exc
        return self._lu

    def solve(self, rhs=None):
        x = self.lu.solve(self.rhs if rhs is None else rhs)
        if not np.all(np.isfinite(x)):
            raise SingularJacobianError("non-finite Newton step")
        return x

    def det_sign(self) -> float:
        lu = self.lu
        d = np.sign(lu.U.diagonal()).prod()
        return float(d * _perm_sign(lu.perm_r) * _perm_sign(lu.perm_c) * self.local_sign)

    def log_abs_det(self) -> float:
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(np.abs(self.lu.U.diagonal())))) + self.local_logdet

    def smallest_singular(self, k: int = 3, iters: int = 12, seed: int = 0):
        """Approximate ``k`` smallest singular values and right vectors.

        Block inverse iteration on ``A^T A`` reusing the sparse LU, followed
        by a Rayleigh-Ritz step.  Returns ``(sigma, V)`` with ``sigma``
        ascending and ``V`` of shape (size, k).
        """
        size = self.matrix.shape[0]
        k = min(k, size)
        X = np.random.default_rng(seed).standard_normal((size, k))
        X, _ = np.linalg.qr(X)
        lu = self.lu
        for _ in range(iters):
            Z = lu.solve(lu.solve(X, trans="T"))
            X, _ = np.linalg.qr(Z)
        W = self.matrix @ X
        _, sig, vt = np.linalg.svd(W, full_matrices=False)
        order = np.argsort(sig)
        return sig[order], X @ vt.T[:, order]

    def split(self, x):
        n, N = self.system.n, self.sol.mesh.intervals
        return x[: n * (N + 1)].reshape(N + 1, n), x[n * (N + 1) :]

    def stage_update(self, dy, dp, with_residual=True):
        """Stage-slope increment implied by node/parameter increments."""
        dK = np.einsum("jiab,jb->jia", self.WJ, dy[:-1])
        if len(dp):
            dK += np.einsum("jiac,c->jia", self.Wp, dp)
        if with_residual:
            dK += self.W0
        return dK


def _perm_sign(perm) -> float:
    perm = np.asarray(perm)
    seen = np.zeros(len(perm), dtype=bool)
    sign = 1.0
    for i in range(len(perm)):
        if not seen[i]:
            j, length = i, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            if length % 2 == 0:
                sign = -sign
    return sign


def apply_step(system, sol, disc, dx, scale=1.0, with_residual=True):
    dy, dp = disc.split(dx)
    new = sol.copy()
    new.y = sol.y + scale * dy
    new.K = sol.K + scale * disc.stage_update(dy, dp, with_residual)
    for c, idx in enumerate(disc.free):
        name = system.par_names[idx]
        new.params[name] = sol.params[name] + scale * dp[c]
    return new


def solve_newton(system, guess, free=(), tol=1e-10, max_iter=25, extra=None, max_halvings=8, project=None):
    """Damped Newton iteration on the collocation equations.

    ``extra`` is an optional callable ``sol -> list[LinearRow]`` giving
    additional (linearised) scalar equations such as the arclength condition.
    ``project`` maps a node/parameter update ``(dy, dp)`` to the subspace
    the iteration should stay in (used where the full Jacobian is singular
    because of a symmetry).
    Returns a solution flagged ``converged``; divergence raises
    :class:`ConvergenceError` carrying the last iterate and norm history.
    """
    extra = extra or (lambda _sol: [])
    sol = guess.copy()
    disc = Discretization(system, sol, free, extra(sol))
    history = [disc.residual_norm]
    for _ in range(max_iter):
        if history[-1] < tol:
            break
        dx = disc.solve()
        if project is not None:
            dy, dp = project(*disc.split(dx))
            dx = np.concatenate([dy.ravel(), dp])
        t = 1.0
        for _h in range(max_halvings + 1):
            trial = apply_step(system, sol, disc, dx, t)
            try:
                tdisc = Discretization(system, trial, free, extra(trial))
                tnorm = tdisc.residual_norm
            except (SingularJacobianError, FloatingPointError):
                tnorm = np.inf
            if np.isfinite(tnorm) and tnorm < history[-1]:
                break
            t *= 0.5
        else:
            raise ConvergenceError("damped Newton failed to reduce the residual", sol, history)
        sol, disc = trial, tdisc
        history.append(tnorm)
    if history[-1] >= tol:
        raise ConvergenceError(f"no convergence after {max_iter} iterations", sol, history)
    sol.converged = True
    sol.history = history
    return sol
