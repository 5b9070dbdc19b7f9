"""Small dense convex solvers.

``solve_qcqp`` handles a convex quadratic objective with at most one convex
quadratic inequality, plus either disjoint Euclidean balls (complex
problems) or a box and half-planes (small real problems with a diagonal or
isotropic Hessian). The inequality is dualized and its multiplier found by a
bracketing search; for every trial multiplier the remaining problem is
solved in closed form or by a short Newton iteration on the ball
multipliers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max-iter"


@dataclass
class ConvexQuadratic:
    """``x^H H x - 2 Re{a^H x} + c``.

    ``hessian`` is either a dense Hermitian matrix, a 1-D array holding a
    diagonal, or a scalar meaning a scaled identity.
    """

    hessian: np.ndarray | float
    linear: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        self.linear = np.asarray(self.linear)
        h = np.asarray(self.hessian)
        if h.ndim == 2:
            if h.shape != (self.linear.size, self.linear.size):
                raise ValueError("hessian and linear term sizes differ")
            eig = np.linalg.eigvalsh(0.5 * (h + h.conj().T))
            if eig[0] < -1e-8 * max(1.0, abs(eig[-1])):
                raise ValueError("hessian is not positive semidefinite")
        elif np.any(h < -1e-12):
            raise ValueError("hessian is not positive semidefinite")
        self.hessian = h

    @property
    def n(self):
        return self.linear.size

    def quad(self, x):
        h = self.hessian
        if h.ndim == 2:
            return float(np.real(np.vdot(x, h @ x)))
        return float(np.sum(h * np.abs(x) ** 2))

    def value(self, x):
        return self.quad(x) - 2.0 * float(np.real(np.vdot(self.linear, x))) + self.constant


@dataclass
class SolveReport:
    status: str
    objective: float
    dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kkt_residual: float = 0.0
    certificate: float | None = None
    iterations: int = 0


# ---------------------------------------------------------------------------
# Eigen-solvers
# ---------------------------------------------------------------------------

def lambda_max(h):
    """Largest eigenvalue of a Hermitian matrix and a unit eigenvector."""
    h = np.asarray(h)
    vals, vecs = np.linalg.eigh(0.5 * (h + h.conj().T))
    return float(vals[-1]), vecs[:, -1]


def max_generalized_eig(a, b):
    """Maximize ``v^H A v / v^H B v``.

    ``B`` is whitened by its Cholesky factor; the principal eigenvector of the
    whitened ``A`` is mapped back. Raises ``ValueError`` when ``B`` is
    singular or not positive definite.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    b = 0.5 * (b + b.conj().T)
    eig_b = np.linalg.eigvalsh(b)
    if eig_b[0] <= 1e-13 * max(abs(eig_b[-1]), np.finfo(float).tiny):
        raise ValueError("B is singular: degenerate noise covariance")
    chol = np.linalg.cholesky(b)
    inv = np.linalg.inv(chol)
    whitened = inv @ a @ inv.conj().T
    value, y = lambda_max(whitened)
    v = inv.conj().T @ y
    return value, v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Inner problems for a fixed inequality multiplier
# ---------------------------------------------------------------------------

def _solve_dense(k, rhs):
    scale = np.linalg.norm(k, ord=np.inf)
    ridge = 1e-13 * scale if scale > 0 else 1e-300
    try:
        return np.linalg.solve(k + ridge * np.eye(k.shape[0]), rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(k, rhs, rcond=None)[0]


def _free_min(k, q):
    if k.ndim == 2:
        return _solve_dense(k, q)
    kk = np.broadcast_to(k, q.shape).astype(float)
    out = np.zeros_like(q)
    np.divide(q, kk, out=out, where=kk > 0)
    return out


def _box_min(k, q, lo, hi):
    kk = np.broadcast_to(k, q.shape).astype(float)
    q = np.real(q)
    x = np.where(q > 0, hi, lo).astype(float)
    pos = kk > 0
    x[pos] = np.clip(q[pos] / kk[pos], lo[pos], hi[pos])
    return x


def _polygon(lo, hi, halfspaces):
    """Vertices of box ``[lo, hi]`` clipped by ``a^T x <= b`` (counter-clockwise)."""
    poly = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
            np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
    for a, b in halfspaces:
        a = np.asarray(a, dtype=float)
        out = []
        n = len(poly)
        for i in range(n):
            p, c = poly[i], poly[(i + 1) % n]
            fp, fc = a @ p - b, a @ c - b
            if fp <= 0:
                out.append(p)
            if (fp < 0 < fc) or (fc < 0 < fp):
                s = fp / (fp - fc)
                out.append(p + s * (c - p))
        poly = out
        if not poly:
            return []
    return poly


def _project_polygon(c, poly):
    n = len(poly)
    if n == 1:
        return poly[0].copy()
    inside = True
    if n >= 3:
        for i in range(n):
            p, r = poly[i], poly[(i + 1) % n]
            cross = (r[0] - p[0]) * (c[1] - p[1]) - (r[1] - p[1]) * (c[0] - p[0])
            if cross < 0:
                inside = False
                break
        if inside:
            return c.copy()
    best, best_d = None, np.inf
    for i in range(n):
        p, r = poly[i], poly[(i + 1) % n]
        e = r - p
        ee = e @ e
        s = 0.0 if ee == 0 else np.clip((c - p) @ e / ee, 0.0, 1.0)
        y = p + s * e
        d = np.sum((c - y) ** 2)
        if d < best_d:
            best, best_d = y, d
    return best


def _polygon_min(k, q, poly):
    q = np.real(q)
    if k > 0:
        return _project_polygon(q / k, poly)
    scores = [float(q @ p) for p in poly]
    return poly[int(np.argmax(scores))].copy()


class _BallSolver:
    """Minimize ``x^H K x - 2Re{q^H x}`` over disjoint balls ``||x[S_i]|| <= r_i``."""

    def __init__(self, balls, n):
        self.sel = [np.asarray(s) for s in (b[0] for b in balls)]
        self.rad = np.array([float(b[1]) for b in balls])
        self.mask = np.zeros((len(balls), n))
        for i, s in enumerate(self.sel):
            self.mask[i, s] = 1.0
        if np.any(self.mask.sum(axis=0) > 1):
            raise ValueError("ball selectors must be disjoint")
        self.nu = np.zeros(len(balls))

    def _x(self, k, q, nu):
        d = self.mask.T @ nu
        if k.ndim == 2:
            kk = k + np.diag(d)
            return _solve_dense(kk, q), kk
        kk = k + d
        return _free_min(kk, q), kk

    def _norms(self, x):
        return np.array([np.linalg.norm(x[s]) for s in self.sel])

    def _converged(self, norms, nu, tol):
        inside = norms <= self.rad * (1 + tol)
        tight = (nu == 0) | (norms >= self.rad * (1 - tol))
        return bool(np.all(inside & tight))

    def _dual(self, k, q, nu):
        x, kk = self._x(k, q, nu)
        return x, kk, -float(np.real(np.vdot(q, x))) - float(nu @ self.rad ** 2)

    def solve(self, k, q, tol=1e-11, max_iter=100):
        # Projected Newton ascent on the concave dual
        #   g(nu) = -Re{q^H x(nu)} - sum nu_i r_i^2,  grad_i = ||x_i||^2 - r_i^2.
        nu = self.nu.copy()
        x, kk, g = self._dual(k, q, nu)
        for _ in range(max_iter):
            norms = self._norms(x)
            if self._converged(norms, nu, tol):
                self.nu = nu
                return x, nu
            grad = norms ** 2 - self.rad ** 2
            free = np.flatnonzero((nu > 0) | (grad > 0))
            if free.size == 0:
                break
            rhs = np.stack([self.mask[j] * x for j in free], axis=1)
            y = _solve_dense(kk, rhs) if kk.ndim == 2 else rhs / kk[:, None]
            hess = np.empty((free.size, free.size))
            for a, i in enumerate(free):
                hess[a] = -2 * np.real(np.conj(x[self.sel[i]]) @ y[self.sel[i]])
            try:
                step = np.linalg.solve(hess, -grad[free])
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)):
                break
            slack = 1e-13 * max(abs(g), 1e-300)
            alpha = 1.0
            for _ in range(40):
                trial = nu.copy()
                trial[free] = np.maximum(nu[free] + alpha * step, 0.0)
                xt, kt, gt = self._dual(k, q, trial)
                if gt >= g - slack:
                    break
                alpha *= 0.5
            else:
                break
            if np.array_equal(trial, nu):
                break
            nu, x, kk, g = trial, xt, kt, gt
        nu = self._coordinate(k, q, nu, tol)
        self.nu = nu
        x, _ = self._x(k, q, nu)
        return x, nu

    def _coordinate(self, k, q, nu, tol, sweeps=200):
        # Exact coordinate ascent on the dual; each coordinate is a monotone 1-D root.
        for _ in range(sweeps):
            x, _ = self._x(k, q, nu)
            norms = self._norms(x)
            if self._converged(norms, nu, tol):
                break
            for i in range(len(self.sel)):
                def excess(v):
                    trial = nu.copy()
                    trial[i] = v
                    xi, _ = self._x(k, q, trial)
                    return np.linalg.norm(xi[self.sel[i]]) - self.rad[i]
                if excess(0.0) <= 0:
                    nu[i] = 0.0
                    continue
                lo, hi = 0.0, max(nu[i], 1e-12 * (1 + np.max(np.abs(k))))
                while excess(hi) > 0:
                    lo, hi = hi, 2 * hi
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if excess(mid) > 0:
                        lo = mid
                    else:
                        hi = mid
                    if hi - lo <= 1e-15 * hi:
                        break
                nu[i] = hi
        return nu


# ---------------------------------------------------------------------------
# Public entry point
# ---------------------------------------------------------------------------

def _combine(h1, h2, mu):
    if h2 is None:
        return h1
    a, b = np.asarray(h1), np.asarray(h2)
    if a.ndim == 2 or b.ndim == 2:
        n = max(a.shape[0] if a.ndim else 0, b.shape[0] if b.ndim else 0)
        a = a if a.ndim == 2 else np.diag(np.broadcast_to(a, (n,))).astype(complex)
        b = b if b.ndim == 2 else np.diag(np.broadcast_to(b, (n,))).astype(complex)
    return a + mu * b


def solve_qcqp(objective, quad_ineq=None, balls=(), box=None, halfspaces=(),
               tol=1e-12, max_steps=200):
    """Minimize a convex quadratic under one convex quadratic inequality.

    Parameters
    ----------
    objective : ConvexQuadratic
    quad_ineq : ConvexQuadratic, optional
        Constraint ``quad_ineq.value(x) <= 0``.
    balls : sequence of (index array, radius)
        Disjoint ball constraints ``||x[idx]|| <= radius``.
    box : (lo, hi), optional
        Coordinate bounds; real problems with a diagonal or scalar Hessian.
    halfspaces : sequence of (a, b)
        Constraints ``a^T x <= b``; two-dimensional problems with an
        isotropic Hessian only.

    Returns
    -------
    x : ndarray
    report : SolveReport
        ``dual`` holds the inequality multiplier followed by the ball
        multipliers. An infeasible problem carries the smallest constraint
        value found in ``certificate``.
    """
    n = objective.n
    g = quad_ineq
    if balls and (box is not None or halfspaces):
        raise ValueError("balls cannot be combined with box or half-plane constraints")
    poly = None
    if halfspaces:
        if n != 2 or np.asarray(objective.hessian).ndim != 0 or (
                g is not None and np.asarray(g.hessian).ndim != 0):
            raise ValueError("half-planes need a 2-D problem with isotropic Hessians")
        lo, hi = (np.full(2, -np.inf), np.full(2, np.inf)) if box is None else box
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("half-plane problems need a bounded box")
        poly = _polygon(np.asarray(lo, float), np.asarray(hi, float), halfspaces)
        if not poly:
            return np.zeros(2), SolveReport(INFEASIBLE, np.inf, np.zeros(1), np.inf, certificate=np.inf)
    elif box is not None:
        if np.asarray(objective.hessian).ndim == 2 or (g is not None and np.asarray(g.hessian).ndim == 2):
            raise ValueError("box constraints need diagonal or scalar Hessians")
        lo = np.broadcast_to(np.asarray(box[0], float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(box[1], float), (n,)).copy()
        if np.any(lo > hi):
            return np.zeros(n), SolveReport(INFEASIBLE, np.inf, np.zeros(1), np.inf, certificate=np.inf)

    ball_solver = _BallSolver(balls, n) if balls else None

    def inner(mu):
        k = _combine(objective.hessian, None if g is None else g.hessian, mu)
        q = objective.linear if g is None else objective.linear + mu * g.linear
        if poly is not None:
            return _polygon_min(float(k), q, poly), np.zeros(0)
        if box is not None:
            return _box_min(np.asarray(k, float), q, lo, hi), np.zeros(0)
        if ball_solver is not None:
            return ball_solver.solve(np.asarray(k), q)
        return _free_min(np.asarray(k), q), np.zeros(0)

    def finish(x, mu, nu, status, steps, gval=0.0):
        resid = abs(mu * gval) + max(gval, 0.0)
        if ball_solver is not None:
            norms = ball_solver._norms(x)
            resid = max(resid, float(np.max(np.maximum(norms - ball_solver.rad, 0.0))),
                        float(np.max(np.abs(nu * (norms ** 2 - ball_solver.rad ** 2)))))
        return x, SolveReport(status, objective.value(x), np.concatenate([[mu], nu]),
                              resid, iterations=steps)

    x0, nu0 = inner(0.0)
    if g is None:
        return finish(x0, 0.0, nu0, OPTIMAL, 0)
    g0 = g.value(x0)
    g_scale = abs(g.quad(x0)) + 2 * abs(np.real(np.vdot(g.linear, x0))) + abs(g.constant)
    gtol = tol * max(g_scale, np.finfo(float).tiny)
    if g0 <= 0:
        return finish(x0, 0.0, nu0, OPTIMAL, 0, g0)

    h_obj = np.max(np.abs(objective.hessian)) if np.size(objective.hessian) else 0.0
    h_con = np.max(np.abs(g.hessian)) if np.size(g.hessian) else 0.0
    lin_obj, lin_con = np.max(np.abs(objective.linear)), np.max(np.abs(g.linear))
    mu_scale = max(h_obj, lin_obj) / max(h_con, lin_con, np.finfo(float).tiny)
    mu_lo, g_lo = 0.0, g0
    mu_hi = max(mu_scale, np.finfo(float).tiny)
    steps = 0
    x_hi, nu_hi = inner(mu_hi)
    g_hi = g.value(x_hi)
    while g_hi > 0:
        steps += 1
        if steps > max_steps or mu_hi > 1e40 * max(mu_scale, 1.0):
            return x_hi, SolveReport(INFEASIBLE, objective.value(x_hi), np.array([mu_hi]),
                                     float(g_hi), certificate=float(g_hi), iterations=steps)
        mu_lo, g_lo = mu_hi, g_hi
        mu_hi *= 4.0
        x_hi, nu_hi = inner(mu_hi)
        g_hi = g.value(x_hi)

    # Illinois false position on the monotone map mu -> g(x(mu)); the
    # returned point always comes from the feasible end of the bracket.
    f_lo, f_hi = g_lo, g_hi
    side = 0
    while g_hi < -gtol and mu_hi - mu_lo > 1e-15 * mu_hi:
        steps += 1
        if steps > max_steps:
            return finish(x_hi, mu_hi, nu_hi, MAX_ITER, steps, g_hi)
        mu = (mu_lo * f_hi - mu_hi * f_lo) / (f_hi - f_lo)
        if steps % 4 == 0 or not mu_lo < mu < mu_hi:
            mu = 0.5 * (mu_lo + mu_hi)
        x, nu = inner(mu)
        gm = g.value(x)
        if gm > 0:
            mu_lo, f_lo, g_lo = mu, gm, gm
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            mu_hi, x_hi, nu_hi, g_hi, f_hi = mu, x, nu, gm, gm
            if side == 1:
                f_lo *= 0.5
            side = 1
    g_hi = g.value(x_hi)
    return finish(x_hi, mu_hi, nu_hi, OPTIMAL, steps, g_hi)
