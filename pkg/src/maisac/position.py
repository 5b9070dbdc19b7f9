"""Majorization-minimization updates of movable-antenna positions.

Moving one antenna changes a set of unit-modulus path responses
``z(t) = exp(j 2 pi / lambda D t)`` (one row of ``D`` per path). Every
quantity entering the WMMSE surrogate or the sensing constraint is affine in
``z``, so both are exactly a Hermitian quadratic ``z^H F z + 2 Re{b^H z} + c``
in ``z``. Each update then

1. replaces ``z^H F z`` by a linear majorizer using ``lambda_max`` (valid
   because ``||z||`` does not depend on ``t``),
2. bounds the resulting phase sum by an isotropic quadratic in ``t``,
3. solves the 2-D problem with the box, the linearized spacing constraints
   and the convexified sensing constraint.

Because the models are exact, each accepted move is checked against the true
objective and constraint before it is kept.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as ch
from . import metrics as mt
from .solvers import OPTIMAL, ConvexQuadratic, lambda_max, solve_qcqp

UPPER = "upper"
LOWER = "lower"


# ---------------------------------------------------------------------------
# Phase sums and their quadratic bounds
# ---------------------------------------------------------------------------

@dataclass
class PhaseSum:
    """``sum_l amplitude_l cos(2 pi / lambda t . d_l - phase_l)``."""

    amplitudes: np.ndarray
    phases: np.ndarray
    directions: np.ndarray  # (L, 2)
    wavelength: float = 1.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        self.phases = np.asarray(self.phases, dtype=float)
        self.directions = np.asarray(self.directions, dtype=float).reshape(-1, 2)
        if np.any(self.amplitudes < 0):
            raise ValueError("amplitudes must be nonnegative")
        if not (self.amplitudes.shape == self.phases.shape == self.directions.shape[:1]):
            raise ValueError("amplitudes, phases and directions must have equal length")

    @classmethod
    def from_complex(cls, coef, directions, wavelength=1.0):
        """Phase sum equal to ``Re{coef^H z(t)}``."""
        coef = np.asarray(coef)
        return cls(np.abs(coef), np.angle(coef), directions, wavelength)


def phase_sum_eval(ps, t):
    arg = 2 * np.pi / ps.wavelength * (ps.directions @ np.asarray(t, float)) - ps.phases
    return float(ps.amplitudes @ np.cos(arg))


def phase_sum_grad(ps, t):
    k = 2 * np.pi / ps.wavelength
    arg = k * (ps.directions @ np.asarray(t, float)) - ps.phases
    return -k * (ps.amplitudes * np.sin(arg)) @ ps.directions


@dataclass
class QuadraticSurrogate:
    """``constant + linear . (t - anchor) +/- curvature / 2 ||t - anchor||^2``."""

    curvature: float
    linear: np.ndarray
    constant: float
    sense: str
    anchor: np.ndarray

    def __call__(self, t):
        d = np.asarray(t, float) - self.anchor
        sign = 1.0 if self.sense == UPPER else -1.0
        return self.constant + self.linear @ d + sign * 0.5 * self.curvature * (d @ d)

    def as_quadratic(self):
        """Same function as ``ConvexQuadratic`` in ``t`` (upper sense only)."""
        if self.sense != UPPER:
            raise ValueError("only upper surrogates are convex")
        half = 0.5 * self.curvature
        t0 = self.anchor
        lin = self.linear - self.curvature * t0
        const = self.constant - self.linear @ t0 + half * (t0 @ t0)
        return ConvexQuadratic(half, -0.5 * lin, const)


def phase_sum_bound(ps, anchor, sense=UPPER):
    """Quadratic bound of a phase sum with curvature ``8 pi^2 / lambda^2 sum |f_l|``."""
    anchor = np.asarray(anchor, dtype=float)
    delta = 8 * np.pi ** 2 / ps.wavelength ** 2 * float(np.sum(ps.amplitudes))
    return QuadraticSurrogate(delta, phase_sum_grad(ps, anchor), phase_sum_eval(ps, anchor),
                              sense, anchor.copy())


def lmax_majorizer(h, h_anchor, linear_extra=None):
    """Linear majorizer of ``z^H H z + Re{e^H z}`` on ``||z|| = ||h_anchor||``.

    Returns ``(f, c)`` with ``z^H H z + Re{e^H z} <= Re{f^H z} + c`` and
    equality at ``h_anchor``.
    """
    h = np.asarray(h)
    z0 = np.asarray(h_anchor)
    lam, _ = lambda_max(h)
    f = 2 * (h.conj().T @ z0 - lam * z0)
    c = 2 * lam * np.real(np.vdot(z0, z0)) - np.real(np.vdot(z0, h @ z0))
    if linear_extra is not None:
        f = f + linear_extra
    return f, float(c)


def linearize_min_distance(t_anchor, others, min_dist):
    """Half-planes ``a^T t <= b`` that imply ``||t - t_i|| >= min_dist``."""
    t0 = np.asarray(t_anchor, float)
    out = []
    for ti in np.atleast_2d(others):
        d = t0 - ti
        norm = np.linalg.norm(d)
        if norm == 0:
            raise ValueError("anchor coincides with another antenna")
        n = d / norm
        out.append((-n, -min_dist - n @ ti))
    return out


# ---------------------------------------------------------------------------
# Exact quadratic model in the moving antenna's path responses
# ---------------------------------------------------------------------------

def _components(adjacency):
    """Connected-component label per node (smallest member index)."""
    reach = adjacency | adjacency.T | np.eye(adjacency.shape[0], dtype=bool)
    while True:
        nxt = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        if np.array_equal(nxt, reach):
            return np.argmax(reach, axis=1)
        reach = nxt


class QuadModel:
    """``Phi(z) = Re{z^H F z} + 2 Re{b^H z} + c`` accumulated from affine forms.

    Forms are passed as their current values together with their
    coefficient rows ``alpha`` (so that ``value(z) = a0 + alpha @ z``).
    """

    def __init__(self, dirs, t0, wavelength=1.0):
        self.dirs = np.asarray(dirs, float)
        self.t0 = np.asarray(t0, float)
        self.wavelength = wavelength
        self.z0 = self.z(self.t0)
        p = self.dirs.shape[0]
        self.F = np.zeros((p, p), dtype=complex)
        self.b = np.zeros(p, dtype=complex)
        self.c = 0.0
        self._cache = None

    def reanchor(self, t):
        # F, b and c do not depend on the anchor, only the majorizer does.
        self.t0 = np.asarray(t, float).copy()
        self.z0 = self.z(self.t0)

    def z(self, t):
        return np.exp(2j * np.pi / self.wavelength * (self.dirs @ np.asarray(t, float)))

    def add_sq(self, weight, value, alpha):
        weight = np.asarray(weight, float).reshape(-1)
        value = np.asarray(value).reshape(-1)
        alpha = np.asarray(alpha).reshape(value.size, -1)
        a0 = value - alpha @ self.z0
        self._cache = None
        self.F += (alpha.conj().T * weight) @ alpha
        self.b += alpha.conj().T @ (weight * a0)
        self.c += float(weight @ np.abs(a0) ** 2)

    def add_re(self, coef, value, alpha):
        coef = np.asarray(coef).reshape(-1)
        value = np.asarray(value).reshape(-1)
        alpha = np.asarray(alpha).reshape(value.size, -1)
        a0 = value - alpha @ self.z0
        self.b += 0.5 * np.conj(coef @ alpha)
        self.c += float(np.real(coef @ a0))

    def scale(self, factor):
        self._cache = None
        self.F *= factor
        self.b *= factor
        self.c *= factor

    def __call__(self, t):
        z = self.z(t)
        return float(np.real(np.vdot(z, self.F @ z)) + 2 * np.real(np.vdot(self.b, z)) + self.c)

    def _blocks(self):
        # Connected blocks of F with their lambda_max; F is fixed once built.
        if self._cache is None:
            labels = _components(np.abs(self.F) > 0)
            self._cache = []
            for comp in np.unique(labels):
                idx = np.flatnonzero(labels == comp)
                sub = self.F[np.ix_(idx, idx)]
                if np.any(sub):
                    self._cache.append((idx, sub, lambda_max(sub)[0]))
        return self._cache

    def majorizer(self):
        """``(f, c)`` with ``Phi(z) <= Re{f^H z} + c`` on the torus, tight at ``z0``."""
        f = 2 * self.b
        const = self.c
        for idx, sub, lam in self._blocks():
            z0 = self.z0[idx]
            hz = sub @ z0
            f[idx] += 2 * (hz - lam * z0)
            const += 2 * lam * np.real(np.vdot(z0, z0)) - np.real(np.vdot(z0, hz))
        return f, const

    def surrogate(self):
        """Upper quadratic bound in ``t``, equal to ``Phi`` at the anchor."""
        f, const = self.majorizer()
        ps = PhaseSum.from_complex(f, self.dirs, self.wavelength)
        bound = phase_sum_bound(ps, self.t0, UPPER)
        bound.constant += const
        return bound


# ---------------------------------------------------------------------------
# Model builders, one per antenna kind
# ---------------------------------------------------------------------------

def _weights(state, scenario):
    wd = scenario.mu_d * state.omega_d
    wu = scenario.mu_u * state.omega_u
    return wd, wd * np.abs(state.beta_d) ** 2, wu, wu * np.abs(state.beta_u) ** 2


def _resp(pos, dirs, lam):
    return np.exp(2j * np.pi / lam * (dirs @ pos))


def _illum_parts(state, channels):
    t = np.conj(channels.gt) @ state.w.T  # (J, K_d)
    gt_blk = mt.blocks(channels.gt, state.wr.shape[0])
    tr = np.einsum("jmn,mnc->jmc", np.conj(gt_blk), state.wr)  # (J, M, N)
    return t, tr


def tbs_models(state, channels, scenario, layout, m, n):
    """Objective and sensing-constraint models for TBS ``m``, antenna ``n``."""
    sc, lam = scenario, scenario.wavelength
    L = sc.dl_gain.shape[-1]
    J = sc.k_t + 1
    idx = m * sc.n_t + n
    dl_dirs = ch.directions(sc.dl_tx[m])  # (K_d, L, 2)
    a4 = ch.directions(sc.tbs_radar[m])  # (J, 2)
    dirs = np.concatenate([dl_dirs.reshape(-1, 2), -a4])
    t0 = layout.tbs_ma[m, n]
    P = dirs.shape[0]
    obj = QuadModel(dirs, t0, lam)
    con = QuadModel(dirs, t0, lam)
    wd, cd, wu, cu = _weights(state, sc)

    s = np.conj(channels.hd) @ state.w.T  # S[k, i]
    hd_blk = mt.blocks(channels.hd, sc.m_t)
    r = np.conj(hd_blk[:, m, :]) @ state.wr[m]  # (K_d, N)
    for k in range(sc.k_d):
        h00 = _resp(layout.dl_user[k], ch.directions(sc.dl_rx[m, k]), lam)
        alpha_k = np.zeros(P, dtype=complex)
        alpha_k[k * L:(k + 1) * L] = np.conj(h00) * sc.dl_gain[m, k]
        obj.add_sq(np.full(sc.k_d, cd[k]), s[k], np.outer(state.w[:, idx], alpha_k))
        obj.add_re([-2 * wd[k] * np.conj(state.beta_d[k])], [s[k, k]], alpha_k * state.w[k, idx])
        obj.add_sq(np.full(sc.n_t, cd[k]), r[k], np.outer(state.wr[m][n], alpha_k))

    t, tr = _illum_parts(state, channels)
    vg = np.abs(np.conj(state.u_comm) @ channels.gr.T) ** 2  # (K_u, J)
    kappa = sc.rcs_var * (cu @ vg)
    v0 = np.abs(np.conj(state.u_sense) @ channels.gr.T) ** 2 * sc.rcs_var
    xi = v0.copy()
    xi[0] = -v0[0] / sc.gamma_r
    for j in range(J):
        alpha_j = np.zeros(P, dtype=complex)
        alpha_j[sc.k_d * L + j] = np.conj(sc.fading_t[m, j])
        comm_alpha = np.outer(state.w[:, idx], alpha_j)
        radar_alpha = np.outer(state.wr[m][n], alpha_j)
        for model, weight in ((obj, kappa[j]), (con, xi[j])):
            model.add_sq(np.full(sc.k_d, weight), t[j], comm_alpha)
            model.add_sq(np.full(sc.n_t, weight), tr[j, m], radar_alpha)
    _finish_constraint(con, state, channels, sc)
    return obj, con


def rbs_models(state, channels, scenario, layout, m, n):
    """Objective and sensing-constraint models for RBS ``m``, antenna ``n``."""
    sc, lam = scenario, scenario.wavelength
    L = sc.ul_gain.shape[-1]
    J = sc.k_t + 1
    idx = m * sc.n_r + n
    ul_dirs = ch.directions(sc.ul_tx[m])
    a5 = ch.directions(sc.rbs_radar[m])
    dirs = np.concatenate([ul_dirs.reshape(-1, 2), a5])
    t0 = layout.rbs_ma[m, n]
    P = dirs.shape[0]
    obj = QuadModel(dirs, t0, lam)
    con = QuadModel(dirs, t0, lam)
    wd, cd, wu, cu = _weights(state, sc)
    u, u0 = state.u_comm, state.u_sense

    xc = channels.hu.conj() @ u.T  # xc[l, i] = h_l^H u_i
    yc = channels.hu.conj() @ u0  # (K_u,)
    for l in range(sc.k_u):
        h01 = _resp(layout.ul_user[l], ch.directions(sc.ul_rx[m, l]), lam)
        alpha_l = np.zeros(P, dtype=complex)
        alpha_l[l * L:(l + 1) * L] = np.conj(h01) * sc.ul_gain[m, l]
        obj.add_sq(cu * state.q[l], xc[l], np.outer(u[:, idx], alpha_l))
        obj.add_re([-2 * wu[l] * state.beta_u[l] * np.sqrt(state.q[l])], [xc[l, l]],
                   alpha_l * u[l, idx])
        con.add_sq([state.q[l]], [yc[l]], (alpha_l * u0[idx])[None, :])

    e = mt.illumination(state, channels)
    v = np.conj(u) @ channels.gr.T  # (K_u, J)
    v0 = np.conj(u0) @ channels.gr.T
    strength = sc.rcs_var * e
    con_w = strength.copy()
    con_w[0] = -strength[0] / sc.gamma_r
    for j in range(J):
        alpha_j = np.zeros(P, dtype=complex)
        alpha_j[sc.k_u * L + j] = sc.fading_r[m, j]
        obj.add_sq(cu * strength[j], v[:, j], np.outer(np.conj(u[:, idx]), alpha_j))
        con.add_sq([con_w[j]], [v0[j]], (alpha_j * np.conj(u0[idx]))[None, :])
    _finish_constraint(con, state, channels, sc)
    return obj, con


def dl_user_model(state, channels, scenario, layout, k):
    """Objective model for DL user ``k`` (its position does not enter sensing)."""
    sc, lam = scenario, scenario.wavelength
    L = sc.dl_gain.shape[-1]
    rx_dirs = ch.directions(sc.dl_rx[:, k])  # (M_t, L, 2)
    du_dirs = ch.directions(sc.du_rx[k])  # (K_u, L, 2)
    dirs = np.concatenate([-rx_dirs.reshape(-1, 2), -du_dirs.reshape(-1, 2)])
    t0 = layout.dl_user[k]
    P = dirs.shape[0]
    obj = QuadModel(dirs, t0, lam)
    wd, cd, wu, cu = _weights(state, sc)

    w_blk = mt.blocks(state.w, sc.m_t)  # (K_d, M, N)
    alpha_s = np.zeros((sc.k_d, P), dtype=complex)
    alpha_r = np.zeros((sc.m_t * sc.n_t, P), dtype=complex)
    for m in range(sc.m_t):
        h0 = ch.frm(layout.tbs_ma[m], sc.dl_tx[m, k], lam)  # (L, N)
        seg = slice(m * L, (m + 1) * L)
        alpha_s[:, seg] = sc.dl_gain[m, k] * (h0 @ w_blk[:, m, :].T).T
        alpha_r[m * sc.n_t:(m + 1) * sc.n_t, seg] = sc.dl_gain[m, k] * (h0 @ state.wr[m]).T
    s = np.conj(channels.hd[k]) @ state.w.T
    hd_blk = mt.blocks(channels.hd, sc.m_t)
    r = np.einsum("mn,mnc->mc", np.conj(hd_blk[k]), state.wr).reshape(-1)
    obj.add_sq(np.full(sc.k_d, cd[k]), s, alpha_s)
    obj.add_re([-2 * wd[k] * np.conj(state.beta_d[k])], [s[k]], alpha_s[k])
    obj.add_sq(np.full(r.size, cd[k]), r, alpha_r)

    off = sc.m_t * L
    alpha_du = np.zeros((sc.k_u, P), dtype=complex)
    for l in range(sc.k_u):
        h2 = _resp(layout.ul_user[l], ch.directions(sc.du_tx[k, l]), lam)
        alpha_du[l, off + l * L: off + (l + 1) * L] = sc.du_gain[k, l] * h2
    obj.add_sq(cd[k] * state.q, np.conj(channels.hdu[k]), alpha_du)
    return obj


def ul_user_models(state, channels, scenario, layout, l):
    """Objective and sensing-constraint models for UL user ``l``."""
    sc, lam = scenario, scenario.wavelength
    L = sc.ul_gain.shape[-1]
    rx_dirs = ch.directions(sc.ul_rx[:, l])  # (M_r, L, 2)
    du_dirs = ch.directions(sc.du_tx[:, l])  # (K_d, L, 2)
    dirs = np.concatenate([-rx_dirs.reshape(-1, 2), du_dirs.reshape(-1, 2)])
    t0 = layout.ul_user[l]
    P = dirs.shape[0]
    obj = QuadModel(dirs, t0, lam)
    con = QuadModel(dirs, t0, lam)
    wd, cd, wu, cu = _weights(state, sc)

    filters = np.vstack([state.u_comm, state.u_sense[None, :]])
    f_blk = mt.blocks(filters, sc.m_r)  # (K_u+1, M, N)
    alpha = np.zeros((sc.k_u + 1, P), dtype=complex)
    for m in range(sc.m_r):
        h1 = ch.frm(layout.rbs_ma[m], sc.ul_tx[m, l], lam)  # (L, N)
        alpha[:, m * L:(m + 1) * L] = sc.ul_gain[m, l] * (h1 @ f_blk[:, m, :].T).T
    xc = np.conj(np.conj(filters) @ channels.hu[l])  # h_l^H u_i
    q = state.q[l]
    obj.add_sq(cu * q, xc[:-1], alpha[:-1])
    obj.add_re([-2 * wu[l] * state.beta_u[l] * np.sqrt(q)], [xc[l]], alpha[l])
    con.add_sq([q], [xc[-1]], alpha[-1:])

    off = sc.m_r * L
    alpha_du = np.zeros((sc.k_d, P), dtype=complex)
    for k in range(sc.k_d):
        h3 = _resp(layout.dl_user[k], ch.directions(sc.du_rx[k, l]), lam)
        alpha_du[k, off + k * L: off + (k + 1) * L] = np.conj(h3) * sc.du_gain[k, l]
    obj.add_sq(cd * q, np.conj(channels.hdu[:, l]), alpha_du)
    _finish_constraint(con, state, channels, sc)
    return obj, con


def _finish_constraint(con, state, channels, scenario):
    # Re-anchor the constant so the model equals the exact sensing slack,
    # then normalize by the interference level at the anchor.
    num, den = mt.radar_terms(state, channels, scenario)
    con.c += (den - num / scenario.gamma_r) - con(con.t0)
    con.scale(1.0 / den)


# ---------------------------------------------------------------------------
# Per-antenna updates
# ---------------------------------------------------------------------------

def _box(scenario):
    half = scenario.half_region
    return np.full(2, -half), np.full(2, half)


def _mm_step(obj, con, scenario, others, relax=(1.0,)):
    """One MM step from the models' anchor; returns the new position or the anchor.

    Each factor in ``relax`` divides the bound curvatures; candidates are
    kept only if the exact models confirm them, and the unrelaxed bound
    (a true majorizer) is always among the candidates.
    """
    t0 = obj.t0
    upper = obj.surrogate()
    if upper.curvature <= 0:
        return t0.copy()
    halfspaces = []
    if others is not None and len(others):
        halfspaces = linearize_min_distance(t0, others, scenario.min_dist)
    halfspaces = halfspaces or [(np.zeros(2), 0.0)]
    cs = con.surrogate() if con is not None else None
    best, best_val = t0.copy(), obj(t0)
    for factor in relax:
        quad_ineq = None
        if cs is not None:
            quad_ineq = _relaxed(cs, factor)
        t, rep = solve_qcqp(_relaxed(upper, factor), quad_ineq, box=_box(scenario),
                            halfspaces=halfspaces)
        if rep.status != OPTIMAL or not _acceptable(t, obj, con, scenario, others):
            continue
        val = obj(t)
        if val < best_val:
            best, best_val = t, val
    return best


def _relaxed(surrogate, factor):
    s = QuadraticSurrogate(surrogate.curvature / factor, surrogate.linear,
                           surrogate.constant, surrogate.sense, surrogate.anchor)
    if s.curvature > 0:
        return s.as_quadratic()
    return ConvexQuadratic(0.0, -0.5 * s.linear, s.constant - s.linear @ s.anchor)


def _mm_move(obj, con, scenario, others=None, steps=1, relax=(1.0,)):
    """Up to ``steps`` MM steps on the same exact models, re-anchoring after each."""
    for _ in range(steps):
        t0 = obj.t0
        t = _mm_step(obj, con, scenario, others, relax)
        if np.array_equal(t, t0):
            break
        obj.reanchor(t)
        if con is not None:
            con.reanchor(t)
    return obj.t0.copy()


def _acceptable(t, obj, con, scenario, others):
    half = scenario.half_region
    if np.any(np.abs(t) > half * (1 + 1e-12)):
        return False
    if others is not None and len(others):
        if np.min(np.linalg.norm(np.atleast_2d(others) - t, axis=1)) < scenario.min_dist * (1 - 1e-12):
            return False
    base = obj(obj.t0)
    if obj(t) > base + 1e-12 * max(abs(base), 1e-300):
        return False
    if con is not None and con(t) > max(con(con.t0), 0.0) + 1e-10:
        return False
    return True


def update_tbs_ma(state, channels, scenario, layout, m, n, mm_steps=1, relax=(1.0,)):
    obj, con = tbs_models(state, channels, scenario, layout, m, n)
    others = np.delete(layout.tbs_ma[m], n, axis=0)
    out = layout.copy()
    out.tbs_ma[m, n] = _mm_move(obj, con, scenario, others, mm_steps, relax)
    return out


def update_rbs_ma(state, channels, scenario, layout, m, n, mm_steps=1, relax=(1.0,)):
    obj, con = rbs_models(state, channels, scenario, layout, m, n)
    others = np.delete(layout.rbs_ma[m], n, axis=0)
    out = layout.copy()
    out.rbs_ma[m, n] = _mm_move(obj, con, scenario, others, mm_steps, relax)
    return out


def dl_user_step(obj, half, factor=1.0):
    """Per-coordinate minimizer of the isotropic upper bound over ``[-half, half]``.

    With the bound written as ``psi ||t||^2 + q^T t`` each coordinate is
    ``clip(-q / (2 psi), -half, half)``; ``factor`` divides the curvature.
    """
    upper = obj.surrogate()
    if upper.curvature <= 0:
        return obj.t0.copy(), upper
    curvature = upper.curvature / factor
    psi = 0.5 * curvature
    q = upper.linear - curvature * upper.anchor
    return np.clip(-q / (2 * psi), -half, half), upper


def update_dl_user_ma(state, channels, scenario, layout, k, mm_steps=1, relax=(1.0,)):
    obj = dl_user_model(state, channels, scenario, layout, k)
    for _ in range(mm_steps):
        best, best_val = obj.t0, obj(obj.t0)
        for factor in relax:
            t, _ = dl_user_step(obj, scenario.half_region, factor)
            if _acceptable(t, obj, None, scenario, None) and obj(t) < best_val:
                best, best_val = t, obj(t)
        if np.array_equal(best, obj.t0):
            break
        obj.reanchor(best)
    out = layout.copy()
    out.dl_user[k] = obj.t0
    return out


def update_ul_user_ma(state, channels, scenario, layout, l, mm_steps=1, relax=(1.0,)):
    obj, con = ul_user_models(state, channels, scenario, layout, l)
    out = layout.copy()
    out.ul_user[l] = _mm_move(obj, con, scenario, None, mm_steps, relax)
    return out
