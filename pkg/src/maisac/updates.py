"""Non-position block updates: WMMSE auxiliaries, beamformers, UL powers and filters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics as mt
from .solvers import OPTIMAL, ConvexQuadratic, max_generalized_eig, solve_qcqp

CONSTRAINT_TOL = 1e-9


def update_auxiliaries(state, channels, scenario):
    """Set every (omega, beta) pair to its MMSE-optimal value."""
    s, total = mt.dl_terms(state, channels, scenario)
    own = np.diag(s)
    beta_d = own / total
    omega_d = total / (total - np.abs(own) ** 2)

    x, leak, noise = mt.ul_terms(state, channels, scenario)
    total_u = (np.abs(x) ** 2) @ state.q + leak + noise
    own_u = np.sqrt(state.q) * np.diag(x)
    beta_u = np.zeros_like(own_u)
    omega_u = np.ones_like(total_u)
    ok = total_u > 0
    beta_u[ok] = own_u[ok] / total_u[ok]
    omega_u[ok] = total_u[ok] / (total_u[ok] - np.abs(own_u[ok]) ** 2)
    return state.copy(beta_d=beta_d, omega_d=omega_d, beta_u=beta_u, omega_u=omega_u)


# ---------------------------------------------------------------------------
# Beamformers
# ---------------------------------------------------------------------------

@dataclass
class BeamformerSubproblem:
    """Quadratic pieces of the beamformer block.

    Objective (to minimize)::

        sum_k w_k^H A5 w_k - 2 Re{a1_k^H w_k} + sum_m tr(W_m^H A6_m W_m)

    Sensing constraint, with the target-echo term linearized at the anchor::

        sum_k w_k^H A11 w_k + sum_m tr(W_m^H A12_m W_m)
        - 2 Re{sum_k a2_k^H w_k + sum_m tr(A3_m^H W_m)} + c_lin + c_fixed <= 0
    """

    a1: np.ndarray  # (K_d, MN) linear objective terms
    a5: np.ndarray  # (MN, MN) comm-beam curvature
    a6: np.ndarray  # (M_t, N, N) radar-beam curvature per TBS
    a9: np.ndarray  # (MN, MN) target-echo form for comm beams
    a10: np.ndarray  # (M_t, N, N) target-echo form for radar beams
    a11: np.ndarray  # (MN, MN) clutter form for comm beams
    a12: np.ndarray  # (M_t, N, N) clutter form for radar beams
    a2: np.ndarray  # (K_d, MN) linearization of the comm target echo
    a3: np.ndarray  # (M_t, N, N) linearization of the radar target echo
    c_lin: float  # anchor target-echo power
    c_fixed: float  # UL leakage plus noise at the sensing filter
    w0: np.ndarray
    wr0: np.ndarray
    p_bs: np.ndarray

    @property
    def n_comm(self):
        return self.a1.size

    def pack(self, w, wr):
        return np.concatenate([w.reshape(-1), np.concatenate([x.reshape(-1, order="F") for x in wr])])

    def unpack(self, x):
        k, mn = self.a1.shape
        m, n, _ = self.a6.shape
        w = x[: k * mn].reshape(k, mn)
        wr = np.stack([x[k * mn + i * n * n: k * mn + (i + 1) * n * n].reshape(n, n, order="F")
                       for i in range(m)])
        return w, wr

    def _stack(self, comm, radar):
        k = self.a1.shape[0]
        n = self.a6.shape[1]
        parts = [comm] * k + [np.kron(np.eye(n), r) for r in radar]
        size = sum(p.shape[0] for p in parts)
        out = np.zeros((size, size), dtype=complex)
        pos = 0
        for p in parts:
            d = p.shape[0]
            out[pos:pos + d, pos:pos + d] = p
            pos += d
        return out

    def objective(self):
        lin = np.concatenate([self.a1.reshape(-1), np.zeros(self.a6.shape[0] * self.a6.shape[1] ** 2)])
        return ConvexQuadratic(self._stack(self.a5, self.a6), lin)

    def constraint(self, scale=1.0):
        lin = self.pack(self.a2, self.a3)
        return ConvexQuadratic(self._stack(self.a11, self.a12) / scale, lin / scale,
                               (self.c_lin + self.c_fixed) / scale)

    def balls(self):
        k, mn = self.a1.shape
        m, n, _ = self.a6.shape
        out = []
        for i in range(m):
            comm = np.concatenate([kk * mn + i * n + np.arange(n) for kk in range(k)])
            radar = k * mn + i * n * n + np.arange(n * n)
            out.append((np.concatenate([comm, radar]), np.sqrt(self.p_bs[i])))
        return out

    def objective_value(self, w, wr):
        val = np.sum(np.real(np.einsum("ki,ij,kj->k", np.conj(w), self.a5, w)))
        val -= 2 * np.sum(np.real(np.conj(self.a1) * w))
        val += np.sum(np.real(np.einsum("mik,mij,mjk->", np.conj(wr), self.a6, wr)))
        return float(val)

    def constraint_value(self, w, wr):
        return float(self.constraint().value(self.pack(w, wr)))


def _outer(a, weight):
    # sum_i weight_i a_i a_i^H for row-stacked a
    return (a.T * weight) @ np.conj(a)


def _block_outer(a, weight, m):
    blk = mt.blocks(a, m)  # (rows, M, N)
    return np.einsum("r,rmi,rmj->mij", weight, blk, np.conj(blk))


def build_beamformer_subproblem(state, channels, scenario):
    """Assemble the beamformer block around the current state."""
    m = scenario.m_t
    hd, gt, gr = channels.hd, channels.gt, channels.gr
    wd = scenario.mu_d * state.omega_d * np.abs(state.beta_d) ** 2
    wu = scenario.mu_u * state.omega_u * np.abs(state.beta_u) ** 2
    # weight of each scatterer's illumination in the UL surrogate MSEs
    ug = np.abs(np.conj(state.u_comm) @ gr.T) ** 2  # (K_u, J)
    kappa = scenario.rcs_var * (wu @ ug)
    a5 = _outer(hd, wd) + _outer(gt, kappa)
    a6 = _block_outer(hd, wd, m) + _block_outer(gt, kappa, m)
    a1 = (scenario.mu_d * state.omega_d * state.beta_d)[:, None] * hd

    u0g = np.abs(np.conj(state.u_sense) @ gr.T) ** 2 * scenario.rcs_var
    xi = u0g.copy()
    xi[0] = 0.0
    a11 = _outer(gt, xi)
    a12 = _block_outer(gt, xi, m)
    tgt = np.zeros_like(xi)
    tgt[0] = u0g[0] / scenario.gamma_r
    a9 = _outer(gt, tgt)
    a10 = _block_outer(gt, tgt, m)
    a2 = state.w @ a9.T  # rows a9 @ w_k (a9 Hermitian)
    a3 = np.einsum("mij,mjc->mic", a10, state.wr)
    c_lin = float(np.sum(np.real(np.conj(state.w) * a2)) + np.sum(np.real(np.conj(state.wr) * a3)))
    c_fixed = float(np.sum(state.q * np.abs(np.conj(state.u_sense) @ channels.hu.T) ** 2)
                    + scenario.noise_r * np.real(np.vdot(state.u_sense, state.u_sense)))
    return BeamformerSubproblem(a1=a1, a5=a5, a6=a6, a9=a9, a10=a10, a11=a11, a12=a12,
                                a2=a2, a3=a3, c_lin=c_lin, c_fixed=c_fixed,
                                w0=state.w.copy(), wr0=state.wr.copy(), p_bs=scenario.p_bs)


def update_beamformers(state, channels, scenario, sensing=True):
    """Solve the convexified beamformer block.

    Returns ``(state, ok)``; ``ok`` is False when the solver failed and the
    previous beamformers were kept. ``sensing=False`` drops the sensing
    constraint.
    """
    sub = build_beamformer_subproblem(state, channels, scenario)
    obj = sub.objective()
    con = sub.constraint(scale=sub.c_fixed) if sensing else None
    x, rep = solve_qcqp(obj, con, sub.balls())
    if rep.status != OPTIMAL:
        return state, False
    w, wr = sub.unpack(x)
    # Trim round-off so the per-TBS budgets hold exactly.
    used = mt.tbs_power(state.copy(w=w, wr=wr))
    scale = np.sqrt(np.minimum(1.0, scenario.p_bs / np.maximum(used, 1e-300)))
    w = (mt.blocks(w, scenario.m_t) * scale[None, :, None]).reshape(w.shape)
    wr = wr * scale[:, None, None]
    if sub.objective_value(w, wr) > sub.objective_value(sub.w0, sub.wr0):
        return state, False
    if sensing:
        # The subproblem constraint is normalized by c_fixed; allow round-off
        # from the power trim, far below the sensing-SINR tolerance.
        before = sub.constraint_value(sub.w0, sub.wr0) / sub.c_fixed
        after = sub.constraint_value(w, wr) / sub.c_fixed
        if after > max(before, 0.0) + CONSTRAINT_TOL:
            return state, False
    return state.copy(w=w, wr=wr), True


# ---------------------------------------------------------------------------
# UL powers
# ---------------------------------------------------------------------------

def power_coefficients(state, channels, scenario):
    """Return ``(b1, b2, b3, c22)`` of the power block in ``q``.

    Objective ``sum b1 q - b2 sqrt(q)``; sensing constraint ``sum b3 q <= c22``.
    """
    wd = scenario.mu_d * state.omega_d * np.abs(state.beta_d) ** 2
    wu = scenario.mu_u * state.omega_u * np.abs(state.beta_u) ** 2
    x = np.conj(state.u_comm) @ channels.hu.T  # (K_u filters, K_u users)
    b1 = wu @ np.abs(x) ** 2 + wd @ np.abs(channels.hdu) ** 2
    b2 = 2 * scenario.mu_u * state.omega_u * np.real(np.conj(state.beta_u) * np.diag(x))
    b3 = np.abs(np.conj(state.u_sense) @ channels.hu.T) ** 2
    num, den = mt.radar_terms(state, channels, scenario)
    c22 = num / scenario.gamma_r - (den - float(b3 @ state.q))
    return b1, b2, b3, c22


def update_powers(state, channels, scenario, sensing=True):
    """Optimize UL powers via ``s = sqrt(q)``, a box-constrained convex QP."""
    b1, b2, b3, c22 = power_coefficients(state, channels, scenario)
    obj = ConvexQuadratic(b1, 0.5 * b2)
    con = None
    if sensing:
        scale = max(abs(c22), float(b3 @ state.q), np.finfo(float).tiny)
        con = ConvexQuadratic(b3 / scale, np.zeros_like(b3), -c22 / scale)
    box = (np.zeros_like(b1), np.sqrt(scenario.p_ul))
    s, rep = solve_qcqp(obj, con, box=box)
    if rep.status != OPTIMAL:
        return state
    q_new = np.clip(s, 0.0, None) ** 2
    old = b1 @ state.q - b2 @ np.sqrt(state.q)
    if b1 @ q_new - b2 @ np.sqrt(q_new) > old:
        return state
    return state.copy(q=np.minimum(q_new, scenario.p_ul))


# ---------------------------------------------------------------------------
# Receive filters
# ---------------------------------------------------------------------------

def update_comm_filters(state, channels, scenario):
    """MMSE receive filter per UL user, scaled by the current ``beta``."""
    cov = mt.ul_covariance(state, channels, scenario)
    sol = np.linalg.solve(cov, channels.hu.T).T  # rows C^{-1} h_l
    u = np.zeros_like(state.u_comm)
    for l in range(scenario.k_u):
        if state.q[l] <= 0:
            continue
        b = state.beta_u[l]
        factor = np.sqrt(state.q[l]) / b if abs(b) > 0 else np.sqrt(state.q[l])
        u[l] = factor * sol[l]
    return state.copy(u_comm=u)


def sensing_matrices(state, channels, scenario):
    """Signal and interference-plus-noise covariances of the sensing output."""
    e = mt.illumination(state, channels)
    g0 = channels.gr[0]
    signal = scenario.rcs_var[0] * e[0] * np.outer(g0, np.conj(g0))
    interf = mt.ul_covariance(state, channels, scenario, include_target=False)
    return signal, interf


def update_sensing_filter(state, channels, scenario):
    """Principal generalized eigenvector of the sensing covariances."""
    signal, interf = sensing_matrices(state, channels, scenario)
    _, v = max_generalized_eig(signal, interf)
    if mt.sinr_radar(state, channels, scenario, v) < mt.sinr_radar(state, channels, scenario):
        return state
    return state.copy(u_sense=v)
