"""SINRs, rates and WMMSE surrogate values.

The radar probing streams of different TBSs are treated as mutually
independent, so every radar-beamformer power term is a sum of per-TBS
blocks ``sum_m ||a_m^H W^r_m||^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DecisionState:
    w: np.ndarray  # (K_d, M_t N_t) stacked comm beamformers
    wr: np.ndarray  # (M_t, N_t, N_t) radar beamformers
    q: np.ndarray  # (K_u,) UL powers
    u_comm: np.ndarray  # (K_u, M_r N_r) UL receive filters
    u_sense: np.ndarray  # (M_r N_r,) sensing filter
    omega_d: np.ndarray
    beta_d: np.ndarray
    omega_u: np.ndarray
    beta_u: np.ndarray

    def copy(self, **changes):
        data = {k: np.array(v, copy=True) for k, v in vars(self).items()}
        data.update(changes)
        return DecisionState(**data)


def blocks(vec, n_blocks):
    """Reshape a stacked vector (or a stack of them) into per-array blocks."""
    vec = np.asarray(vec)
    return vec.reshape(vec.shape[:-1] + (n_blocks, vec.shape[-1] // n_blocks))


def radar_power(a, wr):
    """``sum_m ||a_m^H W^r_m||^2`` for stacked vectors ``a`` of shape (..., M N)."""
    a_blk = blocks(a, wr.shape[0])
    rows = np.einsum("...mn,mnc->...mc", np.conj(a_blk), wr)
    return np.sum(np.abs(rows) ** 2, axis=(-2, -1))


def illumination(state, channels):
    """Power that each scatterer receives through all transmit beamformers."""
    comm = np.abs(np.conj(channels.gt) @ state.w.T) ** 2
    return comm.sum(axis=1) + radar_power(channels.gt, state.wr)


def tbs_power(state):
    """Per-TBS transmit power (comm plus radar)."""
    w_blk = blocks(state.w, state.wr.shape[0])
    return np.sum(np.abs(w_blk) ** 2, axis=(0, 2)) + np.sum(np.abs(state.wr) ** 2, axis=(1, 2))


# ---------------------------------------------------------------------------
# Downlink
# ---------------------------------------------------------------------------

def dl_terms(state, channels, scenario):
    """Return ``(S, total)``: ``S[k, i] = h_k^H w_i`` and the total received power."""
    s = np.conj(channels.hd) @ state.w.T
    total = (np.sum(np.abs(s) ** 2, axis=1) + radar_power(channels.hd, state.wr)
             + np.abs(channels.hdu) ** 2 @ state.q + scenario.noise_dl)
    return s, total


def sinr_dl_all(state, channels, scenario):
    s, total = dl_terms(state, channels, scenario)
    sig = np.abs(np.diag(s)) ** 2
    return sig / (total - sig)


def sinr_dl(state, channels, scenario, k):
    return float(sinr_dl_all(state, channels, scenario)[k])


# ---------------------------------------------------------------------------
# Uplink and sensing
# ---------------------------------------------------------------------------

def ul_covariance(state, channels, scenario, exclude=None, include_target=True):
    """Interference-plus-noise covariance seen by an RBS-side filter.

    ``exclude`` drops one UL user from the sum; ``include_target`` controls
    whether the scatterer with index 0 is part of it.
    """
    q = state.q.copy()
    if exclude is not None:
        q[exclude] = 0.0
    hu = channels.hu
    cov = (hu.T * q) @ np.conj(hu)
    strength = scenario.rcs_var * illumination(state, channels)
    if not include_target:
        strength = strength.copy()
        strength[0] = 0.0
    cov = cov + (channels.gr.T * strength) @ np.conj(channels.gr)
    cov = cov + scenario.noise_r * np.eye(hu.shape[1])
    return cov


def ul_terms(state, channels, scenario, u=None):
    """Return ``(X, leak, noise)`` for filters ``u`` (default: comm filters).

    ``X[i, l] = u_i^H h_{u,l}``, ``leak[i]`` is the echo leakage over all
    scatterers and ``noise[i] = sigma_r^2 ||u_i||^2``.
    """
    u = state.u_comm if u is None else np.atleast_2d(u)
    x = np.conj(u) @ channels.hu.T
    e = illumination(state, channels)
    leak = (np.abs(np.conj(u) @ channels.gr.T) ** 2) @ (scenario.rcs_var * e)
    noise = scenario.noise_r * np.sum(np.abs(u) ** 2, axis=1)
    return x, leak, noise


def sinr_ul_all(state, channels, scenario):
    x, leak, noise = ul_terms(state, channels, scenario)
    recv = np.abs(x) ** 2 * state.q[None, :]
    sig = np.diag(recv).copy()
    den = recv.sum(axis=1) - sig + leak + noise
    out = np.zeros_like(sig)
    np.divide(sig, den, out=out, where=den > 0)
    return out


def sinr_ul(state, channels, scenario, l):
    return float(sinr_ul_all(state, channels, scenario)[l])


def radar_terms(state, channels, scenario, u0=None):
    """Return ``(signal, interference_plus_noise)`` of the sensing output."""
    u0 = state.u_sense if u0 is None else u0
    e = illumination(state, channels)
    ug = np.abs(np.conj(u0) @ channels.gr.T) ** 2 * scenario.rcs_var * e
    signal = ug[0]
    ul = np.sum(state.q * np.abs(np.conj(u0) @ channels.hu.T) ** 2)
    den = ul + ug[1:].sum() + scenario.noise_r * np.real(np.vdot(u0, u0))
    return float(signal), float(den)


def sinr_radar(state, channels, scenario, u0=None):
    num, den = radar_terms(state, channels, scenario, u0)
    return num / den if den > 0 else 0.0


def sensing_slack(state, channels, scenario):
    """``interference - signal / Gamma_r``; nonpositive iff the sensing constraint holds."""
    num, den = radar_terms(state, channels, scenario)
    return den - num / scenario.gamma_r


# ---------------------------------------------------------------------------
# Rates and WMMSE surrogates
# ---------------------------------------------------------------------------

def sum_rate(state, channels, scenario):
    """Weighted sum rate in nats."""
    rd = np.log1p(sinr_dl_all(state, channels, scenario))
    ru = np.log1p(sinr_ul_all(state, channels, scenario))
    return float(scenario.mu_d @ rd + scenario.mu_u @ ru)


def mse_dl(state, channels, scenario):
    s, total = dl_terms(state, channels, scenario)
    b = state.beta_d
    return 1.0 - 2.0 * np.real(np.conj(b) * np.diag(s)) + np.abs(b) ** 2 * total


def mse_ul(state, channels, scenario):
    x, leak, noise = ul_terms(state, channels, scenario)
    total = (np.abs(x) ** 2) @ state.q + leak + noise
    b = state.beta_u
    own = np.sqrt(state.q) * np.diag(x)
    return 1.0 - 2.0 * np.real(np.conj(b) * own) + np.abs(b) ** 2 * total


def surrogate_rates_dl(state, channels, scenario):
    e = mse_dl(state, channels, scenario)
    return np.log(state.omega_d) - state.omega_d * e + 1.0


def surrogate_rates_ul(state, channels, scenario):
    e = mse_ul(state, channels, scenario)
    return np.log(state.omega_u) - state.omega_u * e + 1.0


def surrogate_rate_dl(state, channels, scenario, k):
    return float(surrogate_rates_dl(state, channels, scenario)[k])


def surrogate_rate_ul(state, channels, scenario, l):
    return float(surrogate_rates_ul(state, channels, scenario)[l])


def surrogate_objective(state, channels, scenario):
    """Weighted sum of the WMMSE surrogate rates."""
    return float(scenario.mu_d @ surrogate_rates_dl(state, channels, scenario)
                 + scenario.mu_u @ surrogate_rates_ul(state, channels, scenario))
