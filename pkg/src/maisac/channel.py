"""Field-response channel model, radar steering vectors and scenario generation.

Positions are expressed in wavelengths. An angle pair is stored as the last
axis of an array, ``[..., 0]`` being the elevation and ``[..., 1]`` the
azimuth, both in radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Elementary responses
# ---------------------------------------------------------------------------

def directions(angles):
    """Map angle pairs ``(theta, phi)`` to planar direction vectors.

    Returns an array with the same leading shape and a trailing axis of
    length 2 holding ``[cos(theta) sin(phi), sin(theta)]``.
    """
    angles = np.asarray(angles, dtype=float)
    theta, phi = angles[..., 0], angles[..., 1]
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta)], axis=-1)


def phase_diff(pos, ang):
    """Propagation-distance difference of a point relative to the origin.

    Parameters
    ----------
    pos : array_like, shape (2,)
        Antenna position in wavelengths.
    ang : array_like, shape (..., 2)
        Angle pairs ``(theta, phi)``.
    """
    return directions(ang) @ np.asarray(pos, dtype=float)


def frv(pos, departures, wavelength=1.0):
    """Field-response vector of one antenna over a set of paths."""
    return np.exp(1j * TWO_PI / wavelength * phase_diff(pos, departures))


def frm(positions, departures, wavelength=1.0):
    """Field-response matrix: column ``n`` is ``frv(positions[n], departures)``."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    return np.exp(1j * TWO_PI / wavelength * (directions(departures) @ positions.T))


def steering(positions, ang, fading, wavelength=1.0):
    """Single-path steering vector ``fading * exp(j 2 pi / lambda p_n . a)``."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    return fading * np.exp(1j * TWO_PI / wavelength * (positions @ directions(ang)))


# ---------------------------------------------------------------------------
# Containers
# ---------------------------------------------------------------------------

@dataclass
class PositionLayout:
    """Coordinates of every movable antenna, in wavelengths."""

    tbs_ma: np.ndarray  # (M_t, N_t, 2)
    rbs_ma: np.ndarray  # (M_r, N_r, 2)
    dl_user: np.ndarray  # (K_d, 2)
    ul_user: np.ndarray  # (K_u, 2)

    def copy(self):
        return PositionLayout(self.tbs_ma.copy(), self.rbs_ma.copy(),
                              self.dl_user.copy(), self.ul_user.copy())


@dataclass
class Scenario:
    """A complete problem instance.

    Path arrays carry one entry per path on their second-to-last axis. For
    the TBS links ``dl_tx`` are the angles seen from the TBS array and
    ``dl_rx`` those seen from the user; the RBS and user-to-user links follow
    the same transmit/receive convention.
    """

    m_t: int
    m_r: int
    n_t: int
    n_r: int
    k_d: int
    k_u: int
    k_t: int
    dl_tx: np.ndarray  # (M_t, K_d, L, 2)
    dl_rx: np.ndarray  # (M_t, K_d, L, 2)
    dl_gain: np.ndarray  # (M_t, K_d, L)
    ul_tx: np.ndarray  # (M_r, K_u, L, 2)  at the RBS array
    ul_rx: np.ndarray  # (M_r, K_u, L, 2)  at the UL user
    ul_gain: np.ndarray  # (M_r, K_u, L)
    du_tx: np.ndarray  # (K_d, K_u, L, 2)  at the UL user
    du_rx: np.ndarray  # (K_d, K_u, L, 2)  at the DL user
    du_gain: np.ndarray  # (K_d, K_u, L)
    tbs_radar: np.ndarray  # (M_t, K_t+1, 2); index 0 is the target
    rbs_radar: np.ndarray  # (M_r, K_t+1, 2)
    fading_t: np.ndarray  # (M_t, K_t+1)
    fading_r: np.ndarray  # (M_r, K_t+1)
    rcs_var: np.ndarray  # (K_t+1,)
    noise_dl: np.ndarray  # (K_d,) watts
    noise_r: float
    p_bs: np.ndarray  # (M_t,) watts
    p_ul: np.ndarray  # (K_u,) watts
    gamma_r: float  # linear
    mu_d: np.ndarray
    mu_u: np.ndarray
    region: float = 2.0
    min_dist: float = 0.5
    wavelength: float = 1.0

    @property
    def half_region(self):
        return 0.5 * self.region


@dataclass
class ChannelSet:
    """Stacked channels for one layout.

    ``hd[k]`` is the stacked DL channel, ``hu[l]`` the stacked UL channel,
    ``hdu[k, l]`` the UL-to-DL user channel and ``gt[j]``/``gr[j]`` the
    stacked TBS/RBS steering vectors towards scatterer ``j``.
    """

    hd: np.ndarray  # (K_d, M_t N_t)
    hu: np.ndarray  # (K_u, M_r N_r)
    hdu: np.ndarray  # (K_d, K_u)
    gt: np.ndarray  # (K_t+1, M_t N_t)
    gr: np.ndarray  # (K_t+1, M_r N_r)


# ---------------------------------------------------------------------------
# Channel assembly
# ---------------------------------------------------------------------------

def _row(rx_resp, gain, tx_frm):
    # (h_rx)^H diag(gain) H_tx
    return (np.conj(rx_resp) * gain) @ tx_frm


def assemble_dl_channel(layout, scenario, m, k):
    """Channel vector between TBS ``m`` and DL user ``k`` (length N_t)."""
    lam = scenario.wavelength
    rx = frv(layout.dl_user[k], scenario.dl_rx[m, k], lam)
    tx = frm(layout.tbs_ma[m], scenario.dl_tx[m, k], lam)
    return np.conj(_row(rx, scenario.dl_gain[m, k], tx))


def assemble_ul_channel(layout, scenario, p, l):
    """Channel vector between RBS ``p`` and UL user ``l`` (length N_r)."""
    lam = scenario.wavelength
    rx = frv(layout.ul_user[l], scenario.ul_rx[p, l], lam)
    tx = frm(layout.rbs_ma[p], scenario.ul_tx[p, l], lam)
    return np.conj(_row(rx, scenario.ul_gain[p, l], tx))


def assemble_du_channel(layout, scenario, k, l):
    """Scalar channel from UL user ``l`` to DL user ``k``."""
    lam = scenario.wavelength
    rx = frv(layout.dl_user[k], scenario.du_rx[k, l], lam)
    tx = frv(layout.ul_user[l], scenario.du_tx[k, l], lam)
    return np.conj(np.sum(np.conj(rx) * scenario.du_gain[k, l] * tx))


def _exp_phase(pos, dirs, lam):
    # pos (..., 2), dirs (..., L, 2) -> (..., L) unit-modulus responses
    return np.exp(1j * TWO_PI / lam * np.einsum("...lc,...c->...l", dirs, pos))


def stack_channels(layout, scenario):
    """Assemble every channel for ``layout`` in vectorized form."""
    sc = scenario
    lam = sc.wavelength
    # DL: rx FRV per (m, k, l), tx FRM per (m, k, l, n)
    dl_rx = _exp_phase(layout.dl_user[None, :, :], directions(sc.dl_rx), lam)
    dl_tx = np.exp(1j * TWO_PI / lam * np.einsum(
        "mklc,mnc->mkln", directions(sc.dl_tx), layout.tbs_ma))
    rows = np.einsum("mkl,mkln->kmn", np.conj(dl_rx) * sc.dl_gain, dl_tx)
    hd = np.conj(rows).reshape(sc.k_d, sc.m_t * sc.n_t)

    ul_rx = _exp_phase(layout.ul_user[None, :, :], directions(sc.ul_rx), lam)
    ul_tx = np.exp(1j * TWO_PI / lam * np.einsum(
        "mklc,mnc->mkln", directions(sc.ul_tx), layout.rbs_ma))
    rows = np.einsum("mkl,mkln->kmn", np.conj(ul_rx) * sc.ul_gain, ul_tx)
    hu = np.conj(rows).reshape(sc.k_u, sc.m_r * sc.n_r)

    du_rx = _exp_phase(layout.dl_user[:, None, :], directions(sc.du_rx), lam)
    du_tx = _exp_phase(layout.ul_user[None, :, :], directions(sc.du_tx), lam)
    hdu = np.conj(np.sum(np.conj(du_rx) * sc.du_gain * du_tx, axis=-1))

    gt = sc.fading_t[:, :, None] * np.exp(1j * TWO_PI / lam * np.einsum(
        "mjc,mnc->mjn", directions(sc.tbs_radar), layout.tbs_ma))
    gr = sc.fading_r[:, :, None] * np.exp(1j * TWO_PI / lam * np.einsum(
        "mjc,mnc->mjn", directions(sc.rbs_radar), layout.rbs_ma))
    gt = gt.transpose(1, 0, 2).reshape(sc.k_t + 1, sc.m_t * sc.n_t)
    gr = gr.transpose(1, 0, 2).reshape(sc.k_t + 1, sc.m_r * sc.n_r)
    return ChannelSet(hd=hd, hu=hu, hdu=hdu, gt=gt, gr=gr)


# ---------------------------------------------------------------------------
# Scenario generation
# ---------------------------------------------------------------------------

def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass
class ScenarioConfig:
    """Scenario parameters; power levels in dBm and ratios in dB."""

    m_t: int = 2
    m_r: int = 2
    n_t: int = 4
    n_r: int = 4
    k_d: int = 3
    k_u: int = 3
    k_t: int = 2
    paths_L: int = 6
    tx_power_dbm: float = 30.0
    ul_power_dbm: float = 20.0
    noise_dbm: float = -80.0
    gamma_r_db: float = 3.0
    c0_db: float = -40.0
    pathloss_exp: float = 2.8
    radius_m: float = 70.0
    region: float = 2.0
    min_dist: float = 0.5
    wavelength: float = 1.0
    rcs_target_db: float = -100.0
    rcs_clutter_db: float = -100.0
    weights_dl: list | None = None
    weights_ul: list | None = None

    _INT_FIELDS = ("m_t", "m_r", "n_t", "n_r", "k_d", "k_u", "paths_L")

    def __post_init__(self):
        for name in self._INT_FIELDS:
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            setattr(self, name, int(value))
        if int(self.k_t) != self.k_t or self.k_t < 0:
            raise ValueError(f"k_t must be a nonnegative integer, got {self.k_t!r}")
        self.k_t = int(self.k_t)
        for name in ("region", "min_dist", "wavelength", "radius_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_t > 1 or self.n_r > 1:
            cols = int(np.ceil(np.sqrt(max(self.n_t, self.n_r))))
            if self.region / cols < self.min_dist:
                raise ValueError("region too small for the requested arrays at min_dist")

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _uniform_angles(rng, shape):
    return rng.uniform(-np.pi / 2, np.pi / 2, size=shape + (2,))


def _disc_points(rng, count, radius):
    r = radius * np.sqrt(rng.uniform(size=count))
    a = rng.uniform(0.0, TWO_PI, size=count)
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


def _path_gains(rng, dist, c0, alpha, n_paths):
    c2 = c0 * np.maximum(dist, 1.0) ** (-alpha)
    scale = np.sqrt(c2 / n_paths)[..., None] / np.sqrt(2.0)
    shape = dist.shape + (n_paths,)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _draw_paths(seed_seq, n_paths, shapes):
    """Per-path angles and unit-variance gains, stacked on a trailing path axis.

    Path ``p`` has its own stream, so its draws do not depend on ``n_paths``.
    Returns ``(angles, gains)`` lists ordered like ``shapes``.
    """
    angles = [[] for _ in shapes]
    gains = [[] for _ in shapes]
    for child in seed_seq.spawn(n_paths):
        rng = np.random.default_rng(child)
        for i, shape in enumerate(shapes):
            angles[i].append(rng.uniform(-np.pi / 2, np.pi / 2, size=shape + (2, 2)))
        for i, shape in enumerate(shapes):
            g = rng.standard_normal(shape + (2,))
            gains[i].append((g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0))
    return ([np.stack(a, axis=-3) for a in angles], [np.stack(g, axis=-1) for g in gains])


def path_power(c0_db, alpha, dist):
    """Mean total power ``C0 d^-alpha`` of a link at distance ``dist`` metres."""
    return db_to_linear(c0_db) * np.asarray(dist, dtype=float) ** (-alpha)


def generate_scenario(config, seed):
    """Draw a random instance.

    Nodes are dropped uniformly in a disc; every communication link gets
    ``paths_L`` paths with i.i.d. uniform angles and diagonal responses of
    total mean power ``C0 d^-alpha``. Radar links are single-path with
    unit-modulus fading of uniform phase. Geometry, radar and each path index
    draw from separate streams, so changing powers, thresholds or the number
    of paths leaves the remaining draws untouched.
    """
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(dict(config))
    ss = np.random.SeedSequence(int(seed))
    geo_ss, path_ss, radar_ss = ss.spawn(3)
    geo_rng, radar_rng = np.random.default_rng(geo_ss), np.random.default_rng(radar_ss)

    m_t, m_r, k_d, k_u, k_t, n_paths = cfg.m_t, cfg.m_r, cfg.k_d, cfg.k_u, cfg.k_t, cfg.paths_L
    tbs = _disc_points(geo_rng, m_t, cfg.radius_m)
    rbs = _disc_points(geo_rng, m_r, cfg.radius_m)
    dl = _disc_points(geo_rng, k_d, cfg.radius_m)
    ul = _disc_points(geo_rng, k_u, cfg.radius_m)

    def dist(a, b):
        return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)

    c0 = float(db_to_linear(cfg.c0_db))
    (dl_ang, ul_ang, du_ang), (dl_g, ul_g, du_g) = _draw_paths(
        path_ss, n_paths, [(m_t, k_d), (m_r, k_u), (k_d, k_u)])
    # Angle arrays are (..., path, tx/rx, 2).
    dl_tx, dl_rx = dl_ang[..., 0, :], dl_ang[..., 1, :]
    ul_tx, ul_rx = ul_ang[..., 0, :], ul_ang[..., 1, :]
    du_tx, du_rx = du_ang[..., 0, :], du_ang[..., 1, :]

    def scaled(g, d):
        return np.sqrt(c0 * np.maximum(d, 1.0) ** (-cfg.pathloss_exp) / n_paths)[..., None] * g

    dl_gain = scaled(dl_g, dist(tbs, dl))
    ul_gain = scaled(ul_g, dist(rbs, ul))
    du_gain = scaled(du_g, dist(dl, ul))

    tbs_radar = _uniform_angles(radar_rng, (m_t, k_t + 1))
    rbs_radar = _uniform_angles(radar_rng, (m_r, k_t + 1))
    fading_t = np.exp(1j * radar_rng.uniform(0.0, TWO_PI, size=(m_t, k_t + 1)))
    fading_r = np.exp(1j * radar_rng.uniform(0.0, TWO_PI, size=(m_r, k_t + 1)))
    rcs = np.full(k_t + 1, float(db_to_linear(cfg.rcs_clutter_db)))
    rcs[0] = float(db_to_linear(cfg.rcs_target_db))

    total = k_d + k_u
    mu_d = np.full(k_d, 1.0 / total) if cfg.weights_dl is None else np.asarray(cfg.weights_dl, float)
    mu_u = np.full(k_u, 1.0 / total) if cfg.weights_ul is None else np.asarray(cfg.weights_ul, float)
    if mu_d.shape != (k_d,) or mu_u.shape != (k_u,):
        raise ValueError("weights must have one entry per user")
    if np.any(mu_d <= 0) or np.any(mu_u <= 0) or not np.isclose(mu_d.sum() + mu_u.sum(), 1.0):
        raise ValueError("weights must be positive and sum to one")

    return Scenario(
        m_t=m_t, m_r=m_r, n_t=cfg.n_t, n_r=cfg.n_r, k_d=k_d, k_u=k_u, k_t=k_t,
        dl_tx=dl_tx, dl_rx=dl_rx, dl_gain=dl_gain,
        ul_tx=ul_tx, ul_rx=ul_rx, ul_gain=ul_gain,
        du_tx=du_tx, du_rx=du_rx, du_gain=du_gain,
        tbs_radar=tbs_radar, rbs_radar=rbs_radar, fading_t=fading_t, fading_r=fading_r,
        rcs_var=rcs,
        noise_dl=np.full(k_d, float(dbm_to_watt(cfg.noise_dbm))),
        noise_r=float(dbm_to_watt(cfg.noise_dbm)),
        p_bs=np.full(m_t, float(dbm_to_watt(cfg.tx_power_dbm))),
        p_ul=np.full(k_u, float(dbm_to_watt(cfg.ul_power_dbm))),
        gamma_r=float(db_to_linear(cfg.gamma_r_db)),
        mu_d=mu_d, mu_u=mu_u,
        region=float(cfg.region), min_dist=float(cfg.min_dist),
        wavelength=float(cfg.wavelength),
    )
