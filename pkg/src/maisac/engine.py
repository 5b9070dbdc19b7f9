"""Initialization and the block-coordinate-ascent outer loop."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from . import metrics as mt
from . import position as pos
from . import updates as up

SCHEMES = ("joint-ma", "bs-ma", "user-ma", "rand-ma", "fpa")
MAX_RESTORATION_STEPS = 20


class InfeasibleScenario(RuntimeError):
    """Raised when no initial point meets the sensing constraint."""


@dataclass
class EngineConfig:
    epsilon: float = 1e-3
    max_outer: int = 50
    scheme: str = "joint-ma"
    restoration: bool = True
    mm_steps: int = 1
    curvature_relax: tuple = (64.0, 16.0, 4.0, 1.0)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.max_outer) < 1:
            raise ValueError("max_outer must be at least 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if int(self.mm_steps) < 1:
            raise ValueError("mm_steps must be at least 1")
        self.max_outer = int(self.max_outer)
        self.mm_steps = int(self.mm_steps)
        self.curvature_relax = tuple(float(f) for f in self.curvature_relax)
        if not self.curvature_relax or min(self.curvature_relax) < 1.0:
            raise ValueError("curvature_relax factors must be at least 1")
        if 1.0 not in self.curvature_relax:
            # The unrelaxed bound is what guarantees a non-increasing step.
            self.curvature_relax += (1.0,)

    @property
    def moves_bs(self):
        return self.scheme in ("joint-ma", "bs-ma")

    @property
    def moves_users(self):
        return self.scheme in ("joint-ma", "user-ma")


@dataclass
class IterateLog:
    """Per-iteration record of one run; index ``i`` is outer iteration ``i + 1``."""

    initial_sum_rate: float = 0.0
    sum_rate: list = field(default_factory=list)
    sinr_radar: list = field(default_factory=list)
    power_residual: list = field(default_factory=list)
    distance_residual: list = field(default_factory=list)
    sensing_residual: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    converged: bool = False
    layout: ch.PositionLayout | None = None
    state: mt.DecisionState | None = None

    @property
    def iterations(self):
        return len(self.sum_rate)

    @property
    def final_sum_rate(self):
        return self.sum_rate[-1] if self.sum_rate else self.initial_sum_rate

    def append(self, rate, sinr, residuals, ms, skipped):
        self.sum_rate.append(rate)
        self.sinr_radar.append(sinr)
        self.power_residual.append(residuals[0])
        self.distance_residual.append(residuals[1])
        self.sensing_residual.append(residuals[2])
        self.wall_ms.append(ms)
        self.skipped.append(tuple(skipped))


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _grid(count, region, min_dist, rng=None):
    """Cell-centred grid on the square region, optionally jittered within cells."""
    ncols = math.ceil(math.sqrt(count))
    nrows = math.ceil(count / ncols)
    sx, sy = region / ncols, region / nrows
    if min(sx, sy) < min_dist:
        raise ValueError(f"{count} antennas do not fit the region at spacing {min_dist}")
    idx = np.arange(count)
    pts = np.column_stack([-region / 2 + sx * (idx % ncols + 0.5),
                           -region / 2 + sy * (idx // ncols + 0.5)])
    if rng is not None:
        jitter = np.array([sx - min_dist, sy - min_dist]) / 2
        pts = pts + rng.uniform(-1.0, 1.0, size=pts.shape) * jitter
    return pts


def _half_wavelength_grid(count, wavelength):
    ncols = math.ceil(math.sqrt(count))
    idx = np.arange(count)
    step = wavelength / 2
    cols, rows = idx % ncols, idx // ncols
    nrows = rows.max() + 1
    return np.column_stack([(cols - (ncols - 1) / 2) * step, (rows - (nrows - 1) / 2) * step])


def initial_layout(scenario, scheme, seed):
    """Starting positions: λ/2 grid for ``fpa``, jittered cell grid otherwise."""
    sc = scenario
    if scheme == "fpa":
        return ch.PositionLayout(
            np.stack([_half_wavelength_grid(sc.n_t, sc.wavelength)] * sc.m_t),
            np.stack([_half_wavelength_grid(sc.n_r, sc.wavelength)] * sc.m_r),
            np.zeros((sc.k_d, 2)), np.zeros((sc.k_u, 2)))
    rng = np.random.default_rng([int(seed), 0x4D41])
    tbs = np.stack([_grid(sc.n_t, sc.region, sc.min_dist, rng) for _ in range(sc.m_t)])
    rbs = np.stack([_grid(sc.n_r, sc.region, sc.min_dist, rng) for _ in range(sc.m_r)])
    dl = np.stack([_grid(1, sc.region, sc.min_dist, rng)[0] for _ in range(sc.k_d)])
    ul = np.stack([_grid(1, sc.region, sc.min_dist, rng)[0] for _ in range(sc.k_u)])
    return ch.PositionLayout(tbs, rbs, dl, ul)


def _unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def initial_beamformers(scenario, channels, radar_share):
    """Matched comm beams plus target-aligned radar beams at full per-TBS power."""
    sc = scenario
    hd = mt.blocks(channels.hd, sc.m_t)
    gt = mt.blocks(channels.gt[0], sc.m_t)
    w = np.zeros((sc.k_d, sc.m_t, sc.n_t), dtype=complex)
    wr = np.zeros((sc.m_t, sc.n_t, sc.n_t), dtype=complex)
    for m in range(sc.m_t):
        p_comm = sc.p_bs[m] * (1 - radar_share) / sc.k_d
        for k in range(sc.k_d):
            w[k, m] = np.sqrt(p_comm) * _unit(hd[k, m])
        v = _unit(gt[m])
        wr[m] = np.sqrt(sc.p_bs[m] * radar_share) * np.outer(v, np.conj(v))
    return w.reshape(sc.k_d, -1), wr


def initial_state(scenario, channels, radar_share=None, q_scale=0.5):
    sc = scenario
    if radar_share is None:
        radar_share = 1.0 / (sc.k_d + 1)
    w, wr = initial_beamformers(sc, channels, radar_share)
    state = mt.DecisionState(
        w=w, wr=wr, q=q_scale * sc.p_ul.copy(),
        u_comm=channels.hu.copy(), u_sense=_unit(channels.gr[0]),
        omega_d=np.ones(sc.k_d), beta_d=np.zeros(sc.k_d, dtype=complex),
        omega_u=np.ones(sc.k_u), beta_u=np.zeros(sc.k_u, dtype=complex))
    state = up.update_sensing_filter(state, channels, sc)
    state = up.update_auxiliaries(state, channels, sc)
    state = up.update_comm_filters(state, channels, sc)
    return up.update_auxiliaries(state, channels, sc)


def initialize(scenario, config, seed):
    """Feasible starting point; raises ``InfeasibleScenario`` when restoration fails."""
    layout = initial_layout(scenario, config.scheme, seed)
    channels = ch.stack_channels(layout, scenario)
    share = 1.0 / (scenario.k_d + 1)
    q_scale = 0.5
    state = initial_state(scenario, channels, share, q_scale)
    steps = 0
    while mt.sensing_slack(state, channels, scenario) > 0:
        if not config.restoration or steps == MAX_RESTORATION_STEPS:
            raise InfeasibleScenario(
                f"sensing SINR {mt.sinr_radar(state, channels, scenario):.3g} "
                f"below target {scenario.gamma_r:.3g} after {steps} restoration steps")
        # Shift power toward the radar beams and quiet the UL users.
        share = 1 - (1 - share) / 2
        q_scale /= 2
        state = initial_state(scenario, channels, share, q_scale)
        steps += 1
    return layout, state


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------

def residuals(layout, state, channels, scenario):
    """``(power, distance, sensing)`` constraint violations (0 when feasible)."""
    sc = scenario
    power = max(0.0, float(np.max(mt.tbs_power(state) - sc.p_bs)),
                float(np.max(state.q - sc.p_ul)), float(-np.min(state.q)))
    dist = 0.0
    for arr in (layout.tbs_ma, layout.rbs_ma):
        for group in arr:
            d = np.linalg.norm(group[:, None, :] - group[None, :, :], axis=-1)
            np.fill_diagonal(d, np.inf)
            dist = max(dist, sc.min_dist - float(d.min()))
    for pts in (layout.tbs_ma, layout.rbs_ma, layout.dl_user, layout.ul_user):
        dist = max(dist, float(np.max(np.abs(pts))) - sc.half_region)
    sensing = max(0.0, sc.gamma_r - mt.sinr_radar(state, channels, sc))
    return power, max(dist, 0.0), sensing


def _position_sweep(layout, state, channels, scenario, config):
    sc = scenario
    moves = []
    if config.moves_bs:
        moves += [(pos.update_tbs_ma, m, n) for m in range(sc.m_t) for n in range(sc.n_t)]
        moves += [(pos.update_rbs_ma, m, n) for m in range(sc.m_r) for n in range(sc.n_r)]
    if config.moves_users:
        moves += [(pos.update_dl_user_ma, k) for k in range(sc.k_d)]
        moves += [(pos.update_ul_user_ma, l) for l in range(sc.k_u)]
    for fn, *idx in moves:
        new = fn(state, channels, sc, layout, *idx, mm_steps=config.mm_steps,
                 relax=config.curvature_relax)
        if not _same_layout(new, layout):
            layout = new
            channels = ch.stack_channels(layout, sc)
    return layout, channels


def _same_layout(a, b):
    return all(np.array_equal(x, y) for x, y in
               ((a.tbs_ma, b.tbs_ma), (a.rbs_ma, b.rbs_ma),
                (a.dl_user, b.dl_user), (a.ul_user, b.ul_user)))


def sweep(layout, state, channels, scenario, config):
    """One pass over every block; returns ``(layout, state, channels, skipped)``."""
    skipped = []
    state = up.update_auxiliaries(state, channels, scenario)
    state, ok = up.update_beamformers(state, channels, scenario)
    if not ok:
        skipped.append("beamformers")
    state = up.update_comm_filters(state, channels, scenario)
    state = up.update_sensing_filter(state, channels, scenario)
    layout, channels = _position_sweep(layout, state, channels, scenario, config)
    state = up.update_powers(state, channels, scenario)
    return layout, state, channels, skipped


def run(scenario, config=None, seed=0, timing=True):
    """Run the outer loop from ``initialize`` until the relative change drops below epsilon."""
    config = config or EngineConfig()
    layout, state = initialize(scenario, config, seed)
    channels = ch.stack_channels(layout, scenario)
    log = IterateLog(initial_sum_rate=mt.sum_rate(state, channels, scenario))
    prev = log.initial_sum_rate
    for _ in range(config.max_outer):
        start = time.perf_counter() if timing else 0.0
        cand = sweep(layout, state, channels, scenario, config)
        rate = mt.sum_rate(cand[1], cand[2], scenario)
        if rate >= prev:
            layout, state, channels, skipped = cand
        else:
            # Round-off can undo an ascent step; keep the previous iterate.
            rate, skipped = prev, cand[3] + ["reverted"]
        ms = (time.perf_counter() - start) * 1e3 if timing else float("nan")
        log.append(rate, mt.sinr_radar(state, channels, scenario),
                   residuals(layout, state, channels, scenario), ms, skipped)
        change = abs(rate - prev) / abs(prev) if prev != 0 else math.inf
        prev = rate
        if change <= config.epsilon:
            log.converged = True
            break
    log.layout, log.state = layout, state
    return log
