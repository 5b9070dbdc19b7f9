"""Acceptance suite: one test and one PASS/FAIL verdict per criterion.

Monte-Carlo runs are memoized so that criteria sharing a configuration reuse
the same trials (the default scenario at Gamma_r = 3 dB serves the
convergence, antenna-count, path-count and sensing-trade-off checks).
"""
import math
import subprocess
import sys
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy import optimize, stats

from factories import crandn, feasible_instance, instance
from maisac import channel as ch
from maisac import engine as en
from maisac import metrics as mt
from maisac import position as pos
from maisac import solvers as so
from maisac import updates as up

SEEDS = range(20)
SCHEMES = en.SCHEMES
pytestmark = pytest.mark.slow


@lru_cache(maxsize=None)
def trial(scheme, seed, **overrides):
    overrides = dict(overrides)
    scenario = ch.generate_scenario(ch.ScenarioConfig(**overrides), seed)
    start = time.perf_counter()
    log = en.run(scenario, en.EngineConfig(scheme=scheme), seed, timing=False)
    return log, time.perf_counter() - start, scenario.gamma_r


def mean_rate(scheme, **overrides):
    return float(np.mean([trial(scheme, s, **overrides)[0].final_sum_rate for s in SEEDS]))


# ---------------------------------------------------------------------------
# Criteria on full runs
# ---------------------------------------------------------------------------

def test_criterion_01_monotone_convergence(verdict):
    worst_drop, per_seed_time, failures = 0.0, [], []
    converged = {}
    for scheme in SCHEMES:
        count = 0
        for seed in SEEDS:
            log, elapsed, _ = trial(scheme, seed)
            seq = np.array([log.initial_sum_rate] + log.sum_rate)
            worst_drop = max(worst_drop, float(-np.min(np.diff(seq))))
            count += log.converged and log.iterations <= 30
        converged[scheme] = count
    for seed in SEEDS:
        per_seed_time.append(sum(trial(s, seed)[1] for s in SCHEMES))
    monotone = worst_drop <= 1e-6
    fast = all(c >= 18 for c in converged.values())
    budget = max(per_seed_time) <= 60.0
    if not monotone:
        failures.append("monotonicity")
    if not fast:
        failures.append("convergence count")
    if not budget:
        failures.append("runtime")
    ok = verdict("C1 monotone convergence", not failures,
                 f"max drop {worst_drop:.2e}; converged<=30 per scheme {converged}; "
                 f"max time per seed (all schemes) {max(per_seed_time):.1f}s")
    assert ok, f"failed: {failures}"


def test_criterion_02_scheme_ordering(verdict):
    m = {s: mean_rate(s, tx_power_dbm=20.0) for s in SCHEMES}
    gap = 0.05 * m["fpa"]
    pairs = [("joint-ma", "bs-ma"), ("joint-ma", "user-ma"), ("bs-ma", "rand-ma"),
             ("user-ma", "rand-ma"), ("joint-ma", "fpa")]
    diffs = {f"{a}-{b}": m[a] - m[b] for a, b in pairs}
    ok = all(d >= gap for d in diffs.values())
    detail = ", ".join(f"{k} {v:.3f}" for k, v in m.items())
    detail += "; gaps " + ", ".join(f"{k} {v:.3f}" for k, v in diffs.items()) + f" (need >= {gap:.3f})"
    assert verdict("C2 scheme ordering", ok, detail)


def test_criterion_03_power_trend(verdict):
    low, high = mean_rate("joint-ma", tx_power_dbm=10.0), mean_rate("joint-ma", tx_power_dbm=35.0)
    ok = high >= 1.4 * low
    assert verdict("C3 power trend", ok, f"10 dBm {low:.3f}, 35 dBm {high:.3f}, ratio {high / low:.3f}")


@pytest.mark.parametrize("axis", ["n_t", "n_r", "paths_L"])
def test_criterion_04_size_trends(axis, verdict):
    values = [2, 4, 6, 8]
    means = [mean_rate("joint-ma", **{axis: v}) for v in values]
    rho = stats.spearmanr(values, means).statistic
    ok = rho >= 0.9
    assert verdict(f"C4 trend in {axis}", ok,
                   "means " + ", ".join(f"{v}:{x:.3f}" for v, x in zip(values, means)) + f"; spearman {rho:.2f}")


def test_criterion_05_sensing_tradeoff(verdict):
    gammas = [0.0, 1.0, 3.0, 5.0]
    means, worst = [], math.inf
    for g in gammas:
        rates = []
        for seed in SEEDS:
            log, _, gamma_lin = trial("joint-ma", seed, gamma_r_db=g)
            rates.append(log.final_sum_rate)
            worst = min(worst, min(s - gamma_lin for s in log.sinr_radar))
        means.append(float(np.mean(rates)))
    non_increasing = all(b <= a for a, b in zip(means, means[1:]))
    ok = non_increasing and worst >= -1e-6
    assert verdict("C5 sensing trade-off", ok,
                   "means " + ", ".join(f"{g:g} dB:{x:.4f}" for g, x in zip(gammas, means))
                   + f"; min(sinr - Gamma) {worst:.3e}")


# ---------------------------------------------------------------------------
# Property and oracle criteria
# ---------------------------------------------------------------------------

def test_criterion_06_wmmse_tightness(verdict):
    worst = 0.0
    for i in range(100):
        sc, _, chn, state = instance(1000 + i, tx_power_dbm=float(10 + i % 26))
        state = up.update_auxiliaries(state, chn, sc)
        gap_d = mt.surrogate_rates_dl(state, chn, sc) - np.log1p(mt.sinr_dl_all(state, chn, sc))
        gap_u = mt.surrogate_rates_ul(state, chn, sc) - np.log1p(mt.sinr_ul_all(state, chn, sc))
        worst = max(worst, float(np.max(np.abs(gap_d))), float(np.max(np.abs(gap_u))))
    assert verdict("C6 WMMSE tightness", worst <= 1e-9, f"max |gap| {worst:.2e} over 100 states")


def _random_phase_sum(rng, n_paths):
    ang = rng.uniform(-np.pi / 2, np.pi / 2, (n_paths, 2))
    return pos.PhaseSum(rng.exponential(1.0, n_paths), rng.uniform(-np.pi, np.pi, n_paths),
                        ch.directions(ang))


def test_criterion_07_mm_soundness(verdict):
    rng = np.random.default_rng(7)
    worst_bound, worst_anchor, worst_grad = 0.0, 0.0, 0.0
    for _ in range(50):
        ps = _random_phase_sum(rng, int(rng.integers(1, 12)))
        t0 = rng.uniform(-1, 1, 2)
        samples = rng.uniform(-1, 1, (1000, 2))
        vals = np.array([pos.phase_sum_eval(ps, t) for t in samples])
        for sense, sign in ((pos.UPPER, 1.0), (pos.LOWER, -1.0)):
            bound = pos.phase_sum_bound(ps, t0, sense)
            gap = sign * (np.array([bound(t) for t in samples]) - vals)
            worst_bound = min(worst_bound, float(gap.min()))
            worst_anchor = max(worst_anchor, abs(bound(t0) - pos.phase_sum_eval(ps, t0)))
    for _ in range(50):
        n = int(rng.integers(2, 10))
        a = crandn(rng, n, n)
        h = a @ a.conj().T
        dirs = ch.directions(rng.uniform(-np.pi / 2, np.pi / 2, (n, 2)))
        t0 = rng.uniform(-1, 1, 2)
        z0 = np.exp(2j * np.pi * dirs @ t0)
        extra = crandn(rng, n)
        f, c = pos.lmax_majorizer(h, z0, extra)
        for t in rng.uniform(-1, 1, (1000, 2)):
            z = np.exp(2j * np.pi * dirs @ t)
            exact = np.real(np.vdot(z, h @ z)) + np.real(np.vdot(extra, z))
            worst_bound = min(worst_bound, float(np.real(np.vdot(f, z)) + c - exact))
        exact0 = np.real(np.vdot(z0, h @ z0)) + np.real(np.vdot(extra, z0))
        worst_anchor = max(worst_anchor, abs(np.real(np.vdot(f, z0)) + c - exact0))
    # Position surrogates built from live instances.
    for seed in range(4):
        sc, layout, chn, state = feasible_instance(seed, sweeps=1)
        obj, con = pos.tbs_models(state, chn, sc, layout, seed % sc.m_t, seed % sc.n_t)
        for model in (obj, con):
            bound = model.surrogate()
            for t in rng.uniform(-sc.half_region, sc.half_region, (1000, 2)):
                worst_bound = min(worst_bound, (bound(t) - model(t)) / max(1.0, abs(model(t))))
            worst_anchor = max(worst_anchor, abs(bound(model.t0) - model(model.t0)))
    for _ in range(100):
        ps = _random_phase_sum(rng, int(rng.integers(1, 12)))
        t = rng.uniform(-1, 1, 2)
        h = 1e-6
        fd = np.array([(pos.phase_sum_eval(ps, t + h * e) - pos.phase_sum_eval(ps, t - h * e)) / (2 * h)
                       for e in np.eye(2)])
        grad = pos.phase_sum_grad(ps, t)
        worst_grad = max(worst_grad, float(np.linalg.norm(grad - fd) / max(np.linalg.norm(grad), 1e-3)))
    ok = worst_bound >= -1e-9 and worst_anchor <= 1e-9 and worst_grad < 1e-5
    assert verdict("C7 MM soundness", ok,
                   f"worst bound violation {worst_bound:.1e}, anchor gap {worst_anchor:.1e}, "
                   f"gradient rel err {worst_grad:.1e}")


def _filter_mse(u, l, state, chn, sc):
    trial_state = state.copy()
    trial_state.u_comm[l] = u
    return float(mt.mse_ul(trial_state, chn, sc)[l])


def _grid_min_2d(fun, feasible, lo, hi, n=401, rounds=6):
    best = None
    a, b = np.asarray(lo, float), np.asarray(hi, float)
    for _ in range(rounds):
        xs, ys = np.linspace(a[0], b[0], n), np.linspace(a[1], b[1], n)
        grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2)
        mask = feasible(grid)
        if not mask.any():
            break
        vals = fun(grid)
        vals[~mask] = np.inf
        best = grid[np.argmin(vals)]
        # Corner optima can sit several cells from the best feasible node.
        span = 20 * (b - a) / (n - 1)
        a, b = np.maximum(best - span, lo), np.minimum(best + span, hi)
    return best


def test_criterion_08_closed_form_oracles(verdict):
    rng = np.random.default_rng(8)
    # Comm filters against a numerical minimizer of each user's MSE.
    worst_filter = 0.0
    for seed in range(5):
        sc, _, chn, state = instance(2000 + seed)
        new = up.update_comm_filters(state, chn, sc)
        n = sc.m_r * sc.n_r
        for l in range(sc.k_u):
            def mse(v):
                return _filter_mse(v[:n] + 1j * v[n:], l, state, chn, sc)
            scale = np.linalg.norm(new.u_comm[l])
            x0 = np.concatenate([new.u_comm[l].real, new.u_comm[l].imag])
            start = x0 + 0.3 * scale * rng.standard_normal(2 * n)
            res = optimize.minimize(lambda v: mse(v) * 1e3, start, method="BFGS",
                                    options={"gtol": 1e-14, "maxiter": 20000})
            closed = mse(x0)
            worst_filter = max(worst_filter, (closed - res.fun / 1e3) / abs(closed))
    # DL user positions against per-coordinate 1-D grid search of the bound.
    worst_user = 0.0
    for seed in range(5):
        sc, layout, chn, state = feasible_instance(seed, sweeps=1)
        for k in range(sc.k_d):
            obj = pos.dl_user_model(state, chn, sc, layout, k)
            t, upper = pos.dl_user_step(obj, sc.half_region)
            grid = np.linspace(-sc.half_region, sc.half_region, 10_000)
            for axis in range(2):
                def along(x):
                    pts = np.tile(t, (x.size, 1))
                    pts[:, axis] = x
                    return np.array([upper(p) for p in pts])
                best = grid[np.argmin(along(grid))]
                worst_user = max(worst_user, abs(best - t[axis]) / (grid[1] - grid[0]))
    # 2-D QCQPs against a refined dense grid.
    worst_qcqp = 0.0
    for i in range(50):
        c1 = rng.uniform(0.5, 5.0)
        obj = so.ConvexQuadratic(c1, rng.uniform(-3, 3, 2), 0.0)
        center = rng.uniform(-0.5, 0.5, 2)
        radius = rng.uniform(0.3, 1.0)
        c2 = rng.uniform(0.5, 2.0)
        con = so.ConvexQuadratic(c2, c2 * center, c2 * (center @ center - radius ** 2))
        lo, hi = -np.ones(2), np.ones(2)
        normal = rng.standard_normal(2)
        normal /= np.linalg.norm(normal)
        halfspaces = [(normal, float(normal @ center + 0.2 * radius))]
        x, rep = so.solve_qcqp(obj, con, box=(lo, hi), halfspaces=halfspaces)

        def fun(g):
            return c1 * np.sum(g ** 2, 1) - 2 * g @ obj.linear

        def feasible(g):
            return ((np.sum((g - center) ** 2, 1) <= radius ** 2)
                    & (g @ normal <= halfspaces[0][1]))
        best = _grid_min_2d(fun, feasible, lo, hi)
        if best is None:
            worst_qcqp = max(worst_qcqp, 0.0 if rep.status == so.INFEASIBLE else np.inf)
            continue
        # Near a curved boundary the grid pins the value far better than the point.
        violation = max(float(con.value(x)), float(normal @ x - halfspaces[0][1]),
                        float(np.max(np.abs(x))) - 1.0)
        worst_qcqp = max(worst_qcqp, abs(obj.value(x) - fun(best[None])[0]), violation)
    ok = worst_filter <= 1e-8 and worst_user <= 1.0 and worst_qcqp <= 1e-4
    assert verdict("C8 closed-form oracles", ok,
                   f"filter rel MSE gap {worst_filter:.1e}; DL-user offset {worst_user:.2f} grid steps; "
                   f"QCQP max deviation {worst_qcqp:.1e}")


def test_criterion_09_sensing_filter_optimality(verdict):
    rng = np.random.default_rng(9)
    worst = np.inf
    for i in range(20):
        sc, _, chn, state = instance(3000 + i)
        signal, interf = up.sensing_matrices(state, chn, sc)
        value, v = so.max_generalized_eig(signal, interf)
        best = mt.sinr_radar(state, chn, sc, v)
        u = crandn(rng, 10_000, v.size)
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        num = np.real(np.einsum("ij,jk,ik->i", u.conj(), signal, u))
        den = np.real(np.einsum("ij,jk,ik->i", u.conj(), interf, u))
        worst = min(worst, best - float(np.max(num / den)) * (1 - 1e-12))
    assert verdict("C9 sensing filter optimality", worst >= 0,
                   f"min(optimal - best random) {worst:.3e} over 20 instances")


def test_criterion_10_byte_identical_csv(tmp_path, verdict):
    cfg = tmp_path / "config.yaml"
    cfg.write_text("tx_power_dbm: 30\nengine:\n  max_outer: 8\n")
    outs = []
    for name in ("first.csv", "second.csv"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "maisac.cli", "run", "--config", str(cfg),
                               "--seed", "11", "--out", str(out)], capture_output=True)
        assert proc.returncode == 0, proc.stderr.decode()
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    assert verdict("C10 deterministic CSV", ok, f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}")
