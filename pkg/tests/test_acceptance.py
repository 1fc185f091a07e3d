"""Acceptance criteria 1 to 10.

Every test appends one ``CRITERION n: PASS|FAIL|SKIP: detail`` line to the
terminal summary and then asserts, so a red criterion shows both as a failed
test and as a FAIL line with the measured numbers.
"""

import io
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, crandn
from risisac.channel import ArrayGeometry, ChannelSet, EchoModel, build_echo, cascaded_channels, gen_channel_set
from risisac.cli import main, summarize, write_artifacts
from risisac.config import SystemConfig, desk_scale
from risisac.metrics import FblParams, dispersion, fbl_rate
from risisac.sca import (
    ExpansionPoint,
    exact_comm_sinr_v,
    exact_comm_sinr_w,
    exact_radar_sinr_w,
    ris_penalty,
    surrogate_comm_sinr_v,
    surrogate_comm_sinr_w,
    surrogate_dispersion,
    surrogate_radar_sinr_w,
    tangent_u,
)
from risisac.scenario import monte_carlo, run_coherence
from risisac.solver import initial_state, solve_beamformers, solve_ris

N_SEEDS = 20
ETAS = (125, 150, 200, 300)
VARIANCE_ETAS = (125, 150, 200, 300, 400)
VARIANCE_SEEDS = 5


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def skip(n, reason):
    ACCEPTANCE_LINES.append(f"CRITERION {n}: SKIP: {reason}")
    pytest.skip(reason)


# ------------------------------------------------------------------ 1


def _central(f, h=1e-5):
    return (f(h) - f(-h)) / (2 * h)


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _surrogate_errors(seed):
    """Worst (value residual, derivative relative error) over the five surrogates."""
    r = np.random.default_rng(seed)
    K, n, M = 2, 4, 8
    h, H, g = crandn(r, K, n), crandn(r, M, n), crandn(r, K, M)
    W, v = crandn(r, n, K + 1), np.exp(1j * r.uniform(0, 2 * np.pi, M))
    q = r.uniform(0.2, 3.0, K + 1)
    exp = ExpansionPoint(W, v, q)
    a = crandn(r, n)
    G = complex(crandn(r)) * np.outer(a, a.conj())
    sigma2, rho, pt, s2 = 0.5, 0.01, 2.0, 0.3
    val, der = [], []
    for k in range(K):
        h_hat = cascaded_channels(ChannelSet(h, H, g), v)[k]
        sur = surrogate_comm_sinr_w(k, h_hat, exp, sigma2)
        val.append(abs(sur.value(W, q[k]) - exact_comm_sinr_w(k, h_hat, W, q[k], sigma2)))
        dW, dq = crandn(r, n, K + 1), r.standard_normal()
        der.append(_rel(_central(lambda t: sur.value(W + t * dW, q[k] + t * dq)),
                        _central(lambda t: exact_comm_sinr_w(k, h_hat, W + t * dW, q[k] + t * dq, sigma2))))

        sur = surrogate_comm_sinr_v(k, W, h[k], g[k], H, exp, sigma2)
        val.append(abs(sur.value(v, q[k]) - exact_comm_sinr_v(k, W, h[k], g[k], H, v, q[k], sigma2)))
        dv, dq = crandn(r, M), r.standard_normal()
        der.append(_rel(_central(lambda t: sur.value(v + t * dv, q[k] + t * dq)),
                        _central(lambda t: exact_comm_sinr_v(k, W, h[k], g[k], H, v + t * dv, q[k] + t * dq,
                                                             sigma2))))

        value, slope = surrogate_dispersion(q[k])
        val.append(abs(value - math.sqrt(dispersion(q[k]))))
        val.append(abs(tangent_u(q[k], q[k]) - math.sqrt(dispersion(q[k]))))
        der.append(_rel(slope, _central(lambda t: math.sqrt(dispersion(q[k] + t)), 1e-6)))

    sur = surrogate_radar_sinr_w(G, exp, rho, pt, s2)
    val.append(abs(sur.value(W, q[-1]) - exact_radar_sinr_w(G, W[:, -1], q[-1], rho, pt, s2)))
    dW, dq = crandn(r, n, K + 1), r.standard_normal()
    der.append(_rel(_central(lambda t: sur.value(W + t * dW, q[-1] + t * dq)),
                    _central(lambda t: exact_radar_sinr_w(G, W[:, -1] + t * dW[:, -1], q[-1] + t * dq,
                                                          rho, pt, s2))))

    alpha = 3.0
    val.append(abs(ris_penalty(v, v, alpha) - alpha * np.sum(np.abs(v) ** 2)))
    dv = crandn(r, M)
    der.append(_rel(_central(lambda t: ris_penalty(v + t * dv, v, alpha)),
                    _central(lambda t: alpha * np.sum(np.abs(v + t * dv) ** 2))))
    return max(val), max(der)


def test_criterion_1_surrogate_tangency():
    start = time.perf_counter()
    errs = np.array([_surrogate_errors(seed) for seed in range(50)])
    elapsed = time.perf_counter() - start
    worst_val, worst_der = errs.max(axis=0)
    ok = worst_val <= 1e-8 and worst_der <= 1e-6 and elapsed < 10
    record(1, ok, f"50 instances, max value residual {worst_val:.2e} (<= 1e-8), "
                  f"max derivative rel. error {worst_der:.2e} (<= 1e-6), {elapsed:.1f} s (< 10 s)")


# ------------------------------------------------------------------ 2


def test_criterion_2_sca_descent():
    start = time.perf_counter()
    base = desk_scale(SystemConfig())
    geo = ArrayGeometry(base.n_tx)
    worst, converged, traces = -math.inf, 0, 0
    for seed in range(N_SEEDS):
        rng = np.random.default_rng(seed)
        ch = gen_channel_set(base, rng)
        echo = build_echo(base.scene.target_start, base, geo, geo, phase=rng.uniform(0, 2 * np.pi))
        fbl = FblParams.from_config(base)
        state, slack, tr3 = solve_beamformers(ch, echo, initial_state(ch, echo, base), base, fbl, 50)
        _, _, tr4 = solve_ris(ch, echo, state, base, fbl, 50, slack)
        for tr in (tr3, tr4):
            objs = [o for o in tr.objectives if np.isfinite(o)]
            rises = [b - a - 10 * base.sca_tol * max(1.0, abs(a)) for a, b in zip(objs, objs[1:])]
            worst = max([worst] + rises)
            converged += tr.converged
            traces += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 0 and converged >= 0.95 * traces and elapsed < 300
    record(2, ok, f"{traces} traces (P3 and P4, {N_SEEDS} desk seeds): worst rise beyond 10*tol {worst:.2e} "
                  f"(<= 0), converged {converged}/{traces} (>= 95%), {elapsed:.0f} s (< 300 s)")


# ------------------------------------------------------------------ 3


def test_criterion_3_fbl_sanity():
    worst_excess, gaps = -math.inf, {}
    for eta in (100, 500, 1000, 10 ** 6):
        fbl = FblParams(eta=eta, epsilon=1e-3, bandwidth=10e6)
        for gamma in (0.1, 1.0, 10.0, 100.0):
            shannon = fbl.bandwidth * math.log2(1 + gamma)
            rate = fbl_rate(gamma, fbl)
            worst_excess = max(worst_excess, rate - shannon)
            if eta == 10 ** 6:
                gaps[gamma] = (shannon - rate) / shannon
    bound_ok = worst_excess <= 0
    gap_ok = all(g < 5e-3 for g in gaps.values())
    listing = ", ".join(f"gamma={k:g}: {100 * g:.3f}%" for k, g in gaps.items())
    record(3, bound_ok and gap_ok, f"fbl_rate <= Shannon on all 16 points: {bound_ok}; "
                                   f"relative gap at eta=1e6 (< 0.5%): {listing}")


# ------------------------------------------------------------------ 4


def test_criterion_4_every_slot_feasible():
    cfg = desk_scale(SystemConfig()).replace(eta=125)
    start = time.perf_counter()
    slots = run_coherence(cfg, np.random.default_rng(0))
    elapsed = time.perf_counter() - start
    power = max(float(np.sum(np.abs(s.W) ** 2)) - cfg.p_tx for s in slots)
    sensing = min(cfg.eta * s.q_s - cfg.gamma_s_min for s in slots)
    modulus = max(float(np.max(np.abs(np.abs(s.v) - 1))) for s in slots)
    ulp = 4 * np.finfo(float).eps
    ok = power <= 1e-6 * cfg.p_tx and sensing >= -1e-6 and modulus <= ulp and elapsed < 600
    record(4, ok, f"{len(slots)} slots ({sum(s.failed for s in slots)} held after a failed solve): "
                  f"max power excess {power / cfg.p_tx:.2e} P_T (<= 1e-6), min eta*q_s - gamma_min "
                  f"{sensing:.2e} (>= -1e-6), max ||v|-1| {modulus:.1e} (<= {ulp:.1e}), {elapsed:.0f} s")


# ------------------------------------------------------------------ 5, 6, 7, 9


@pytest.fixture(scope="session")
def desk_sweep():
    """Paired desk-scale sweep shared by the trend criteria."""
    cfg = desk_scale(SystemConfig())
    start = time.perf_counter()
    main_grid = monte_carlo(cfg, list(ETAS), [-120.0], N_SEEDS)
    high_si = monte_carlo(cfg, [150], [-118.0], N_SEEDS)
    extra = monte_carlo(cfg, [e for e in VARIANCE_ETAS if e != 150], [-118.0], VARIANCE_SEEDS)
    elapsed = time.perf_counter() - start
    cells = {(r.eta, r.rho_db, r.seed): r for r in main_grid + high_si + extra}
    return cfg, cells, elapsed


def _outages(cells, eta, rho, seeds):
    return np.array([cells[(eta, rho, s)].outage_probability for s in seeds])


def test_criterion_5_blocklength_trend(desk_sweep):
    _, cells, elapsed = desk_sweep
    seeds = range(N_SEEDS)
    stats = []
    for eta in ETAS:
        vals = _outages(cells, eta, -120.0, seeds)
        stats.append((vals.mean(), 1.96 * vals.std(ddof=1) / math.sqrt(vals.size)))
    inversions = [(i, stats[i], stats[i + 1]) for i in range(len(stats) - 1) if stats[i + 1][0] > stats[i][0]]
    tolerated = len(inversions) <= 1 and all(
        b[0] - b[1] <= a[0] + a[1] for _, a, b in inversions)
    drop = stats[0][0] - stats[-1][0]
    ok = tolerated and drop >= 0.10 and elapsed < 3600
    listing = ", ".join(f"eta={e}: {100 * m:.2f}+-{100 * c:.2f}%" for e, (m, c) in zip(ETAS, stats))
    record(5, ok, f"mean outage at rho=-120 dB ({N_SEEDS} seeds) {listing}; inversions {len(inversions)} "
                  f"(<= 1 within CI: {tolerated}); outage(125) - outage(300) = {100 * drop:.2f} pp (>= 10 pp); "
                  f"sweep {elapsed:.0f} s (< 3600 s)")


def test_criterion_6_si_trend(desk_sweep):
    _, cells, _ = desk_sweep
    seeds = range(N_SEEDS)
    hi = _outages(cells, 150, -118.0, seeds)
    lo = _outages(cells, 150, -120.0, seeds)
    frac = float(np.mean(hi >= lo))
    record(6, frac >= 0.8, f"eta=150: outage(-118 dB) >= outage(-120 dB) in {100 * frac:.0f}% of seeds (>= 80%); "
                           f"means {100 * hi.mean():.2f}% vs {100 * lo.mean():.2f}%")


def test_criterion_7_cts_trend(desk_sweep):
    _, cells, _ = desk_sweep
    long_ = np.array([cells[(200, -120.0, s)].cts_per_user for s in range(N_SEEDS)])
    short = np.array([cells[(125, -120.0, s)].cts_per_user for s in range(N_SEEDS)])
    ok_pairs = long_ <= short
    record(7, bool(ok_pairs.all()), f"final CTS(eta=200) <= CTS(eta=125) for {int(ok_pairs.sum())}/{ok_pairs.size} "
                                    f"(seed, user) pairs; mean CTS eta=125 {np.round(short.mean(axis=0), 4).tolist()}, "
                                    f"eta=200 {np.round(long_.mean(axis=0), 4).tolist()}")


def test_criterion_9_variance_detector(desk_sweep, tmp_path):
    cfg, cells, _ = desk_sweep
    results = [cells[(eta, -118.0, s)] for eta in VARIANCE_ETAS for s in range(VARIANCE_SEEDS)]
    write_artifacts(results, tmp_path, cfg.n_users, cfg.r_des)
    runs = []
    for _ in range(2):
        buf = io.StringIO()
        verdict = summarize(tmp_path / "sweep.csv", buf)
        runs.append((verdict, buf.getvalue()))
    means = [np.mean([cells[(eta, -118.0, s)].sinr_variance for s in range(VARIANCE_SEEDS)])
             for eta in VARIANCE_ETAS]
    not_constant = len(set(means)) > 1
    deterministic = runs[0] == runs[1]
    verdict_line = [ln for ln in runs[0][1].splitlines() if ln.startswith("rho=")]
    record(9, not_constant and deterministic,
           f"mean SINR variance over eta {VARIANCE_ETAS}: {['%.3g' % m for m in means]} "
           f"(not constant: {not_constant}); detector deterministic: {deterministic}; verdict: {verdict_line}")


# ------------------------------------------------------------------ 8


@pytest.mark.fullscale
def test_criterion_8_full_scale_spot_check():
    if os.environ.get("RISISAC_FULL_SCALE") != "1":
        skip(8, "full-scale run takes hours; set RISISAC_FULL_SCALE=1 or run demos/full_scale_outage.py")
    cfg = SystemConfig().replace(decimate=1)
    res = monte_carlo(cfg, [125], [-120.0], 10)
    mean = float(np.mean([r.outage_probability for r in res]))
    record(8, abs(mean - 0.35) <= 0.15, f"50x50 RIS, eta=125, rho=-120 dB, 10 seeds: mean outage "
                                        f"{100 * mean:.2f}% (35 +- 15%)")


# ------------------------------------------------------------------ 10


def test_criterion_10_determinism(tmp_path, monkeypatch):
    args = ["--eta", "150,300", "--rho=-120,-118", "--seeds", "2", "--seed-base", "7",
            "--decimate", "400", "--max-failed-frac", "1.0"]
    outputs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", str(max(4, os.cpu_count() or 1)))):
        monkeypatch.setenv("ISAC_THREADS", threads)
        assert main(["run", "--out", str(tmp_path / name), *args]) == 0
        outputs.append((tmp_path / name / "sweep.csv").read_bytes())
    same_serial = outputs[0] == outputs[1]
    same_parallel = outputs[0] == outputs[2]
    record(10, same_serial and same_parallel,
           f"sweep.csv byte-identical on repeat: {same_serial}; with ISAC_THREADS={threads}: {same_parallel}")
