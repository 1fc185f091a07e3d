"""Moving-target experiment: per-slot optimisation scored after motion, and the sweep statistics."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayGeometry, build_echo, cascaded_channels, gen_channel_set
from .metrics import FblParams, achieved_rate, comm_sinrs, cts, radar_sinr, slot_timing
from .solver import AlternatingOptimizer


@dataclass
class SlotResult:
    t: int
    tau: float
    W: np.ndarray
    v: np.ndarray
    rates: np.ndarray  # bit/s, clamped at 0
    gamma_s_planned: float
    gamma_s_realized: float
    outage: bool
    psi: float
    kind: str = "P3"
    failed: bool = False
    q_s: float = math.nan
    sca_iterations: int = 0
    converged: bool = False


@dataclass
class SweepResult:
    eta: int
    rho_db: float
    seed: int
    cts_per_user: np.ndarray
    outage_probability: float
    sinr_variance: float
    psi_series: np.ndarray
    n_slots: int
    n_failed: int = 0
    error: str = ""
    slots: list = field(default_factory=list, repr=False)

    @property
    def interval_outage(self):
        """1 if any evaluated slot of the interval was in outage."""
        return float(self.outage_probability > 0)


def target_state(tau, scene):
    """Position, BS distance and BS angle of the target at time ``tau``."""
    pos = np.asarray(scene.target_start, float) + np.asarray(scene.target_velocity, float) * tau
    rel = pos - np.asarray(scene.bs_pos, float)
    return pos, float(math.hypot(*rel)), float(math.atan2(rel[1], rel[0]))


def _rotate_about(pos, centre, angle):
    c, s = math.cos(angle), math.sin(angle)
    rel = np.asarray(pos) - np.asarray(centre)
    return np.asarray(centre) + np.array([c * rel[0] - s * rel[1], s * rel[0] + c * rel[1]])


def evaluated_slots(n_slot, decimate):
    """Indices of the slots that are simulated (every ``decimate``-th)."""
    return range(0, n_slot, decimate)


def run_coherence(cfg, rng, scene=None, slot_limit=None):
    """Simulate one coherence interval; returns the list of :class:`SlotResult`.

    One channel draw is held for the whole interval.  Slot ``t`` optimises at the
    slot-start target position and is scored at the slot-end position.
    """
    scene = scene or cfg.scene
    fbl = FblParams.from_config(cfg)
    t_sens, n_slot = slot_timing(cfg.eta, cfg.bandwidth, cfg.t_coh)
    channels = gen_channel_set(cfg, rng)
    echo_phase = rng.uniform(0, 2 * np.pi)
    geo_t = ArrayGeometry(cfg.n_tx, cfg.antenna_spacing)
    geo_r = ArrayGeometry(cfg.n_rx, cfg.antenna_spacing)

    def echo_at(tau, angle_error=0.0):
        pos, _, _ = target_state(tau, scene)
        if angle_error:
            pos = _rotate_about(pos, scene.bs_pos, angle_error)
        return build_echo(pos, cfg, geo_t, geo_r, echo_phase, scene.bs_pos)

    def estimate(tau):
        err = rng.normal(0.0, cfg.angle_error_std) if cfg.angle_error_std > 0 else 0.0
        return echo_at(tau, err)

    opt = AlternatingOptimizer.initialise(channels, estimate(0.0), cfg, fbl)
    slots = []
    for t in evaluated_slots(n_slot, cfg.decimate):
        if slot_limit is not None and len(slots) >= slot_limit:
            break
        tau = t * t_sens
        step = opt.step(estimate(tau))
        W, v = step.state.W, step.state.v
        start, end = echo_at(tau), echo_at(tau + t_sens)
        g_plan = radar_sinr(start, W[:, -1], cfg.rho, cfg.p_tx, cfg.sensing_noise)
        g_real = radar_sinr(end, W[:, -1], cfg.rho, cfg.p_tx, cfg.sensing_noise)
        rates = achieved_rate(comm_sinrs(cascaded_channels(channels, v), W, cfg.noise), fbl)
        slots.append(SlotResult(
            t=t, tau=tau, W=W, v=v, rates=rates,
            gamma_s_planned=g_plan, gamma_s_realized=g_real,
            outage=bool(cfg.eta * g_real < cfg.gamma_s_min),
            psi=float(np.sum(1.0 - np.minimum(rates / cfg.r_des, 1.0))),
            kind=step.kind, failed=step.failed, q_s=float(step.slack.q[-1]),
            sca_iterations=step.trace.iterations, converged=step.trace.converged,
        ))
    return slots


def outage_probability(slots):
    if not slots:
        raise ValueError("no slots")
    return float(np.mean([s.outage for s in slots]))


def sinr_variance(slots):
    if len(slots) < 2:
        raise ValueError("SINR variance needs at least two slots")
    return float(np.var([s.gamma_s_realized for s in slots], ddof=1))


def cts_series(slots, r_des):
    """Running CTS per user: row n is the CTS over the first n+1 slots."""
    if not slots:
        raise ValueError("no slots")
    rates = np.array([s.rates for s in slots], dtype=float)
    shortfall = 1.0 - np.minimum(rates / r_des, 1.0)
    return np.cumsum(shortfall, axis=0) / np.arange(1, len(slots) + 1)[:, None]


def summarize_run(slots, cfg, seed, keep_slots=True):
    rates = np.array([s.rates for s in slots], dtype=float)
    return SweepResult(
        eta=cfg.eta, rho_db=cfg.rho_db, seed=seed,
        cts_per_user=np.array([cts(rates[:, k], cfg.r_des) for k in range(rates.shape[1])]),
        outage_probability=outage_probability(slots),
        sinr_variance=sinr_variance(slots) if len(slots) > 1 else 0.0,
        psi_series=np.array([s.psi for s in slots]),
        n_slots=len(slots), n_failed=sum(s.failed for s in slots),
        slots=slots if keep_slots else [],
    )


def run_cell(cfg, eta, rho_db, seed, keep_slots=True):
    """One (eta, rho, seed) cell.  Channels depend only on the seed, so cells pair across eta and rho."""
    cell_cfg = cfg.replace(eta=int(eta), rho_db=float(rho_db))
    try:
        slots = run_coherence(cell_cfg, np.random.default_rng(seed))
        return summarize_run(slots, cell_cfg, seed, keep_slots)
    except Exception as exc:  # a failed cell is recorded, never aborts the sweep
        K = cfg.n_users
        return SweepResult(int(eta), float(rho_db), seed, np.full(K, np.nan), math.nan, math.nan,
                           np.array([]), 0, error=f"{type(exc).__name__}: {exc}")


def worker_count():
    try:
        n = int(os.environ.get("ISAC_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def monte_carlo(cfg, eta_list, rho_list, n_seeds, seed_base=0, n_jobs=None, keep_slots=False):
    """Run every (eta, rho, seed) cell; results come back in grid order regardless of scheduling."""
    if not eta_list or not rho_list or n_seeds < 1:
        raise ValueError("empty sweep grid")
    cells = [(eta, rho, seed_base + i) for eta in eta_list for rho in rho_list for i in range(n_seeds)]
    n_jobs = worker_count() if n_jobs is None else n_jobs
    if n_jobs == 1:
        return [run_cell(cfg, *cell, keep_slots=keep_slots) for cell in cells]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(run_cell)(cfg, *cell, keep_slots=keep_slots) for cell in cells)


def aggregate(results, z=1.96):
    """Mean and normal-approximation CI half-width per (eta, rho)."""
    groups = {}
    for r in results:
        groups.setdefault((r.eta, r.rho_db), []).append(r)
    out = {}
    for key, rs in sorted(groups.items()):
        ok = [r for r in rs if not r.error]
        row = {"n": len(ok), "n_errors": len(rs) - len(ok)}
        for name in ("outage_probability", "sinr_variance"):
            vals = np.array([getattr(r, name) for r in ok], float)
            row[name] = _mean_ci(vals, z)
        finals = np.array([r.cts_per_user for r in ok], float)
        row["cts"] = [_mean_ci(finals[:, k], z) for k in range(finals.shape[1])] if ok else []
        row["interval_outage"] = _mean_ci(np.array([r.interval_outage for r in ok], float), z)
        out[key] = row
    return out


def _mean_ci(vals, z):
    if vals.size == 0:
        return (math.nan, math.nan)
    if vals.size == 1:
        return (float(vals[0]), 0.0)
    return (float(vals.mean()), float(z * vals.std(ddof=1) / math.sqrt(vals.size)))
