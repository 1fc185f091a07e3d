"""Conic backends, the SCA inner loop and the alternating W / v schedule."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .channel import cascaded_channels, ris_affine_maps_all
from .conic import audit
from .metrics import BeamformerState, FblParams, comm_sinrs, fbl_rate, radar_sinr, served_gap
from .sca import ExpansionPoint, SlackState, build_p3, build_p4, sqrt_dispersion, unpack_p3, unpack_p4

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical-failure"
ITER_LIMIT = "iteration-limit"


class ScaError(RuntimeError):
    """The first SCA subproblem could not be solved."""


@dataclass
class SolveStatus:
    state: str
    objective: float = math.nan
    primal: np.ndarray | None = None
    tolerance: float = math.nan
    solve_time: float = 0.0
    iterations: int = 0

    @property
    def ok(self):
        return self.state == OPTIMAL


# ------------------------------------------------------------------ backends

def _soc_from_rsoc(A, b, dims):
    """Rows (x, y, z) of rotated cones -> rows (x+y, x-y, sqrt2 z) of standard cones."""
    T = []
    for d in dims:
        blk = np.zeros((d, d))
        blk[0, 0] = blk[0, 1] = 1.0
        blk[1, 0], blk[1, 1] = 1.0, -1.0
        blk[2:, 2:] = math.sqrt(2.0) * np.eye(d - 2)
        T.append(blk)
    T = sp.block_diag(T, format="csr")
    return T @ A, T @ b


_CLARABEL_STATES = {
    "Solved": OPTIMAL, "AlmostSolved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE, "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED, "AlmostDualInfeasible": UNBOUNDED,
    "MaxIterations": ITER_LIMIT, "MaxTime": ITER_LIMIT,
}

# Setting overrides tried in order when the interior-point method stalls.  The
# channel-normalised SINR cones span about five decades, and shorter steps or
# stronger equilibration recover most stalls without changing the problem.
_CLARABEL_RETRIES = ({}, {"max_step_fraction": 0.9}, {"equilibrate_max_iter": 50})


def _solve_clarabel(program, tol):
    import clarabel

    blocks, rhs, cones = [], [], []
    for con in program.constraints:
        A, b = con.A, con.b
        if con.kind == "zero":
            cones.append(clarabel.ZeroConeT(b.shape[0]))
        elif con.kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(b.shape[0]))
        elif con.kind in ("soc", "rsoc"):
            if con.kind == "rsoc":
                A, b = _soc_from_rsoc(A, b, con.dims)
            cones.extend(clarabel.SecondOrderConeT(d) for d in con.dims)
        else:
            cones.extend(clarabel.ExponentialConeT() for _ in con.dims)
        blocks.append(-A)
        rhs.append(b)
    A = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, program.n))
    b = np.concatenate(rhs) if rhs else np.zeros(0)
    P = sp.csc_matrix((program.n, program.n))
    t0 = time.perf_counter()
    for overrides in _CLARABEL_RETRIES:
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        settings.max_iter = 200
        for key, value in overrides.items():
            setattr(settings, key, value)
        sol = clarabel.DefaultSolver(P, np.asarray(program.c, float), A, b, cones, settings).solve()
        name = str(sol.status).split(".")[-1]
        state = _CLARABEL_STATES.get(name, NUMERICAL)
        if state not in (NUMERICAL, ITER_LIMIT):
            break
        log.debug("clarabel stalled (%s) with %s; retrying", name, overrides)
    elapsed = time.perf_counter() - t0
    if state != OPTIMAL:
        return SolveStatus(state, tolerance=tol, solve_time=elapsed, iterations=sol.iterations)
    x = np.array(sol.x)
    return SolveStatus(OPTIMAL, program.objective(x), x, tol if name == "Solved" else 1e3 * tol,
                       elapsed, sol.iterations)


def _solve_cvxpy(program, tol, solver="SCS"):
    import cvxpy as cp

    x = cp.Variable(program.n)
    cons = []
    for con in program.constraints:
        A, b = con.A, con.b
        if con.kind == "rsoc":
            A, b = _soc_from_rsoc(A, b, con.dims)
        expr = A @ x + b
        if con.kind == "zero":
            cons.append(expr == 0)
        elif con.kind == "nonneg":
            cons.append(expr >= 0)
        elif con.kind in ("soc", "rsoc"):
            pos = 0
            for d in con.dims:
                cons.append(cp.SOC(expr[pos], expr[pos + 1:pos + d]))
                pos += d
        else:
            idx = np.arange(0, b.shape[0], 3)
            cons.append(cp.constraints.ExpCone(expr[idx], expr[idx + 1], expr[idx + 2]))
    prob = cp.Problem(cp.Minimize(program.c @ x + program.c0), cons)
    opts = {"eps_abs": tol, "eps_rel": tol, "max_iters": 200_000} if solver == "SCS" else {}
    t0 = time.perf_counter()
    try:
        prob.solve(solver=solver, **opts)
    except cp.error.SolverError:
        return SolveStatus(NUMERICAL, tolerance=tol, solve_time=time.perf_counter() - t0)
    elapsed = time.perf_counter() - t0
    state = {
        cp.OPTIMAL: OPTIMAL, cp.OPTIMAL_INACCURATE: OPTIMAL,
        cp.INFEASIBLE: INFEASIBLE, cp.INFEASIBLE_INACCURATE: INFEASIBLE,
        cp.UNBOUNDED: UNBOUNDED, cp.UNBOUNDED_INACCURATE: UNBOUNDED,
        cp.USER_LIMIT: ITER_LIMIT,
    }.get(prob.status, NUMERICAL)
    if state != OPTIMAL:
        return SolveStatus(state, tolerance=tol, solve_time=elapsed)
    xv = np.asarray(x.value)
    reported = tol if prob.status == cp.OPTIMAL else 1e3 * tol
    return SolveStatus(OPTIMAL, program.objective(xv), xv, reported, elapsed)


def solve_conic(program, tol=1e-8, backend="clarabel"):
    """Solve a :class:`ConicProgram`; failures are reported in the status, never raised."""
    audit(program)
    try:
        if backend == "clarabel":
            return _solve_clarabel(program, tol)
        if backend == "cvxpy":
            return _solve_cvxpy(program, max(tol, 1e-9))
        if backend.startswith("cvxpy:"):
            return _solve_cvxpy(program, max(tol, 1e-9), backend.split(":", 1)[1])
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        log.warning("solver backend %s failed: %s", backend, exc)
        return SolveStatus(NUMERICAL, tolerance=tol)
    raise ValueError(f"unknown backend {backend!r}")


# ------------------------------------------------------------------ SCA loop

@dataclass
class ScaIterate:
    expansion: ExpansionPoint
    objective: float  # merit: Psi for P3, Psi + alpha_v (M - ||v||^2) for P4
    status: str
    payload: object = None


@dataclass
class ScaTrace:
    iterates: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    cap_hit: bool = False
    failed: bool = False
    message: str = ""

    @property
    def objectives(self):
        return [it.objective for it in self.iterates]

    @property
    def final(self):
        solved = [it for it in self.iterates if it.status == OPTIMAL]
        return solved[-1] if solved else None


def _identity_update(program, x, exp):
    return exp, program.objective(x), None


def sca_loop(builder, init, tol=1e-4, max_iter=50, update=None, initial_objective=None,
             backend="clarabel", solver_tol=1e-8):
    """Run SCA from ``init``.

    ``builder(exp)`` returns the convex program at expansion point ``exp``;
    ``update(program, x, exp)`` maps an optimal primal to ``(next_exp, merit, payload)``.
    ``initial_objective`` (the merit of ``init`` itself, when it is feasible)
    lets the loop stop after a single solve if nothing improves.
    """
    update = update or _identity_update
    trace = ScaTrace()
    if initial_objective is not None:
        trace.iterates.append(ScaIterate(init, float(initial_objective), "initial"))
    exp = init
    for z in range(max_iter):
        program = builder(exp)
        status = solve_conic(program, solver_tol, backend)
        trace.iterations = z + 1
        if not status.ok:
            if z == 0:
                raise ScaError(f"SCA subproblem {program.name} at iteration 0 returned {status.state}")
            trace.failed = True
            trace.message = f"iteration {z}: {status.state}; keeping iterate {z - 1}"
            trace.iterates.append(ScaIterate(exp, math.nan, status.state))
            return trace
        exp_next, merit, payload = update(program, status.primal, exp)
        trace.iterates.append(ScaIterate(exp_next, merit, OPTIMAL, payload))
        objs = [it.objective for it in trace.iterates]
        if len(objs) >= 2 and abs(objs[-1] - objs[-2]) <= tol * max(1.0, abs(objs[-2])):
            trace.converged = True
            return trace
        exp = exp_next
    trace.cap_hit = True
    return trace


# ------------------------------------------------------------------ slot-level helpers

def project_unit_modulus(v, counter=None):
    """v_m / |v_m|; zero entries become 1 and are counted in ``counter['zero']``."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    zero = mag == 0
    if np.any(zero):
        if counter is not None:
            counter["zero"] = counter.get("zero", 0) + int(zero.sum())
        log.warning("%d RIS entries were exactly zero; set to phase 0", int(zero.sum()))
    out = np.ones_like(v)
    out[~zero] = v[~zero] / mag[~zero]
    return out


def realized_sinrs(channels, echo, state, cfg):
    """[Gamma_1..Gamma_K, gamma_s] at the given beamformers."""
    h_hat = cascaded_channels(channels, state.v)
    comm = comm_sinrs(h_hat, state.W, cfg.noise)
    gs = radar_sinr(echo, state.w_s, cfg.rho, cfg.p_tx, cfg.sensing_noise)
    return np.append(comm, gs)


def expansion_from_state(channels, echo, state, cfg, slack=None):
    """Expansion point at ``state``; q~ from realized SINRs (or the previous slack)."""
    if cfg.relinearize_realized or slack is None:
        q = realized_sinrs(channels, echo, state, cfg)
    else:
        q = np.array(slack.q, dtype=float)
    return ExpansionPoint(state.W.copy(), state.v.copy(), np.maximum(q, cfg.q_floor))


def expansion_merit(channels, echo, state, cfg, fbl, exp):
    """Psi of the expansion point when it is feasible for the subproblem, else None."""
    q_true = realized_sinrs(channels, echo, state, cfg)
    if np.any(exp.q_tilde > q_true * (1 + 1e-9)):
        return None
    if fbl.eta * exp.q_tilde[-1] < cfg.gamma_s_min:
        return None
    if state.power() > cfg.p_tx * (1 + 1e-9):
        return None
    rates = fbl_rate(exp.q_tilde[:-1], fbl)
    return served_gap(rates, cfg.r_des)


def initial_state(channels, echo, cfg, grid=64):
    """Equal-power MRT beams and greedily phase-aligned RIS elements."""
    K, n_tx = channels.h.shape
    p_beam = cfg.p_tx / (K + 1)
    W = np.zeros((n_tx, K + 1), complex)
    W[:, :K] = (channels.h / np.linalg.norm(channels.h, axis=1, keepdims=True)).T
    M = channels.n_ris
    v = np.ones(M, complex)
    if M:
        c, d = ris_affine_maps_all(W[:, :K], channels)  # b_k(v) = c_k + d_k @ v
        phases = np.exp(1j * 2 * np.pi * np.arange(grid) / grid)
        b = c.copy()
        for m in range(M):
            cand = b[:, None] + d[:, m, None] * phases[None, :]
            best = int(np.argmax(np.abs(cand).sum(axis=0)))
            v[m] = phases[best]
            b = cand[:, best]
    h_hat = cascaded_channels(channels, v)
    W[:, :K] = (h_hat / np.linalg.norm(h_hat, axis=1, keepdims=True)).T
    W[:, K] = echo.a_T / np.sqrt(n_tx)
    return BeamformerState(W * np.sqrt(p_beam), v)


def _p3_update(program, x, exp):
    W, slack = unpack_p3(program, x)
    q = np.maximum(slack.q, program_q_floor(program))
    psi = float(np.sum(x[program.block("t").slice]))
    return ExpansionPoint(W, exp.v_tilde, q), psi, slack


def _make_p4_update(alpha_v):
    def update(program, x, exp):
        v, slack = unpack_p4(program, x)
        q = np.maximum(slack.q, program_q_floor(program))
        psi = float(np.sum(x[program.block("t").slice]))
        merit = psi + alpha_v * float(v.size - np.sum(np.abs(v) ** 2))
        return ExpansionPoint(exp.w_tilde, v, q), merit, slack
    return update


def program_q_floor(program):
    return program.metadata.get("q_floor", 1e-6)


def solve_beamformers(channels, echo, state, cfg, fbl, max_iter, slack=None):
    """SCA on P3 from ``state``; returns (state, slack, trace)."""
    exp = expansion_from_state(channels, echo, state, cfg, slack)
    merit = expansion_merit(channels, echo, state, cfg, fbl, exp)
    trace = sca_loop(lambda e: _tag_floor(build_p3(channels, echo, e, cfg, fbl), cfg), exp,
                     cfg.sca_tol, max_iter, _p3_update, merit, cfg.backend, cfg.solver_tol)
    best = trace.final
    if best is None:
        return state, slack, trace
    return BeamformerState(best.expansion.w_tilde, state.v.copy()), best.payload, trace


def solve_ris(channels, echo, state, cfg, fbl, max_iter, slack=None, counter=None):
    """SCA on P4 from ``state`` (W fixed), then unit-modulus projection."""
    exp = expansion_from_state(channels, echo, state, cfg, slack)
    merit = expansion_merit(channels, echo, state, cfg, fbl, exp)
    if merit is not None:
        merit += cfg.alpha_v * float(state.v.size - np.sum(np.abs(state.v) ** 2))
    W = state.W
    trace = sca_loop(lambda e: _tag_floor(build_p4(channels, echo, W, e, cfg, fbl), cfg), exp,
                     cfg.sca_tol, max_iter, _make_p4_update(cfg.alpha_v), merit, cfg.backend, cfg.solver_tol)
    best = trace.final
    if best is None:
        return state, slack, trace
    v = project_unit_modulus(best.expansion.v_tilde, counter)
    return BeamformerState(W.copy(), v), best.payload, trace


def _tag_floor(program, cfg):
    program.metadata["q_floor"] = cfg.q_floor
    return program


@dataclass
class SlotStep:
    kind: str  # "P3" or "P4"
    state: BeamformerState
    slack: SlackState
    trace: ScaTrace
    failed: bool = False
    message: str = ""


class AlternatingOptimizer:
    """Alternating controller: one subproblem per sensing slot, starting with the beamformers."""

    def __init__(self, channels, cfg, fbl, state, slack=None):
        self.channels = channels
        self.cfg = cfg
        self.fbl = fbl
        self.state = state
        self.slack = slack
        self.toggle = "w"
        self.counter = {}
        self.n_failed = 0

    @classmethod
    def initialise(cls, channels, echo, cfg, fbl):
        """Warm start: MRT/greedy initial point refined by a full P3 SCA run."""
        state = initial_state(channels, echo, cfg)
        slack = None
        if cfg.warm_start_iter > 0:
            try:
                state, slack, _ = solve_beamformers(channels, echo, state, cfg, fbl, cfg.warm_start_iter)
            except ScaError as exc:
                log.warning("warm start failed: %s", exc)
        if slack is None:
            q = realized_sinrs(channels, echo, state, cfg)
            slack = SlackState(q=q, u=sqrt_dispersion(q[:-1]), r=np.maximum(fbl_rate(q[:-1], fbl), 0.0))
        return cls(channels, cfg, fbl, state, slack)

    def step(self, echo, max_iter=None):
        max_iter = self.cfg.inner_sca if max_iter is None else max_iter
        kind = "P3" if self.toggle == "w" else "P4"
        try:
            if kind == "P3":
                state, slack, trace = solve_beamformers(self.channels, echo, self.state, self.cfg, self.fbl,
                                                        max_iter, self.slack)
            else:
                state, slack, trace = solve_ris(self.channels, echo, self.state, self.cfg, self.fbl,
                                                max_iter, self.slack, self.counter)
            failed = False
            msg = trace.message
        except ScaError as exc:
            state, slack = self.state, self.slack
            trace = ScaTrace(failed=True, message=str(exc))
            failed, msg = True, str(exc)
        if failed:
            self.n_failed += 1
        self.state, self.slack = state, slack
        self.toggle = "v" if self.toggle == "w" else "w"
        return SlotStep(kind, state.copy(), slack.copy(), trace, failed, msg)


def alternating_optimize(channels, echo_at, cfg, fbl=None, n_slots=None, optimizer=None):
    """Run the alternating schedule over the coherence interval.

    ``echo_at(t)`` returns the echo model for slot ``t`` at its start time.
    Without ``n_slots`` the slot count follows from the blocklength and T_c.
    """
    from .metrics import slot_timing

    fbl = fbl or FblParams.from_config(cfg)
    if n_slots is None:
        _, n_slots = slot_timing(fbl.eta, cfg.bandwidth, cfg.t_coh)
    opt = optimizer or AlternatingOptimizer.initialise(channels, echo_at(0), cfg, fbl)
    return [opt.step(echo_at(t)) for t in range(n_slots)]
