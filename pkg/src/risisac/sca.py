"""Convex inner approximations for the beamformer (P3) and RIS (P4) subproblems.

All SINR-type surrogates share one shape over a complex decision vector ``x``
and a real slack ``q``::

    sum_i |c_i + d_i^T x|^2 + a0 + Re(f^T x) + beta q  <=  0

which is a rotated second-order cone in ``(x, q)``.  Programs are emitted in
normalised units: beamformers as fractions of sqrt(P_T), each SINR constraint
divided by its noise-plus-SI floor, rates as fractions of ``r_des``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .channel import cascaded_channels
from .conic import ProgramBuilder
from .metrics import dispersion


@dataclass
class SlackState:
    """Slack variables: ``q`` (K SINRs + radar), ``u`` (dispersion bounds), ``r`` (rates, bit/s)."""

    q: np.ndarray
    u: np.ndarray
    r: np.ndarray

    def copy(self):
        return SlackState(self.q.copy(), self.u.copy(), self.r.copy())


@dataclass
class ExpansionPoint:
    w_tilde: np.ndarray
    v_tilde: np.ndarray
    q_tilde: np.ndarray

    def __post_init__(self):
        self.q_tilde = np.asarray(self.q_tilde, dtype=float)
        for name in ("w_tilde", "v_tilde", "q_tilde"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"expansion point {name} has non-finite entries")
        if np.any(self.q_tilde <= 0):
            raise ValueError("expansion point needs q_tilde > 0 (apply the q floor first)")

    def floored(self, q_floor):
        return ExpansionPoint(self.w_tilde, self.v_tilde, np.maximum(self.q_tilde, q_floor))


@dataclass
class Surrogate:
    """``sum |c_i + d_i^T x|^2 + a0 + Re(f^T x) + beta q <= 0`` (see module docstring)."""

    c: np.ndarray  # (n_amp,)
    d: np.ndarray  # (n_amp, n)
    a0: float
    f: np.ndarray  # (n,)
    beta: float
    tag: str = ""

    def value(self, x, q):
        x = np.asarray(x).ravel(order="F")
        amps = self.c + self.d @ x
        return float(np.sum(np.abs(amps) ** 2) + self.a0 + np.real(self.f @ x) + self.beta * q)

    def scaled(self, res_scale, x_scale):
        """Residual multiplied by ``res_scale`` after substituting x = x_scale * x'."""
        s = math.sqrt(res_scale)
        return Surrogate(self.c * s, self.d * (x_scale * s), self.a0 * res_scale,
                         self.f * (x_scale * res_scale), self.beta * res_scale, self.tag)

    def shifted(self, x0):
        """Same constraint written in the displacement ``x - x0``."""
        x0 = np.asarray(x0).ravel(order="F")
        return Surrogate(self.c + self.d @ x0, self.d, self.a0 + float(np.real(self.f @ x0)),
                         self.f, self.beta, self.tag)

    def emit(self, builder, xblk, q_index, tag=None):
        """Add as ``rsoc`` (or ``nonneg`` when there are no quadratic terms)."""
        tag = tag or self.tag
        n = builder.n
        # affine part  L(x, q) = -(a0 + Re(f^T x) + beta q)  >= sum |amp|^2
        L = np.zeros(n)
        L[xblk.slice] = -_real_part_rows(self.f)
        L[q_index] -= self.beta
        L0 = -self.a0
        if self.c.shape[0] == 0:
            builder.add("nonneg", L[None, :], [L0], tag)
            return
        n_amp = self.c.shape[0]
        A = np.zeros((2 + 2 * n_amp, n))
        b = np.zeros(2 + 2 * n_amp)
        A[0], b[0] = 0.5 * L, 0.5 * L0
        b[1] = 1.0
        re, im = _complex_rows(self.d)
        A[2::2, xblk.slice] = re
        A[3::2, xblk.slice] = im
        b[2::2] = self.c.real
        b[3::2] = self.c.imag
        builder.add("rsoc", A, b, tag, dims=(A.shape[0],))


def _real_part_rows(f):
    """Coefficients of Re(f^T x) over [Re x, Im x]."""
    return np.concatenate([f.real, -f.imag])


def _complex_rows(d):
    """Rows for Re(d x) and Im(d x) over [Re x, Im x]; ``d`` is (m, n)."""
    re = np.hstack([d.real, -d.imag])
    im = np.hstack([d.imag, d.real])
    return re, im


def _column_selector(n_tx, n_cols, j, vec):
    """Place ``vec`` (length n_tx) at column ``j`` of a flattened (column-major) N_T x n_cols matrix."""
    out = np.zeros(n_tx * n_cols, complex)
    out[j * n_tx:(j + 1) * n_tx] = vec
    return out


# --------------------------------------------------------------------- surrogates

def surrogate_comm_sinr_w(k, h_hat_k, exp, sigma2_k):
    """Tangent restriction of q_k <= Gamma_k in (W, q_k) around (w~, q~_k)."""
    q_t = float(exp.q_tilde[k])
    if q_t <= 0:
        raise ValueError("q_tilde_k must be > 0")
    n_tx, n_cols = exp.w_tilde.shape
    hc = h_hat_k.conj()
    amps = [_column_selector(n_tx, n_cols, j, hc) for j in range(n_cols) if j != k]
    sig = complex(hc @ exp.w_tilde[:, k])
    f = -(2.0 / q_t) * np.conj(sig) * _column_selector(n_tx, n_cols, k, hc)
    return Surrogate(np.zeros(len(amps), complex), np.array(amps), float(sigma2_k), f,
                     abs(sig) ** 2 / q_t ** 2, tag=f"user-sinr-w[k={k}]")


def exact_comm_sinr_w(k, h_hat_k, W, q_k, sigma2_k):
    """I_k(W) + sigma^2 - |h^H w_k|^2 / q_k, the form the surrogate is tangent to."""
    a = np.abs(h_hat_k.conj() @ W) ** 2
    return float(a.sum() - a[k] + sigma2_k - a[k] / q_k)


def surrogate_radar_sinr_w(G, exp, rho, p_tx, sigma2_s):
    """Tangent restriction of q_s <= gamma_s in (w_s, q_s); linear in w_s."""
    q_t = float(exp.q_tilde[-1])
    w_t = exp.w_tilde[:, -1]
    Gw = G @ w_t
    gain = float(np.vdot(Gw, Gw).real)
    if q_t <= 0 or gain <= 0:
        raise ValueError("radar surrogate needs q_tilde_s > 0 and G w~_s != 0")
    n_tx, n_cols = exp.w_tilde.shape
    f = -(2.0 / q_t) * _column_selector(n_tx, n_cols, n_cols - 1, (G.conj().T @ Gw).conj())
    return Surrogate(np.zeros(0, complex), np.zeros((0, n_tx * n_cols), complex),
                     float(rho * p_tx + sigma2_s), f, gain / q_t ** 2, tag="radar-sinr-w")


def exact_radar_sinr_w(G, w_s, q_s, rho, p_tx, sigma2_s):
    return float(rho * p_tx + sigma2_s - np.sum(np.abs(G @ w_s) ** 2) / q_s)


def surrogate_dispersion(q_tilde_k):
    """Tangent U(q) = value + slope (q - q~) of sqrt(V(q)) at q~; returns (value, slope)."""
    if q_tilde_k <= 0:
        raise ValueError("q_tilde must be > 0 for the dispersion tangent")
    a = 1.0 + q_tilde_k
    root = math.sqrt(1.0 - a ** -2)
    return root, a ** -3 / root


def tangent_u(q, q_tilde_k):
    value, slope = surrogate_dispersion(q_tilde_k)
    return value + slope * (np.asarray(q) - q_tilde_k)


def ris_affine_maps(k, W, h_k, g_k, H):
    """(c, d) with w_j^H h_hat_k(v) = c[j] + d[j] @ v for every beam j."""
    c = W.conj().T @ h_k
    d = (H @ W).conj().T * g_k[None, :]
    return c, d


def surrogate_comm_sinr_v(k, W, h_k, g_k, H, exp, sigma2_k):
    """Tangent restriction of q_k <= Gamma_k in (v, q_k) around (v~, q~_k), W fixed."""
    if H.shape != (g_k.shape[0], W.shape[0]) or h_k.shape != (W.shape[0],):
        raise ValueError(f"dimension mismatch: W{W.shape} h{h_k.shape} g{g_k.shape} H{H.shape}")
    if exp.v_tilde.shape != g_k.shape:
        raise ValueError("v_tilde does not match the RIS size")
    q_t = float(exp.q_tilde[k])
    if q_t <= 0:
        raise ValueError("q_tilde_k must be > 0")
    c, d = ris_affine_maps(k, W, h_k, g_k, H)
    others = [j for j in range(W.shape[1]) if j != k]
    b_t = c[k] + d[k] @ exp.v_tilde
    a0 = float(sigma2_k - (2.0 / q_t) * np.real(np.conj(b_t) * c[k]))
    f = -(2.0 / q_t) * np.conj(b_t) * d[k]
    return Surrogate(c[others], d[others], a0, f, abs(b_t) ** 2 / q_t ** 2, tag=f"user-sinr-v[k={k}]")


def exact_comm_sinr_v(k, W, h_k, g_k, H, v, q_k, sigma2_k):
    c, d = ris_affine_maps(k, W, h_k, g_k, H)
    a = np.abs(c + d @ v) ** 2
    return float(a.sum() - a[k] + sigma2_k - a[k] / q_k)


def ris_penalty(v, v_tilde, alpha_v):
    """Phi = alpha_v sum Re{2 v~* v - |v~|^2}; the linear minorant of alpha_v ||v||^2 at v~."""
    if alpha_v <= 0:
        raise ValueError("alpha_v must be > 0")
    return float(alpha_v * np.sum(np.real(2 * np.conj(v_tilde) * v) - np.abs(v_tilde) ** 2))


# --------------------------------------------------------------------- programs

def _add_qos_blocks(pb, K, cfg, fbl, q_tilde, objective_weight=1.0):
    """Blocks r, q, u, s, t and the constraints shared by P3 and P4."""
    r = pb.add_block("r", K)
    q = pb.add_block("q", K + 1)
    u = pb.add_block("u", K)
    s = pb.add_block("s", K)
    t = pb.add_block("t", K)
    pb.add_objective(t, objective_weight * np.ones(K))
    rate_scale = cfg.r_des / fbl.bandwidth
    penalty = fbl.omega / math.sqrt(fbl.eta)

    rows, b = [], []
    for k in range(K):
        # t_k >= r_k - 1 and t_k >= 1 - r_k
        for sign in (1.0, -1.0):
            a = pb.row()
            a[t.offset + k] = 1.0
            a[r.offset + k] = -sign
            rows.append(a)
            b.append(sign)
    if K:
        pb.add("nonneg", np.array(rows), b, "obj-epigraph")

    rows = []
    for k in range(K):
        a = pb.row()
        a[s.offset + k] = 1.0 / math.log(2.0)
        a[r.offset + k] = -rate_scale
        a[u.offset + k] = -penalty
        rows.append(a)
    if K:
        pb.add("nonneg", np.array(rows), np.zeros(K), "rate-bound")

    A = np.zeros((3 * K, pb.n))
    bb = np.zeros(3 * K)
    for k in range(K):
        A[3 * k, s.offset + k] = 1.0
        bb[3 * k + 1] = 1.0
        A[3 * k + 2, q.offset + k] = 1.0
        bb[3 * k + 2] = 1.0
    if K:
        pb.add("exp", A, bb, "rate-log", dims=(3,) * K)

    a = pb.row()
    a[q.offset + K] = fbl.eta
    pb.add("nonneg", a[None, :], [-cfg.gamma_s_min], "sensing-qos")

    rows, b = [], []
    for k in range(K):
        value, slope = surrogate_dispersion(float(q_tilde[k]))
        a = pb.row()
        a[u.offset + k] = 1.0
        a[q.offset + k] = -slope
        rows.append(a)
        b.append(-(value - slope * q_tilde[k]))
    if K:
        pb.add("nonneg", np.array(rows), b, "dispersion")

    nonneg = np.zeros((2 * K + 1, pb.n))
    for i in range(K + 1):
        nonneg[i, q.offset + i] = 1.0
    for k in range(K):
        nonneg[K + 1 + k, u.offset + k] = 1.0
    pb.add("nonneg", nonneg, np.zeros(2 * K + 1), "slack-nonneg")
    return q


def _emit_user(pb, sur, xblk, q_index):
    """Emit a user SINR surrogate; a user with no signal at the expansion point gets q_k = 0.

    With a zero expansion signal the tangent form degenerates to sigma^2 <= 0, while the
    exact constraint q_k <= Gamma_k = 0 is simply q_k = 0.
    """
    if sur.beta == 0.0:
        a = pb.row()
        a[q_index] = 1.0
        pb.add("zero", a[None, :], [0.0], sur.tag)
        return
    sur.emit(pb, xblk, q_index)


def _check_expansion(exp, cfg):
    if np.any(exp.q_tilde < cfg.q_floor * (1 - 1e-12)):
        raise ValueError("expansion point violates the q floor")


def build_p3(channels, echo, exp, cfg, fbl):
    """Beamformer subproblem at fixed RIS phases ``exp.v_tilde``."""
    _check_expansion(exp, cfg)
    K = channels.n_users
    n_tx = channels.h.shape[1]
    if exp.w_tilde.shape != (n_tx, K + 1):
        raise ValueError(f"w_tilde must be {n_tx} x {K + 1}")
    p_tx = cfg.p_tx
    x_scale = math.sqrt(p_tx)
    pb = ProgramBuilder("P3")
    w = pb.add_block("w", 2 * n_tx * (K + 1))
    q = _add_qos_blocks(pb, K, cfg, fbl, exp.q_tilde)

    h_hat = cascaded_channels(channels, exp.v_tilde)
    for k in range(K):
        sur = surrogate_comm_sinr_w(k, h_hat[k], exp, cfg.noise)
        _emit_user(pb, sur.scaled(1.0 / cfg.noise, x_scale), w, q.offset + k)
    floor = cfg.rho * p_tx + cfg.sensing_noise
    sur = surrogate_radar_sinr_w(echo.G, exp, cfg.rho, p_tx, cfg.sensing_noise)
    sur.scaled(1.0 / floor, x_scale).emit(pb, w, q.offset + K)

    A = np.zeros((1 + w.size, pb.n))
    A[1:, w.slice] = np.eye(w.size)
    b = np.zeros(1 + w.size)
    b[0] = 1.0
    pb.add("soc", A, b, "power", dims=(1 + w.size,))
    pb.metadata.update(kind="P3", n_tx=n_tx, K=K, w_scale=x_scale, r_des=cfg.r_des)
    return pb.build()


def build_p4(channels, echo, W, exp, cfg, fbl):
    """RIS subproblem at fixed beamformers ``W`` with the modulus penalty."""
    _check_expansion(exp, cfg)
    K = channels.n_users
    M = channels.n_ris
    pb = ProgramBuilder("P4")
    # decision block is the displacement v - v~, keeping the objective O(1) near the optimum
    dv = pb.add_block("dv", 2 * M)
    q = _add_qos_blocks(pb, K, cfg, fbl, exp.q_tilde)
    vt = exp.v_tilde

    for k in range(K):
        sur = surrogate_comm_sinr_v(k, W, channels.h[k], channels.g[k], channels.H, exp, cfg.noise)
        _emit_user(pb, sur.scaled(1.0 / cfg.noise, 1.0).shifted(vt), dv, q.offset + k)

    # radar constraint with w_s fixed: only q_s is free
    floor = cfg.rho * cfg.p_tx + cfg.sensing_noise
    fixed = ExpansionPoint(W, vt, exp.q_tilde)
    sur = surrogate_radar_sinr_w(echo.G, fixed, cfg.rho, cfg.p_tx, cfg.sensing_noise).scaled(1.0 / floor, 1.0)
    a = pb.row()
    a[q.offset + K] = -sur.beta
    const = -(sur.a0 + float(np.real(sur.f @ W.ravel(order="F"))))
    pb.add("nonneg", a[None, :], [const], "radar-sinr-fixed")

    # -Phi(v~ + dv) = -alpha ||v~||^2 - 2 alpha Re(v~^H dv)
    pb.add_objective(dv, -2.0 * cfg.alpha_v * np.concatenate([vt.real, vt.imag]))
    pb.c0 = -cfg.alpha_v * float(np.sum(np.abs(vt) ** 2))

    if M:
        idx = np.arange(M)
        rows = np.concatenate([3 * idx + 1, 3 * idx + 2])
        cols = np.concatenate([dv.offset + idx, dv.offset + M + idx])
        A = sp.csr_matrix((np.ones(2 * M), (rows, cols)), shape=(3 * M, pb.n))
        b = np.zeros(3 * M)
        b[0::3] = 1.0
        b[1::3] = vt.real
        b[2::3] = vt.imag
        pb.add("soc", A, b, "unit-modulus-relaxed", dims=(3,) * M)
    pb.metadata.update(kind="P4", M=M, K=K, alpha_v=cfg.alpha_v, r_des=cfg.r_des, v_tilde=vt.copy())
    return pb.build()


def unpack_p3(program, x):
    """Primal vector of P3 -> (W in watts^(1/2), SlackState)."""
    meta = program.metadata
    n_tx, K = meta["n_tx"], meta["K"]
    parts = program.split(x)
    w = parts["w"]
    half = w.size // 2
    W = (w[:half] + 1j * w[half:]).reshape((n_tx, K + 1), order="F") * meta["w_scale"]
    return W, _slack(parts, meta)


def unpack_p4(program, x):
    """Primal vector of P4 -> (v, SlackState)."""
    parts = program.split(x)
    M = program.metadata["M"]
    v = program.metadata["v_tilde"] + parts["dv"][:M] + 1j * parts["dv"][M:]
    return v, _slack(parts, program.metadata)


def _slack(parts, meta):
    return SlackState(q=np.maximum(parts["q"], 0.0), u=np.maximum(parts["u"], 0.0),
                      r=parts["r"] * meta["r_des"])


def sqrt_dispersion(q):
    return np.sqrt(dispersion(np.maximum(q, 0.0)))
