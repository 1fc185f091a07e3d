"""Closed-form link quantities: SINRs, finite-blocklength rate, CTS and the adaptation gap."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class BeamformerState:
    """Transmit matrix ``W`` (N_T x (K+1), last column is the sensing beam) and RIS vector ``v``."""

    W: np.ndarray
    v: np.ndarray

    @property
    def w_s(self):
        return self.W[:, -1]

    def power(self):
        return float(np.sum(np.abs(self.W) ** 2))

    def copy(self):
        return BeamformerState(self.W.copy(), self.v.copy())


@dataclass(frozen=True)
class FblParams:
    eta: float
    epsilon: float
    bandwidth: float

    def __post_init__(self):
        if self.eta < 1:
            raise ValueError(f"blocklength must be >= 1, got {self.eta}")
        if not 0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")

    @property
    def omega(self):
        return q_inverse(self.epsilon) * math.log2(math.e)

    @classmethod
    def from_config(cls, cfg, eta=None):
        return cls(eta=cfg.eta if eta is None else eta, epsilon=cfg.epsilon, bandwidth=cfg.bandwidth)


def comm_sinrs(h_hat, W, sigma2):
    """SINR of every user; ``h_hat`` rows are the cascaded channels."""
    G = np.abs(h_hat.conj() @ W) ** 2  # G[k, j] = |h_k^H w_j|^2
    K = h_hat.shape[0]
    signal = G[np.arange(K), np.arange(K)]
    interference = G.sum(axis=1) - signal
    return signal / (interference + np.broadcast_to(sigma2, (K,)))


def comm_sinr(k, h_hat, state, sigma2):
    return float(comm_sinrs(h_hat, state.W, sigma2)[k])


def dispersion(gamma):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be nonnegative")
    out = 1.0 - 1.0 / (1.0 + gamma) ** 2
    return float(out) if out.ndim == 0 else out


def q_function(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def q_inverse(epsilon, tol=1e-13):
    """Inverse Gaussian Q-function by bisection on erfc."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    lo, hi = -40.0, 40.0
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if q_function(mid) > epsilon:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fbl_rate(gamma, fbl):
    """Normal-approximation rate B (log2(1+g) - Omega sqrt(V(g)/eta)); may be negative."""
    gamma = np.asarray(gamma, dtype=float)
    rate = fbl.bandwidth * (np.log2(1.0 + gamma) - fbl.omega * np.sqrt(dispersion(gamma) / fbl.eta))
    return float(rate) if rate.ndim == 0 else rate


def achieved_rate(gamma, fbl):
    """FBL rate clamped at zero, as reported for throughput."""
    return np.maximum(fbl_rate(gamma, fbl), 0.0)


def radar_sinr(echo, w_s, rho, p_tx, sigma2_s):
    return float(np.sum(np.abs(echo.G @ w_s) ** 2) / (rho * p_tx + sigma2_s))


def slot_timing(eta, bandwidth, t_coh):
    t_sens = eta / bandwidth
    # exact integer ceiling where the ratio is a rational of integers
    ratio = t_coh * bandwidth / eta
    n_slot = math.ceil(round(ratio, 9))
    return t_sens, n_slot


def cts(rates_per_slot, r_des):
    r = np.asarray(rates_per_slot, dtype=float)
    return float(np.mean(1.0 - np.minimum(r / r_des, 1.0)))


def adaptation_gap(r, r_des):
    r = np.asarray(r, dtype=float)
    return float(np.sum(np.abs(r / np.asarray(r_des, dtype=float) - 1.0)))


def served_gap(rate_bound, r_des):
    """Smallest adaptation gap reachable when user k may be served any rate <= rate_bound[k]."""
    ratio = np.minimum(np.asarray(rate_bound, dtype=float) / r_des, 1.0)
    return float(np.sum(1.0 - ratio))
