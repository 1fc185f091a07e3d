"""Propagation model: steering vectors, user/RIS channels and the radar echo."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    n_elements: int
    spacing: float = 0.5  # wavelengths
    orientation: float = 0.0  # boresight angle, rad

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError(f"n_elements must be >= 1, got {self.n_elements}")
        if self.spacing <= 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")


@dataclass(frozen=True)
class ChannelSet:
    """One coherence interval of user channels.

    ``h`` is K x N_T (row k is h_k), ``H`` is M x N_T, ``g`` is K x M (row k is g_k).
    """

    h: np.ndarray
    H: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        K, n_tx = self.h.shape
        M = self.H.shape[0]
        if self.H.shape != (M, n_tx) or self.g.shape != (K, M):
            raise ValueError(f"inconsistent channel shapes h{self.h.shape} H{self.H.shape} g{self.g.shape}")
        for a in (self.h, self.H, self.g):
            if not np.all(np.isfinite(a)):
                raise ValueError("channel entries must be finite")

    @property
    def n_users(self):
        return self.h.shape[0]

    @property
    def n_ris(self):
        return self.H.shape[0]


@dataclass(frozen=True)
class EchoModel:
    alpha: complex
    theta: float
    a_T: np.ndarray
    a_R: np.ndarray
    G: np.ndarray


def ula_steering(theta, geometry):
    """Steering vector exp(j 2 pi d n sin(theta - orientation)), n = 0..N-1."""
    n = np.arange(geometry.n_elements)
    phase = 2 * np.pi * geometry.spacing * n * np.sin(theta - geometry.orientation)
    return np.exp(1j * phase)


def free_space_gain(distance, wavelength, exponent=2.0):
    """Power gain (lambda / 4 pi)^2 / d^exponent."""
    if distance <= 0:
        raise ValueError(f"distance must be > 0, got {distance}")
    return (wavelength / (4 * np.pi)) ** 2 / distance ** exponent


def echo_coefficient(d_xy, cfg, phase=0.0):
    """alpha = sqrt(delta (d0/d)^nu) e^{j phase}."""
    if not d_xy > 0:
        raise ValueError(f"target distance must be > 0, got {d_xy}")
    mag = math.sqrt(cfg.delta * (cfg.d0 / d_xy) ** cfg.radar_pathloss_exp)
    return mag * np.exp(1j * phase)


def build_echo(target_pos, cfg, geometry_T, geometry_R, phase=0.0, bs_pos=(0.0, 0.0)):
    dx = target_pos[0] - bs_pos[0]
    dy = target_pos[1] - bs_pos[1]
    d_xy = math.hypot(dx, dy)
    if d_xy == 0:
        raise ValueError("target coincides with the BS")
    theta = math.atan2(dy, dx)
    alpha = echo_coefficient(d_xy, cfg, phase)
    a_T = ula_steering(theta, geometry_T)
    a_R = ula_steering(theta, geometry_R)
    return EchoModel(alpha=alpha, theta=theta, a_T=a_T, a_R=a_R, G=alpha * np.outer(a_R, a_T.conj()))


def gen_rician(los_direction, pathloss, k_factor, rng, geometry):
    """Rician vector sqrt(pl) (sqrt(K/(K+1)) a e^{j phi} + sqrt(1/(K+1)) z).

    ``k_factor=np.inf`` gives the deterministic LoS limit.
    """
    if pathloss < 0:
        raise ValueError(f"pathloss must be >= 0, got {pathloss}")
    if k_factor < 0:
        raise ValueError(f"k_factor must be >= 0, got {k_factor}")
    n = geometry.n_elements
    a = ula_steering(los_direction, geometry)
    phi = rng.uniform(0, 2 * np.pi)
    z = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    if np.isinf(k_factor):
        los_w, nlos_w = 1.0, 0.0
    else:
        los_w, nlos_w = np.sqrt(k_factor / (k_factor + 1)), np.sqrt(1 / (k_factor + 1))
    return np.sqrt(pathloss) * (los_w * a * np.exp(1j * phi) + nlos_w * z)


def ris_element_positions(rows, cols, spacing):
    """Element coordinates (in wavelengths) of a rows x cols planar grid."""
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    return spacing * np.column_stack([r.ravel(), c.ravel()])


def ris_correlation(rows, cols, spacing):
    """Isotropic-scattering correlation sinc(2 d_mn / lambda) over the grid."""
    pos = ris_element_positions(rows, cols, spacing)
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    return np.sinc(2 * d)


@functools.lru_cache(maxsize=8)
def _ris_sqrt_correlation(rows, cols, spacing):
    R = ris_correlation(rows, cols, spacing)
    lam, U = np.linalg.eigh(R)
    root = (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.conj().T
    root.setflags(write=False)
    return root


def _apply_real(R, Z):
    """R @ Z for real R without promoting R to complex."""
    return R @ Z.real + 1j * (R @ Z.imag)


def gen_ris_channels(cfg, rng):
    """Correlated Rayleigh BS->RIS matrix H (M x N_T) and RIS->user rows g (K x M)."""
    M, n_tx, K = cfg.n_ris, cfg.n_tx, cfg.n_users
    if M == 0:
        return np.zeros((0, n_tx), complex), np.zeros((K, 0), complex)
    root = _ris_sqrt_correlation(cfg.ris_rows, cfg.ris_cols, cfg.ris_spacing)
    lam = cfg.wavelength
    scene = cfg.scene
    d_br = math.dist(scene.bs_pos, scene.ris_pos)
    pl_br = free_space_gain(d_br, lam, cfg.comm_pathloss_exp)
    Z = (rng.standard_normal((M, n_tx)) + 1j * rng.standard_normal((M, n_tx))) / np.sqrt(2)
    H = np.sqrt(pl_br) * _apply_real(root, Z)
    g = np.empty((K, M), complex)
    for k, upos in enumerate(scene.user_pos):
        pl = free_space_gain(math.dist(scene.ris_pos, upos), lam, cfg.comm_pathloss_exp)
        z = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / np.sqrt(2)
        g[k] = np.sqrt(pl) * _apply_real(root, z)
    return H, g


def gen_channel_set(cfg, rng):
    """Draw all user-side channels for one coherence interval."""
    geom = ArrayGeometry(cfg.n_tx, cfg.antenna_spacing)
    scene = cfg.scene
    h = np.empty((cfg.n_users, cfg.n_tx), complex)
    for k, upos in enumerate(scene.user_pos):
        dx, dy = upos[0] - scene.bs_pos[0], upos[1] - scene.bs_pos[1]
        pl = free_space_gain(math.hypot(dx, dy), cfg.wavelength, cfg.comm_pathloss_exp)
        h[k] = gen_rician(math.atan2(dy, dx), pl, cfg.k_factor, rng, geom)
    H, g = gen_ris_channels(cfg, rng)
    return ChannelSet(h=h, H=H, g=g)


def cascaded_channel(h_k, g_k, H, v):
    """h_hat_k with h_hat_k^H = h_k^H + g_k^H diag(v^*) H."""
    h_k, g_k, v = np.asarray(h_k), np.asarray(g_k), np.asarray(v)
    if H.shape != (g_k.shape[0], h_k.shape[0]) or v.shape != g_k.shape:
        raise ValueError(f"dimension mismatch: h{h_k.shape} g{g_k.shape} H{H.shape} v{v.shape}")
    row = h_k.conj() + (g_k.conj() * v.conj()) @ H
    return row.conj()


def cascaded_channels(channels, v):
    """All K cascaded channels as rows of a K x N_T array."""
    rows = channels.h.conj() + (channels.g.conj() * np.conj(v)) @ channels.H
    return rows.conj()


def ris_affine_maps_all(W_users, channels):
    """(c, d) with w_k^H h_hat_k(v) = c[k] + d[k] @ v for each user's own beam."""
    c = np.einsum("nk,kn->k", W_users.conj(), channels.h)
    d = (channels.H @ W_users).conj().T * channels.g
    return c, d
