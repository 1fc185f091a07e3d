"""System configuration for the RIS-assisted full-duplex ISAC scenario.

Config files are flat TOML documents with dotted keys grouped by section::

    system.n_tx = 8
    system.p_tx_dbm = 32.0
    scene.target_velocity = [0.0, 30.0]
    optim.alpha_v = 1000.0
    sweep.eta = [125, 150, 200]

Every key is optional; anything omitted falls back to the defaults below,
which describe the full-size scenario (50 x 50 RIS, no slot decimation).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised when a configuration key is unknown or outside its valid range."""


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class Scene:
    """Planar geometry of the experiment (metres, BS at ``bs_pos``)."""

    bs_pos: tuple = (0.0, 0.0)
    ris_pos: tuple = (135.0, 40.0)
    user_pos: tuple = ((120.0, 4.0), (140.0, 0.0))
    target_start: tuple = (100.0, -1.0)
    target_velocity: tuple = (0.0, 30.0)
    area: tuple = (0.0, 150.0, -10.0, 40.0)  # xmin, xmax, ymin, ymax

    @property
    def n_users(self):
        return len(self.user_pos)

    def validate(self):
        xmin, xmax, ymin, ymax = self.area
        if not (xmin < xmax and ymin < ymax):
            raise ConfigError("scene.area must be [xmin, xmax, ymin, ymax] with xmin<xmax, ymin<ymax")
        named = [("scene.bs_pos", self.bs_pos), ("scene.ris_pos", self.ris_pos),
                 ("scene.target_start", self.target_start)]
        named += [(f"scene.user_pos[{i}]", p) for i, p in enumerate(self.user_pos)]
        for key, p in named:
            if len(p) != 2:
                raise ConfigError(f"{key} must be a 2-D point")
            if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
                raise ConfigError(f"{key}={list(p)} lies outside scene.area {list(self.area)}")
        if len(self.target_velocity) != 2:
            raise ConfigError("scene.target_velocity must be a 2-D vector")
        if tuple(self.target_start) == tuple(self.bs_pos):
            raise ConfigError("scene.target_start must differ from scene.bs_pos")


@dataclass(frozen=True)
class SweepSpec:
    eta: tuple = (125, 150, 200)
    rho_db: tuple = (-120.0, -118.0)
    seeds: int = 1
    seed_base: int = 0

    def validate(self):
        if not self.eta or any(int(e) < 1 for e in self.eta):
            raise ConfigError("sweep.eta must be a nonempty list of integers >= 1")
        if not self.rho_db or any(r > 0 for r in self.rho_db):
            raise ConfigError("sweep.rho_db must be a nonempty list of values <= 0 dB")
        if self.seeds < 1:
            raise ConfigError("sweep.seeds must be >= 1")


@dataclass(frozen=True)
class SystemConfig:
    # -- system.* : physical layer
    n_tx: int = 8
    n_rx: int = 8
    p_tx_dbm: float = 32.0
    bandwidth: float = 10e6
    carrier_hz: float = 5e9
    epsilon: float = 1e-3
    noise_dbm: float = -100.0
    sensing_noise_dbm: float = -100.0
    r_des: float = 20e6
    gamma_s_min_db: float = -5.0
    t_coh: float = 0.2
    eta: int = 125
    rho_db: float = -120.0
    radar_pathloss_exp: float = 4.0
    d0: float = 1.0
    rcs: float = 1.0
    comm_pathloss_exp: float = 2.0
    k_factor: float = 1000.0
    ris_rows: int = 50
    ris_cols: int = 50
    ris_spacing: float = 0.25  # wavelengths
    antenna_spacing: float = 0.5  # wavelengths
    # -- optim.* : SCA / alternating optimisation
    alpha_v: float = 1e3
    sca_tol: float = 1e-4
    sca_max_iter: int = 50
    inner_sca: int = 5
    warm_start_iter: int = 50
    q_floor: float = 1e-6
    relinearize_realized: bool = True
    decimate: int = 1
    angle_error_std: float = 0.0
    backend: str = "clarabel"
    solver_tol: float = 1e-8
    scene: Scene = field(default_factory=Scene)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    # derived quantities -------------------------------------------------
    @property
    def n_users(self):
        return self.scene.n_users

    @property
    def n_ris(self):
        return self.ris_rows * self.ris_cols

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def p_tx(self):
        return dbm_to_watt(self.p_tx_dbm)

    @property
    def noise(self):
        return dbm_to_watt(self.noise_dbm)

    @property
    def sensing_noise(self):
        return dbm_to_watt(self.sensing_noise_dbm)

    @property
    def rho(self):
        return db_to_linear(self.rho_db)

    @property
    def gamma_s_min(self):
        return db_to_linear(self.gamma_s_min_db)

    @property
    def delta(self):
        """Reference echo gain at ``d0`` from the monostatic radar equation."""
        return self.wavelength ** 2 * self.rcs / ((4 * math.pi) ** 3 * self.d0 ** 4)

    @property
    def omega(self):
        from .metrics import q_inverse

        return q_inverse(self.epsilon) * math.log2(math.e)

    def validate(self):
        checks = [
            ("system.n_tx", self.n_tx >= 1, ">= 1"),
            ("system.n_rx", self.n_rx >= 1, ">= 1"),
            ("system.p_tx_dbm", math.isfinite(self.p_tx_dbm), "finite dBm"),
            ("system.bandwidth", self.bandwidth > 0, "> 0 Hz"),
            ("system.carrier_hz", self.carrier_hz > 0, "> 0 Hz"),
            ("system.epsilon", 0 < self.epsilon < 0.5, "in (0, 0.5)"),
            ("system.r_des", self.r_des > 0, "> 0 bit/s"),
            ("system.t_coh", self.t_coh > 0, "> 0 s"),
            ("system.eta", self.eta >= 1, ">= 1 symbol"),
            ("system.rho_db", self.rho_db <= 0, "<= 0 dB (rho in [0, 1])"),
            ("system.radar_pathloss_exp", self.radar_pathloss_exp > 0, "> 0"),
            ("system.d0", self.d0 > 0, "> 0 m"),
            ("system.rcs", self.rcs > 0, "> 0 m^2"),
            ("system.comm_pathloss_exp", self.comm_pathloss_exp > 0, "> 0"),
            ("system.k_factor", self.k_factor >= 0, ">= 0"),
            ("system.ris_rows", self.ris_rows >= 0, ">= 0"),
            ("system.ris_cols", self.ris_cols >= 0, ">= 0"),
            ("system.ris_spacing", self.ris_spacing > 0, "> 0 wavelengths"),
            ("system.antenna_spacing", self.antenna_spacing > 0, "> 0 wavelengths"),
            ("optim.alpha_v", self.alpha_v > 0, "> 0"),
            ("optim.sca_tol", self.sca_tol > 0, "> 0"),
            ("optim.sca_max_iter", self.sca_max_iter >= 1, ">= 1"),
            ("optim.inner_sca", self.inner_sca >= 1, ">= 1"),
            ("optim.warm_start_iter", self.warm_start_iter >= 0, ">= 0"),
            ("optim.q_floor", self.q_floor > 0, "> 0"),
            ("optim.decimate", self.decimate >= 1, ">= 1"),
            ("optim.angle_error_std", self.angle_error_std >= 0, ">= 0 rad"),
            ("optim.backend", self.backend in ("clarabel", "cvxpy"), "one of clarabel, cvxpy"),
            ("optim.solver_tol", 0 < self.solver_tol < 1e-2, "in (0, 1e-2)"),
        ]
        for key, ok, valid in checks:
            if not ok:
                raise ConfigError(f"{key}={_field_value(self, key)!r} is invalid; valid range: {valid}")
        if self.p_tx_dbm > 80:
            raise ConfigError(f"system.p_tx_dbm={self.p_tx_dbm} is invalid; valid range: <= 80 dBm")
        self.scene.validate()
        self.sweep.validate()
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes).validate()

    def to_dict(self):
        return dataclasses.asdict(self)

    def checksum(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()


def _field_value(cfg, dotted):
    return getattr(cfg, dotted.split(".", 1)[1])


DESK_SCALE = {"ris_rows": 16, "ris_cols": 16, "decimate": 8}


def desk_scale(cfg, keep=()):
    """16 x 16 RIS and 8x slot decimation, for CI-sized runs; fields named in ``keep`` are left alone."""
    return cfg.replace(**{k: v for k, v in DESK_SCALE.items() if k not in keep})


_SYSTEM_KEYS = {f.name for f in dataclasses.fields(SystemConfig)} - {"scene", "sweep"}
_OPTIM_KEYS = {
    "alpha_v", "sca_tol", "sca_max_iter", "inner_sca", "warm_start_iter", "q_floor",
    "relinearize_realized", "decimate", "angle_error_std", "backend", "solver_tol",
}
_SCENE_KEYS = {f.name for f in dataclasses.fields(Scene)}
_SWEEP_KEYS = {f.name for f in dataclasses.fields(SweepSpec)}


def _as_tuple(x):
    if isinstance(x, list):
        return tuple(_as_tuple(v) for v in x)
    return x


def _watt_to_dbm(value):
    """``system.p_tx_w`` is an alternative to ``system.p_tx_dbm`` given in watts."""
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"system.p_tx_w={value!r} is invalid; valid range: > 0 W")
    return 10.0 * math.log10(value * 1e3)


def config_from_mapping(data):
    """Build a validated :class:`SystemConfig` from a nested ``{section: {key: value}}`` mapping."""
    unknown_sections = set(data) - {"system", "optim", "scene", "sweep"}
    if unknown_sections:
        raise ConfigError(f"unknown config section(s): {sorted(unknown_sections)}")
    top, scene, sweep = {}, {}, {}
    for section, allowed, sink in (
        ("system", _SYSTEM_KEYS - _OPTIM_KEYS, top),
        ("optim", _OPTIM_KEYS, top),
        ("scene", _SCENE_KEYS, scene),
        ("sweep", _SWEEP_KEYS, sweep),
    ):
        values = data.get(section, {})
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must hold key = value pairs")
        for key, value in values.items():
            if section == "system" and key == "p_tx_w":
                top["p_tx_dbm"] = _watt_to_dbm(value)
                continue
            if key not in allowed:
                raise ConfigError(f"unknown config key {section}.{key}")
            sink[key] = _as_tuple(value)

    defaults = SystemConfig()
    try:
        for key, value in top.items():
            want = type(getattr(defaults, key))
            if want is float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)
            if want is int and isinstance(value, float) and value.is_integer():
                value = int(value)
            if not isinstance(value, want) or (want is int and isinstance(value, bool)):
                raise ConfigError(f"{_section_of(key)}.{key} must be of type {want.__name__}")
            top[key] = value
        cfg = SystemConfig(scene=Scene(**scene), sweep=SweepSpec(**sweep), **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def _section_of(key):
    return "optim" if key in _OPTIM_KEYS else "system"


def read_config_mapping(path):
    """Raw ``{section: {key: value}}`` mapping of a dotted-key TOML file."""
    text = Path(path).read_text()
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(path):
    """Parse a dotted-key TOML config file; an empty file yields the defaults."""
    return config_from_mapping(read_config_mapping(path))
