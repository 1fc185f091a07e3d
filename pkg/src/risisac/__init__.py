"""RIS-assisted full-duplex ISAC: channel model, SCA beamforming and moving-target experiments."""

from .config import ConfigError, Scene, SweepSpec, SystemConfig, desk_scale, parse_config

__version__ = "0.1.0"

__all__ = ["ConfigError", "Scene", "SweepSpec", "SystemConfig", "desk_scale", "parse_config", "__version__"]
