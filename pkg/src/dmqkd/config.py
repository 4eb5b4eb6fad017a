"""Experiment configuration: TOML in, frozen dataclasses out.

A config file has optional tables ``[modulation]``, ``[frame]``, ``[tx]``,
``[channel]``, ``[detector]``, ``[dsp]``, ``[rate]`` and top-level ``seed``
and ``n_tests``. Missing keys take the defaults below. Unknown keys are an
error so typos do not silently fall back to defaults.
"""

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from .channel import ChannelParams, DetectorParams
from .constellation import build_mb_constellation, scale_to_variance
from .exceptions import ConfigurationError
from .rxchain import RxConfig
from .txchain import TxConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "FORMATS",
    "OPERATING_POINTS",
    "DESK_SCALE_LIMIT",
    "ModulationConfig",
    "FrameConfig",
    "RateConfig",
    "ExperimentConfig",
    "load_config",
    "operating_point",
]

FORMATS = {"dg64": 64, "dg256": 256, "gaussian": None}
DESK_SCALE_LIMIT = 1_000_000

# measured operating points: format -> distance km -> (nu, V_A, xi)
OPERATING_POINTS = {
    "dg64": {5: (0.057, 7.618, 0.020), 10: (0.064, 6.513, 0.023),
             25: (0.079, 4.457, 0.022), 50: (0.086, 3.967, 0.042)},
    "dg256": {5: (0.023, 14.35, 0.037), 10: (0.027, 12.319, 0.032),
              25: (0.039, 6.332, 0.029), 50: (0.046, 4.030, 0.042)},
}
REFERENCE_SKR_MBPS = {
    "dg64": {5: 288.421, 10: 159.395, 25: 50.004, 50: 7.579},
    "dg256": {5: 326.708, 10: 179.348, 25: 50.623, 50: 9.212},
}


@dataclass(frozen=True)
class ModulationConfig:
    format: str = "dg256"
    nu: float = 0.039
    va: float = 6.332

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigurationError(f"format must be one of {sorted(FORMATS)}, got {self.format!r}")

    @property
    def order(self):
        return FORMATS[self.format]

    def constellation(self):
        """Shaped constellation scaled to ``va``; None for Gaussian modulation."""
        if self.order is None:
            return None
        return scale_to_variance(build_mb_constellation(self.order, self.nu), self.va)


@dataclass(frozen=True)
class FrameConfig:
    n_symbols: int = 100_000
    p_ts: float = 0.2
    ccdm_length: int = 1024
    allow_full_scale: bool = False

    def __post_init__(self):
        if self.n_symbols > DESK_SCALE_LIMIT and not self.allow_full_scale:
            raise ConfigurationError(
                f"{self.n_symbols} symbols exceeds the desk-scale limit of {DESK_SCALE_LIMIT}; "
                "set allow_full_scale (CLI: --full-scale) to run it"
            )


@dataclass(frozen=True)
class RateConfig:
    beta: float = 0.95
    rs_baud: float = 1e9
    z_model: str = "gaussian"


_SECTIONS = {
    "modulation": ModulationConfig,
    "frame": FrameConfig,
    "tx": TxConfig,
    "channel": ChannelParams,
    "detector": DetectorParams,
    "dsp": RxConfig,
    "rate": RateConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    modulation: ModulationConfig = field(default_factory=ModulationConfig)
    frame: FrameConfig = field(default_factory=FrameConfig)
    tx: TxConfig = field(default_factory=TxConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    dsp: RxConfig = field(default_factory=RxConfig)
    rate: RateConfig = field(default_factory=RateConfig)
    seed: int = 0
    n_tests: int = 20

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, record):
        record = dict(record)
        unknown = set(record) - set(_SECTIONS) - {"seed", "n_tests"}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, section in _SECTIONS.items():
            values = dict(record.get(name, {}))
            known = {f.name for f in fields(section)}
            bad = set(values) - known
            if bad:
                raise ConfigurationError(f"unknown keys in [{name}]: {sorted(bad)}")
            try:
                kwargs[name] = section(**values)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"[{name}]: {exc}") from exc
        return cls(seed=int(record.get("seed", 0)), n_tests=int(record.get("n_tests", 20)), **kwargs)

    def config_hash(self):
        """SHA-256 of the canonical JSON form (seed included)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def with_overrides(self, seed=None, n_symbols=None, n_tests=None, fmt=None, distance_km=None,
                       z_model=None, full_scale=None):
        """Copy with CLI flag overrides applied (``None`` leaves a field alone)."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if n_tests is not None:
            cfg = replace(cfg, n_tests=int(n_tests))
        if n_symbols is not None or full_scale is not None:
            frame = cfg.frame
            cfg = replace(cfg, frame=replace(
                frame,
                n_symbols=int(n_symbols) if n_symbols is not None else frame.n_symbols,
                allow_full_scale=bool(full_scale) if full_scale is not None else frame.allow_full_scale,
            ))
        if fmt is not None:
            cfg = replace(cfg, modulation=replace(cfg.modulation, format=fmt))
        if distance_km is not None:
            cfg = replace(cfg, channel=replace(cfg.channel, distance_km=float(distance_km)))
        if z_model is not None:
            cfg = replace(cfg, rate=replace(cfg.rate, z_model=z_model))
        return cfg


def load_config(path):
    try:
        with open(path, "rb") as fh:
            record = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(record)


def operating_point(fmt, distance_km, **overrides):
    """Config for one measured operating point (``fmt`` is ``dg64`` or ``dg256``)."""
    try:
        nu, va, xi = OPERATING_POINTS[fmt][distance_km]
    except KeyError:
        raise ConfigurationError(f"no operating point for {fmt!r} at {distance_km} km") from None
    cfg = ExperimentConfig(
        modulation=ModulationConfig(format=fmt, nu=nu, va=va),
        channel=ChannelParams(distance_km=float(distance_km), excess_noise_snu=xi),
    )
    return replace(cfg, **overrides) if overrides else cfg
