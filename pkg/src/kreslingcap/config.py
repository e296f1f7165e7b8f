"""Run configuration as a flat YAML mapping of dotted keys.

Example::

    schema_version: 1
    geometry.beta: 75.0
    model.fold_coeff: 0.0005
    protocol.axial_offsets: [-15, -10, -5, 0, 5, 10, 15]

Sections are ``geometry``, ``material``, ``model``, ``electrodes``,
``tank``, ``signal`` and ``protocol``; field names match the dataclasses
below.  Unknown keys are rejected.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .capacitance import ElectrodeSpec
from .errors import ParameterError
from .geometry import OrigamiParams
from .signal import TankConfig
from .structure import MaterialParams

SCHEMA_VERSION = 1


class ConfigError(ParameterError):
    """Malformed or inconsistent configuration file."""


@dataclass(frozen=True)
class ModelConfig:
    """Hinge stiffness factors (fold coefficient in 1/mm, facet-to-fold ratio).

    Defaults are the output of ``kreslingcap calibrate`` on the default geometry.
    """

    fold_coeff: float = 0.00031622776601683794
    facet_ratio: float = 20.0

    def validate(self):
        if not self.fold_coeff >= 0:
            raise ParameterError("fold_coeff must be non-negative")
        if not self.facet_ratio >= 1:
            raise ParameterError("facet_ratio must be >= 1")
        return self


@dataclass(frozen=True)
class ElectrodeConfig:
    placement: str = "F1F2"
    layers: str = "lower"
    unit: int = 0
    symmetric: bool = False
    n_pairs: int | None = None
    eps_r: float = 1.0
    area_scale: float = 0.30880845037020077  # fitted by calibrate

    def spec(self) -> ElectrodeSpec:
        return ElectrodeSpec(self.placement, self.layers, self.unit, self.symmetric, self.n_pairs, self.eps_r)

    def validate(self):
        self.spec().validate()
        if not self.area_scale > 0:
            raise ParameterError("area_scale must be positive")
        return self


@dataclass(frozen=True)
class SignalConfig:
    sample_dt: float = 0.1  # s of pseudo-time per protocol sample
    window: int | None = None  # calibrator memory in samples, None for unbounded

    def validate(self):
        if not self.sample_dt > 0:
            raise ParameterError("sample_dt must be positive")
        if self.window is not None and self.window < 1:
            raise ParameterError("window must be >= 1")
        return self


@dataclass(frozen=True)
class ProtocolConfig:
    axial_offsets: tuple = (-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
    cycles: int = 10
    theta_max: float = 30.0
    theta_points: int = 13
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axial_offsets", tuple(float(d) for d in self.axial_offsets))

    def validate(self):
        import math

        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise ParameterError("cycles must be an integer >= 1")
        if not self.theta_max > 0:
            raise ParameterError("theta_max must be positive")
        if int(self.theta_points) != self.theta_points or self.theta_points < 2:
            raise ParameterError("theta_points must be an integer >= 2")
        if not self.axial_offsets or not all(math.isfinite(d) for d in self.axial_offsets):
            raise ParameterError("axial offsets must be a non-empty list of finite numbers")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ParameterError("seed must be a non-negative integer")
        return self


_SECTIONS = {
    "geometry": OrigamiParams,
    "material": MaterialParams,
    "model": ModelConfig,
    "electrodes": ElectrodeConfig,
    "tank": TankConfig,
    "signal": SignalConfig,
    "protocol": ProtocolConfig,
}


@dataclass(frozen=True)
class Config:
    geometry: OrigamiParams = field(default_factory=OrigamiParams)
    material: MaterialParams = field(default_factory=MaterialParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    electrodes: ElectrodeConfig = field(default_factory=ElectrodeConfig)
    tank: TankConfig = field(default_factory=TankConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def validate(self):
        for name in _SECTIONS:
            getattr(self, name).validate()
        return self

    def with_values(self, **dotted):
        """Copy with dotted-key overrides, e.g. ``with_values(**{"model.fold_coeff": 1e-3})``."""
        return from_flat({**to_flat(self), **dotted})


def to_flat(cfg: Config) -> dict:
    out = {"schema_version": SCHEMA_VERSION}
    for name in _SECTIONS:
        for k, v in asdict(getattr(cfg, name)).items():
            if isinstance(v, tuple):
                v = list(v)
            out[f"{name}.{k}"] = v
    return out


def from_flat(flat: dict) -> Config:
    flat = dict(flat)
    version = flat.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    grouped = {name: {} for name in _SECTIONS}
    for key, val in flat.items():
        section, _, name = str(key).partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        allowed = {f.name for f in fields(_SECTIONS[section])}
        if name not in allowed:
            raise ConfigError(f"unknown config key {key!r}")
        grouped[section][name] = val
    parts = {}
    for section, cls in _SECTIONS.items():
        try:
            parts[section] = cls(**grouped[section])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad values in section {section!r}: {exc}") from exc
    cfg = Config(**parts)
    try:
        cfg.validate()
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> Config:
    with open(path, "r") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return from_flat(data)


def dump_config(cfg: Config) -> str:
    return yaml.safe_dump(to_flat(cfg), sort_keys=True, default_flow_style=None)


def save_config(cfg: Config, path):
    text = dump_config(cfg)
    with open(path, "w") as fh:
        fh.write(text)


def update(cfg: Config, section: str, **values) -> Config:
    return replace(cfg, **{section: replace(getattr(cfg, section), **values)})
