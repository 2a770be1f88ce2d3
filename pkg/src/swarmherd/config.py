"""Experiment configuration: strict schema, canonical serialization, hashing.

Configs are JSON objects with one sub-object per concern. Unknown keys are
rejected everywhere -- a silently ignored typo in a physical constant would
invalidate an experiment. The canonical serialization (sorted keys, repr
floats) backs a content hash that output files embed so any artifact can
be traced to the exact configuration that produced it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .feasibility import GoalRegion, VonMisesSpec
from .grids import GridSpec
from .kde import KdeParams
from .kernel import KernelParams
from .microsim import SimParams
from .torus import ArenaMap, PI


class ConfigError(ValueError):
    pass


def _check_keys(section: str, data: dict, allowed: set[str]):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in '{section}': {sorted(unknown)}; "
            f"allowed: {sorted(allowed)}"
        )


def _section(cls, section: str, data: dict):
    names = {f.name for f in fields(cls)}
    _check_keys(section, data, names)
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


@dataclass(frozen=True)
class DomainConfig:
    arena_half_width: float | None = None  # null: report positions on the torus

    def __post_init__(self):
        if self.arena_half_width is not None and not self.arena_half_width > 0:
            raise ValueError("arena half width must be positive")

    def arena(self) -> ArenaMap | None:
        if self.arena_half_width is None:
            return None
        return ArenaMap(self.arena_half_width)


@dataclass(frozen=True)
class KernelConfig:
    length: float = PI
    images: int = 2

    def params(self) -> KernelParams:
        return KernelParams(length=self.length, images=self.images)


@dataclass(frozen=True)
class GoalConfig:
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = PI / 2

    def region(self) -> GoalRegion:
        return GoalRegion(center=np.asarray(self.center), radius=self.radius)


@dataclass(frozen=True)
class TargetDensityConfig:
    concentration: float | None = None  # null: 3 / goal radius
    cross_term: bool = False

    def __post_init__(self):
        if self.concentration is not None and not self.concentration > 0:
            raise ValueError("concentration must be positive")


@dataclass(frozen=True)
class PopulationConfig:
    n_targets: int = 720
    n_herders: int | None = None  # null: computed from the feasibility pipeline

    def __post_init__(self):
        if self.n_targets < 1:
            raise ValueError("need at least one target")
        if self.n_herders is not None and self.n_herders < 0:
            raise ValueError("herder count cannot be negative")


@dataclass(frozen=True)
class SimConfig:
    diffusion: float = 0.01
    dt: float = 0.01
    horizon: float = 200.0
    seed: int = 0
    control_every: int = 1
    v_max: float | None = None

    def params(self, seed: int | None = None) -> SimParams:
        return SimParams(
            diffusion=self.diffusion,
            dt=self.dt,
            horizon=self.horizon,
            seed=self.seed if seed is None else seed,
            control_every=self.control_every,
            v_max=self.v_max,
        )


@dataclass(frozen=True)
class GridConfig:
    control: int = 64
    deconvolution: int = 25

    def control_grid(self) -> GridSpec:
        return GridSpec(self.control)

    def deconvolution_grid(self) -> GridSpec:
        return GridSpec(self.deconvolution)


@dataclass(frozen=True)
class KdeConfig:
    bandwidth: float = 0.4
    images: int = 2
    sequential: bool = False

    def params(self, mass: float = 1.0) -> KdeParams:
        return KdeParams(bandwidth=self.bandwidth, images=self.images, mass=mass)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    metrics_every: int = 100  # steps between containment records
    snapshot_every: int = 0  # steps between trajectory snapshots; 0: ends only
    fields: bool = False  # also dump the reference/control grid fields

    def __post_init__(self):
        if self.metrics_every < 1:
            raise ValueError("metrics cadence must be >= 1 step")
        if self.snapshot_every < 0:
            raise ValueError("snapshot cadence cannot be negative")


@dataclass(frozen=True)
class ExperimentConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    goal: GoalConfig = field(default_factory=GoalConfig)
    target_density: TargetDensityConfig = field(default_factory=TargetDensityConfig)
    population: PopulationConfig = field(default_factory=PopulationConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    grids: GridConfig = field(default_factory=GridConfig)
    kde: KdeConfig = field(default_factory=KdeConfig)
    gain: float = 10.0
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("gain must be positive")

    # -- dict / file round trip -------------------------------------------------

    _SECTIONS = {
        "domain": DomainConfig,
        "kernel": KernelConfig,
        "goal": GoalConfig,
        "target_density": TargetDensityConfig,
        "population": PopulationConfig,
        "sim": SimConfig,
        "grids": GridConfig,
        "kde": KdeConfig,
        "output": OutputConfig,
    }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        _check_keys("config", data, set(cls._SECTIONS) | {"gain"})
        kwargs = {}
        for name, section_cls in cls._SECTIONS.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"'{name}' must be an object")
            if name == "goal" and "center" in raw:
                raw = dict(raw, center=tuple(raw["center"]))
            kwargs[name] = _section(section_cls, name, raw)
        gain = data.get("gain", 10.0)
        if not isinstance(gain, (int, float)):
            raise ConfigError("'gain' must be a number")
        return cls(gain=float(gain), **kwargs)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["goal"] = dict(data["goal"], center=list(self.goal.center))
        return data

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)

    def save(self, path: str | Path):
        Path(path).write_text(self.canonical_json() + "\n")

    # -- derived quantities -----------------------------------------------------

    def concentration(self) -> float:
        if self.target_density.concentration is not None:
            return self.target_density.concentration
        return 3.0 / self.goal.radius

    def von_mises_spec(self, mass: float = 1.0) -> VonMisesSpec:
        k = self.concentration()
        return VonMisesSpec(
            concentration=(k, k),
            mean=np.asarray(self.goal.center),
            mass=mass,
            cross_term=self.target_density.cross_term,
        )
