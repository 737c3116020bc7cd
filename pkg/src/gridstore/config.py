"""Scenario configuration: dataclasses, popularity models, YAML round-trip.

A configuration file fully determines a simulation run (grid, demand,
policy, horizon, seed), so two runs from the same file and seed are
byte-identical.  Validation reports the offending key path and never
corrects values silently.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import yaml

from .engine import RobotKinematics, Scenario
from .model import BinCatalog, GridSpec, ValidationError, normalize_catalog, \
    pad_with_empty_bins
from .policies import PolicyKind


class ConfigError(ValueError):
    """A configuration value or key is invalid; message names the key path."""


@dataclass
class PopularityConfig:
    """Demand model over ``bins`` items.

    model:
      zipf               weight 1/i**s
      geometric          weight q**i (truncated)
      piecewise          the most popular ``popular_fraction`` of items carry
                         ``popular_mass`` of the demand, geometric decay with
                         ratio q inside each segment, and a ``zero_fraction``
                         tail of items that are never requested
    """

    model: str = "piecewise"
    bins: int = 225
    s: float = 1.0
    q: float = 0.97
    popular_fraction: float = 0.2
    popular_mass: float = 0.8
    zero_fraction: float = 0.05

    def weights(self) -> list[float]:
        if self.bins < 1:
            raise ConfigError("popularity.bins: must be >= 1")
        if self.model == "zipf":
            if self.s < 0:
                raise ConfigError("popularity.s: must be >= 0")
            return [1.0 / (i + 1) ** self.s for i in range(self.bins)]
        if self.model == "geometric":
            if not (0.0 < self.q <= 1.0):
                raise ConfigError("popularity.q: must be in (0, 1]")
            return [self.q ** i for i in range(self.bins)]
        if self.model == "piecewise":
            if not (0.0 < self.q <= 1.0):
                raise ConfigError("popularity.q: must be in (0, 1]")
            if not (0.0 < self.popular_fraction < 1.0):
                raise ConfigError("popularity.popular_fraction: must be in (0, 1)")
            if not (0.0 < self.popular_mass < 1.0):
                raise ConfigError("popularity.popular_mass: must be in (0, 1)")
            if not (0.0 <= self.zero_fraction < 1.0):
                raise ConfigError("popularity.zero_fraction: must be in [0, 1)")
            n_zero = int(self.bins * self.zero_fraction)
            n_live = self.bins - n_zero
            n_pop = int(np.ceil(n_live * self.popular_fraction))
            n_rest = n_live - n_pop
            if n_pop < 1 or n_rest < 1:
                raise ConfigError(
                    "popularity.popular_fraction: segments degenerate at this bin count")
            wp = self.q ** np.arange(n_pop)
            wp = wp / wp.sum() * self.popular_mass
            wr = self.q ** np.arange(n_rest)
            wr = wr / wr.sum() * (1.0 - self.popular_mass)
            return list(wp) + list(wr) + [0.0] * n_zero
        raise ConfigError(f"popularity.model: unknown model {self.model!r}")

    def catalog(self) -> BinCatalog:
        return normalize_catalog(self.weights())


@dataclass
class GridConfig:
    rows: int = 8
    cols: int = 6
    height: int = 6
    fill_level: int = 5
    cell_length: float = 0.65
    cell_width: float = 0.45
    bin_height: float = 0.33
    workstations: list[list[int]] = field(
        default_factory=lambda: [[1, 1], [8, 6]])
    buffer_stack: int | None = 46

    def spec(self, with_buffer: bool) -> GridSpec:
        if not (1 <= self.fill_level <= self.height):
            raise ConfigError("grid.fill_level: must be in 1..grid.height")
        reserve = 1.0 - self.fill_level / self.height
        try:
            return GridSpec(
                rows=self.rows, cols=self.cols, height=self.height,
                fill_level=self.fill_level, reserve_fraction=reserve,
                cell_length=self.cell_length, cell_width=self.cell_width,
                bin_height=self.bin_height,
                workstations=tuple((r, c) for r, c in self.workstations),
                buffer_stack=self.buffer_stack if with_buffer else None,
            )
        except ValidationError as e:
            raise ConfigError(f"grid: {e}") from e


@dataclass
class RobotConfig:
    count: int = 4
    top_speed: float = 3.1
    acceleration: float = 0.8
    lift_speed: float = 1.6
    load: float = 1.2
    unload: float = 1.0
    turn: float = 1.0

    def kinematics(self) -> RobotKinematics:
        try:
            return RobotKinematics(
                top_speed=self.top_speed, acceleration=self.acceleration,
                lift_speed=self.lift_speed, load=self.load,
                unload=self.unload, turn=self.turn)
        except ValidationError as e:
            raise ConfigError(f"robots: {e}") from e


@dataclass
class ScenarioConfig:
    """Complete run description, the unit of (de)serialization."""

    name: str = "desk"
    policy: str = "layer_complete"
    grid: GridConfig = field(default_factory=GridConfig)
    robots: RobotConfig = field(default_factory=RobotConfig)
    popularity: PopularityConfig = field(default_factory=PopularityConfig)
    request_rate: float = 5.0          # requests per minute
    processing_time: float = 30.0      # seconds at the workstation
    horizon_hours: float | None = None
    horizon_requests: int | None = 10000
    seed: int = 0
    randomization_percent: int = 40
    check_period: float = 300.0
    epsilon: float = 0.2

    def policy_kind(self) -> PolicyKind:
        try:
            return PolicyKind(self.policy)
        except ValueError:
            valid = ", ".join(p.value for p in PolicyKind)
            raise ConfigError(f"policy: {self.policy!r} is not one of {valid}")

    def scenario(self) -> Scenario:
        kind = self.policy_kind()
        with_buffer = kind is PolicyKind.LAYER_COMPLETE
        spec = self.grid.spec(with_buffer)
        catalog = pad_with_empty_bins(spec, self.popularity.catalog())
        if (self.horizon_hours is None) == (self.horizon_requests is None):
            raise ConfigError(
                "horizon_hours / horizon_requests: exactly one must be set")
        try:
            return Scenario(
                spec=spec, catalog=catalog, policy=kind,
                robots=self.robots.count,
                request_rate=self.request_rate,
                processing_time=self.processing_time,
                horizon_seconds=(None if self.horizon_hours is None
                                 else self.horizon_hours * 3600.0),
                horizon_requests=self.horizon_requests,
                seed=self.seed,
                randomization_percent=self.randomization_percent,
                kinematics=self.robots.kinematics(),
                check_period=self.check_period,
                epsilon=self.epsilon,
            )
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    def with_policy(self, policy: str) -> "ScenarioConfig":
        return dataclasses.replace(self, policy=policy)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return dataclasses.replace(self, seed=seed)


def desk_config(policy: str = "layer_complete", seed: int = 0,
                randomization_percent: int = 40) -> ScenarioConfig:
    """Default desk-scale scenario: 8x6 footprint, height 6, 225 items at
    fill level 5 (45 occupied stacks plus one buffer stack), 4 robots,
    2 workstations, 5 requests/min."""
    return ScenarioConfig(policy=policy, seed=seed,
                          randomization_percent=randomization_percent)


_SECTION_TYPES = {
    "grid": GridConfig,
    "robots": RobotConfig,
    "popularity": PopularityConfig,
}


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'top level'}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"{where}: unknown key")
    kwargs = {}
    for key, value in data.items():
        sub = _SECTION_TYPES.get(key)
        if sub is not None:
            kwargs[key] = _build(sub, value, key)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{path or 'top level'}: {e}") from e


def loads(text: str) -> ScenarioConfig:
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    return _build(ScenarioConfig, data, "")


def load(path: str) -> ScenarioConfig:
    with open(path) as f:
        return loads(f.read())


def dumps(config: ScenarioConfig) -> str:
    return yaml.safe_dump(dataclasses.asdict(config), sort_keys=False)


def dump(config: ScenarioConfig, path: str):
    with open(path, "w") as f:
        f.write(dumps(config))
