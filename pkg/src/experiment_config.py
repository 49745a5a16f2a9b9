"""JSON experiment configuration: parsing, validation and canonical hashing."""
import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .burgers_core import FluxKind, RunSpec, SchemeConfig
from .errors import ConfigurationError, InsufficientRealizationsError
from .grid_noise import MollifierKind, PeriodicGrid, SampledMollifier, build_mollifier
from .persistence import config_hash

logger = logging.getLogger(__name__)

REQUIRED_THRESHOLDS = (
    "exact_rel_tol",
    "dissipation_rel_tol",
    "wasserstein_ratio",
    "ordering_fraction",
    "gradient_rel_tol",
    "stability_ratio",
    "uniqueness_ratio",
    "ladder_ratio_min",
    "ladder_ratio_max",
    "equilibration_drift",
)
EXPERIMENT_KINDS = ("simulate", "covariance", "structure", "moments", "gamma", "stability")
INITIAL_KINDS = ("constant", "sine", "cosine", "bump", "dipole", "square")
MIN_COVARIANCE_REALIZATIONS = 100


def _bump(grid: PeriodicGrid, width: float) -> np.ndarray:
    z = (grid.x - grid.midpoint) / width
    out = np.zeros(grid.n)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
    return out


@dataclass(frozen=True)
class InitialCondition:
    kind: str
    mean: float = 0.0
    amplitude: float = 0.0
    mode: int = 1
    width: float = 1.0

    def evaluate(self, grid: PeriodicGrid) -> np.ndarray:
        phase = 2.0 * np.pi * self.mode * grid.x / grid.length
        if self.kind == "constant":
            shape = np.zeros(grid.n)
        elif self.kind == "sine":
            shape = np.sin(phase)
        elif self.kind == "cosine":
            shape = np.cos(phase)
        elif self.kind == "bump":
            shape = _bump(grid, self.width)
        elif self.kind == "dipole":
            raw = -(grid.x - grid.midpoint) / self.width * _bump(grid, self.width)
            shape = raw / np.max(np.abs(raw))
        else:
            shape = np.sign(np.sin(2.0 * np.pi * self.mode * (grid.x + 0.5 * grid.dx) / grid.length))
        return self.mean + self.amplitude * shape

    @property
    def amplitude_bound(self) -> float:
        return abs(self.mean) + abs(self.amplitude)


@dataclass(frozen=True)
class StatisticsSection:
    realizations: int
    burn_in: float
    snapshot_spacing: float
    batch_size: int
    se_multiplier: float


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment file. ``raw`` keeps the parsed JSON for hashing."""

    length: float
    n: int
    mollifier_kind: str
    mollifier_width: float
    dt: float
    flux: str
    cfl_safety: float
    initials: List[InitialCondition]
    seed: int
    t_max: float
    statistics: StatisticsSection
    thresholds: Dict[str, float]
    kind: str
    params: Dict[str, Any]
    output_dir: str
    raw: Dict[str, Any] = field(repr=False, compare=False, default_factory=dict)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            logger.error(f"Config file not found: {path}")
            raise ConfigurationError(f"file not found: {path}", field="config")
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON ({e})", field="config")
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        data = copy.deepcopy(data)
        grid = _section(data, "grid")
        mollifier = _section(data, "mollifier")
        scheme = _section(data, "scheme")
        ensemble = _section(data, "ensemble")
        noise = _section(data, "noise")
        stats = _section(data, "statistics")
        thresholds = _section(data, "thresholds")
        experiment = _section(data, "experiment")

        initials_raw = ensemble.get("initials")
        if not isinstance(initials_raw, list) or not initials_raw:
            raise ConfigurationError("must be a non-empty list", field="ensemble.initials")
        initials = [_initial(spec, f"ensemble.initials[{i}]") for i, spec in enumerate(initials_raw)]

        missing = [key for key in REQUIRED_THRESHOLDS if key not in thresholds]
        if missing:
            raise ConfigurationError(f"missing {missing[0]}", field=f"thresholds.{missing[0]}")

        kind = experiment.get("kind")
        if kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"must be one of {EXPERIMENT_KINDS}, got {kind!r}", field="experiment.kind")

        flux = scheme.get("flux", FluxKind.ENGQUIST_OSHER.value)
        if flux not in {f.value for f in FluxKind}:
            raise ConfigurationError(f"unknown flux {flux!r}", field="scheme.flux")
        mollifier_kind = mollifier.get("kind")
        if mollifier_kind not in {m.value for m in MollifierKind}:
            raise ConfigurationError(f"unknown kind {mollifier_kind!r}", field="mollifier.kind")

        config = cls(
            length=_number(grid, "length", "grid"),
            n=int(_number(grid, "n", "grid")),
            mollifier_kind=mollifier_kind,
            mollifier_width=_number(mollifier, "width", "mollifier", default=0.0),
            dt=_number(scheme, "dt", "scheme"),
            flux=flux,
            cfl_safety=_number(scheme, "cfl_safety", "scheme"),
            initials=initials,
            seed=int(_number(noise, "seed", "noise")),
            t_max=_number(noise, "t_max", "noise"),
            statistics=StatisticsSection(
                realizations=int(_number(stats, "realizations", "statistics")),
                burn_in=_number(stats, "burn_in", "statistics"),
                snapshot_spacing=_number(stats, "snapshot_spacing", "statistics"),
                batch_size=int(_number(stats, "batch_size", "statistics")),
                se_multiplier=_number(stats, "se_multiplier", "statistics"),
            ),
            thresholds={k: float(v) for k, v in thresholds.items()},
            kind=kind,
            params=dict(experiment.get("params", {})),
            output_dir=str(data.get("output_dir", "runs")),
            raw=data,
        )
        config.validate()
        return config

    def validate(self) -> None:
        grid = self.grid()
        if self.seed < 0:
            raise ConfigurationError(f"must be nonnegative, got {self.seed}", field="noise.seed")
        if not self.t_max > 0:
            raise ConfigurationError(f"must be positive, got {self.t_max}", field="noise.t_max")
        if self.statistics.realizations < 1:
            raise ConfigurationError("must be >= 1", field="statistics.realizations")
        if self.statistics.batch_size < 1:
            raise ConfigurationError("must be >= 1", field="statistics.batch_size")
        if self.mollifier_kind in (MollifierKind.GAUSSIAN.value, MollifierKind.BUMP.value):
            if self.mollifier_width < 4 * grid.dx:
                raise ConfigurationError(
                    f"width {self.mollifier_width} is below 4*dx = {4 * grid.dx}", field="mollifier.width"
                )
        mollifier = self.mollifier()
        scheme = self.scheme()
        u_guess = max(ic.amplitude_bound for ic in self.initials) + 3.0 * mollifier.norm
        if u_guess > 0 and scheme.dt > scheme.cfl_safety * grid.dx / u_guess:
            raise ConfigurationError(
                f"dt={scheme.dt} exceeds cfl_safety*dx/|u|_guess = {scheme.cfl_safety * grid.dx / u_guess:.3g}",
                field="scheme.dt",
            )

    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.length, self.n)

    def mollifier(self) -> SampledMollifier:
        return build_mollifier(self.mollifier_kind, self.mollifier_width, self.grid())

    def scheme(self, dt: Optional[float] = None) -> SchemeConfig:
        return SchemeConfig(dt=dt or self.dt, flux=FluxKind(self.flux), cfl_safety=self.cfl_safety)

    def run_spec(self, stream_id: int = 0, noise_on: bool = True) -> RunSpec:
        return RunSpec(
            mollifier=self.mollifier(), scheme=self.scheme(), seed=self.seed, stream_id=stream_id, noise_on=noise_on
        )

    def initials_array(self) -> np.ndarray:
        grid = self.grid()
        return np.stack([ic.evaluate(grid) for ic in self.initials])

    def with_seed(self, seed: int) -> "ExperimentConfig":
        data = copy.deepcopy(self.raw)
        data["noise"]["seed"] = int(seed)
        return ExperimentConfig.from_dict(data)

    def require_realizations(
        self, minimum: int, what: str, count: Optional[int] = None, field: str = "statistics.realizations"
    ) -> int:
        """``count`` (default statistics.realizations) if it meets ``minimum``."""
        count = self.statistics.realizations if count is None else int(count)
        if count < minimum:
            raise InsufficientRealizationsError(f"insufficient realizations for {what}: {count} < {minimum}", field=field)
        return count

    def params_for(self, suite: str) -> Dict[str, Any]:
        return dict(self.params.get(suite, {}))

    @property
    def hash(self) -> str:
        return config_hash(self.canonical())

    def canonical(self) -> Dict[str, Any]:
        payload = {
            "grid": {"length": self.length, "n": self.n},
            "mollifier": {"kind": self.mollifier_kind, "width": self.mollifier_width},
            "scheme": {"dt": self.dt, "flux": self.flux, "cfl_safety": self.cfl_safety},
            "ensemble": {"initials": [asdict(ic) for ic in self.initials]},
            "noise": {"seed": self.seed, "t_max": self.t_max},
            "statistics": asdict(self.statistics),
            "thresholds": dict(self.thresholds),
            "experiment": {"kind": self.kind, "params": self.params},
            "output_dir": self.output_dir,
        }
        return payload


def _section(data: Dict[str, Any], name: str) -> Dict[str, Any]:
    section = data.get(name)
    if not isinstance(section, dict):
        raise ConfigurationError("missing or not an object", field=name)
    return section


def _number(section: Dict[str, Any], key: str, prefix: str, default: Optional[float] = None) -> float:
    if key not in section:
        if default is not None:
            return default
        raise ConfigurationError("missing", field=f"{prefix}.{key}")
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"must be a number, got {value!r}", field=f"{prefix}.{key}")
    return float(value)


def _initial(spec: Dict[str, Any], where: str) -> InitialCondition:
    if not isinstance(spec, dict):
        raise ConfigurationError("must be an object", field=where)
    kind = spec.get("kind")
    if kind not in INITIAL_KINDS:
        raise ConfigurationError(f"must be one of {INITIAL_KINDS}, got {kind!r}", field=f"{where}.kind")
    width = float(spec.get("width", 1.0))
    if not width > 0:
        raise ConfigurationError("must be positive", field=f"{where}.width")
    return InitialCondition(
        kind=kind,
        mean=float(spec.get("mean", 0.0)),
        amplitude=float(spec.get("amplitude", 0.0)),
        mode=int(spec.get("mode", 1)),
        width=width,
    )
