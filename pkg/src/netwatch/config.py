"""Run configuration: TOML sections, command-line overrides and the resolved echo."""

from __future__ import annotations

import dataclasses
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .calib import MCUSUM_GRID, MEWMA_GRID, Pipeline
from .charts import ChartConfig, ChartKind
from .errors import ConfigError, InvalidAnomaly
from .simgen import ANOMALY_CASES, AnomalySpec, GenConfig, TransitionMatrix, logit
from .stats import MONITORED, TermSet
from .tergm import Estimator

SEED_ENV = "NETWATCH_SEED"


@dataclass
class RunSection:
    seed: int | None = None
    jobs: int | None = None
    output_dir: str = "netwatch-out"
    plot: bool = True


@dataclass
class GeneratorSection:
    n_nodes: int = 100
    phi: float = 0.01
    m: list = field(default_factory=lambda: [[0.9, 0.1], [0.4, 0.6]])
    base_coeffs: list = field(default_factory=lambda: [logit(0.2), 0.0, 0.0])
    burn_in: int = 1000
    base_sweeps: int = 50
    length: int = 100


@dataclass
class PipelineSection:
    terms: str = str(MONITORED)
    z: int = 7
    v: int = 1
    estimator: str = "theta"
    stride: int = 1


@dataclass
class ChartSection:
    type: str = "mewma"
    param: float = 1.0
    reset_on_signal: bool = True
    ucl: float | None = None
    ucl_file: str | None = None
    grid: list | None = None


@dataclass
class CalibrationSection:
    arl0: list = field(default_factory=lambda: [50.0])
    replications: int = 500
    tolerance: float = 0.02
    horizon: int | None = None
    phase1_series: int = 1
    phase1_length: int = 2500


@dataclass
class AnomalySection:
    case: str | None = None
    kind: str | None = None
    tau: int = 101
    m1: list | None = None
    phi1: float | None = None
    zeta: float | None = None


@dataclass
class CedSection:
    replications: int = 100
    horizon: int = 1000
    cases: list = field(default_factory=lambda: ["none", *ANOMALY_CASES])


@dataclass
class MonitorSection:
    phase1_start: int | None = None
    phase1_end: int | None = None
    monitor_start: int | None = None
    allow_overlap: bool = False


@dataclass
class GofSection:
    n_sims: int = 20
    sweeps: int = 10
    window_start: int | None = None
    window_end: int | None = None


@dataclass
class IoSection:
    input: str | None = None
    node_map: str | None = None


SECTIONS = {
    "run": RunSection,
    "generator": GeneratorSection,
    "pipeline": PipelineSection,
    "chart": ChartSection,
    "calibration": CalibrationSection,
    "anomaly": AnomalySection,
    "ced": CedSection,
    "monitor": MonitorSection,
    "gof": GofSection,
    "io": IoSection,
}
ALIASES = {("chart", "lambda"): "param", ("chart", "k"): "param", ("chart", "kind"): "type"}


def _coerce(section: str, key: str, value, hint):
    where = f"{section}.{key}"
    if value is None:
        if type(None) in typing.get_args(hint):
            return None
        raise ConfigError(f"{where} may not be empty")
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    if isinstance(hint, types.UnionType) or typing.get_origin(hint) is typing.Union:
        hint = args[0]
    if hint is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "1", "0", "yes", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(f"{where} must be a boolean, got {value!r}")
    if hint is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where} must be an integer, got {value!r}") from None
    if hint is float:
        if isinstance(value, bool):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where} must be a number, got {value!r}") from None
    if hint is list:
        return list(value) if isinstance(value, (list, tuple)) else [value]
    if hint is str:
        return str(value)
    return value


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    generator: GeneratorSection = field(default_factory=GeneratorSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    chart: ChartSection = field(default_factory=ChartSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    anomaly: AnomalySection = field(default_factory=AnomalySection)
    ced: CedSection = field(default_factory=CedSection)
    monitor: MonitorSection = field(default_factory=MonitorSection)
    gof: GofSection = field(default_factory=GofSection)
    io: IoSection = field(default_factory=IoSection)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        cfg = cls()
        for section, values in data.items():
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section [{section}]; known: {sorted(SECTIONS)}")
            if not isinstance(values, dict):
                raise ConfigError(f"[{section}] must be a table")
            for key, value in values.items():
                cfg.set(section, key, value)
        return cfg

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def set(self, section: str, key: str, value) -> None:
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        key = ALIASES.get((section, key), key)
        obj = getattr(self, section)
        hints = typing.get_type_hints(type(obj))
        if key not in hints:
            raise ConfigError(f"unknown key {section}.{key}; known: {sorted(hints)}")
        setattr(obj, key, _coerce(section, key, value, hints[key]))

    def apply_override(self, text: str) -> None:
        """Apply ``section.key=value``; the value is read as a TOML literal when possible."""
        if "=" not in text or "." not in text.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {text!r}")
        lhs, rhs = text.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        try:
            value = tomllib.loads(f"v = {rhs.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = rhs.strip()
        self.set(section, key, value)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = {k: v for k, v in dataclasses.asdict(getattr(self, name)).items() if v is not None}
            out[name] = sec
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    # resolved domain objects

    def resolve_seed(self) -> int:
        if self.run.seed is None:
            env = os.environ.get(SEED_ENV)
            if env is not None and env.strip():
                try:
                    self.run.seed = int(env)
                except ValueError:
                    raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
            else:
                self.run.seed = 0
        return self.run.seed

    def gen_config(self) -> GenConfig:
        g = self.generator
        try:
            return GenConfig(g.n_nodes, g.phi, TransitionMatrix.from_rows(g.m), tuple(g.base_coeffs), g.burn_in, g.base_sweeps, self.resolve_seed())
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[generator] {exc}") from None

    def term_set(self) -> TermSet:
        try:
            return TermSet.parse(self.pipeline.terms)
        except ValueError as exc:
            raise ConfigError(f"pipeline.terms: {exc}") from None

    def pipeline_obj(self) -> Pipeline:
        p = self.pipeline
        if p.stride < 1:
            raise ConfigError("pipeline.stride must be >= 1")
        try:
            return Pipeline(self.term_set(), p.z, p.v, Estimator(p.estimator))
        except ValueError as exc:
            raise ConfigError(f"[pipeline] {exc}") from None

    def chart_config(self, param: float | None = None) -> ChartConfig:
        c = self.chart
        try:
            return ChartConfig(ChartKind(c.type.lower()), c.param if param is None else param, c.reset_on_signal)
        except ValueError as exc:
            raise ConfigError(f"[chart] {exc}") from None

    def chart_grid(self) -> list[float]:
        if self.chart.grid:
            return [float(x) for x in self.chart.grid]
        return list(MCUSUM_GRID if self.chart.type.lower() == "mcusum" else MEWMA_GRID)

    def anomaly_spec(self, name: str | None = None) -> AnomalySpec | None:
        a = self.anomaly
        try:
            if name is not None:
                return None if name.lower() == "none" else AnomalySpec.case(name, a.tau)
            if a.case:
                return None if a.case.lower() == "none" else AnomalySpec.case(a.case, a.tau)
            if a.kind is None:
                return None
            m1 = TransitionMatrix.from_rows(a.m1) if a.m1 is not None else None
            return AnomalySpec(a.kind, a.tau, m1=m1, phi1=a.phi1, zeta=a.zeta, name=a.kind.upper())
        except (InvalidAnomaly, ValueError, TypeError) as exc:
            raise ConfigError(f"[anomaly] {exc}") from None

    def output_dir(self) -> Path:
        return Path(self.run.output_dir)
