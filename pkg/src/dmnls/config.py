"""Run configuration: strict YAML/JSON schema shared by every CLI subcommand.

Unknown keys are rejected at every level.  After the field-level checks
each block is handed to the constructor of the object it describes, so a
config that loads is one the numerical modules accept.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dispersion import DispersionMap
from .solver import SolverConfig
from .spectral import Grid

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "json_schema",
    "SCHEMA_PATH",
]

SCHEMA_PATH = Path(__file__).resolve().parents[2] / "schema" / "run_config.schema.json"


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, allow_inf_nan=False)


class ModelBlock(_Block):
    d: Literal[1, 2, 3] = 1
    p: float = Field(3.0, gt=1, description="nonlinearity exponent, |u|^(p-1) u")


class MapBlock(_Block):
    gamma_plus: float = Field(gt=0, description="dispersion on the focusing piece")
    gamma_minus: float = Field(gt=0, description="magnitude on the defocusing piece")
    t_plus: float = Field(gt=0, lt=1, description="focusing fraction of each period")
    epsilon: float = Field(1.0, gt=0, description="period of the map")

    def build(self) -> DispersionMap:
        return DispersionMap(self.gamma_plus, self.gamma_minus, self.t_plus, self.epsilon)


class GridBlock(_Block):
    n: int = Field(gt=0, description="points per axis (even)")
    half_length: float = Field(gt=0, description="box is [-L, L)^d")

    @field_validator("n")
    @classmethod
    def _even(cls, n):
        if n % 2:
            raise ValueError("must be even")
        return n


class SolverBlock(_Block):
    dt_max: float = Field(gt=0)
    dealias: bool | None = None
    output_stride: int = Field(1, ge=1)
    blowup_gradient_factor: float = Field(1e3, gt=0)
    blowup_tail_threshold: float = Field(0.05, gt=0, lt=1)
    phase_step: float | None = Field(None, gt=0)
    nonlinear: bool = True

    def build(self, p: float) -> SolverConfig:
        return SolverConfig(dt_max=self.dt_max, p=p, dealias=self.dealias,
                            output_stride=self.output_stride,
                            blowup_gradient_factor=self.blowup_gradient_factor,
                            blowup_tail_threshold=self.blowup_tail_threshold,
                            phase_step=self.phase_step, nonlinear=self.nonlinear)


class GaussianDatum(_Block):
    kind: Literal["gaussian"] = "gaussian"
    amplitude: float = 1.0
    width: float = Field(1.0, gt=0, description="exp(-|x|^2 / (2 width^2))")
    chirp: float = Field(0.0, description="multiplies by exp(-i chirp |x|^2 / 4)")
    velocity: float = Field(0.0, description="multiplies by exp(i velocity x_1)")


class GroundStateDatum(_Block):
    kind: Literal["ground_state"]
    mass_ratio: float = Field(1.0, ge=0, le=2)
    chirp: float = 0.0


class PseudoConformalDatum(_Block):
    kind: Literal["pseudo_conformal"]
    a: float = Field(gt=0, description="blow-up rate; blow-up time 1/a")


class CheckpointDatum(_Block):
    kind: Literal["checkpoint"]
    path: str


InitialDatum = Annotated[Union[GaussianDatum, GroundStateDatum, PseudoConformalDatum,
                               CheckpointDatum], Field(discriminator="kind")]


class ExperimentBlock(_Block):
    t0: float = 0.0
    horizon: float | None = Field(None, description="final time (simulate, sweep, validate)")
    epsilons: list[float] | None = None
    zero_mean: bool = False
    sample_count: int = Field(32, ge=1)
    sigma: float = Field(2.0, ge=0)
    mass_ratios: list[float] | None = None
    periods: int | None = Field(None, ge=1)
    chirp: float = 0.0
    min_resolved_spacings: float = Field(8.0, gt=0)
    order_levels: int = Field(4, ge=3)

    @field_validator("epsilons")
    @classmethod
    def _decreasing(cls, eps):
        if eps is None:
            return eps
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("must be a non-empty list of positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("must be strictly decreasing")
        return eps

    @field_validator("mass_ratios")
    @classmethod
    def _ratios(cls, ratios):
        if ratios is not None and (not ratios or any(not 0 <= r <= 2 for r in ratios)):
            raise ValueError("must be a non-empty list of values in [0, 2]")
        return ratios

    @model_validator(mode="after")
    def _horizon_after_start(self):
        if self.horizon is not None and not self.horizon > self.t0:
            raise ValueError(f"horizon={self.horizon} must exceed t0={self.t0}")
        return self


class GroundStateBlock(_Block):
    tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(500, ge=1)
    seed_amplitude: float = Field(2.0, gt=0)
    seed_width: float = Field(1.0, gt=0)


class RunConfig(_Block):
    """Top-level run configuration."""

    model: ModelBlock = ModelBlock()
    map: MapBlock
    grid: GridBlock
    solver: SolverBlock
    initial_datum: InitialDatum = GaussianDatum()
    experiment: ExperimentBlock = ExperimentBlock()
    groundstate: GroundStateBlock = GroundStateBlock()

    @model_validator(mode="after")
    def _module_constraints(self):
        # the owning modules have the final word
        try:
            self.map.build()
            Grid(self.model.d, self.grid.n, self.grid.half_length)
            self.solver.build(self.model.p)
        except ValueError as exc:
            raise ValueError(f"rejected by the numerical modules: {exc}") from None
        return self

    @property
    def critical(self) -> bool:
        return math.isclose(self.model.p, 1 + 4 / self.model.d)

    def build_grid(self) -> Grid:
        return Grid(self.model.d, self.grid.n, self.grid.half_length)

    def build_solver(self) -> SolverConfig:
        return self.solver.build(self.model.p)


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(part) for part in e["loc"]) or "<root>"
        msg = e["msg"]
        if e["type"] == "extra_forbidden":
            msg = "unknown key"
        elif "input" in e and not isinstance(e["input"], (dict, list)):
            msg = f"{msg} (got {e['input']!r})"
        lines.append(f"{loc}: {msg}")
    return "; ".join(lines)


def parse_config(data, base_dir: Path | None = None) -> RunConfig:
    """Validate a plain mapping; relative checkpoint paths resolve against ``base_dir``."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None
    datum = cfg.initial_datum
    if isinstance(datum, CheckpointDatum) and base_dir is not None:
        path = Path(datum.path)
        if not path.is_absolute():
            resolved = str((base_dir / path).resolve())
            cfg = cfg.model_copy(update={"initial_datum": datum.model_copy(update={"path": resolved})})
    return cfg


def load_config(path) -> tuple[RunConfig, dict]:
    """Read a YAML config or a run manifest (JSON with a ``config`` entry).

    Returns the validated config and the manifest metadata (empty for YAML).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML/JSON: {exc}") from None
    meta = {}
    if isinstance(data, dict) and "config" in data and "config_hash" in data:
        meta = {k: v for k, v in data.items() if k != "config"}
        data = data["config"]
    return parse_config(data, path.parent), meta


def json_schema() -> dict:
    return RunConfig.model_json_schema()


def write_schema(path=SCHEMA_PATH) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(json_schema(), indent=2, sort_keys=True) + "\n")
