"""Experiment configuration, run manifests, TOML loading and the named reproduction presets."""
import math
from pathlib import Path

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from agent.scenarios import RUNNERS, AcceptanceCheck, Scenario
from nse.errors import ConfigurationError

CSV_SCHEMA_VERSION = "1"
DEFAULT_SEED = 20240601
DEFAULT_SCALE = 0.2
MIN_SCALED_REPLICATIONS = 10


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: Scenario
    n: int = Field(ge=1)
    replications: int = Field(ge=1)
    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    params: dict = Field(default_factory=dict)
    output_dir: Path = Path("runs")

    @field_validator("scenario", mode="before")
    @classmethod
    def _scenario_name(cls, value):
        return value if isinstance(value, Scenario) else Scenario.lookup(value)

    @model_validator(mode="after")
    def _params_match_schema(self):
        runner = RUNNERS[self.scenario]
        runner.check(self, self.scenario_params())
        return self

    def scenario_params(self):
        return RUNNERS[self.scenario].parse_params(self.params)

    def echo(self) -> dict:
        return self.model_dump(mode="json")


class RunManifest(BaseModel):
    config: dict
    csv_schema_version: str = CSV_SCHEMA_VERSION
    versions: dict[str, str] = Field(default_factory=dict)
    started_at: str = ""
    wall_time_s: float = 0.0
    seeds: list[dict] = Field(default_factory=list)
    outputs: dict[str, str] = Field(default_factory=dict)
    acceptance: list[AcceptanceCheck] = Field(default_factory=list)

    @property
    def failed_checks(self) -> list[str]:
        return [check.name for check in self.acceptance if not check.passed]


def build_config(**fields) -> ExperimentConfig:
    """ExperimentConfig with pydantic validation errors reported as ConfigurationError."""
    try:
        return ExperimentConfig(**fields)
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment config: {e}") from e


def load_config_file(path: str | Path) -> ExperimentConfig:
    """
    TOML with an [experiment] table mirroring ExperimentConfig and an
    optional [params] table of scenario parameters.
    """
    path = Path(path)
    try:
        with path.open("rb") as f:
            document = tomli.load(f)
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except tomli.TOMLDecodeError as e:
        raise ConfigurationError(f"config file {path} is not valid TOML: {e}") from e
    if "experiment" not in document:
        raise ConfigurationError(f"config file {path} has no [experiment] table")
    fields = dict(document["experiment"])
    fields["params"] = {**fields.get("params", {}), **document.get("params", {})}
    return build_config(**fields)


class Preset(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario: Scenario
    n: int
    replications: int
    params: dict = Field(default_factory=dict)
    scaled: bool = True
    description: str = ""

    def replications_at(self, scale: float) -> int:
        if not self.scaled:
            return self.replications
        return max(MIN_SCALED_REPLICATIONS, math.floor(self.replications * scale))


PRESETS: dict[str, Preset] = {
    "table1": Preset(scenario=Scenario.TABLE1_2, n=300, replications=100, params={"methods": ["ols"]},
                     description="pass counts of OLS residuals under the three normality tests"),
    "table2": Preset(scenario=Scenario.TABLE1_2, n=300, replications=100,
                     description="pass counts of NSE residuals, with OLS alongside for comparison"),
    "fig-gev": Preset(scenario=Scenario.GEV_SWEEP, n=500, replications=100,
                      description="GEV estimates by MLE and NSE over xi from -2 to 1.5"),
    "fig-stable": Preset(scenario=Scenario.STABLE_SWEEP, n=300, replications=1000,
                         description="NSE estimates of the positive stable law"),
    "fig-block": Preset(scenario=Scenario.BLOCK_MAXIMA, n=50_000, replications=100,
                        description="GEV fits to block maxima of four parent laws"),
    "fig-pot": Preset(scenario=Scenario.POT, n=10_000, replications=100,
                      description="GPD fits to 95% threshold excesses of four parent laws"),
    "fig-quadratic": Preset(scenario=Scenario.QUADRATIC_REG, n=500, replications=500,
                            description="regression with an omitted quadratic term"),
    "fig-missing": Preset(scenario=Scenario.MISSING_COVARIATE_REG, n=500, replications=500,
                          description="regression with a missing correlated covariate"),
    "fig-mrq": Preset(scenario=Scenario.MRQ_ASYMPTOTICS, n=10_000, replications=10_000,
                      description="law of the full-range MRQ between unit exponential samples"),
    "fig-left-limit": Preset(scenario=Scenario.LIMIT_DIST_GRID, n=1, replications=1, scaled=False,
                             description="left-end limit laws R_1..R_4 on a t grid"),
}


def preset_config(name: str, scale: float = DEFAULT_SCALE, seed: int = DEFAULT_SEED,
                  output_dir: str | Path | None = None) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset '{name}'; valid presets: {', '.join(PRESETS)}")
    if not scale > 0:
        raise ConfigurationError(f"scale must be > 0, got {scale}")
    preset = PRESETS[name]
    return build_config(scenario=preset.scenario, n=preset.n, replications=preset.replications_at(scale), seed=seed,
                        params=dict(preset.params), output_dir=Path(output_dir or Path("runs") / name))
