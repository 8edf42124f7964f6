"""Process settings and the experiment configuration dialect.

Experiment files hold one ``key = value`` binding per line with ``#``
comments. Values are JSON where they parse as JSON and plain strings
otherwise::

    dataset = "synthetic"
    horizon = [24, 48]
    strategy = ["frozen", "gd_practical", "proceed"]
"""
import io
import json
import os
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv
from dotenv.parser import parse_stream
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from driftcast.engine import STRATEGY_NAMES, OnlineConfig, StrategySpec
from driftcast.exceptions import BadValue, ConfigParseError, MissingConfig, UnknownKey
from driftcast.seriesdata import RegimeSpec, SyntheticSpec, default_regimes, recurring_schedule

load_dotenv()

ARCHITECTURES = ("linear", "mlp", "tcn")


class Settings(BaseModel):
    """Process-level knobs loaded from environment variables."""

    log_level: str = Field(default_factory=lambda: os.getenv("DRIFTCAST_LOG_LEVEL", "INFO"))
    log_json: bool = Field(default_factory=lambda: os.getenv("DRIFTCAST_LOG_JSON", "false").lower() == "true")
    output_dir: str = Field(default_factory=lambda: os.getenv("DRIFTCAST_OUTPUT_DIR", "runs"))
    jobs: int = Field(default_factory=lambda: int(os.getenv("DRIFTCAST_JOBS", "1")))


@lru_cache()
def get_settings() -> Settings:
    """Create cached settings instance."""
    return Settings()


class RegimeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ar: Tuple[float, float] = (0.5, -0.2)
    amplitude: float = 1.0
    period: float = Field(default=24.0, gt=0)
    noise: float = Field(default=0.1, ge=0)
    level: float = 0.0


class SyntheticConfig(BaseModel):
    """Recurring-regime generator settings.

    Without an explicit ``schedule`` the regimes cycle in segments of
    ``segment_length`` steps; without ``regimes`` a built-in family is used.
    """

    model_config = ConfigDict(extra="forbid")

    n_variates: int = Field(default=4, ge=1)
    n_steps: int = Field(default=6000, ge=1)
    n_regimes: int = Field(default=3, ge=1)
    segment_length: int = Field(default=250, ge=1)
    seed: int = 0
    regimes: Optional[List[RegimeConfig]] = None
    schedule: Optional[List[Tuple[int, int]]] = None

    def to_spec(self) -> SyntheticSpec:
        if self.regimes:
            regimes = tuple(RegimeSpec(**r.model_dump()) for r in self.regimes)
        else:
            regimes = default_regimes(self.n_regimes)
        schedule = (
            tuple(tuple(s) for s in self.schedule)
            if self.schedule
            else recurring_schedule(self.n_steps, len(regimes), self.segment_length)
        )
        return SyntheticSpec(self.n_variates, self.n_steps, regimes, schedule, self.seed)


class ExperimentConfig(BaseModel):
    """Everything one ``run`` sweeps over; field order is the file order."""

    model_config = ConfigDict(extra="forbid")

    dataset: str = "synthetic"
    csv_path: Optional[str] = None
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    standardize: bool = True
    split_ratios: Tuple[float, float, float] = (20, 5, 75)
    models: List[str] = Field(default_factory=lambda: ["mlp"])
    hidden: int = Field(default=64, ge=1)
    tcn_channels: int = Field(default=8, ge=1)
    tcn_kernel: int = Field(default=3, ge=1)
    revin: bool = True
    subtract_last: bool = False
    lookback: int = Field(default=96, ge=1)
    horizon: List[int] = Field(default_factory=lambda: [24])
    strategy: List[str] = Field(default_factory=lambda: ["frozen", "gd_practical", "gd_optimal", "proceed"])
    d_c: int = Field(default=100, ge=1)
    rank: int = Field(default=32, ge=1)
    aggregation: str = "average"
    prev_batch_encoder: str = "e"
    feedback_through_adapter: bool = True
    pretrain_lr: float = Field(default=1e-3, gt=0)
    online_lr: Optional[float] = Field(default=None, gt=0)
    adapter_lr: Optional[float] = Field(default=None, gt=0)
    epochs: int = Field(default=20, ge=0)
    adapter_epochs: int = Field(default=10, ge=0)
    batch_size: int = Field(default=32, ge=1)
    patience: Optional[int] = Field(default=3, ge=1)
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    output_dir: str = "runs"
    save_traces: bool = False

    @field_validator("models")
    @classmethod
    def _known_models(cls, value: List[str]) -> List[str]:
        unknown = [m for m in value if m not in ARCHITECTURES]
        if unknown or not value:
            raise ValueError(f"models must be non-empty and drawn from {ARCHITECTURES}, got {value}")
        return value

    @field_validator("horizon")
    @classmethod
    def _positive_horizons(cls, value: List[int]) -> List[int]:
        if not value or any(h < 1 for h in value):
            raise ValueError(f"horizons must be non-empty and >= 1, got {value}")
        return value

    @field_validator("strategy")
    @classmethod
    def _known_strategies(cls, value: List[str]) -> List[str]:
        unknown = [s for s in value if s not in STRATEGY_NAMES]
        if unknown or not value:
            raise ValueError(f"unknown strategies {unknown}; choose from {STRATEGY_NAMES}")
        return value

    @field_validator("aggregation")
    @classmethod
    def _known_aggregation(cls, value: str) -> str:
        if value not in ("average", "linear", "weighted"):
            raise ValueError(f"unknown aggregation {value!r}")
        return value

    @field_validator("prev_batch_encoder")
    @classmethod
    def _known_encoder(cls, value: str) -> str:
        if value not in ("e", "e_prime"):
            raise ValueError(f"prev_batch_encoder must be 'e' or 'e_prime', got {value!r}")
        return value

    @field_validator("seeds")
    @classmethod
    def _some_seed(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("at least one seed is required")
        return value

    @model_validator(mode="after")
    def _data_source(self) -> "ExperimentConfig":
        if self.dataset != "synthetic" and not self.csv_path:
            raise ValueError("csv_path is required unless dataset is 'synthetic'")
        return self

    def online_config(self, horizon: int, strategy: str) -> OnlineConfig:
        """Per-cell knobs for the training and online phases."""
        return OnlineConfig(
            lookback=self.lookback,
            horizon=horizon,
            pretrain_lr=self.pretrain_lr,
            online_lr=self.online_lr,
            adapter_lr=self.adapter_lr,
            epochs=self.epochs,
            adapter_epochs=self.adapter_epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            d_c=self.d_c,
            rank=self.rank,
            aggregation=self.aggregation,
            prev_batch_encoder=self.prev_batch_encoder,
            feedback_through_adapter=self.feedback_through_adapter,
            seeds=tuple(self.seeds),
            strategy=StrategySpec.parse(strategy),
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            keep_trace=self.save_traces,
        )

    def model_options(self, architecture: str) -> Dict[str, Any]:
        options: Dict[str, Any] = {"subtract_last": self.subtract_last}
        if architecture == "mlp":
            options["hidden"] = self.hidden
        elif architecture == "tcn":
            options.update(channels=self.tcn_channels, kernel=self.tcn_kernel)
        return options


def _decode(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the ``key = value`` dialect into a validated config."""
    values: Dict[str, Any] = {}
    for binding in parse_stream(io.StringIO(text)):
        if binding.error:
            raise ConfigParseError(binding.original.line, binding.original.string.strip())
        if binding.key is None:
            continue
        if binding.value is None:
            raise ConfigParseError(binding.original.line, f"{binding.key} has no value")
        if binding.key not in ExperimentConfig.model_fields:
            raise UnknownKey(binding.key)
        values[binding.key] = _decode(binding.value)
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else "config"
        raise BadValue(key, first["msg"]) from e


def serialize_config(cfg: ExperimentConfig) -> str:
    payload = cfg.model_dump(mode="json")
    return "".join(f"{key} = {json.dumps(payload[key])}\n" for key in ExperimentConfig.model_fields)


def parse_config(path: Optional[str]) -> ExperimentConfig:
    """Read a config file; no path means all defaults."""
    if path is None:
        return ExperimentConfig()
    if not os.path.isfile(path):
        raise MissingConfig(path)
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())
