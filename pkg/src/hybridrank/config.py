"""Run configuration: a JSON document validated before any work starts."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

# per-query seconds observed for the two LLM families
LATENCY_PROFILES = {"closed": 8.0, "open": 11.0}


class ConfigError(ValueError):
    """Invalid configuration; message lists the offending fields."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetConfig(_Strict):
    path: str
    format: Literal["ml100k", "ml1m", "bookcrossing"]
    items_path: Optional[str] = None
    min_interactions: int = Field(0, ge=0)


class SplitConfig(_Strict):
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    @field_validator("ratios")
    @classmethod
    def _sum_to_one(cls, v):
        if abs(sum(v) - 1.0) > 1e-9 or min(v) < 0:
            raise ValueError("ratios must be non-negative and sum to 1")
        return v


class HyperParamsConfig(_Strict):
    learning_rate: float = Field(1e-3, gt=0)
    epochs: int = Field(30, ge=0)
    embedding_dim: int = Field(64, ge=1)
    mlp_hidden: list[int] = Field(default_factory=lambda: [64, 32, 16], min_length=1)
    dropout: float = Field(0.0, ge=0, lt=1)
    k_neighbors: int = Field(100, ge=1)
    shrink: float = Field(0.0, ge=0)
    l2_reg: float = Field(1e-4, ge=0)
    negatives_per_positive: int = Field(4, ge=1)
    batch_size: int = Field(2048, ge=1)
    patience: int = Field(5, ge=1)


class ModelConfig(_Strict):
    kind: Literal["itemknn", "bpr", "ncf"]
    hyperparameters: HyperParamsConfig = Field(default_factory=HyperParamsConfig)
    grid: bool = False


class ThresholdsConfig(_Strict):
    t_p: float = Field(0.5, ge=0, le=1)
    t_s_mode: Literal["auto", "fixed"] = "auto"
    t_s: Optional[float] = Field(None, gt=0, lt=1)
    relevance_cutoff: Optional[float] = None  # None: 4 on 1-5 scales, 7 on 0-10
    n_sampled_negatives: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _fixed_needs_value(self):
        if self.t_s_mode == "fixed" and self.t_s is None:
            raise ValueError("t_s is required when t_s_mode is 'fixed'")
        return self


class MockConfig(_Strict):
    kind: Literal["oracle", "noisy_oracle", "echo", "hallucinating"] = "oracle"
    p: float = Field(0.1, ge=0, le=1)
    n_fake: int = Field(2, ge=0)


class EndpointConfig(_Strict):
    base_url: str
    model_name: str
    temperature: float = Field(0.0, ge=0)
    timeout: float = Field(60.0, gt=0)
    max_concurrency: int = Field(4, ge=1)
    max_attempts: int = Field(5, ge=1)
    backoff_base: float = Field(1.0, ge=0)


class LlmConfig(_Strict):
    mode: Literal["endpoint", "mock"] = "mock"
    mock: MockConfig = Field(default_factory=MockConfig)
    endpoint: Optional[EndpointConfig] = None
    history_cap: int = Field(20, ge=1)
    latency_profile: Literal["closed", "open"] = "closed"
    per_query_seconds: Optional[float] = Field(None, gt=0)
    candidate_source: Literal["test", "rs_topn"] = "test"
    top_n: int = Field(20, ge=1)
    dump_prompts: bool = True

    @model_validator(mode="after")
    def _endpoint_present(self):
        if self.mode == "endpoint" and self.endpoint is None:
            raise ValueError("endpoint settings are required when mode is 'endpoint'")
        return self

    @property
    def query_seconds(self) -> float:
        return self.per_query_seconds or LATENCY_PROFILES[self.latency_profile]


class SeedsConfig(_Strict):
    train: int = 0
    shuffle: int = 0
    negatives: int = 0


class RunConfig(_Strict):
    dataset: DatasetConfig
    split: SplitConfig = Field(default_factory=SplitConfig)
    model: ModelConfig
    thresholds: ThresholdsConfig = Field(default_factory=ThresholdsConfig)
    llm: LlmConfig = Field(default_factory=LlmConfig)
    merge_mode: Literal["evaluation", "deployment"] = "evaluation"
    output_dir: str = "hybridrank-out"
    seeds: SeedsConfig = Field(default_factory=SeedsConfig)
    figures: bool = True

    def digest(self, *sections: str) -> str:
        """Stable hash of the named top-level sections (all when none given)."""
        data = self.model_dump(mode="json")
        picked = {k: data[k] for k in (sections or sorted(data))}
        blob = json.dumps(picked, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        lines.append(f"{loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(data: dict, base_dir: Path | None = None) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    if base_dir is not None:
        ds = cfg.dataset
        ds.path = str((base_dir / ds.path).resolve()) if not Path(ds.path).is_absolute() else ds.path
        if ds.items_path and not Path(ds.items_path).is_absolute():
            ds.items_path = str((base_dir / ds.items_path).resolve())
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data, path.parent)


def json_schema() -> dict:
    return RunConfig.model_json_schema()

