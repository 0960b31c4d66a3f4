import enum
import json
import logging
from datetime import UTC
from datetime import datetime
from pathlib import Path
from typing import Literal

import pydantic
import yaml
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import model_validator
from pydantic_settings import BaseSettings
from pydantic_settings import SettingsConfigDict

from soliplex.safepolicy import SafePolicyError

logger = logging.getLogger(__name__)


class Variant(enum.StrEnum):
    STANDARD = "standard"
    AUGMENTED = "augmented"


class EnvName(enum.StrEnum):
    POINT_HAZARD = "point_hazard"
    DIFF_DRIVE = "diff_drive"


# Only point pydantic-settings at the secrets dir when it exists, so dev/test
# runs (which lack /run/secrets) don't emit a spurious "directory does not
# exist" UserWarning.
_SECRETS_DIR = "/run/secrets"
_secrets_kwargs: dict = {"secrets_dir": _SECRETS_DIR} if Path(_SECRETS_DIR).is_dir() else {}  # pragma: no branch


class Settings(BaseSettings):
    model_config = SettingsConfigDict(**_secrets_kwargs)

    log_level: str = "INFO"
    log_format: str = "{name}|{asctime}|{levelname}|{message}"

    # Where `train` writes logs and checkpoints when no --out is given
    output_dir: str = "runs"
    # Where `verify` writes reports and data files when no --out is given
    verify_dir: str = "verify-out"

    # Upper bound on training sub-runs executing at once (A/B, ablations)
    max_concurrent_runs: int = 2


settings = Settings()


class JsonFormatter(logging.Formatter):
    """Emit each log record as a single JSON object."""

    _BUILTIN_ATTRS = frozenset(vars(logging.LogRecord("", 0, "", 0, "", (), None)))

    def format(self, record: logging.LogRecord) -> str:
        ts = datetime.fromtimestamp(record.created, tz=UTC).strftime("%Y-%m-%dT%H:%M:%S")
        obj: dict = {
            "timestamp": ts,
            "level": record.levelname,
            "name": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info and record.exc_info[0] is not None:
            obj["exception"] = self.formatException(record.exc_info)
        for key, val in record.__dict__.items():
            if key not in self._BUILTIN_ATTRS:
                obj[key] = val
        return json.dumps(obj, default=str)


def _make_formatter():
    """Return the appropriate formatter based on settings."""
    if settings.log_format == "json":
        return JsonFormatter()
    return logging.Formatter(
        fmt=settings.log_format,
        datefmt="%Y-%m-%dT%H:%M:%S",
        style="{",
    )


def configure_logging():
    """Configure logging from settings, with safe fallback.

    When ``settings.log_format`` equals ``"json"``, a
    `JsonFormatter` is installed; otherwise the value is
    used as a ``str.format``-style pattern.
    """
    root = logging.getLogger()
    try:
        root.setLevel(settings.log_level)
        handler = logging.StreamHandler()
        handler.setFormatter(_make_formatter())
        root.handlers.clear()
        root.addHandler(handler)
    except Exception:
        handler = logging.StreamHandler()
        handler.setFormatter(
            logging.Formatter(
                fmt="{name}|{asctime}|{levelname}|{message}",
                datefmt="%Y-%m-%dT%H:%M:%S",
                style="{",
            )
        )
        root.handlers.clear()
        root.addHandler(handler)
        root.setLevel(logging.INFO)
        root.warning("invalid settings. environment variables might not be set. ")


# --- Run configuration models ---


class ConfigError(SafePolicyError):
    """Run configuration failed validation; ``key_path`` names the first bad key."""

    def __init__(self, key_path: str, message: str) -> None:
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}" if key_path else message)


class TrainConfig(BaseModel):
    """Training hyperparameters. Defaults are the published hyperparameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    gamma: float = Field(0.99, gt=0, le=1)
    gamma_c: float = Field(0.99, gt=0, le=1)
    batch_size: int = Field(256, gt=0)
    polyak: float = Field(0.005, gt=0, le=1)
    # "frequency 5": target networks are Polyak-updated every 5 gradient steps
    target_update_every: int = Field(5, gt=0)
    train_repeat: int = Field(10, ge=0)
    steps_per_epoch: int = Field(100, gt=0)
    warmup_steps: int = Field(5000, ge=0)
    lr: float = Field(3e-4, gt=0)
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(1e-8, gt=0)
    grad_clip: float = Field(10.0, gt=0)

    K: int = Field(5, ge=1)
    N: int = Field(6, ge=1)
    M: int = Field(6, ge=1)
    sigma_min: float = Field(1e-4, gt=0)
    sigma_max: float = Field(1e-1, gt=0)

    rho: float = Field(1.0, gt=0)
    beta: float = Field(0.1, gt=0)
    eta_lambda: float = Field(0.01, gt=0)
    lambda_init: float = Field(0.0, ge=0)

    buffer_capacity: int = Field(1_000_000, gt=0)
    embed_dim: int = Field(16, gt=0)
    score_hidden: tuple[int, ...] = (128, 128, 128)
    critic_hidden: tuple[int, ...] = (256, 256)
    cost_hidden: tuple[int, ...] = (256, 256)
    # one decoupled decay per cost-ensemble layer (hidden layers + output)
    cost_weight_decay: tuple[float, ...] = (3e-5, 6e-5, 1e-4)

    total_env_steps: int = Field(200_000, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def validate_shapes(self):
        if self.sigma_min >= self.sigma_max:
            raise ValueError("sigma_min must be smaller than sigma_max")
        if len(self.cost_weight_decay) != len(self.cost_hidden) + 1:
            raise ValueError("cost_weight_decay needs one entry per cost-critic layer")
        return self


class EnvOverrides(BaseModel):
    """Environment selection plus optional overrides of its documented constants."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: EnvName = EnvName.POINT_HAZARD
    dt: float | None = Field(None, gt=0)
    horizon: int | None = Field(None, gt=0)
    h: float | None = Field(None, ge=0)
    start_noise: float | None = Field(None, ge=0)
    damping: float | None = Field(None, ge=0, le=1)
    accel_scale: float | None = Field(None, gt=0)
    v_scale: float | None = Field(None, gt=0)
    omega_scale: float | None = Field(None, gt=0)
    goal_radius: float | None = Field(None, gt=0)
    goal_bonus: float | None = None

    def overrides(self) -> dict:
        """Return only the fields that were set to a value."""
        return {k: v for k, v in self.model_dump(exclude={"name"}).items() if v is not None}


class RunConfig(BaseModel):
    """Everything one `safepolicy train` run needs."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    train: TrainConfig = Field(default_factory=TrainConfig)
    env: EnvOverrides = Field(default_factory=EnvOverrides)
    variant: Variant = Variant.AUGMENTED
    output_dir: str | None = None
    eval_every: int = Field(20, gt=0)
    eval_episodes: int = Field(10, gt=0)
    checkpoint_every: int = Field(50, gt=0)


def _key_path(loc: tuple) -> str:
    return ".".join(str(part) for part in loc)


def parse_run_config(raw: dict) -> RunConfig:
    """Validate a mapping as a RunConfig.

    Raises:
        ConfigError: naming the dotted key path of the first failure.
    """
    try:
        return RunConfig.model_validate(raw)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_key_path(first["loc"]), first["msg"]) from e


def load_run_config(path: str) -> RunConfig:
    """Read a YAML run-config file.

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigError: If the YAML is invalid or fails validation.
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        raw = yaml.safe_load(file_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError("", f"Invalid YAML in {path}: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("", f"Expected a YAML mapping in {path}, got {type(raw).__name__}")
    return parse_run_config(raw)


def dump_run_config(cfg: RunConfig) -> str:
    """Serialize *cfg* to YAML such that ``load(dump(cfg)) == cfg``."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
