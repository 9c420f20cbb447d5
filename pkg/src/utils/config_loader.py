"""
Configuration loader for HomeSentinel

Handles loading YAML configuration files and environment variables, and
validates the monitor configuration tree before any frame is read.
"""

import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .regions import MIN_ROI_SIDE, EventKind, RoiRegion

WEBHOOK_TOKEN_ENV = "SENTINEL_WEBHOOK_TOKEN"
DEFAULT_CONFIG_NAME = "sentinel.yaml"


class ConfigurationError(ValueError):
    """Raised when configuration or engine preconditions are violated."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RhoMode(str, Enum):
    DENSITY = "density"
    SIMPLE = "simple"


class CalibrationMode(str, Enum):
    TEN_FRAMES = "TenFrames"
    ONE_MINUTE = "OneMinute"


class BackgroundParams(_Section):
    """Mixture-of-Gaussians parameters (K components per pixel)."""

    K: int = Field(default=3, ge=1)
    alpha: float = Field(default=0.02, gt=0.0, lt=1.0)
    T: float = Field(default=0.7, gt=0.0, lt=1.0)
    match_lambda: float = Field(default=2.5, gt=0.0)
    var_init: float = Field(default=225.0, gt=0.0)
    weight_init: float = Field(default=0.05, gt=0.0, le=1.0)
    variance_floor: float = Field(default=4.0, gt=0.0)
    rho_mode: RhoMode = RhoMode.DENSITY
    debug_dir: Optional[Path] = None

    @model_validator(mode="after")
    def _floor_below_init(self) -> "BackgroundParams":
        if self.variance_floor > self.var_init:
            raise ValueError("variance_floor must not exceed var_init")
        return self


class ShapeParams(_Section):
    """Rectangle recognition parameters."""

    min_area_fraction: float = Field(default=0.01, gt=0.0)
    dp_epsilon_fraction: float = Field(default=0.02, gt=0.0)
    angle_tolerance: float = Field(default=15.0, gt=0.0, lt=45.0)
    fill_ratio_min: float = Field(default=0.8, gt=0.0)
    debug_dir: Optional[Path] = None


class EngineSettings(_Section):
    calibration_mode: CalibrationMode = CalibrationMode.TEN_FRAMES
    refractory_ms: int = Field(default=2000, ge=0)
    novelty_expiry_ms: int = Field(default=600_000, ge=0)
    novelty_iou: float = Field(default=0.5, gt=0.0, le=1.0)
    trace_csv: Optional[Path] = None


class NotificationPolicy(_Section):
    """Delivery deadline, per-kind suppression windows and retry schedule."""

    deadline_s: float = Field(default=300.0, ge=0.0)
    social_window_s: float = Field(default=300.0, ge=0.0)
    voice_window_s: float = Field(default=30.0, ge=0.0)
    max_retries: int = Field(default=3, ge=0)
    backoff_s: Tuple[float, ...] = (1.0, 4.0, 16.0)
    queue_size: int = Field(default=64, ge=1)

    def backoff_for(self, retry_index: int) -> float:
        """Delay before the given retry (0-based); the last step repeats."""
        if not self.backoff_s:
            return 0.0
        return self.backoff_s[min(retry_index, len(self.backoff_s) - 1)]


class NotificationSettings(_Section):
    policy: NotificationPolicy = NotificationPolicy()
    webhook_url: Optional[str] = None
    message: str = "A new photo was pasted on the wall. Please give your family a call."
    voice_command: Optional[List[str]] = None
    timeout_s: float = Field(default=10.0, gt=0.0)

    @field_validator("message")
    @classmethod
    def _message_not_empty(cls, message: str) -> str:
        if not message.strip():
            raise ValueError("notification message must not be empty")
        return message


class ClassifierSettings(_Section):
    C: float = Field(default=10.0, gt=0.0)
    tolerance: float = Field(default=1e-3, gt=0.0)
    max_iterations: int = Field(default=100_000, ge=1)
    model_path: Path = Path("fall_model.svm")


class SourceSettings(_Section):
    directory: Optional[Path] = None
    stream: Optional[Path] = None
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    period_ms: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _one_source(self) -> "SourceSettings":
        if (self.directory is None) == (self.stream is None):
            raise ValueError("source needs exactly one of 'directory' or 'stream'")
        return self

    @property
    def path(self) -> Path:
        path = self.directory if self.directory is not None else self.stream
        assert path is not None
        return path


class SentinelConfig(_Section):
    """Complete monitor configuration."""

    source: SourceSettings
    rois: List[RoiRegion]
    background: BackgroundParams = BackgroundParams()
    shape: ShapeParams = ShapeParams()
    engine: EngineSettings = EngineSettings()
    notification: NotificationSettings = NotificationSettings()
    classifier: ClassifierSettings = ClassifierSettings()
    output_dir: Path = Path("output")
    seed: int = 0

    @model_validator(mode="after")
    def _check_rois(self) -> "SentinelConfig":
        validate_roi_layout(self.rois, self.source.width, self.source.height)
        return self

    def roi_for(self, kind: EventKind) -> Optional[RoiRegion]:
        return next((roi for roi in self.rois if roi.kind is kind), None)


def validate_roi_layout(rois: List[RoiRegion], width: int, height: int) -> None:
    """
    Check ROI count, one ROI per kind, unique ids, minimum size and frame bounds.

    Raises:
        ConfigurationError: On the first violated rule
    """
    if not 1 <= len(rois) <= 3:
        raise ConfigurationError(f"expected 1-3 ROIs, got {len(rois)}")
    kinds = [roi.kind for roi in rois]
    for kind in set(kinds):
        if kinds.count(kind) > 1:
            raise ConfigurationError(f"more than one ROI of kind {kind.value}")
    ids = [roi.id for roi in rois]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate ROI ids: {ids}")
    for roi in rois:
        if min(roi.width, roi.height) < MIN_ROI_SIDE:
            raise ConfigurationError(
                f"ROI {roi.id} sides must be at least {MIN_ROI_SIDE} px, "
                f"got {roi.width}x{roi.height}"
            )
        if not roi.fits(width, height):
            raise ConfigurationError(
                f"ROI {roi.id} ({roi.kind.value}) rect {roi.rect} exceeds {width}x{height} frame"
            )


class ConfigLoader:
    """Load and manage configuration from YAML files and environment variables."""

    def __init__(self, config_dir: Optional[Path] = None):
        """
        Initialize the configuration loader.

        Args:
            config_dir: Path to configuration directory. Defaults to ./config
        """
        load_dotenv()

        if config_dir is None:
            config_dir = Path(__file__).parent.parent.parent / "config"
        self.config_dir = Path(config_dir)

        self._cache: Dict[str, Any] = {}

    def load_yaml(self, filename: Union[str, Path], use_cache: bool = True) -> Dict[str, Any]:
        """
        Load a YAML configuration file.

        Args:
            filename: File name relative to the config directory, or an absolute path
            use_cache: Whether to use cached version if available

        Returns:
            Parsed YAML content as dictionary

        Raises:
            FileNotFoundError: If configuration file doesn't exist
            ConfigurationError: If the YAML is malformed or not a mapping
        """
        key = str(filename)
        if use_cache and key in self._cache:
            return self._cache[key]

        file_path = self.resolve(filename)
        if not file_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {file_path}")

        try:
            with open(file_path, "r", encoding="utf-8") as f:
                config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in {file_path}: {e}") from e

        if config is None:
            config = {}
        if not isinstance(config, dict):
            raise ConfigurationError(f"Top level of {file_path} must be a mapping")

        if use_cache:
            self._cache[key] = config

        return config

    def resolve(self, filename: Union[str, Path]) -> Path:
        path = Path(filename)
        if path.is_absolute() or path.exists():
            return path
        return self.config_dir / path

    def get_sentinel_config(self, filename: Union[str, Path, None] = None) -> SentinelConfig:
        """
        Load and validate the monitor configuration.

        Raises:
            ConfigurationError: File missing, malformed or invalid
        """
        if filename is None:
            filename = self.get_env("SENTINEL_CONFIG", DEFAULT_CONFIG_NAME)
        file_path = self.resolve(filename)
        if not file_path.is_file():
            raise ConfigurationError(f"Configuration file not found: {file_path}")
        data = self.load_yaml(file_path, use_cache=False)
        return parse_config(data, base_dir=file_path.parent)

    def get_env(self, key: str, default: Optional[str] = None) -> Optional[str]:
        """
        Get environment variable value.

        Args:
            key: Environment variable name
            default: Default value if not found

        Returns:
            Environment variable value or default
        """
        return os.getenv(key, default)

    def get_webhook_token(self) -> str:
        return self.get_env(WEBHOOK_TOKEN_ENV, "") or ""

    def reload(self) -> None:
        """Clear cache and reload environment variables."""
        self._cache.clear()
        load_dotenv(override=True)


def parse_config(data: Dict[str, Any], base_dir: Optional[Path] = None) -> SentinelConfig:
    """
    Validate a raw config mapping.

    Relative paths are resolved against base_dir when given.

    Raises:
        ConfigurationError: On any schema or layout violation
    """
    try:
        config = SentinelConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e
    if base_dir is not None:
        config = _resolve_paths(config, base_dir)
    return config


def _resolve_paths(config: SentinelConfig, base_dir: Path) -> SentinelConfig:
    def fix(path: Optional[Path]) -> Optional[Path]:
        if path is None or path.is_absolute():
            return path
        return base_dir / path

    source = config.source.model_copy(
        update={"directory": fix(config.source.directory), "stream": fix(config.source.stream)}
    )
    background = config.background.model_copy(
        update={"debug_dir": fix(config.background.debug_dir)}
    )
    shape = config.shape.model_copy(update={"debug_dir": fix(config.shape.debug_dir)})
    engine = config.engine.model_copy(update={"trace_csv": fix(config.engine.trace_csv)})
    classifier = config.classifier.model_copy(
        update={"model_path": fix(config.classifier.model_path)}
    )
    return config.model_copy(
        update={
            "source": source,
            "background": background,
            "shape": shape,
            "engine": engine,
            "classifier": classifier,
            "output_dir": fix(config.output_dir),
        }
    )


def config_to_dict(config: SentinelConfig) -> Dict[str, Any]:
    """Plain-data form of a config, suitable for YAML."""
    return config.model_dump(mode="json", exclude_none=True)


def load_config(path: Union[str, Path]) -> SentinelConfig:
    """Load a config file, keeping paths exactly as written."""
    data = config_loader.load_yaml(Path(path), use_cache=False)
    return parse_config(data)


def save_config(config: SentinelConfig, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=False)


# Global config loader instance
config_loader = ConfigLoader()
