import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_type_hints

from deepmerge import always_merger

from .exceptions import ConfigurationError
from .models import DescriptionLevel, ErrorType, HD95Mode


@dataclass
class ModelConfig:
    image_size: int = 64
    channels: int = 1
    patch: int = 8
    dim: int = 64
    heads: int = 4
    image_layers: int = 4
    text_layers: int = 2
    text_max_len: int = 16
    mixer_depth: int = 4
    ffn_ratio: int = 4
    encoder_activation: str = "gelu"
    decoder_activation: str = "relu"
    resize_mode: str = "bilinear"
    image_residual: bool = False
    ln_eps: float = 1e-5
    init_std: float = 0.02

    @property
    def grid_side(self) -> int:
        return self.image_size // self.patch

    @property
    def num_tokens(self) -> int:
        return self.grid_side * self.grid_side


@dataclass
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    warmup_mode: str = "ratio"
    warmup_ratio: float = 0.3333
    warmup_steps: int = 1
    decay_ratio: float = 0.0
    clip_norm: float = 1.0


@dataclass
class DataConfig:
    canvas: int = 64
    min_shapes: int = 2
    max_shapes: int = 4
    min_size: int = 4
    max_size: int = 8
    min_intensity: float = 0.3
    max_intensity: float = 1.0
    ambiguous: bool = False
    max_attempts: int = 1000
    n_train: int = 512
    n_val: int = 64
    n_test: int = 128


@dataclass
class TrainConfig:
    seed: int = 7
    batch_size: int = 16
    epochs: int = 200
    level: str = DescriptionLevel.COMPLEX.value
    freeze_encoders: bool = False
    lambda_bbox: float = 0.0
    flip: bool = True
    threshold: float = 0.5
    hd95_mode: str = HD95Mode.POOLED.value
    init_checkpoint: str = ""
    gradcheck_tolerance: float = 1e-4
    gradcheck_max_params: int = 5000


@dataclass
class PathsConfig:
    data_dir: str = "data"
    out_dir: str = "runs/default"
    vocab: str = ""


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimizerConfig = field(default_factory=OptimizerConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


SECTIONS = {
    "model": ModelConfig,
    "optim": OptimizerConfig,
    "data": DataConfig,
    "train": TrainConfig,
    "paths": PathsConfig,
}


def config_to_dict(config: RunConfig) -> Dict[str, Dict[str, Any]]:
    return {name: dataclasses.asdict(getattr(config, name)) for name in SECTIONS}


def _convert(section: str, key: str, raw: Any, target: type) -> Any:
    if not isinstance(raw, str):
        if target is float and isinstance(raw, int) and not isinstance(raw, bool):
            return float(raw)
        if isinstance(raw, target):
            return raw
        raw = str(raw)
    text = raw.strip()
    try:
        if target is bool:
            lowered = text.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if target is int:
            return int(text)
        if target is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: cannot parse {text!r} as {target.__name__}")


def _build_section(name: str, values: Dict[str, Any]) -> Any:
    cls = SECTIONS[name]
    hints = get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigurationError(f"unknown key '{key}' in section [{name}]", ErrorType.CONFIG_UNKNOWN_KEY)
        kwargs[key] = _convert(name, key, raw, hints[key])
    return cls(**kwargs)


def validate_config(config: RunConfig) -> None:
    """
    Check cross-field constraints.

    Raises:
        ConfigurationError: naming the first offending field
    """
    m, o, d, t = config.model, config.optim, config.data, config.train
    positive = {
        "model.image_size": m.image_size, "model.channels": m.channels, "model.patch": m.patch,
        "model.dim": m.dim, "model.heads": m.heads, "model.image_layers": m.image_layers,
        "model.text_layers": m.text_layers, "model.text_max_len": m.text_max_len,
        "model.mixer_depth": m.mixer_depth, "model.ffn_ratio": m.ffn_ratio, "model.ln_eps": m.ln_eps,
        "optim.lr": o.lr, "optim.eps": o.eps, "data.canvas": d.canvas, "data.min_size": d.min_size,
        "data.max_attempts": d.max_attempts, "train.batch_size": t.batch_size, "train.epochs": t.epochs,
    }
    for name, value in positive.items():
        if value <= 0:
            raise ConfigurationError(f"{name} must be positive, got {value}")
    if m.dim % m.heads:
        raise ConfigurationError(f"model.dim {m.dim} is not divisible by model.heads {m.heads}")
    if m.dim % 4:
        raise ConfigurationError(f"model.dim {m.dim} must be divisible by 4 for the two up-convolutions")
    if m.image_size % m.patch:
        raise ConfigurationError(f"model.patch {m.patch} does not divide model.image_size {m.image_size}")
    if m.encoder_activation not in ("gelu", "relu") or m.decoder_activation not in ("gelu", "relu"):
        raise ConfigurationError("activations must be 'gelu' or 'relu'")
    if m.resize_mode not in ("bilinear", "none"):
        raise ConfigurationError(f"model.resize_mode must be 'bilinear' or 'none', got {m.resize_mode!r}")
    if not (0 <= o.beta1 < 1 and 0 <= o.beta2 < 1):
        raise ConfigurationError("optim.beta1 and optim.beta2 must lie in [0, 1)")
    if o.warmup_mode not in ("ratio", "steps"):
        raise ConfigurationError(f"optim.warmup_mode must be 'ratio' or 'steps', got {o.warmup_mode!r}")
    if not 0 <= o.warmup_ratio < 1 or o.warmup_steps < 0 or o.weight_decay < 0 or o.decay_ratio < 0:
        raise ConfigurationError("optim warmup/decay values out of range")
    if d.min_shapes < 2 or d.max_shapes < d.min_shapes or d.max_shapes > 4:
        raise ConfigurationError("data.min_shapes/max_shapes must satisfy 2 <= min <= max <= 4")
    if d.canvas < 32 or d.max_size < d.min_size:
        raise ConfigurationError("data.canvas must be >= 32 and data.max_size >= data.min_size")
    if d.canvas != m.image_size:
        raise ConfigurationError(f"data.canvas {d.canvas} must equal model.image_size {m.image_size}")
    if not 0 < d.min_intensity <= d.max_intensity <= 1:
        raise ConfigurationError("data intensities must satisfy 0 < min <= max <= 1")
    if t.level not in {level.value for level in DescriptionLevel}:
        raise ConfigurationError(f"train.level must be none|simple|complex, got {t.level!r}")
    if t.hd95_mode not in {mode.value for mode in HD95Mode}:
        raise ConfigurationError(f"train.hd95_mode must be pooled|per_direction, got {t.hd95_mode!r}")
    if not 0 < t.threshold < 1:
        raise ConfigurationError(f"train.threshold must lie in (0, 1), got {t.threshold}")
    if t.lambda_bbox < 0:
        raise ConfigurationError("train.lambda_bbox must be >= 0")


def create_run_config(data: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """
    Convert a nested dict into a validated RunConfig.

    Missing sections and keys fall back to defaults.

    Raises:
        ConfigurationError: on unknown sections/keys or invalid values
    """
    data = data or {}
    for section in data:
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]", ErrorType.CONFIG_UNKNOWN_KEY)
    config = RunConfig(**{name: _build_section(name, dict(data.get(name, {}))) for name in SECTIONS})
    validate_config(config)
    return config


def parse_config_text(text: str) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str  # type: ignore[assignment]
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}")
    return {section: dict(parser.items(section)) for section in parser.sections()}


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """Layer defaults, an optional config file and CLI overrides."""
    layered: Dict[str, Dict[str, Any]] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {p}")
        layered = always_merger.merge(layered, parse_config_text(p.read_text(encoding="utf-8")))
    if overrides:
        layered = always_merger.merge(layered, overrides)
    return create_run_config(layered)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(config: RunConfig) -> str:
    lines: List[str] = []
    for section, values in config_to_dict(config).items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {_format_value(value)}" for key, value in values.items())
        lines.append("")
    return "\n".join(lines)


def model_config_diff(expected: ModelConfig, actual: ModelConfig) -> List[str]:
    """Names of model fields whose values differ."""
    return [f.name for f in dataclasses.fields(ModelConfig)
            if getattr(expected, f.name) != getattr(actual, f.name)]
