# src/core/config.py
"""Flat ``section.key=value`` configuration files for the pipeline and scenarios.

Files are read with the python-dotenv parser: blank lines, ``#`` comment lines and
inline comments after whitespace are ignored, values may be quoted. Unknown keys raise ConfigError
naming the key. Environment variables override file values.
"""
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from dotenv.parser import parse_stream

from src.utils.errors import ConfigError
from src.utils.logger import str2bool
from src.utils.textio import require_file

METHODS = ('svdd', 'soft_svdd', 'nnpu', 'ours')


@dataclass
class WorldSection:
    seed: int = 1
    recipe: str = ''
    width: int = 128
    height: int = 128
    resolution: float = 0.25


@dataclass
class DatagenSection:
    vehicles: Tuple[str, ...] = ('compact_car', 'suv', 'offroad_6x6')
    drives_per_vehicle: int = 7
    dt: float = 0.1
    k: int = 16
    radius: float = 0.25
    value_mode: str = 'wheel_force'
    unlabeled_per_scan: int = 400
    scan_every: int = 10
    channels: int = 16
    azimuth_steps: int = 360
    max_range: float = 12.0
    mount_height: float = 1.8
    voxel_size: float = 0.05
    eval_per_class: int = 1000
    split_seed: int = 3


@dataclass
class TrainingSection:
    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    optimizer: str = 'adam'
    nu: float = 0.1
    class_prior: float = 0.5
    compactness: float = 1.0
    warm_up_epochs: int = 10
    augment: bool = True
    regression: bool = True
    methods: Tuple[str, ...] = METHODS
    collapse_variant: bool = True
    overrides: Dict[str, Dict[str, str]] = field(default_factory=dict)


@dataclass
class EvaluationSection:
    threshold: float = 0.5
    dataset: str = 'synthetic'


@dataclass
class NavigationSection:
    enabled: bool = True
    scenarios: Tuple[str, ...] = ('obstacle_band', 'bump_band')
    vehicle: str = 'suv'
    n_samples: int = 256
    horizon: int = 30
    temperature: float = 0.5
    max_steps: int = 300
    survey_spacing: float = 2.0


@dataclass
class PipelineConfig:
    seed: int = 1
    output_dir: str = 'outputs'
    world: WorldSection = field(default_factory=WorldSection)
    datagen: DatagenSection = field(default_factory=DatagenSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    navigation: NavigationSection = field(default_factory=NavigationSection)


@dataclass
class ScenarioConfig:
    """Inputs of the ``navigate`` subcommand."""
    name: str = 'obstacle_band'
    seed: int = 0
    vehicle: str = ''
    world: str = ''
    map: str = ''
    start: Tuple[float, ...] = ()
    goal: Tuple[float, ...] = ()
    max_steps: int = 300
    goal_radius: float = 1.0
    cost: Dict[str, str] = field(default_factory=dict)
    mppi: Dict[str, str] = field(default_factory=dict)


def coerce(value: str, current: Any, key: str) -> Any:
    """Convert ``value`` to the type of ``current``."""
    if isinstance(current, bool) and str(value).lower() not in ('yes', 'no', 'true', 'false', 't', 'f', '1', '0'):
        raise ConfigError(f"invalid boolean {value!r} for key {key!r}")
    try:
        if isinstance(current, bool):
            return str2bool(value)
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, tuple):
            parts = [p.strip() for p in value.split(',') if p.strip()]
            if current and all(isinstance(v, str) for v in current) or not current and not _numeric(parts):
                return tuple(parts)
            return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"invalid value {value!r} for key {key!r}")
    return value


def _numeric(parts: List[str]) -> bool:
    try:
        [float(p) for p in parts]
        return True
    except ValueError:
        return False


def read_key_values(path: Union[str, Path]) -> List[Tuple[int, str, str]]:
    """(line number, key, value) for every assignment in a dotenv-style file."""
    path = require_file(path)
    entries = []
    with open(path, 'r') as f:
        for binding in parse_stream(f):
            text = binding.original.string
            lineno = binding.original.line + text[:len(text) - len(text.lstrip())].count('\n')
            if binding.error or (binding.key is not None and binding.value is None):
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {text.strip()!r}")
            if binding.key is None:
                continue
            entries.append((lineno, binding.key, binding.value))
    return entries


def _set_field(target: Any, name: str, value: str, key: str) -> None:
    names = {f.name for f in fields(target)}
    if name not in names or isinstance(getattr(target, name), dict):
        raise ConfigError(f"unknown config key {key!r}")
    setattr(target, name, coerce(value, getattr(target, name), key))


def apply_setting(cfg: PipelineConfig, key: str, value: str) -> None:
    parts = key.split('.')
    if len(parts) == 1:
        _set_field(cfg, parts[0], value, key)
        return
    section = parts[0]
    if section not in ('world', 'datagen', 'training', 'evaluation', 'navigation'):
        raise ConfigError(f"unknown config key {key!r}")
    target = getattr(cfg, section)
    if section == 'training' and len(parts) == 3:
        method, name = parts[1], parts[2]
        if method not in METHODS or name not in {f.name for f in fields(TrainingSection)}:
            raise ConfigError(f"unknown config key {key!r}")
        target.overrides.setdefault(method, {})[name] = value
        return
    if len(parts) != 2:
        raise ConfigError(f"unknown config key {key!r}")
    _set_field(target, parts[1], value, key)


def apply_env(cfg: PipelineConfig) -> PipelineConfig:
    if os.getenv('TRAVBENCH_OUTPUT_DIR'):
        cfg.output_dir = os.getenv('TRAVBENCH_OUTPUT_DIR')
    if os.getenv('TRAVBENCH_SEED'):
        apply_setting(cfg, 'seed', os.getenv('TRAVBENCH_SEED'))
    return cfg


def load_pipeline_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """Defaults, then the file (if any), then environment overrides."""
    cfg = PipelineConfig()
    if path:
        for lineno, key, value in read_key_values(path):
            try:
                apply_setting(cfg, key, value)
            except ConfigError as e:
                raise ConfigError(f"{path}:{lineno}: {e}") from e
    for method in cfg.training.methods:
        if method not in METHODS:
            raise ConfigError(f"unknown training method {method!r} in training.methods")
    return apply_env(cfg)


def training_settings(section: TrainingSection, method: str) -> Dict[str, Any]:
    """Training fields for ``method`` with its per-method overrides applied."""
    settings = {f.name: getattr(section, f.name) for f in fields(section) if f.name != 'overrides'}
    for name, value in section.overrides.get(method, {}).items():
        settings[name] = coerce(value, settings[name], f"training.{method}.{name}")
    return settings


def load_scenario_config(path: Union[str, Path]) -> ScenarioConfig:
    """``cost.*`` and ``mppi.*`` keys are collected raw and checked when the planner configs are built."""
    cfg = ScenarioConfig()
    for lineno, key, value in read_key_values(path):
        section, _, name = key.partition('.')
        if section in ('cost', 'mppi') and name:
            getattr(cfg, section)[name] = value
            continue
        if section == 'scenario' and name:
            key_name = name
        elif not name:
            key_name = section
        else:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            _set_field(cfg, key_name, value, key)
        except ConfigError as e:
            raise ConfigError(f"{path}:{lineno}: {e}") from e
    return cfg


def build_dataclass(cls, raw: Dict[str, str], prefix: str, **defaults):
    """Instantiate ``cls`` from defaults plus raw string settings, rejecting unknown keys."""
    obj = cls(**defaults)
    for name, value in raw.items():
        _set_field(obj, name, value, f"{prefix}.{name}")
    # re-run validation on the final values
    return cls(**{f.name: getattr(obj, f.name) for f in fields(obj)})
