"""Run configuration: YAML files validated by pydantic models."""

import hashlib
import json
import logging
import os
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .common import ConfigError
from .grid import is_power_of_two

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "HCFLAB_OUTPUT_ROOT"

# Horizon and bookkeeping knobs; a resume may change them freely.
HASH_EXCLUDE = {
    "flow": {"t_end", "t_end_k0", "max_steps", "checkpoint_every"},
    "output": True,
}

CHECK_KINDS = ("identities", "evolution", "conditions", "heat")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PresetConfig(_Section):
    name: str = "flat"
    amplitude: float = Field(0.1, ge=0)
    max_mode: int = Field(1, ge=1)
    seed: Optional[int] = None


class GridConfig(_Section):
    n: int = 1
    resolution: int = 16
    derivative_mode: Literal["spectral", "fd4"] = "spectral"
    periods: Optional[List[float]] = None

    @field_validator("n")
    @classmethod
    def _check_n(cls, value):
        if value not in (1, 2, 3):
            raise ValueError("complex dimension must be 1, 2 or 3")
        return value

    @field_validator("resolution")
    @classmethod
    def _check_resolution(cls, value):
        if value < 8 or not is_power_of_two(value):
            raise ValueError("resolution must be a power of two >= 8, got {0}".format(value))
        return value


class FlowConfig(_Section):
    t_end: Optional[float] = Field(None, gt=0)
    t_end_k0: Optional[float] = Field(None, gt=0)
    c1: float = Field(0.5, gt=0)
    safety: float = Field(0.5, gt=0, lt=1)
    max_dt: float = Field(0.05, gt=0)
    min_dt: float = Field(1e-8, gt=0)
    dt: Optional[float] = Field(None, gt=0)
    stiffness_cap: bool = True
    max_steps: int = Field(10000, ge=0)
    checkpoint_every: int = Field(50, ge=0)
    trajectory_every: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_steps(self):
        if self.min_dt > self.max_dt:
            raise ValueError("min_dt exceeds max_dt")
        return self


class MonitorConfig(_Section):
    every: int = Field(1, ge=1)
    epsilon: float = Field(0.01, ge=0)
    K: float = Field(1.0, ge=0)
    nonpositive_tol: float = Field(1e-8, gt=0)
    griffiths_points: Optional[int] = Field(64, ge=1)
    restarts: int = Field(8, ge=1)
    max_iter: int = Field(100, ge=1)
    pinch_points: Optional[int] = Field(16, ge=1)
    pinch_samples: int = Field(128, ge=1)
    polarization_samples: int = Field(64, ge=1)
    heat: bool = False
    bump: str = "cosine"
    bump_power: int = Field(2, ge=1)
    bump_radius: float = Field(1.0, gt=0)
    bump_scale: float = Field(1.0, ge=0, le=1)
    heat_k: Optional[float] = Field(None, ge=0)
    heat_k_factor: float = Field(10.0, ge=0)
    heat_B: float = Field(1.0, ge=0)
    heat_eps: float = Field(0.01, ge=0)


class CheckConfig(_Section):
    which: List[Literal["identities", "evolution", "conditions", "heat"]] = ["identities"]
    tolerance: float = Field(1e-7, gt=0)
    flat_tolerance: float = Field(1e-13, gt=0)
    spectral_tail: bool = True
    deltas: List[float] = [1e-3, 5e-4, 2.5e-4]
    evolution_t: float = Field(0.0, ge=0)
    evolution_tolerance: float = Field(1e-5, gt=0)
    condition_samples: int = Field(10000, ge=1)
    field_modes: int = Field(1, ge=1)


class OutputConfig(_Section):
    directory: str = "runs"
    csv: bool = True
    summary: bool = True
    checkpoints: bool = True


class RunConfig(_Section):
    name: str = "hcf"
    seed: int = Field(0, ge=0)
    preset: PresetConfig = PresetConfig()
    grid: GridConfig = GridConfig()
    flow: FlowConfig = FlowConfig()
    monitors: MonitorConfig = MonitorConfig()
    checks: CheckConfig = CheckConfig()
    output: OutputConfig = OutputConfig()

    @property
    def preset_seed(self):
        return self.seed if self.preset.seed is None else self.preset.seed

    @property
    def run_directory(self):
        return os.path.join(self.output.directory, self.name)


def _node_line(root, path):
    """1-based line of the YAML node at `path`, or of its nearest ancestor."""
    node = root
    line = None
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            break
        for knode, vnode in node.value:
            if knode.value == str(key):
                line = knode.start_mark.line + 1
                node = vnode
                break
        else:
            break
    return line


def _apply_override(data, item):
    try:
        dotted, raw = item.split("=", 1)
    except ValueError:
        raise ConfigError("override must look like section.key=value, got {0!r}".format(item))
    keys = dotted.strip().split(".")
    target = data
    for key in keys[:-1]:
        target = target.setdefault(key, {})
        if not isinstance(target, dict):
            raise ConfigError("cannot override inside a scalar", field=dotted)
    target[keys[-1]] = yaml.safe_load(raw)


def parse_config(text, overrides=(), source="<string>"):
    """Validate YAML text (plus `section.key=value` overrides) into a RunConfig."""
    try:
        root = yaml.compose(text) if text.strip() else None
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise ConfigError("{0} is not valid YAML: {1}".format(source, err),
                          line=None if mark is None else mark.line + 1)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("{0} must contain a mapping at top level".format(source))
    for item in overrides:
        _apply_override(data, item)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as err:
        first = err.errors()[0]
        path = [p for p in first["loc"] if not isinstance(p, int)]
        field = ".".join(str(p) for p in first["loc"])
        line = _node_line(root, path) if root is not None else None
        raise ConfigError(first["msg"], field=field, line=line)
    env_root = os.environ.get(OUTPUT_ROOT_ENV)
    if env_root:
        cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"directory": env_root})})
    return cfg


def load_config(path=None, overrides=()):
    """Load a RunConfig from a YAML file, or defaults when path is None."""
    if path is None:
        return parse_config("", overrides)
    try:
        with open(path, encoding='utf-8') as f:
            text = f.read()
    except OSError as err:
        raise ConfigError("cannot read configuration {0}: {1}".format(path, err))
    return parse_config(text, overrides, source=path)


def dump_config(cfg):
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def config_hash(cfg):
    """SHA-256 of the physics-defining part of a configuration."""
    data = cfg.model_dump(mode="json", exclude=HASH_EXCLUDE)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
