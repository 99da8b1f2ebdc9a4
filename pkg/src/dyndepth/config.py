"""Config file loading and dotted-key overrides.

Configs are TOML with [model], [scheduler] and [pipeline] sections; every
field has a default, so an empty file is valid. CLI ``--set a.b=v``
overrides take the same dotted paths.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib

from .dynamic import PipelineConfig
from .model import DEFAULT_SCALES, ScaleSchedule, ToyVarModel, init_model
from .schedule import BudgetMode, ReferenceMetric, ScheduleFamily, SchedulerConfig


class ConfigError(Exception):
    pass


DEFAULTS = {
    "model": {
        "seed": 0,
        "num_layers": 32,
        "channels": 32,
        "codebook_size": 64,
        "scales": [list(s) for s in DEFAULT_SCALES],
    },
    "scheduler": {
        "metric": "mae",
        "layer_begin": 3,
        "layer_end": 19,
        "family": "sigmoid",
        "k": 12.0,
        "eta": 0.8,
        "reference_scale": 6,
        "rotation": True,
        "budget_mode": "segment_integral",
    },
    "pipeline": {
        "dynamic_start": 1,
        "mask_strategy": "bit_reversal",
        "blending": True,
        "restore_threshold": 0.9,
        "restore_window": 5,
    },
}


def load_config(path=None) -> dict:
    """Read a TOML config, merged over the defaults."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as f:
                user = tomllib.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid config {path}: {e}") from e
        for section, values in user.items():
            if section not in cfg:
                raise ConfigError(f"unknown config section [{section}]")
            if not isinstance(values, dict):
                raise ConfigError(f"top-level key {section!r} must be a section")
            for key, val in values.items():
                if key not in cfg[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                cfg[section][key] = val
    return cfg


def _parse_scalar(text: str):
    low = text.strip()
    if low.lower() in ("true", "false"):
        return low.lower() == "true"
    for cast in (int, float):
        try:
            return cast(low)
        except ValueError:
            pass
    return low


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings on top of a loaded config."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        path, _, raw = item.partition("=")
        parts = path.strip().split(".")
        if len(parts) != 2 or parts[0] not in cfg or parts[1] not in cfg[parts[0]]:
            raise ConfigError(f"unknown override key {path.strip()!r}")
        cfg[parts[0]][parts[1]] = _parse_scalar(raw)
    return cfg


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one pipeline run needs, built from a config dict."""

    model_seed: int
    num_layers: int
    channels: int
    codebook_size: int
    schedule: ScaleSchedule
    pipeline: PipelineConfig

    def build_model(self, seed=None) -> ToyVarModel:
        return init_model(
            self.model_seed if seed is None else seed,
            self.num_layers,
            self.channels,
            self.codebook_size,
        )


def build_spec(cfg: dict) -> ExperimentSpec:
    m, s, p = cfg["model"], cfg["scheduler"], cfg["pipeline"]
    try:
        metric = ReferenceMetric(str(s["metric"]).lower())
        budget_mode = BudgetMode(str(s["budget_mode"]).lower())
        family = ScheduleFamily(str(s["family"]).lower(), float(s["k"]))
        scheduler = SchedulerConfig(
            metric=metric,
            layer_range=(int(s["layer_begin"]), int(s["layer_end"])),
            family=family,
            eta=float(s["eta"]),
            reference_scale=int(s["reference_scale"]),
            rotation_enabled=bool(s["rotation"]),
            budget_mode=budget_mode,
        )
        pipeline = PipelineConfig(
            scheduler=scheduler,
            dynamic_start=int(p["dynamic_start"]),
            mask_strategy=str(p["mask_strategy"]),
            blending_enabled=bool(p["blending"]),
            restore_threshold=float(p["restore_threshold"]),
            restore_window=int(p["restore_window"]),
        )
        schedule = ScaleSchedule(tuple(tuple(int(v) for v in hw) for hw in m["scales"]))
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"bad config value: {e}") from e
    if scheduler.layer_range[1] >= int(m["num_layers"]):
        raise ConfigError(
            f"layer range {scheduler.layer_range} exceeds model depth {m['num_layers']}"
        )
    return ExperimentSpec(
        model_seed=int(m["seed"]),
        num_layers=int(m["num_layers"]),
        channels=int(m["channels"]),
        codebook_size=int(m["codebook_size"]),
        schedule=schedule,
        pipeline=pipeline,
    )
