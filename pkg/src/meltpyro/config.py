"""Versioned JSON pipeline configuration.

Every default is owned by the module that consumes it; this file only maps
the JSON document onto those module types and validates at load time so a bad
config fails before any frame is touched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .radiometry import CONSTANT_PRESETS, OpticsConfig
from .registration import RegistrationParams
from .segmentation import SegmentationParams
from .thermography import PipelineParams, ThermoLimits

__all__ = ["ConfigError", "PipelineConfig", "load_config", "DEFAULT_GAP_MIN_MS"]

CONFIG_VERSION = 1
DEFAULT_GAP_MIN_MS = 100.0


class ConfigError(ValueError):
    """Configuration document is structurally or semantically invalid."""


@dataclass(frozen=True)
class PipelineConfig:
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    params: PipelineParams = field(default_factory=PipelineParams)
    pixel_pitch_um: float = 20.0
    gap_min_ms: float = DEFAULT_GAP_MIN_MS
    workers: int | None = None  # None = available cores
    window_frames: int = 1024

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return self.workers
        import os

        return os.cpu_count() or 1


def _get(doc: dict, key: str, kind, default):
    if key not in doc:
        return default
    value = doc[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}")
    return value


def config_from_dict(doc: dict) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    try:
        optics_doc = doc.get("optics", {})
        constants_name = optics_doc.get("constants", "codata")
        if constants_name not in CONSTANT_PRESETS:
            raise ConfigError(
                f"optics.constants: unknown preset {constants_name!r} "
                f"(choose from {sorted(CONSTANT_PRESETS)})"
            )
        optics = OpticsConfig(
            lambda1=_get(optics_doc, "lambda1_nm", float, 550.0) * 1e-9,
            lambda2=_get(optics_doc, "lambda2_nm", float, 620.0) * 1e-9,
            a12=_get(optics_doc, "a12", float, 1.601),
            u_a12=_get(optics_doc, "u_a12", float, 0.0163),
            emissivity_ratio=_get(optics_doc, "emissivity_ratio", float, 1.0),
            constants=CONSTANT_PRESETS[constants_name],
        )
        seg_doc = doc.get("segmentation", {})
        segmentation = SegmentationParams(
            k_sigma=_get(seg_doc, "k_sigma", float, 3.0),
            absolute_floor=_get(seg_doc, "absolute_floor", float, 1600.0),
        )
        reg_doc = doc.get("registration", {})
        registration = RegistrationParams(
            upscale_factor=_get(reg_doc, "upscale_factor", int, 3),
            ssim_gate=_get(reg_doc, "ssim_gate", float, 0.80),
            min_confidence=_get(reg_doc, "min_confidence", float, 0.3),
            segmentation=segmentation,
        )
        thermo_doc = doc.get("thermography", {})
        limits = ThermoLimits(
            floor_kelvin=_get(thermo_doc, "floor_kelvin", float, 1300.0),
            ceiling_kelvin=_get(thermo_doc, "ceiling_kelvin", float, 6000.0),
        )
        params = PipelineParams(
            split_column=doc.get("split_column"),
            segmentation=segmentation,
            registration=registration,
            limits=limits,
            average_mode=_get(thermo_doc, "average_mode", str, "ratio_of_means"),
            quantization_step_native=_get(
                thermo_doc, "quantization_step_native", float, 1.0
            ),
        )
        workers = doc.get("workers")
        if workers is not None and (not isinstance(workers, int) or workers < 1):
            raise ConfigError(f"workers: expected a positive integer, got {workers!r}")
        return PipelineConfig(
            optics=optics,
            params=params,
            pixel_pitch_um=_get(doc, "pixel_pitch_um", float, 20.0),
            gap_min_ms=_get(thermo_doc, "gap_min_ms", float, DEFAULT_GAP_MIN_MS),
            workers=workers,
            window_frames=_get(doc, "window_frames", int, 1024),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> PipelineConfig:
    """Load a config file; None gives the all-defaults configuration."""
    if path is None:
        return PipelineConfig()
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}") from exc
    return config_from_dict(doc)
