"""Ground-truth dual-wavelength frame renderer.

Renders frames from a specified temperature field through the graybody
forward model (the same short-wavelength radiance form the inversion
assumes), so pipeline error can be isolated from model error. A Planck-mode
switch exists to quantify the approximation gap separately.

Scene layout convention: the long-wavelength (620 nm) melt pool occupies the
left half of the frame on its own sub-image grid; the short-wavelength
(550 nm) pool sits on the right with `applied_transform` injected, i.e. the
550 content at sub-image point p equals the ideal field at T(p), which is
exactly the misalignment `registration` is expected to recover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np
from scipy import ndimage

from .frame_io import (
    DEFAULT_FPS,
    DEFAULT_HEIGHT,
    DEFAULT_PIXEL_PITCH_UM,
    DEFAULT_WIDTH,
    Frame,
    StreamHeader,
    encode_stream,
)
from .radiometry import CODATA, OpticsConfig, PhysicalConstants
from .registration import SimilarityTransform

__all__ = [
    "GaussianFootprint",
    "EllipseFootprint",
    "FieldFootprint",
    "SyntheticScene",
    "SyntheticLayerScript",
    "SceneSchemaError",
    "render_channel_counts",
    "render_pair",
    "render_stream",
    "write_stream_file",
    "footprint_mask",
    "exposure_for_peak_counts",
    "scene_from_dict",
    "script_from_dict",
]

NATIVE_MAX = 4095


class SceneSchemaError(ValueError):
    """Scene/script document violates the schema; carries the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class GaussianFootprint:
    """Anisotropic Gaussian temperature blob.

    Default sigmas (3 x 2 px at 20 um/px) give the ~120 x 80 um pool core of
    a typical hatch-scan melt pool.
    """

    peak_kelvin: float
    center: tuple[float, float] | None = None  # absolute sub-image px; None = middle
    sigma_x_px: float = 3.0
    sigma_y_px: float = 2.0
    background_kelvin: float = 0.0

    def evaluate(self, x: np.ndarray, y: np.ndarray, shape: tuple[int, int]):
        cx, cy = _center(self.center, shape)
        arg = ((x - cx) / self.sigma_x_px) ** 2 + ((y - cy) / self.sigma_y_px) ** 2
        kelvin = self.background_kelvin + (self.peak_kelvin - self.background_kelvin) * np.exp(
            -0.5 * arg
        )
        return kelvin, np.ones_like(kelvin)

    @property
    def reference_kelvin(self) -> float:
        return self.peak_kelvin


@dataclass(frozen=True)
class EllipseFootprint:
    """Uniform-temperature elliptical footprint with a coverage-soft edge.

    The edge ramp models partial pixel fill: it scales both channels'
    intensities identically and therefore leaves the intensity ratio exact
    everywhere, which is what uniform-temperature oracle tests need.
    """

    kelvin: float
    center: tuple[float, float] | None = None
    ax_px: float = 4.5
    ay_px: float = 3.0
    tilt_rad: float = 0.0
    edge_px: float = 0.6

    def evaluate(self, x: np.ndarray, y: np.ndarray, shape: tuple[int, int]):
        cx, cy = _center(self.center, shape)
        dx = x - cx
        dy = y - cy
        ca, sa = math.cos(self.tilt_rad), math.sin(self.tilt_rad)
        xr = dx * ca + dy * sa
        yr = -dx * sa + dy * ca
        r = np.sqrt((xr / self.ax_px) ** 2 + (yr / self.ay_px) ** 2)
        edge = self.edge_px / ((self.ax_px + self.ay_px) / 2.0)
        coverage = np.clip((1.0 - r) / (2.0 * edge) + 0.5, 0.0, 1.0)
        kelvin = np.where(coverage > 0.0, self.kelvin, 0.0)
        return kelvin, coverage

    @property
    def reference_kelvin(self) -> float:
        return self.kelvin


@dataclass(frozen=True)
class FieldFootprint:
    """Explicit kelvin grid over the sub-image, sampled bilinearly."""

    kelvin: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.kelvin, dtype=np.float64)
        object.__setattr__(self, "kelvin", arr)
        if arr.ndim != 2:
            raise ValueError("temperature field must be 2-D")
        if np.any(arr < 0):
            raise ValueError("temperatures must be >= 0")

    def evaluate(self, x: np.ndarray, y: np.ndarray, shape: tuple[int, int]):
        kelvin = ndimage.map_coordinates(
            self.kelvin, [y, x], order=1, mode="constant", cval=0.0
        )
        return kelvin, np.ones_like(kelvin)

    @property
    def reference_kelvin(self) -> float:
        return float(self.kelvin.max())


def _center(center: tuple[float, float] | None, shape: tuple[int, int]):
    if center is not None:
        return float(center[0]), float(center[1])
    h, w = shape
    return (w - 1) / 2.0, (h - 1) / 2.0


Footprint = GaussianFootprint | EllipseFootprint | FieldFootprint


@dataclass(frozen=True)
class SyntheticScene:
    """Radiometric description of one steady scene.

    exposure_scale converts spectral radiance to native sensor counts;
    noise_sigma is additive Gaussian noise in native counts applied before
    quantization; applied_transform is the cross-channel misalignment
    injected into the 550 nm placement.
    """

    footprint: Footprint
    eps1: float = 1.0
    eps2: float = 1.0
    a1: float = 1.601
    a2: float = 1.0
    exposure_scale: float = 1.0
    noise_sigma: float = 0.0
    applied_transform: SimilarityTransform = field(default_factory=SimilarityTransform)
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.eps1, self.eps2) <= 0 or min(self.a1, self.a2) <= 0:
            raise ValueError("emissivities and transmissions must be positive")
        if self.exposure_scale <= 0:
            raise ValueError("exposure scale must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")

    @property
    def a12(self) -> float:
        return self.a1 / self.a2


def _wien_counts(
    kelvin: np.ndarray,
    lam: float,
    emissivity: float,
    transmission: float,
    exposure_scale: float,
    constants: PhysicalConstants,
    planck: bool,
) -> np.ndarray:
    """Noiseless native counts for a kelvin grid (0 K cells emit nothing)."""
    out = np.zeros_like(kelvin, dtype=np.float64)
    hot = kelvin > 0.0
    if not np.any(hot):
        return out
    prefactor = (
        exposure_scale * 2.0 * constants.h * constants.c**2 * emissivity * transmission / lam**5
    )
    a = constants.hc_over_kb / (lam * kelvin[hot])
    with np.errstate(over="ignore"):
        if planck:
            out[hot] = prefactor / np.expm1(a)
        else:
            out[hot] = prefactor * np.exp(-a)
    return out


def render_channel_counts(
    scene: SyntheticScene,
    optics: OpticsConfig,
    channel: str,
    shape: tuple[int, int],
    planck: bool = False,
) -> np.ndarray:
    """Noiseless, unquantized native counts for one channel sub-image.

    channel "wl550" gets (lambda1, eps1, a1) and the injected transform;
    "wl620" gets (lambda2, eps2, a2) on the reference grid.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    if channel == "wl550":
        xc = xx - (w - 1) / 2.0
        yc = yy - (h - 1) / 2.0
        tx, ty = scene.applied_transform.apply(xc, yc)
        px = tx + (w - 1) / 2.0
        py = ty + (h - 1) / 2.0
        kelvin, coverage = scene.footprint.evaluate(px, py, shape)
        lam, eps, trans = optics.lambda1, scene.eps1, scene.a1
    elif channel == "wl620":
        kelvin, coverage = scene.footprint.evaluate(xx, yy, shape)
        lam, eps, trans = optics.lambda2, scene.eps2, scene.a2
    else:
        raise ValueError(f"unknown channel {channel!r}")
    counts = _wien_counts(
        kelvin, lam, eps, trans, scene.exposure_scale, optics.constants, planck
    )
    return counts * coverage


def exposure_for_peak_counts(
    footprint: Footprint,
    target_native_counts: float,
    optics: OpticsConfig = OpticsConfig(constants=CODATA),
    eps1: float = 1.0,
    a1: float = 1.601,
    eps2: float = 1.0,
    a2: float = 1.0,
) -> float:
    """Exposure scale placing the brighter channel's footprint peak at the
    target counts (how a camera exposure is actually chosen: below 2763 K the
    620 nm channel is the brighter one and would otherwise saturate first)."""
    if target_native_counts <= 0:
        raise ValueError("target counts must be positive")
    kelvin = np.array([footprint.reference_kelvin])
    unit1 = _wien_counts(kelvin, optics.lambda1, eps1, a1, 1.0, optics.constants, False)
    unit2 = _wien_counts(kelvin, optics.lambda2, eps2, a2, 1.0, optics.constants, False)
    brightest = max(float(unit1[0]), float(unit2[0]))
    if brightest <= 0:
        raise ValueError("footprint has no emission to scale")
    return float(target_native_counts / brightest)


def render_pair(
    scene: SyntheticScene,
    optics: OpticsConfig = OpticsConfig(),
    frame_index: int = 0,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    split_column: int | None = None,
    fps: float = DEFAULT_FPS,
    planck: bool = False,
) -> Frame:
    """Render one dual melt-pool frame: 620 nm left, 550 nm right.

    Deterministic for a fixed (scene, frame_index): the noise stream is keyed
    on (scene.seed, frame_index). Values exceeding the 12-bit ceiling are
    clipped and flagged on the frame.
    """
    if split_column is None:
        split_column = width // 2
    if not 0 < split_column < width:
        raise ValueError(f"split column {split_column} outside (0, {width})")
    left_shape = (height, split_column)
    right_shape = (height, width - split_column)
    counts = np.zeros((height, width), dtype=np.float64)
    counts[:, :split_column] = render_channel_counts(scene, optics, "wl620", left_shape, planck)
    counts[:, split_column:] = render_channel_counts(scene, optics, "wl550", right_shape, planck)
    if scene.noise_sigma > 0:
        rng = np.random.default_rng([scene.seed & 0xFFFFFFFF, frame_index])
        counts = counts + rng.normal(0.0, scene.noise_sigma, counts.shape)
    quantized = np.rint(counts)
    saturated = bool(quantized.max(initial=0.0) > NATIVE_MAX)
    native = np.clip(quantized, 0, NATIVE_MAX).astype(np.uint16)
    return Frame(
        index=frame_index,
        timestamp_ms=frame_index * 1000.0 / fps,
        pixels=native << np.uint16(4),
        saturated=saturated,
    )


def footprint_mask(
    scene: SyntheticScene,
    optics: OpticsConfig,
    shape: tuple[int, int],
    channel: str = "wl620",
    floor_native: float = 100.0,
) -> np.ndarray:
    """Ground-truth footprint: pixels the renderer drives above the floor."""
    counts = render_channel_counts(scene, optics, channel, shape)
    return counts >= floor_native


@dataclass(frozen=True)
class SyntheticLayerScript:
    """Timed sequence of scenes (None = laser off) at a fixed frame geometry."""

    segments: tuple[tuple[float, SyntheticScene | None], ...]
    fps: int = DEFAULT_FPS
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    split_column: int | None = None
    pixel_pitch_um: float = DEFAULT_PIXEL_PITCH_UM
    off_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for duration_ms, _ in self.segments:
            if duration_ms <= 0:
                raise ValueError("segment durations must be positive")

    def frame_counts(self) -> list[int]:
        return [int(round(d * self.fps / 1000.0)) for d, _ in self.segments]

    @property
    def total_frames(self) -> int:
        return sum(self.frame_counts())


def _iter_script_frames(
    script: SyntheticLayerScript, optics: OpticsConfig
) -> Iterator[Frame]:
    index = 0
    for (duration_ms, scene), n_frames in zip(script.segments, script.frame_counts()):
        for _ in range(n_frames):
            if scene is None:
                if script.off_noise_sigma > 0:
                    rng = np.random.default_rng([script.seed & 0xFFFFFFFF, index])
                    counts = np.clip(
                        np.rint(
                            rng.normal(
                                0.0, script.off_noise_sigma, (script.height, script.width)
                            )
                        ),
                        0,
                        NATIVE_MAX,
                    ).astype(np.uint16)
                else:
                    counts = np.zeros((script.height, script.width), dtype=np.uint16)
                yield Frame(
                    index=index,
                    timestamp_ms=index * 1000.0 / script.fps,
                    pixels=counts << np.uint16(4),
                )
            else:
                frame = render_pair(
                    scene,
                    optics,
                    frame_index=index,
                    width=script.width,
                    height=script.height,
                    split_column=script.split_column,
                    fps=script.fps,
                )
                yield replace(frame, index=index, timestamp_ms=index * 1000.0 / script.fps)
            index += 1


def render_stream(
    script: SyntheticLayerScript,
    sink: BinaryIO,
    optics: OpticsConfig = OpticsConfig(),
) -> StreamHeader:
    """Render the script into an MPV1 stream (16-bit payload, ready counts)."""
    header = StreamHeader(
        width=script.width,
        height=script.height,
        fps=script.fps,
        bit_depth=16,
        frame_count=script.total_frames,
        pixel_pitch_um=script.pixel_pitch_um,
    )
    encode_stream(header, _iter_script_frames(script, optics), sink)
    return header


def write_stream_file(
    script: SyntheticLayerScript,
    path: str | Path,
    optics: OpticsConfig = OpticsConfig(),
) -> StreamHeader:
    with open(path, "wb") as fh:
        return render_stream(script, fh, optics)


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise SceneSchemaError(f"{path}.{key}", "missing required field")
    return doc[key]


def _number(doc: dict, key: str, path: str, default=None):
    if key not in doc:
        if default is not None:
            return default
        raise SceneSchemaError(f"{path}.{key}", "missing required field")
    value = doc[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SceneSchemaError(f"{path}.{key}", f"expected a number, got {value!r}")
    return float(value)


def _footprint_from_dict(doc: dict, path: str) -> Footprint:
    kind = _require(doc, "kind", path)
    center = doc.get("center")
    if center is not None:
        if not (isinstance(center, (list, tuple)) and len(center) == 2):
            raise SceneSchemaError(f"{path}.center", "expected [x, y]")
        center = (float(center[0]), float(center[1]))
    if kind == "gaussian":
        return GaussianFootprint(
            peak_kelvin=_number(doc, "peak_kelvin", path),
            center=center,
            sigma_x_px=_number(doc, "sigma_x_px", path, 3.0),
            sigma_y_px=_number(doc, "sigma_y_px", path, 2.0),
            background_kelvin=_number(doc, "background_kelvin", path, 0.0),
        )
    if kind == "ellipse":
        return EllipseFootprint(
            kelvin=_number(doc, "kelvin", path),
            center=center,
            ax_px=_number(doc, "ax_px", path, 4.5),
            ay_px=_number(doc, "ay_px", path, 3.0),
            tilt_rad=_number(doc, "tilt_rad", path, 0.0),
            edge_px=_number(doc, "edge_px", path, 0.6),
        )
    if kind == "field":
        grid = _require(doc, "kelvin", path)
        try:
            return FieldFootprint(kelvin=np.asarray(grid, dtype=np.float64))
        except (ValueError, TypeError) as exc:
            raise SceneSchemaError(f"{path}.kelvin", str(exc)) from exc
    raise SceneSchemaError(f"{path}.kind", f"unknown footprint kind {kind!r}")


def scene_from_dict(
    doc: dict, path: str = "scene", optics: OpticsConfig = OpticsConfig()
) -> SyntheticScene:
    """Build a scene from its JSON document.

    Either `exposure_scale` or `peak_counts` (native counts at the footprint's
    reference temperature) must be given.
    """
    if not isinstance(doc, dict):
        raise SceneSchemaError(path, "expected an object")
    footprint = _footprint_from_dict(_require(doc, "footprint", path), f"{path}.footprint")
    emissivity = doc.get("emissivity", [1.0, 1.0])
    transmission = doc.get("transmission", [1.601, 1.0])
    for name, pair in (("emissivity", emissivity), ("transmission", transmission)):
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            raise SceneSchemaError(f"{path}.{name}", "expected [channel1, channel2]")
    transform_doc = doc.get("transform")
    transform = SimilarityTransform()
    if transform_doc is not None:
        if not isinstance(transform_doc, dict):
            raise SceneSchemaError(f"{path}.transform", "expected an object")
        translation = transform_doc.get("translation", [0.0, 0.0])
        if not (isinstance(translation, (list, tuple)) and len(translation) == 2):
            raise SceneSchemaError(f"{path}.transform.translation", "expected [dx, dy]")
        transform = SimilarityTransform(
            scale=_number(transform_doc, "scale", f"{path}.transform", 1.0),
            rotation=math.radians(
                _number(transform_doc, "rotation_deg", f"{path}.transform", 0.0)
            ),
            translation=(float(translation[0]), float(translation[1])),
        )
    if "exposure_scale" in doc:
        exposure = _number(doc, "exposure_scale", path)
    elif "peak_counts" in doc:
        exposure = exposure_for_peak_counts(
            footprint,
            _number(doc, "peak_counts", path),
            optics,
            eps1=float(emissivity[0]),
            a1=float(transmission[0]),
            eps2=float(emissivity[1]),
            a2=float(transmission[1]),
        )
    else:
        raise SceneSchemaError(f"{path}.exposure_scale", "need exposure_scale or peak_counts")
    try:
        return SyntheticScene(
            footprint=footprint,
            eps1=float(emissivity[0]),
            eps2=float(emissivity[1]),
            a1=float(transmission[0]),
            a2=float(transmission[1]),
            exposure_scale=exposure,
            noise_sigma=_number(doc, "noise_sigma", path, 0.0),
            applied_transform=transform,
            seed=int(doc.get("seed", 0)),
        )
    except ValueError as exc:
        raise SceneSchemaError(path, str(exc)) from exc


def script_from_dict(doc: dict, optics: OpticsConfig = OpticsConfig()) -> SyntheticLayerScript:
    if not isinstance(doc, dict):
        raise SceneSchemaError("script", "expected an object")
    segments_doc = _require(doc, "segments", "script")
    if not isinstance(segments_doc, list) or not segments_doc:
        raise SceneSchemaError("script.segments", "expected a non-empty array")
    segments: list[tuple[float, SyntheticScene | None]] = []
    for i, seg in enumerate(segments_doc):
        seg_path = f"script.segments[{i}]"
        if not isinstance(seg, dict):
            raise SceneSchemaError(seg_path, "expected an object")
        duration = _number(seg, "duration_ms", seg_path)
        scene_doc = seg.get("scene")
        scene = None if scene_doc is None else scene_from_dict(scene_doc, f"{seg_path}.scene", optics)
        segments.append((duration, scene))
    try:
        return SyntheticLayerScript(
            segments=tuple(segments),
            fps=int(_number(doc, "fps", "script", float(DEFAULT_FPS))),
            width=int(_number(doc, "width", "script", float(DEFAULT_WIDTH))),
            height=int(_number(doc, "height", "script", float(DEFAULT_HEIGHT))),
            split_column=(
                int(doc["split_column"]) if doc.get("split_column") is not None else None
            ),
            pixel_pitch_um=_number(doc, "pixel_pitch_um", "script", DEFAULT_PIXEL_PITCH_UM),
            off_noise_sigma=_number(doc, "off_noise_sigma", "script", 0.0),
            seed=int(doc.get("seed", 0)),
        )
    except ValueError as exc:
        raise SceneSchemaError("script", str(exc)) from exc
