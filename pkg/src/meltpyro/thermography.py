"""Ratio maps, temperature maps, per-frame melt-pool observations, and
layer-level analytics (bar boundaries, time windows, ratio histograms).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .frame_io import DEFAULT_PIXEL_PITCH_UM, Frame, SubImage, split_frame, write_pgm
from .radiometry import (
    KELVIN_OFFSET,
    OpticsConfig,
    ratio_log_offset,
    wavelength_numerator,
)
from .registration import RegistrationParams, RegistrationResult, register
from .segmentation import Morphology, SegmentationParams, morphology, segment
from .uncertainty import intensity_ratio_uncertainty, temperature_uncertainty

__all__ = [
    "PixelStatus",
    "ObservationStatus",
    "ThermoLimits",
    "PipelineParams",
    "RatioMap",
    "TemperatureMap",
    "MeltPoolObservation",
    "BarSegment",
    "HistogramResult",
    "ratio_map",
    "temperature_map",
    "observe_frame",
    "segment_bars",
    "extract_window",
    "i12_histogram",
    "moving_average",
    "summarize_layer",
    "OBSERVATION_CSV_HEADER",
    "write_observations_csv",
    "observation_csv_row",
    "write_temperature_map",
]

# effective quantization step on the 16-bit grid: one native 12-bit count
UPSCALED_QUANTIZATION_STEP = 16.0


class PixelStatus(IntEnum):
    BACKGROUND = 0
    VALID = 1
    BELOW_FLOOR = 2
    ABOVE_RANGE = 3
    SUSPECT = 4


class ObservationStatus(Enum):
    OK = "ok"
    LASER_OFF = "laser_off"
    BELOW_FLOOR = "below_floor"
    ABOVE_RANGE = "above_range"
    SUSPECT = "suspect"
    ERROR = "error"


@dataclass(frozen=True)
class ThermoLimits:
    """Detectability floor of the monitored machine and the plausibility
    ceiling above which temperatures are treated as registration artifacts."""

    floor_kelvin: float = 1300.0
    ceiling_kelvin: float = 6000.0

    def __post_init__(self) -> None:
        if not 0 < self.floor_kelvin < self.ceiling_kelvin:
            raise ValueError("need 0 < floor < ceiling")


@dataclass(frozen=True)
class PipelineParams:
    """Everything observe_frame needs besides the optics."""

    split_column: int | None = None
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    registration: RegistrationParams = field(default_factory=RegistrationParams)
    limits: ThermoLimits = field(default_factory=ThermoLimits)
    average_mode: str = "ratio_of_means"
    quantization_step_native: float = 1.0
    compute_maps: bool = False
    map_uncertainty: bool = False

    def __post_init__(self) -> None:
        if self.average_mode not in ("ratio_of_means", "mean_of_ratios"):
            raise ValueError(f"unknown average mode {self.average_mode!r}")
        if self.quantization_step_native < 0:
            raise ValueError("quantization step must be >= 0")


@dataclass(frozen=True)
class RatioMap:
    """Per-pixel intensity ratio I550/I620 where both channels are above the
    validity floor; values are meaningful only under valid_mask."""

    values: np.ndarray
    valid_mask: np.ndarray


@dataclass(frozen=True)
class TemperatureMap:
    """Per-pixel kelvin with a status partition.

    kelvin is NaN where no temperature exists (background and above-range
    pixels); below-floor and suspect pixels keep their computed value, the
    status records the classification.
    """

    kelvin: np.ndarray
    status: np.ndarray  # PixelStatus values, uint8
    uncertainty: np.ndarray | None = None


@dataclass(frozen=True)
class MeltPoolObservation:
    frame_index: int
    timestamp_ms: float
    status: ObservationStatus
    mean_i550: float | None = None
    mean_i620: float | None = None
    i12: float | None = None
    t_kelvin: float | None = None
    u_t_kelvin: float | None = None
    morphology: Morphology | None = None
    reg_scale: float | None = None
    reg_rotation_deg: float | None = None
    reg_dx: float | None = None
    reg_dy: float | None = None
    reg_ssim: float | None = None
    reg_accepted: bool | None = None
    saturated: bool = False
    temperature_map: TemperatureMap | None = None

    @property
    def t_celsius(self) -> float | None:
        return None if self.t_kelvin is None else self.t_kelvin - KELVIN_OFFSET

    @property
    def melt_pool_present(self) -> bool:
        return self.status not in (ObservationStatus.LASER_OFF, ObservationStatus.ERROR)


@dataclass(frozen=True)
class BarSegment:
    index: int
    start_frame: int
    end_frame: int
    start_ms: float
    end_ms: float
    observation_count: int


@dataclass(frozen=True)
class HistogramResult:
    bin_edges: np.ndarray
    values: np.ndarray  # normalized by total count, including overflow mass
    underflow: float
    overflow: float
    total_count: int


def ratio_map(warped550: SubImage, ref620: SubImage, floor: float) -> RatioMap:
    """Pixel-wise quotient of the aligned 550 image by the 620 reference.

    Pixels where either channel is below the floor are invalid (value 0).
    """
    num = np.asarray(warped550.pixels, dtype=np.float64)
    den = np.asarray(ref620.pixels, dtype=np.float64)
    if num.shape != den.shape:
        raise ValueError(f"sub-image dimensions differ: {num.shape} vs {den.shape}")
    valid = (num >= floor) & (den >= floor)
    values = np.zeros_like(num)
    np.divide(num, den, out=values, where=valid)
    return RatioMap(values=values, valid_mask=valid)


def temperature_map(
    rm: RatioMap,
    cfg: OpticsConfig,
    limits: ThermoLimits = ThermoLimits(),
    u_i12: float | np.ndarray | None = None,
) -> TemperatureMap:
    """Invert a ratio map to kelvin with per-pixel status classification.

    Ratios at/above the singular value become ABOVE_RANGE (no temperature);
    temperatures under the detectability floor keep their value flagged
    BELOW_FLOOR; above the ceiling they are SUSPECT (bad-registration
    artifacts). Passing u_i12 (scalar or per-pixel) adds a root-sum-square
    uncertainty grid using the config's transmission-ratio uncertainty.
    """
    values = rm.values
    status = np.full(values.shape, PixelStatus.BACKGROUND, dtype=np.uint8)
    kelvin = np.full(values.shape, np.nan)
    valid = rm.valid_mask & (values > 0)
    numerator = wavelength_numerator(cfg)
    offset = ratio_log_offset(cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = np.where(valid, np.log(values, where=valid, out=np.zeros_like(values)) - offset, 1.0)
    above = valid & (denom >= 0)
    invertible = valid & (denom < 0)
    kelvin[invertible] = numerator / denom[invertible]
    status[above] = PixelStatus.ABOVE_RANGE
    status[invertible] = PixelStatus.VALID
    below = invertible & (kelvin < limits.floor_kelvin)
    suspect = invertible & (kelvin > limits.ceiling_kelvin)
    status[below] = PixelStatus.BELOW_FLOOR
    status[suspect] = PixelStatus.SUSPECT
    uncertainty = None
    if u_i12 is not None:
        uncertainty = np.full(values.shape, np.nan)
        d2 = denom[invertible] ** 2
        theta_a = np.abs(numerator) / (cfg.a12 * d2)
        theta_i = np.abs(numerator) / (values[invertible] * d2)
        u_grid = np.broadcast_to(np.asarray(u_i12, dtype=np.float64), values.shape)
        uncertainty[invertible] = np.hypot(
            theta_a * cfg.u_a12, theta_i * u_grid[invertible]
        )
    return TemperatureMap(kelvin=kelvin, status=status, uncertainty=uncertainty)


def _classify_average(t_kelvin: float, limits: ThermoLimits) -> ObservationStatus:
    if t_kelvin < limits.floor_kelvin:
        return ObservationStatus.BELOW_FLOOR
    if t_kelvin > limits.ceiling_kelvin:
        return ObservationStatus.SUSPECT
    return ObservationStatus.OK


def observe_frame(
    frame: Frame,
    cfg: OpticsConfig,
    params: PipelineParams = PipelineParams(),
    pixel_pitch_um: float = DEFAULT_PIXEL_PITCH_UM,
) -> MeltPoolObservation:
    """Reduce one frame to a melt-pool observation.

    Fast path (default): split, segment each channel, average each pool,
    divide the averages, invert to temperature. Registration and the
    pixel-wise temperature map run only with compute_maps on; average
    temperature does not depend on them.
    """
    sub620, sub550 = split_frame(frame, params.split_column)
    region620 = segment(sub620, params.segmentation)
    region550 = segment(sub550, params.segmentation)
    if region620 is None or region550 is None:
        return MeltPoolObservation(
            frame_index=frame.index,
            timestamp_ms=frame.timestamp_ms,
            status=ObservationStatus.LASER_OFF,
            saturated=frame.saturated,
        )
    # both channels image the same pool, so both are averaged over the union
    # of the two masks: per-channel masks truncate edge pixels asymmetrically
    # (the dimmer channel thresholds relatively higher), which biases the
    # ratio toward 1 at the temperature extremes
    pool_mask = region550.mask | region620.mask
    p550 = np.asarray(sub550.pixels, dtype=np.float64)
    p620 = np.asarray(sub620.pixels, dtype=np.float64)
    m550 = float(p550[pool_mask].mean())
    m620 = float(p620[pool_mask].mean())
    if params.average_mode == "ratio_of_means":
        i12 = m550 / m620
    else:
        i12 = float(np.mean(p550[pool_mask] / np.maximum(p620[pool_mask], 1.0)))
    shape = morphology(region620, pixel_pitch_um)

    reg: RegistrationResult | None = None
    tmap = None
    if params.compute_maps:
        reg = register(sub550, sub620, params.registration)
        if reg.accepted and reg.warped is not None:
            rm = ratio_map(reg.warped, sub620, params.segmentation.absolute_floor)
            u_grid = None
            if params.map_uncertainty:
                step = params.quantization_step_native * UPSCALED_QUANTIZATION_STEP
                num = np.asarray(reg.warped.pixels, dtype=np.float64)
                den = np.asarray(sub620.pixels, dtype=np.float64)
                with np.errstate(divide="ignore", invalid="ignore"):
                    u_grid = np.where(
                        rm.valid_mask,
                        np.hypot(step / 2.0 / den, num * step / 2.0 / den**2),
                        0.0,
                    )
            tmap = temperature_map(rm, cfg, params.limits, u_i12=u_grid)

    base = dict(
        frame_index=frame.index,
        timestamp_ms=frame.timestamp_ms,
        mean_i550=m550,
        mean_i620=m620,
        i12=i12,
        morphology=shape,
        saturated=frame.saturated,
        temperature_map=tmap,
    )
    if reg is not None:
        base.update(
            reg_ssim=reg.ssim,
            reg_accepted=reg.accepted,
        )
        if reg.transform is not None:
            base.update(
                reg_scale=reg.transform.scale,
                reg_rotation_deg=reg.transform.rotation_deg,
                reg_dx=reg.transform.translation[0],
                reg_dy=reg.transform.translation[1],
            )

    offset = ratio_log_offset(cfg)
    if i12 <= 0 or math.log(i12) >= offset:
        return MeltPoolObservation(status=ObservationStatus.ABOVE_RANGE, **base)
    t_kelvin = wavelength_numerator(cfg) / (math.log(i12) - offset)
    step = params.quantization_step_native * UPSCALED_QUANTIZATION_STEP
    u_i12 = intensity_ratio_uncertainty(m550, m620, step) if step > 0 else 0.0
    u_t = temperature_uncertainty(i12, cfg.u_a12, u_i12, cfg).u_t_total
    return MeltPoolObservation(
        status=_classify_average(t_kelvin, params.limits),
        t_kelvin=t_kelvin,
        u_t_kelvin=u_t,
        **base,
    )


def segment_bars(
    observations: Sequence[MeltPoolObservation], gap_min_ms: float = 100.0
) -> list[BarSegment]:
    """Split a time-ordered observation series into per-part segments.

    Laser-off runs of at least gap_min_ms separate bars; shorter dropouts
    (hatch turnarounds, specks) stay inside the surrounding bar.
    """
    if gap_min_ms <= 0:
        raise ValueError("gap_min_ms must be positive")
    runs: list[list[MeltPoolObservation]] = []
    current: list[MeltPoolObservation] = []
    for obs in observations:
        if obs.melt_pool_present:
            current.append(obs)
        elif current:
            runs.append(current)
            current = []
    if current:
        runs.append(current)
    if not runs:
        return []
    merged: list[list[MeltPoolObservation]] = [runs[0]]
    for run in runs[1:]:
        gap = run[0].timestamp_ms - merged[-1][-1].timestamp_ms
        if gap < gap_min_ms:
            merged[-1].extend(run)
        else:
            merged.append(run)
    bars = []
    for i, run in enumerate(merged):
        bars.append(
            BarSegment(
                index=i,
                start_frame=run[0].frame_index,
                end_frame=run[-1].frame_index,
                start_ms=run[0].timestamp_ms,
                end_ms=run[-1].timestamp_ms,
                observation_count=len(run),
            )
        )
    return bars


def extract_window(
    observations: Iterable[MeltPoolObservation], start_ms: float, end_ms: float
) -> list[MeltPoolObservation]:
    """Observations with timestamp in [start_ms, end_ms)."""
    if start_ms >= end_ms:
        raise ValueError(f"need start < end, got [{start_ms}, {end_ms})")
    return [o for o in observations if start_ms <= o.timestamp_ms < end_ms]


def i12_histogram(
    observations: Sequence[MeltPoolObservation], bin_edges: Sequence[float]
) -> HistogramResult:
    """Normalized histogram of per-frame average intensity ratios.

    Bin values are counts divided by the total observation count with a
    ratio, so bins plus underflow/overflow mass sum to one.
    """
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or not np.all(np.diff(edges) > 0):
        raise ValueError("bin edges must be a strictly increasing 1-D sequence")
    ratios = np.array([o.i12 for o in observations if o.i12 is not None])
    if ratios.size == 0:
        raise ValueError("no observations with an intensity ratio")
    counts, _ = np.histogram(ratios, bins=edges)
    underflow = int((ratios < edges[0]).sum())
    overflow = int((ratios > edges[-1]).sum())
    # np.histogram puts values == edges[-1] into the last bin already
    total = ratios.size
    return HistogramResult(
        bin_edges=edges,
        values=counts / total,
        underflow=underflow / total,
        overflow=overflow / total,
        total_count=total,
    )


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Centered moving mean with edge truncation (shorter windows at the
    borders instead of padding)."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return arr.copy()
    half = window // 2
    csum = np.concatenate([[0.0], np.cumsum(arr)])
    idx = np.arange(arr.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, arr.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def summarize_layer(
    observations: Sequence[MeltPoolObservation],
    bars: Sequence[BarSegment] | None = None,
    gap_min_ms: float = 100.0,
) -> dict:
    """Per-bar temperature statistics for the layer summary JSON."""
    if bars is None:
        bars = segment_bars(observations, gap_min_ms)
    bar_docs = []
    for bar in bars:
        temps = [
            o.t_kelvin
            for o in observations
            if bar.start_frame <= o.frame_index <= bar.end_frame
            and o.t_kelvin is not None
            and o.status == ObservationStatus.OK
        ]
        bar_docs.append(
            {
                "bar": bar.index,
                "start_frame": bar.start_frame,
                "end_frame": bar.end_frame,
                "start_ms": bar.start_ms,
                "end_ms": bar.end_ms,
                "observations": bar.observation_count,
                "valid_temperatures": len(temps),
                "mean_t_kelvin": float(np.mean(temps)) if temps else None,
                "min_t_kelvin": float(np.min(temps)) if temps else None,
                "max_t_kelvin": float(np.max(temps)) if temps else None,
            }
        )
    n_active = sum(1 for o in observations if o.melt_pool_present)
    return {
        "observations": len(observations),
        "melt_pool_observations": n_active,
        "bars": bar_docs,
    }


OBSERVATION_CSV_HEADER = [
    "frame_idx",
    "t_ms",
    "mean_i550",
    "mean_i620",
    "i12",
    "T_K",
    "T_C",
    "U_T_K",
    "width_um",
    "length_um",
    "area_um2",
    "ssim",
    "reg_accepted",
    "status",
]

REGISTRATION_CSV_HEADER = [
    "frame_idx",
    "scale",
    "rotation_deg",
    "dx",
    "dy",
    "ssim",
    "accepted",
]


def registration_csv_row(obs: MeltPoolObservation) -> list[str] | None:
    """Per-frame registration diagnostics row; None when registration did
    not run for this frame."""
    if obs.reg_ssim is None and obs.reg_accepted is None:
        return None
    return [
        str(obs.frame_index),
        _fmt(obs.reg_scale),
        _fmt(obs.reg_rotation_deg),
        _fmt(obs.reg_dx),
        _fmt(obs.reg_dy),
        _fmt(obs.reg_ssim),
        "" if obs.reg_accepted is None else ("true" if obs.reg_accepted else "false"),
    ]


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.9g}"


def observation_csv_row(obs: MeltPoolObservation) -> list[str]:
    shape = obs.morphology
    return [
        str(obs.frame_index),
        _fmt(obs.timestamp_ms),
        _fmt(obs.mean_i550),
        _fmt(obs.mean_i620),
        _fmt(obs.i12),
        _fmt(obs.t_kelvin),
        _fmt(obs.t_celsius),
        _fmt(obs.u_t_kelvin),
        _fmt(shape.width_um if shape else None),
        _fmt(shape.length_um if shape else None),
        _fmt(shape.area_um2 if shape else None),
        _fmt(obs.reg_ssim),
        "" if obs.reg_accepted is None else ("true" if obs.reg_accepted else "false"),
        obs.status.value,
    ]


def write_observations_csv(
    sink: TextIO, observations: Iterable[MeltPoolObservation]
) -> int:
    """Stream observations to CSV in input order; returns rows written."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(OBSERVATION_CSV_HEADER)
    count = 0
    for obs in observations:
        writer.writerow(observation_csv_row(obs))
        count += 1
    return count


def write_temperature_map(
    directory: str | Path,
    frame_index: int,
    tmap: TemperatureMap,
    kelvin_scale: float = 10.0,
) -> tuple[Path, Path]:
    """Export one temperature map as 16-bit PGM plus a raw sidecar CSV.

    PGM samples are kelvin * kelvin_scale (clipped to 16 bits) with
    status-invalid pixels at 0; the sidecar holds exact kelvin floats and
    status codes per pixel.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pgm_path = directory / f"map_{frame_index:08d}.pgm"
    csv_path = directory / f"map_{frame_index:08d}.csv"
    scaled = np.zeros(tmap.kelvin.shape, dtype=np.uint16)
    drawable = (tmap.status == PixelStatus.VALID) & np.isfinite(tmap.kelvin)
    scaled[drawable] = np.clip(
        np.rint(tmap.kelvin[drawable] * kelvin_scale), 0, 65535
    ).astype(np.uint16)
    write_pgm(pgm_path, scaled)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "kelvin", "status"])
        h, w = tmap.kelvin.shape
        for y in range(h):
            for x in range(w):
                k = tmap.kelvin[y, x]
                writer.writerow(
                    [x, y, "" if not np.isfinite(k) else f"{k:.9g}", int(tmap.status[y, x])]
                )
    return pgm_path, csv_path
