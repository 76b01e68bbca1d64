"""Melt-pool extraction from a single-channel sub-image: adaptive threshold
segmentation, peak-anchored boundary growing, mean intensity, and morphology
in physical units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .frame_io import SubImage

__all__ = [
    "SegmentationParams",
    "MeltPoolRegion",
    "Morphology",
    "segment",
    "grow_boundary",
    "mean_intensity",
    "morphology",
]

# post-upscale counts; 100 native counts on the 12-bit sensor
DEFAULT_ABSOLUTE_FLOOR = 1600.0

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class SegmentationParams:
    """k_sigma sets the adaptive threshold mean + k*std of the sub-image;
    absolute_floor (post-upscale counts) is the no-melt-pool cutoff."""

    k_sigma: float = 3.0
    absolute_floor: float = DEFAULT_ABSOLUTE_FLOOR

    def __post_init__(self) -> None:
        if self.k_sigma < 0:
            raise ValueError(f"k_sigma must be >= 0, got {self.k_sigma}")
        if self.absolute_floor < 0:
            raise ValueError(f"absolute_floor must be >= 0, got {self.absolute_floor}")


@dataclass(frozen=True)
class MeltPoolRegion:
    """Segmented melt-pool pixels of one sub-image.

    mask is a boolean grid over the sub-image; peak is the (x, y) position of
    the maximum intensity; bbox is inclusive (x_min, y_min, x_max, y_max).
    """

    mask: np.ndarray
    peak: tuple[int, int]
    mean_intensity: float
    max_intensity: float
    bbox: tuple[int, int, int, int]

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class Morphology:
    width_um: float
    length_um: float
    area_um2: float


def _region_from_mask(mask: np.ndarray, pixels: np.ndarray, peak_yx: tuple[int, int]) -> MeltPoolRegion:
    ys, xs = np.nonzero(mask)
    values = pixels[ys, xs]
    return MeltPoolRegion(
        mask=mask,
        peak=(int(peak_yx[1]), int(peak_yx[0])),
        mean_intensity=float(values.mean()),
        max_intensity=float(values.max()),
        bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
    )


def segment(
    img: SubImage, params: SegmentationParams = SegmentationParams()
) -> MeltPoolRegion | None:
    """Extract the melt-pool component of a sub-image, or None when dark.

    Threshold at mean + k*std of the whole sub-image, 8-connected components
    of the super-threshold pixels, keep the component containing the global
    maximum. Returns None when the maximum is below the absolute floor
    (laser off / no melt pool): absence is a value, not an error.
    """
    pixels = np.asarray(img.pixels, dtype=np.float64)
    peak_flat = int(pixels.argmax())
    peak_yx = np.unravel_index(peak_flat, pixels.shape)
    peak_value = pixels[peak_yx]
    if peak_value < params.absolute_floor:
        return None
    threshold = pixels.mean() + params.k_sigma * pixels.std()
    above = pixels >= threshold
    if not above[peak_yx]:  # flat image edge case: keep at least the peak
        above[peak_yx] = True
    labels, _ = ndimage.label(above, structure=_EIGHT_CONNECTED)
    mask = labels == labels[peak_yx]
    return _region_from_mask(mask, pixels, peak_yx)


def _scan_offset(profile: np.ndarray, floor: float) -> int:
    """Steps along a 1-D outward profile (profile[0] is the peak) until the
    value drops to the floor or starts rising again (two consecutive strict
    increases, so single-pixel noise does not stop the scan)."""
    rises = 0
    for i in range(1, profile.size):
        value = profile[i]
        if value <= floor:
            return i
        if value > profile[i - 1]:
            rises += 1
            if rises >= 2:
                return i - 2
        else:
            rises = 0
    return profile.size - 1


def grow_boundary(img: SubImage, peak: tuple[int, int], floor: float) -> MeltPoolRegion:
    """Grow the melt-pool boundary outward from the peak pixel.

    Scans +x, -x, +y, -y from the peak until intensity falls to <= floor or a
    local minimum is passed; the four stopping offsets bound a box and the
    region is the box's super-floor pixels.
    """
    pixels = np.asarray(img.pixels, dtype=np.float64)
    x0, y0 = peak
    height, width = pixels.shape
    if not (0 <= x0 < width and 0 <= y0 < height):
        raise ValueError(f"peak {peak} outside image {width}x{height}")
    if pixels[y0, x0] <= floor:
        raise ValueError(
            f"peak intensity {pixels[y0, x0]} not above floor {floor}"
        )
    right = _scan_offset(pixels[y0, x0:], floor)
    left = _scan_offset(pixels[y0, x0::-1], floor)
    down = _scan_offset(pixels[y0:, x0], floor)
    up = _scan_offset(pixels[y0::-1, x0], floor)
    x_min, x_max = x0 - left, x0 + right
    y_min, y_max = y0 - up, y0 + down
    box = np.zeros_like(pixels, dtype=bool)
    box[y_min : y_max + 1, x_min : x_max + 1] = True
    mask = box & (pixels > floor)
    mask[y0, x0] = True
    return _region_from_mask(mask, pixels, (y0, x0))


def mean_intensity(region: MeltPoolRegion, img: SubImage) -> float:
    """Arithmetic mean of the sub-image over the region mask."""
    pixels = np.asarray(img.pixels, dtype=np.float64)
    if region.mask.shape != pixels.shape:
        raise ValueError("region mask does not match image dimensions")
    return float(pixels[region.mask].mean())


def morphology(region: MeltPoolRegion, pitch_um: float) -> Morphology:
    """Bounding-box extents and mask area in physical units."""
    if pitch_um <= 0:
        raise ValueError(f"pixel pitch must be positive, got {pitch_um}")
    x_min, y_min, x_max, y_max = region.bbox
    return Morphology(
        width_um=(x_max - x_min + 1) * pitch_um,
        length_um=(y_max - y_min + 1) * pitch_um,
        area_um2=region.pixel_count * pitch_um * pitch_um,
    )
