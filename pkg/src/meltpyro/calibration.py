"""Transmission-ratio calibration from spectrometer inlet/outlet spectra,
aggregation across build-plate locations, and a location-effect ANOVA check.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .radiometry import OpticsConfig

__all__ = [
    "Spectrum",
    "LensCameraResponse",
    "AnovaResult",
    "A12Aggregate",
    "CalibrationResult",
    "SpectrumFormatError",
    "system_transmission",
    "a12_from_spectra",
    "aggregate_a12",
    "one_way_anova",
    "read_spectrum_csv",
    "read_response_csv",
    "calibration_report",
]


class SpectrumFormatError(ValueError):
    """Malformed spectrometer CSV; carries the 1-based offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class Spectrum:
    """Sampled spectrum: strictly increasing wavelengths (nm), counts >= 0."""

    wavelength_nm: np.ndarray
    intensity: np.ndarray

    def __post_init__(self) -> None:
        wl = np.asarray(self.wavelength_nm, dtype=float)
        it = np.asarray(self.intensity, dtype=float)
        object.__setattr__(self, "wavelength_nm", wl)
        object.__setattr__(self, "intensity", it)
        if wl.ndim != 1 or it.shape != wl.shape:
            raise ValueError("wavelength and intensity must be 1-D and equal length")
        if wl.size < 2:
            raise ValueError("a spectrum needs at least 2 samples")
        if not np.all(np.diff(wl) > 0):
            raise ValueError("wavelengths must be strictly increasing")
        if np.any(it < 0):
            raise ValueError("intensities must be >= 0")

    def interpolate(self, lambda_nm: float) -> float:
        """Linear interpolation; wavelengths outside the sampled range raise."""
        wl = self.wavelength_nm
        if lambda_nm < wl[0] or lambda_nm > wl[-1]:
            raise ValueError(
                f"{lambda_nm} nm outside sampled range [{wl[0]}, {wl[-1]}] nm"
            )
        return float(np.interp(lambda_nm, wl, self.intensity))


@dataclass(frozen=True)
class LensCameraResponse:
    """Focus-lens transmissions and camera spectral responses at the two
    working wavelengths; all in (0, 1]."""

    t_flen_1: float = 0.98
    t_flen_2: float = 1.0
    r_cam_1: float = 0.85
    r_cam_2: float = 0.98

    def __post_init__(self) -> None:
        for name in ("t_flen_1", "t_flen_2", "r_cam_1", "r_cam_2"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    p_value: float
    reject: bool  # at alpha = 0.05


@dataclass(frozen=True)
class A12Aggregate:
    mean: float
    sd: float  # population SD (divisor N) over location means
    per_location: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class CalibrationResult:
    a12_mean: float
    a12_sd: float
    per_location: tuple[tuple[str, float], ...]
    anova: AnovaResult | None


def system_transmission(inlet: Spectrum, outlet: Spectrum, lambda_nm: float) -> float:
    """Whole-path transmission at one wavelength: outlet / inlet counts."""
    denom = inlet.interpolate(lambda_nm)
    if denom == 0:
        raise ZeroDivisionError(f"inlet intensity is zero at {lambda_nm} nm")
    return outlet.interpolate(lambda_nm) / denom


def a12_from_spectra(
    inlet: Spectrum,
    outlet: Spectrum,
    resp: LensCameraResponse = LensCameraResponse(),
    cfg: OpticsConfig = OpticsConfig(),
) -> float:
    """One transmission-ratio measurement from an inlet/outlet spectrum pair.

    [(t1*r1)/(t2*r2)] * [(outlet@l1/outlet@l2) / (inlet@l1/inlet@l2)].
    The quotient of ratios makes the result invariant to uniform rescaling of
    either spectrum.
    """
    l1_nm = cfg.lambda1 * 1e9
    l2_nm = cfg.lambda2 * 1e9
    out1 = outlet.interpolate(l1_nm)
    out2 = outlet.interpolate(l2_nm)
    in1 = inlet.interpolate(l1_nm)
    in2 = inlet.interpolate(l2_nm)
    if out2 == 0 or in1 == 0 or in2 == 0:
        raise ZeroDivisionError("zero intensity at a working wavelength")
    head = (resp.t_flen_1 * resp.r_cam_1) / (resp.t_flen_2 * resp.r_cam_2)
    return head * (out1 / out2) / (in1 / in2)


def aggregate_a12(measurements: Sequence[tuple[str, float]]) -> A12Aggregate:
    """Mean and population SD over per-location mean values.

    Measurements sharing a location label are first averaged per location;
    the population SD (divisor N) over the location means reproduces the
    published dispersion figure.
    """
    if not measurements:
        raise ValueError("no measurements to aggregate")
    by_location: dict[str, list[float]] = {}
    for label, value in measurements:
        by_location.setdefault(str(label), []).append(float(value))
    per_location = tuple(
        (label, float(np.mean(vals))) for label, vals in by_location.items()
    )
    means = np.array([m for _, m in per_location])
    return A12Aggregate(
        mean=float(means.mean()),
        sd=float(means.std(ddof=0)),
        per_location=per_location,
    )


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """Fixed-effects one-way ANOVA on k groups.

    F = (SSB/(k-1)) / (SSW/(N-k)); p from the F distribution survival
    function. Zero within-group variance with unequal means reports
    F = +inf, p = 0. Identical constant groups report F = 0, p = 1.
    """
    if len(groups) < 2:
        raise ValueError(f"need at least 2 groups, got {len(groups)}")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if any(a.size < 2 for a in arrays):
        raise ValueError("every group needs at least 2 values")
    k = len(arrays)
    n_total = sum(a.size for a in arrays)
    grand = sum(a.sum() for a in arrays) / n_total
    ssb = sum(a.size * (a.mean() - grand) ** 2 for a in arrays)
    ssw = sum(((a - a.mean()) ** 2).sum() for a in arrays)
    df_b = k - 1
    df_w = n_total - k
    msb = ssb / df_b
    if ssw == 0.0:
        if msb == 0.0:
            return AnovaResult(f_stat=0.0, p_value=1.0, reject=False)
        return AnovaResult(f_stat=math.inf, p_value=0.0, reject=True)
    f_stat = msb / (ssw / df_w)
    # survival function of F(df_b, df_w) via the regularized incomplete beta
    p_value = float(special.fdtrc(df_b, df_w, f_stat))
    return AnovaResult(f_stat=float(f_stat), p_value=p_value, reject=p_value < 0.05)


SPECTRUM_CSV_HEADER = ["wavelength_nm", "intensity"]


def read_spectrum_csv(path: str | Path) -> Spectrum:
    """Read `wavelength_nm,intensity` CSV (UTF-8, LF) into a Spectrum."""
    wl: list[float] = []
    it: list[float] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SpectrumFormatError("empty file", 1)
        if [h.strip() for h in header] != SPECTRUM_CSV_HEADER:
            raise SpectrumFormatError(
                f"expected header {','.join(SPECTRUM_CSV_HEADER)!r}, got {','.join(header)!r}",
                1,
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SpectrumFormatError(f"expected 2 fields, got {len(row)}", lineno)
            try:
                wl.append(float(row[0]))
                it.append(float(row[1]))
            except ValueError:
                raise SpectrumFormatError(f"non-numeric value in {row!r}", lineno) from None
    try:
        return Spectrum(np.array(wl), np.array(it))
    except ValueError as exc:
        raise SpectrumFormatError(str(exc), 2) from exc


def read_response_csv(path: str | Path) -> LensCameraResponse:
    """Read a `parameter,value` CSV holding the four lens/camera coefficients."""
    values: dict[str, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["parameter", "value"]:
            raise SpectrumFormatError("expected header 'parameter,value'", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SpectrumFormatError(f"expected 2 fields, got {len(row)}", lineno)
            try:
                values[row[0].strip()] = float(row[1])
            except ValueError:
                raise SpectrumFormatError(f"non-numeric value in {row!r}", lineno) from None
    known = {"t_flen_1", "t_flen_2", "r_cam_1", "r_cam_2"}
    unknown = set(values) - known
    if unknown:
        raise SpectrumFormatError(f"unknown parameters {sorted(unknown)}", 2)
    return LensCameraResponse(**values)


def calibration_report(result: CalibrationResult) -> str:
    """Serialize a calibration result as a JSON document."""
    doc = {
        "a12_mean": result.a12_mean,
        "a12_sd": result.a12_sd,
        "per_location": [
            {"location": label, "a12": value} for label, value in result.per_location
        ],
        "anova": (
            None
            if result.anova is None
            else {
                "F": result.anova.f_stat,
                "p": result.anova.p_value,
                "reject": result.anova.reject,
            }
        ),
    }
    return json.dumps(doc, indent=2)
