"""Propagation of transmission-ratio and intensity-ratio uncertainty into
temperature uncertainty (root-sum-square of sensitivity * uncertainty terms).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .radiometry import (
    KELVIN_OFFSET,
    OpticsConfig,
    ratio_log_offset,
    singular_ratio,
    temperature_from_ratio,
    wavelength_numerator,
)

__all__ = [
    "UncertaintyBudget",
    "CurvePoint",
    "UncertaintyCurve",
    "sensitivity_wrt_a12",
    "sensitivity_wrt_i12",
    "temperature_uncertainty",
    "intensity_ratio_uncertainty",
    "uncertainty_curve",
    "write_uncertainty_curve_csv",
]


@dataclass(frozen=True)
class UncertaintyBudget:
    """Temperature uncertainty split into its transmission and intensity parts.

    u_t_total^2 = u_t_from_a12^2 + u_t_from_i12^2. relative_celsius is
    u_t_total divided by the temperature expressed in Celsius (the published
    relative figures are quoted against Celsius, not kelvin).
    """

    u_t_total: float
    u_t_from_a12: float
    u_t_from_i12: float
    sensitivity_a12: float
    sensitivity_i12: float
    relative_celsius: float


def _denominator(i12: float, cfg: OpticsConfig) -> float:
    if i12 <= 0:
        raise ValueError(f"intensity ratio must be positive, got {i12}")
    denom = math.log(i12) - ratio_log_offset(cfg)
    if denom >= 0:
        from .radiometry import RatioAboveRangeError

        raise RatioAboveRangeError(
            f"ratio {i12} at or above measurable range "
            f"(singular ratio {singular_ratio(cfg):.4f})"
        )
    return denom


def sensitivity_wrt_a12(i12: float, cfg: OpticsConfig) -> float:
    """|dT/dA12| = |N| / (A12 * D^2), in kelvin per unit A12."""
    denom = _denominator(i12, cfg)
    return abs(wavelength_numerator(cfg)) / (cfg.a12 * denom * denom)


def sensitivity_wrt_i12(i12: float, cfg: OpticsConfig) -> float:
    """|dT/dI12| = |N| / (i12 * D^2), in kelvin per unit intensity ratio."""
    denom = _denominator(i12, cfg)
    return abs(wavelength_numerator(cfg)) / (i12 * denom * denom)


def temperature_uncertainty(
    i12: float,
    u_a12: float,
    u_i12: float,
    cfg: OpticsConfig,
    u_transform: float = 0.0,
) -> UncertaintyBudget:
    """Root-sum-square temperature uncertainty at an operating ratio.

    u_transform is a placeholder for registration-induced ratio uncertainty;
    it is folded into the intensity term and defaults to 0 (not characterized).
    """
    if u_a12 < 0 or u_i12 < 0 or u_transform < 0:
        raise ValueError("uncertainties must be >= 0")
    theta_a = sensitivity_wrt_a12(i12, cfg)
    theta_i = sensitivity_wrt_i12(i12, cfg)
    u_i_eff = math.hypot(u_i12, u_transform)
    u_a_term = theta_a * u_a12
    u_i_term = theta_i * u_i_eff
    total = math.hypot(u_a_term, u_i_term)
    t_c = temperature_from_ratio(i12, cfg).celsius
    relative = total / t_c if t_c > 0 else math.nan
    return UncertaintyBudget(
        u_t_total=total,
        u_t_from_a12=u_a_term,
        u_t_from_i12=u_i_term,
        sensitivity_a12=theta_a,
        sensitivity_i12=theta_i,
        relative_celsius=relative,
    )


def intensity_ratio_uncertainty(
    i1: float, i2: float, quantization_step: float = 1.0
) -> float:
    """Ratio uncertainty from sensor quantization alone.

    With u = quantization_step / 2 per channel:
    sqrt((u/i2)^2 + (i1*u/i2^2)^2). Intensities in the same counts as the
    step (native counts with step 1, upscaled counts with step 16).
    """
    if i1 <= 0 or i2 <= 0:
        raise ValueError(f"intensities must be positive, got {i1}, {i2}")
    if quantization_step < 0:
        raise ValueError(f"quantization step must be >= 0, got {quantization_step}")
    u = quantization_step / 2.0
    return math.hypot(u / i2, i1 * u / (i2 * i2))


@dataclass(frozen=True)
class CurvePoint:
    i12: float
    t_kelvin: float
    t_celsius: float
    u_t_total: float
    u_t_from_a12: float
    u_t_from_i12: float
    relative_celsius: float


@dataclass(frozen=True)
class UncertaintyCurve:
    points: tuple[CurvePoint, ...]
    clipped: bool

    def __iter__(self) -> Iterator[CurvePoint]:
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)


def uncertainty_curve(
    i12_range: tuple[float, float],
    n_points: int,
    u_a12: float,
    u_i12: float,
    cfg: OpticsConfig,
) -> UncertaintyCurve:
    """Tabulate the uncertainty budget over a range of intensity ratios.

    The range is clipped below the singular ratio when it touches it; the
    result carries a `clipped` flag in that case.
    """
    lo, hi = i12_range
    if n_points < 2:
        raise ValueError(f"need at least 2 points, got {n_points}")
    if lo <= 0 or hi <= lo:
        raise ValueError(f"invalid range ({lo}, {hi})")
    clipped = False
    limit = singular_ratio(cfg)
    margin = 1e-9 * limit
    if hi >= limit:
        hi = limit - margin
        clipped = True
        if hi <= lo:
            raise ValueError("range entirely at or above the singular ratio")
    points = []
    step = (hi - lo) / (n_points - 1)
    for k in range(n_points):
        i12 = lo + k * step if k < n_points - 1 else hi
        budget = temperature_uncertainty(i12, u_a12, u_i12, cfg)
        t_k = temperature_from_ratio(i12, cfg).kelvin
        points.append(
            CurvePoint(
                i12=i12,
                t_kelvin=t_k,
                t_celsius=t_k - KELVIN_OFFSET,
                u_t_total=budget.u_t_total,
                u_t_from_a12=budget.u_t_from_a12,
                u_t_from_i12=budget.u_t_from_i12,
                relative_celsius=budget.relative_celsius,
            )
        )
    return UncertaintyCurve(points=tuple(points), clipped=clipped)


CURVE_CSV_HEADER = ["i12", "T_K", "T_C", "U_T_K", "U_T_from_A12", "U_T_from_I12", "rel_pct"]


def write_uncertainty_curve_csv(curve: UncertaintyCurve | Sequence[CurvePoint], path: str | Path) -> None:
    points = curve.points if isinstance(curve, UncertaintyCurve) else curve
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_CSV_HEADER)
        for p in points:
            writer.writerow(
                [
                    f"{p.i12:.9g}",
                    f"{p.t_kelvin:.9g}",
                    f"{p.t_celsius:.9g}",
                    f"{p.u_t_total:.9g}",
                    f"{p.u_t_from_a12:.9g}",
                    f"{p.u_t_from_i12:.9g}",
                    f"{p.relative_celsius * 100.0:.9g}",
                ]
            )
