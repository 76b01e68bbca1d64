"""Thermocouple cross-validation arithmetic: first-order step-response
correction and relative-difference statistics between contact and imaging
temperature estimates.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

__all__ = [
    "ThermocoupleModel",
    "ValidationRecord",
    "SummaryStats",
    "ValidationSummary",
    "step_response_fraction",
    "correct_step_reading",
    "relative_difference",
    "make_record",
    "summarize",
    "read_validation_csv",
    "summary_report",
]

DEFAULT_TAU_S = 0.33


@dataclass(frozen=True)
class ThermocoupleModel:
    """First-order sensor model: time constant and optional ambient level."""

    tau_s: float = DEFAULT_TAU_S
    ambient_C: float | None = None

    def __post_init__(self) -> None:
        if self.tau_s <= 0:
            raise ValueError(f"time constant must be positive, got {self.tau_s}")


@dataclass(frozen=True)
class ValidationRecord:
    """One validation pair: corrected thermocouple temperature vs the imaging
    pipeline's average temperature, both Celsius.

    relative_diff_pct holds |(Tc - Tt)/Tt| * 100 with Tc the imaging value and
    Tt the thermocouple value; the published comparison table reports
    magnitudes (its Case-2 rows would otherwise be negative).
    """

    label: str
    group: str
    t_thermocouple_C: float
    t_stwip_C: float
    relative_diff_pct: float


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    sd: float | None  # sample SD (divisor N-1); absent for a single record
    n: int


@dataclass(frozen=True)
class ValidationSummary:
    per_group: tuple[tuple[str, SummaryStats], ...]
    overall: SummaryStats


def step_response_fraction(exposure_s: float, tau_s: float = DEFAULT_TAU_S) -> float:
    """Fraction of a step change registered after a finite exposure:
    1 - exp(-exposure/tau)."""
    if tau_s <= 0:
        raise ValueError(f"time constant must be positive, got {tau_s}")
    if exposure_s < 0:
        raise ValueError(f"exposure must be >= 0, got {exposure_s}")
    return -math.expm1(-exposure_s / tau_s)


def correct_step_reading(
    measured_rise_C: float, fraction: float, ambient_C: float | None = None
) -> float:
    """Extrapolate a partial step reading to the full step value.

    Plain division measured/fraction; when an ambient level is given the rise
    above ambient is corrected instead and the ambient added back.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if ambient_C is None:
        return measured_rise_C / fraction
    return ambient_C + (measured_rise_C - ambient_C) / fraction


def relative_difference(t_stwip_C: float, t_thermocouple_C: float) -> float:
    """(Tc - Tt)/Tt * 100, signed, with Tc the imaging estimate."""
    if t_thermocouple_C == 0:
        raise ValueError("thermocouple temperature must be nonzero")
    return (t_stwip_C - t_thermocouple_C) / t_thermocouple_C * 100.0


def make_record(
    label: str, group: str, t_thermocouple_C: float, t_stwip_C: float
) -> ValidationRecord:
    return ValidationRecord(
        label=label,
        group=group,
        t_thermocouple_C=t_thermocouple_C,
        t_stwip_C=t_stwip_C,
        relative_diff_pct=abs(relative_difference(t_stwip_C, t_thermocouple_C)),
    )


def _stats(values: Sequence[float]) -> SummaryStats:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return SummaryStats(mean=mean, sd=None, n=n)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return SummaryStats(mean=mean, sd=math.sqrt(var), n=n)


def summarize(
    records: Sequence[ValidationRecord | float], grouping: bool = True
) -> ValidationSummary:
    """Mean and sample SD of relative differences, per group and overall.

    Accepts full records or bare percentage values (treated as one group).
    """
    if not records:
        raise ValueError("no records to summarize")
    if isinstance(records[0], ValidationRecord):
        recs = [r for r in records]  # type: ignore[list-item]
        values = [r.relative_diff_pct for r in recs]
        groups: dict[str, list[float]] = {}
        if grouping:
            for r in recs:
                groups.setdefault(r.group, []).append(r.relative_diff_pct)
    else:
        values = [float(v) for v in records]  # type: ignore[arg-type]
        groups = {}
    per_group = tuple((g, _stats(vals)) for g, vals in groups.items())
    return ValidationSummary(per_group=per_group, overall=_stats(values))


VALIDATION_CSV_COLUMNS = (
    "label",
    "case",
    "t_thermocouple_C",
    "measured_rise_C",
    "exposure_s",
    "t_stwip_C",
)


def read_validation_csv(
    path: str | Path, model: ThermocoupleModel = ThermocoupleModel()
) -> list[ValidationRecord]:
    """Read validation rows; thermocouple input is either a corrected
    temperature (t_thermocouple_C) or a raw reading plus exposure
    (measured_rise_C, exposure_s) that gets step-corrected here.
    """
    records: list[ValidationRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file")
        unknown = set(reader.fieldnames) - set(VALIDATION_CSV_COLUMNS)
        if unknown:
            raise ValueError(f"{path}: unknown columns {sorted(unknown)}")
        for row in reader:
            label = (row.get("label") or "").strip()
            group = (row.get("case") or "").strip() or "all"
            stwip = row.get("t_stwip_C")
            if stwip is None or not stwip.strip():
                raise ValueError(f"{path}: row {label!r} missing t_stwip_C")
            tc_direct = (row.get("t_thermocouple_C") or "").strip()
            if tc_direct:
                t_tc = float(tc_direct)
            else:
                rise = (row.get("measured_rise_C") or "").strip()
                exposure = (row.get("exposure_s") or "").strip()
                if not rise or not exposure:
                    raise ValueError(
                        f"{path}: row {label!r} needs t_thermocouple_C or "
                        "measured_rise_C + exposure_s"
                    )
                fraction = step_response_fraction(float(exposure), model.tau_s)
                t_tc = correct_step_reading(float(rise), fraction, model.ambient_C)
            records.append(make_record(label, group, t_tc, float(stwip)))
    return records


def summary_report(records: Sequence[ValidationRecord]) -> str:
    """JSON report mirroring the published comparison table layout."""
    summary = summarize(records)
    doc = {
        "records": [
            {
                "label": r.label,
                "case": r.group,
                "t_thermocouple_C": r.t_thermocouple_C,
                "t_stwip_C": r.t_stwip_C,
                "relative_diff_pct": r.relative_diff_pct,
            }
            for r in records
        ],
        "per_case": {
            g: {"mean_pct": s.mean, "sd_pct": s.sd, "n": s.n}
            for g, s in summary.per_group
        },
        "overall": {
            "mean_pct": summary.overall.mean,
            "sd_pct": summary.overall.sd,
            "n": summary.overall.n,
        },
    }
    return json.dumps(doc, indent=2)
