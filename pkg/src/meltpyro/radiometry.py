"""Scalar radiometric core: Planck/Wien radiance and ratio-temperature inversion.

Everything here is a pure function of its arguments. Temperatures are handled
in kelvin internally; Celsius only appears as a presentation view on
:class:`Temperature`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "PhysicalConstants",
    "CODATA",
    "PAPER",
    "CONSTANT_PRESETS",
    "OpticsConfig",
    "Temperature",
    "RatioAboveRangeError",
    "planck_radiance",
    "wien_radiance",
    "temperature_from_ratio",
    "ratio_from_temperature",
    "singular_ratio",
    "wien_validity_limit",
    "optimal_wavelength",
    "wavelength_numerator",
    "ratio_log_offset",
]

KELVIN_OFFSET = 273.15

# lambda * T product giving the best exploitable radiance contrast for
# two-wavelength work (m * K)
OPTIMAL_LAMBDA_T = 1.5e-3


class RatioAboveRangeError(ValueError):
    """Intensity ratio at or above the singular value; temperature undefined."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Physical constants used by the radiance formulas.

    h: Planck constant (J*s); c: speed of light (m/s); k_b: Boltzmann (J/K).
    """

    h: float
    c: float
    k_b: float

    def __post_init__(self) -> None:
        if self.h <= 0 or self.c <= 0 or self.k_b <= 0:
            raise ValueError("physical constants must be strictly positive")

    @property
    def hc_over_kb(self) -> float:
        """Second radiation constant hc/k_B (m*K)."""
        return self.h * self.c / self.k_b


#: CODATA 2018 exact values (library default).
CODATA = PhysicalConstants(h=6.62607015e-34, c=2.99792458e8, k_b=1.380649e-23)

#: Rounded values (h = 6.626e-34, c = 3e8) used by many instrument worked
#: examples; reproduces published spot temperatures bit-for-bit.
PAPER = PhysicalConstants(h=6.626e-34, c=3.0e8, k_b=1.380649e-23)

CONSTANT_PRESETS: dict[str, PhysicalConstants] = {"codata": CODATA, "paper": PAPER}


@dataclass(frozen=True)
class Temperature:
    """Absolute temperature; kelvin internally, Celsius as a view."""

    kelvin: float

    def __post_init__(self) -> None:
        if self.kelvin <= 0:
            raise ValueError(f"temperature must be positive, got {self.kelvin} K")

    @property
    def celsius(self) -> float:
        return self.kelvin - KELVIN_OFFSET

    @classmethod
    def from_celsius(cls, celsius: float) -> "Temperature":
        return cls(celsius + KELVIN_OFFSET)


def _kelvin(t: "Temperature | float") -> float:
    return t.kelvin if isinstance(t, Temperature) else float(t)


@dataclass(frozen=True)
class OpticsConfig:
    """Optical parameters of a two-wavelength ratio pyrometer.

    lambda1 is the shorter working wavelength (m), lambda2 the longer one.
    a12 is the transmission-efficiency ratio A1/A2 of the optical path and
    u_a12 its one-sigma uncertainty. emissivity_ratio defaults to 1
    (near-equal emissivities at close wavelengths).
    """

    lambda1: float = 550e-9
    lambda2: float = 620e-9
    a12: float = 1.601
    u_a12: float = 0.0163
    emissivity_ratio: float = 1.0
    constants: PhysicalConstants = field(default=CODATA)

    def __post_init__(self) -> None:
        if not 0 < self.lambda1 < self.lambda2:
            raise ValueError(
                f"need 0 < lambda1 < lambda2, got {self.lambda1} / {self.lambda2}"
            )
        if self.a12 <= 0:
            raise ValueError(f"a12 must be positive, got {self.a12}")
        if self.u_a12 < 0:
            raise ValueError(f"u_a12 must be >= 0, got {self.u_a12}")
        if self.emissivity_ratio <= 0:
            raise ValueError(
                f"emissivity_ratio must be positive, got {self.emissivity_ratio}"
            )


def planck_radiance(
    lam: float, t: "Temperature | float", constants: PhysicalConstants = CODATA
) -> float:
    """Blackbody spectral radiance 2hc^2 / (lam^5 (exp(hc/(k_B lam T)) - 1)).

    Units: W * sr^-1 * m^-3 with lam in meters and t in kelvin.
    """
    kelvin = _kelvin(t)
    if lam <= 0:
        raise ValueError(f"wavelength must be positive, got {lam}")
    if kelvin <= 0:
        raise ValueError(f"temperature must be positive, got {kelvin}")
    a = constants.hc_over_kb / (lam * kelvin)
    return 2.0 * constants.h * constants.c**2 / (lam**5 * math.expm1(a))


def wien_radiance(
    lam: float,
    t: "Temperature | float",
    emissivity: float = 1.0,
    transmission: float = 1.0,
    constants: PhysicalConstants = CODATA,
) -> float:
    """Graybody radiance under the short-wavelength approximation.

    2hc^2 * emissivity * transmission / (lam^5 exp(hc/(k_B lam T))).
    transmission = 0 is allowed and yields 0.
    """
    kelvin = _kelvin(t)
    if lam <= 0:
        raise ValueError(f"wavelength must be positive, got {lam}")
    if kelvin <= 0:
        raise ValueError(f"temperature must be positive, got {kelvin}")
    if emissivity < 0 or transmission < 0:
        raise ValueError("emissivity and transmission must be >= 0")
    a = constants.hc_over_kb / (lam * kelvin)
    return 2.0 * constants.h * constants.c**2 * emissivity * transmission / (
        lam**5 * math.exp(a)
    )


def wavelength_numerator(cfg: OpticsConfig) -> float:
    """(hc/k_B)(1/lambda2 - 1/lambda1), in kelvin. Negative for lambda1 < lambda2."""
    return cfg.constants.hc_over_kb * (1.0 / cfg.lambda2 - 1.0 / cfg.lambda1)


def ratio_log_offset(cfg: OpticsConfig) -> float:
    """ln(eps1/eps2) + ln(A12) + 5 ln(lambda2/lambda1).

    The ratio-temperature relation is T = numerator / (ln i12 - offset); the
    offset is also ln of the singular ratio.
    """
    return (
        math.log(cfg.emissivity_ratio)
        + math.log(cfg.a12)
        + 5.0 * math.log(cfg.lambda2 / cfg.lambda1)
    )


def singular_ratio(cfg: OpticsConfig) -> float:
    """Intensity ratio at which the inversion denominator vanishes.

    (eps1/eps2) * A12 * (lambda2/lambda1)^5; ratios at or above this value
    correspond to the infinite-temperature asymptote and are unmeasurable.
    """
    return cfg.emissivity_ratio * cfg.a12 * (cfg.lambda2 / cfg.lambda1) ** 5


def temperature_from_ratio(i12: float, cfg: OpticsConfig) -> Temperature:
    """Invert a two-wavelength intensity ratio I1/I2 to temperature.

    T = (hc/k_B)(1/lambda2 - 1/lambda1)
        / (ln i12 - ln(eps1/eps2) - ln A12 - 5 ln(lambda2/lambda1))

    Raises ValueError for i12 <= 0 and RatioAboveRangeError for
    i12 >= singular_ratio(cfg).
    """
    if i12 <= 0:
        raise ValueError(f"intensity ratio must be positive, got {i12}")
    denom = math.log(i12) - ratio_log_offset(cfg)
    if denom >= 0:
        raise RatioAboveRangeError(
            f"ratio {i12} at or above measurable range "
            f"(singular ratio {singular_ratio(cfg):.4f})"
        )
    return Temperature(wavelength_numerator(cfg) / denom)


def ratio_from_temperature(t: "Temperature | float", cfg: OpticsConfig) -> float:
    """Forward model of the intensity ratio: exact algebraic inverse of
    temperature_from_ratio.

    i12 = (eps1/eps2) A12 (lambda2/lambda1)^5 exp((hc/(k_B T))(1/l2 - 1/l1)).
    Always below singular_ratio; increasing in T.
    """
    kelvin = _kelvin(t)
    if kelvin <= 0:
        raise ValueError(f"temperature must be positive, got {kelvin}")
    return singular_ratio(cfg) * math.exp(wavelength_numerator(cfg) / kelvin)


def wien_validity_limit(
    t: "Temperature | float", constants: PhysicalConstants = CODATA
) -> float:
    """Wavelength hc/(k_B T) below which the short-wavelength form is accepted."""
    kelvin = _kelvin(t)
    if kelvin <= 0:
        raise ValueError(f"temperature must be positive, got {kelvin}")
    return constants.hc_over_kb / kelvin


def optimal_wavelength(t: "Temperature | float") -> float:
    """Wavelength (m) maximizing ratio-thermometry contrast at temperature t,
    from the lambda*T ~ 1500 um*K selection rule."""
    kelvin = _kelvin(t)
    if kelvin <= 0:
        raise ValueError(f"temperature must be positive, got {kelvin}")
    return OPTIMAL_LAMBDA_T / kelvin
