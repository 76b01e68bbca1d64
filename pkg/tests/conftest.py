import numpy as np
import pytest

from meltpyro.radiometry import CODATA, PAPER, OpticsConfig
from meltpyro.synth import (
    EllipseFootprint,
    GaussianFootprint,
    SyntheticScene,
    exposure_for_peak_counts,
)


@pytest.fixture
def paper_cfg() -> OpticsConfig:
    return OpticsConfig(constants=PAPER)


@pytest.fixture
def codata_cfg() -> OpticsConfig:
    return OpticsConfig(constants=CODATA)


def uniform_scene(
    kelvin: float,
    peak_counts: float = 2500.0,
    optics: OpticsConfig = OpticsConfig(),
    noise_sigma: float = 0.0,
    seed: int = 0,
    **footprint_kw,
) -> SyntheticScene:
    """Uniform-temperature elliptical melt pool at a chosen exposure level."""
    footprint = EllipseFootprint(kelvin=kelvin, **footprint_kw)
    return SyntheticScene(
        footprint=footprint,
        exposure_scale=exposure_for_peak_counts(footprint, peak_counts, optics),
        noise_sigma=noise_sigma,
        seed=seed,
    )


def gaussian_scene(
    peak_kelvin: float,
    peak_counts: float = 2500.0,
    optics: OpticsConfig = OpticsConfig(),
    noise_sigma: float = 0.0,
    seed: int = 0,
    **footprint_kw,
) -> SyntheticScene:
    footprint = GaussianFootprint(peak_kelvin=peak_kelvin, **footprint_kw)
    return SyntheticScene(
        footprint=footprint,
        exposure_scale=exposure_for_peak_counts(footprint, peak_counts, optics),
        noise_sigma=noise_sigma,
        seed=seed,
    )


def blob_subimage(
    shape=(48, 64),
    center=(32.0, 24.0),
    sigma=(4.0, 3.0),
    amplitude=30000.0,
    background=0.0,
):
    """Bare Gaussian intensity blob as a wl550 SubImage (no radiometry)."""
    from meltpyro.frame_io import Channel, SubImage

    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    img = background + amplitude * np.exp(
        -0.5 * (((xx - center[0]) / sigma[0]) ** 2 + ((yy - center[1]) / sigma[1]) ** 2)
    )
    return SubImage(channel=Channel.WL550, pixels=img)
