"""Two-wavelength melt-pool imaging pyrometry toolkit.

Converts dual-wavelength melt-pool image streams into per-pixel and
per-melt-pool temperature measurements with propagated uncertainty, plus the
calibration, validation, and synthetic-oracle tooling to verify the numbers.
"""

from .radiometry import (
    CODATA,
    PAPER,
    OpticsConfig,
    PhysicalConstants,
    RatioAboveRangeError,
    Temperature,
    optimal_wavelength,
    planck_radiance,
    ratio_from_temperature,
    singular_ratio,
    temperature_from_ratio,
    wien_radiance,
    wien_validity_limit,
)
from .uncertainty import (
    UncertaintyBudget,
    intensity_ratio_uncertainty,
    sensitivity_wrt_a12,
    sensitivity_wrt_i12,
    temperature_uncertainty,
    uncertainty_curve,
)
from .calibration import (
    LensCameraResponse,
    Spectrum,
    a12_from_spectra,
    aggregate_a12,
    one_way_anova,
    system_transmission,
)
from .frame_io import Channel, Frame, StreamHeader, SubImage, split_frame, upscale_12_to_16
from .segmentation import MeltPoolRegion, Morphology, SegmentationParams, segment
from .registration import (
    RegistrationParams,
    RegistrationResult,
    SimilarityTransform,
    register,
    ssim,
)
from .thermography import (
    MeltPoolObservation,
    ObservationStatus,
    PipelineParams,
    RatioMap,
    TemperatureMap,
    ThermoLimits,
    observe_frame,
    ratio_map,
    temperature_map,
)
from .tc_validation import (
    ThermocoupleModel,
    correct_step_reading,
    relative_difference,
    step_response_fraction,
)
from .synth import SyntheticLayerScript, SyntheticScene, render_pair, render_stream

__version__ = "0.1.0"
