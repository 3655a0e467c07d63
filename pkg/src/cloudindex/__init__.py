"""Cloudiness of nonwovens from transmission images via power spectra."""

__version__ = "0.1.0"

from .errors import CloudIndexError, DataError, NumericalError  # noqa: E402
from .grammage import GrammageField, GrayImage, normalize_grammage, pixelwise_mean  # noqa: E402
from .index import (  # noqa: E402
    DEFAULT_BAND,
    CloudinessReport,
    FrequencyBand,
    cloudiness_index,
    directional_cloudiness,
)
from .model import (  # noqa: E402
    BesselModelParams,
    FiberModelParams,
    bessel_correlation,
    bessel_spectrum,
    compute_psi,
    fiber_model_spectrum,
    fit_bessel_model,
    hankel_transform,
    model_band_integral,
    range_of_interaction,
)
from .pyramid import DogLevel, bessel_bandpass_power, msp_spatial, msp_spectral  # noqa: E402
from .spectral import (  # noqa: E402
    PowerSpectrum2D,
    RadialSpectrum,
    power_spectrum_2d,
    radial_average,
    sector_average,
)
from .synth import SynthConfig, synth_nonwoven  # noqa: E402
