"""normalis: equicontractive iterated function systems, self-similar measures and
their random disintegration, certified Fourier/Pisot arithmetic, and base-b
normality statistics.

Subpackage map:

* :mod:`normalis.algebra`        exact scalars, Pisot detection, log-ratio rationality
* :mod:`normalis.ifs_core`       IFS normalization, cylinders, separated pairs, sampling
* :mod:`normalis.disintegration` model alphabets, model measures, verification drivers
* :mod:`normalis.fourier`        certified transforms, inequality checks, frequency scans
* :mod:`normalis.normality`      certified digits, Weyl sums, discrepancy, k-gram tests
* :mod:`normalis.cli`            config ingestion, subcommands, machine-readable reports
"""

__version__ = "0.1.0"

from .errors import (
    NormalisError,
    InputError,
    DegenerateMeasureError,
    ReduciblePolynomialError,
    PrecisionCapError,
    UndecidableError,
    StatisticalFailure,
    QuadratureError,
    InsufficientDepthError,
)
from .precision import Enclosure, precision_cap, set_precision_cap

__all__ = [
    "NormalisError",
    "InputError",
    "DegenerateMeasureError",
    "ReduciblePolynomialError",
    "PrecisionCapError",
    "UndecidableError",
    "StatisticalFailure",
    "QuadratureError",
    "InsufficientDepthError",
    "Enclosure",
    "precision_cap",
    "set_precision_cap",
    "__version__",
]
