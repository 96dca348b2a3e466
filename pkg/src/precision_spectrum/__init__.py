"""Direct estimation of the distinct eigenvalues of a large precision matrix.

The estimator works from the eigenvalues of the inverted sample covariance
matrix and known eigenvalue multiplicities; it is consistent when the
dimension and the sample size grow together.  The package also provides the
limiting-spectrum diagnostics it relies on, an estimate of its asymptotic
covariance, a contour-quadrature oracle and a Monte Carlo harness.
"""

from __future__ import annotations

from .errors import (
    AspectRatioError,
    ContourError,
    ConvergenceError,
    DegenerateSpectrumError,
    ExcessiveExclusionsError,
    InvalidSpectrumError,
    NumericalError,
    OracleMismatchError,
    PoleError,
    ShapeError,
    SingularSCMError,
    SpectrumError,
)
from .estimators import (
    EstimationResult,
    estimate,
    estimate_clt_covariance,
    estimate_precision_eigs,
    estimate_trace_functional,
    ml_estimate,
)
from .model import (
    ObservationMatrix,
    PopulationSpectrum,
    SampleSpectrum,
    load_population,
    make_population,
    population_from_fractions,
    sample_observations,
    sample_spectrum,
    smi_spectrum,
)
from .support import SupportReport, separability, support_clusters

__all__ = [
    "AspectRatioError",
    "ContourError",
    "ConvergenceError",
    "DegenerateSpectrumError",
    "EstimationResult",
    "ExcessiveExclusionsError",
    "InvalidSpectrumError",
    "NumericalError",
    "ObservationMatrix",
    "OracleMismatchError",
    "PoleError",
    "PopulationSpectrum",
    "SampleSpectrum",
    "ShapeError",
    "SingularSCMError",
    "SpectrumError",
    "SupportReport",
    "estimate",
    "estimate_clt_covariance",
    "estimate_precision_eigs",
    "estimate_trace_functional",
    "load_population",
    "make_population",
    "ml_estimate",
    "population_from_fractions",
    "sample_observations",
    "sample_spectrum",
    "separability",
    "smi_spectrum",
    "support_clusters",
]

__version__ = "0.1.0"
