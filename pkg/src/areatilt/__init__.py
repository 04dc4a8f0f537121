"""Area-tilted line ensembles: Airy eigenfunctions, correlation kernels, Fredholm
gap probabilities, exact samplers and the window Gibbs chain."""

from .airy import ai, ai_prime, airy_zero, phi, phi_alpha
from .errors import (
    AccuracyError,
    AreaTiltError,
    CapacityError,
    CertificationError,
    DegeneracyError,
    DomainError,
    RejectionBudgetError,
    TruncationError,
)
from .fredholm import GapDomain, gap_probability, top_curve_cdf_finite, tracy_widom_cdf
from .kernels import KernelSpec, SpaceTimePoint, kernel_airy_ext, kernel_finite, kernel_shifted, kernel_sup_distance

__version__ = "0.1.0"
