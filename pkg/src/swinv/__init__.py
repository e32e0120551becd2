"""Certified invariant and bounding sets for switched affine systems."""

from .arbitrary import (
    EllipsoidCertificate,
    SosCertificate,
    ellipsoid_invariant,
    max_quadratic_decay,
    sos_invariant,
    theoretic_radius,
)
from .dwell import (
    BoundingRegion,
    DwellCertificate,
    dwell_certificate,
    dwell_lmi_feasible,
    membership_V,
    min_dwell_time,
    r_ij_analytic,
    safety_radius,
    tau_sweep,
)
from .errors import (
    CertificateInconsistency,
    InfeasibleError,
    IterationLimitError,
    NoEquilibriumError,
    NumericFailure,
    StallError,
    SwinvError,
    SystemValidationError,
)
from .pathfollow import PathFollowState, linearized_step, optimize_centers
from .system import Mode, SwitchedAffineSystem, SwitchingSignal, validate_system

__version__ = "0.1.0"
