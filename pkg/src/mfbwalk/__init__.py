"""Random walk on the integers with equidistant multiple-function barriers.

Closed-form expected arrivals, reach probabilities, absorption-mass
distribution and mean absorption times, each verified against a truncated
linear-system solver and a seeded Monte-Carlo simulator.
"""

from .absorption_engine import (
    AbsorptionTimes,
    DerivativeBundle,
    absorption_times,
    mean_time_any,
    mean_time_to_barrier,
    spectral_derivatives,
)
from .errors import (
    BalancedUnsupported,
    ConsistencyFailure,
    DegenerateSpectrum,
    ExcessCensoring,
    FormulaDiscrepancy,
    IllConditioned,
    RejectedParameter,
    SingularSystem,
    StartNotBarrier,
    TruncationInsufficient,
)
from .oracle import (
    EmpiricalStats,
    GfDerivative,
    MeanTimeSplit,
    TruncatedVisits,
    default_truncation,
    gf_derivative,
    gf_derivative_profile,
    periodic_mean_times,
    simulate,
    truncated_mean_times,
    truncated_visits,
)
from .visit_engine import (
    VisitProfile,
    absorption_mass,
    barrier_recurrence_residual,
    barrier_visits,
    boundary_coefficients,
    occupancy_residual,
    reach_probability,
    site_visits,
    total_absorption,
    visit_profile,
)
from .walk_model import (
    BALANCE_EPS,
    BarrierSpectrum,
    Branch,
    SpectralPair,
    WalkModel,
    barrier_spectrum,
    lambda_pair,
    load_model,
    make_model,
    model_from_json,
    reanchored,
    validate_model,
)

__version__ = "0.1.0"
