"""Adaptive bandwidth selection by cross validation for kernel-weighted
local likelihood estimation in time-varying AR, MA, ARCH and TAR models."""

from .core import (
    BandwidthGrid,
    Kernel,
    SeedPolicy,
    WeightFn,
    derive_rng,
    epanechnikov,
    kernel_weights,
    make_weight,
)
from .curves import ParamCurve, sinusoid
from .estimator import (
    DegenerateWindowError,
    FitDiagnostics,
    LocalFit,
    fit_curve,
    fit_leave_one_out,
    fit_local,
    fit_tvar_closed_form,
)
from .likelihood import (
    DomainError,
    Objective,
    TruncatedPast,
    ell_tvar,
    ell_tvarch,
    ell_tvma1,
    ell_tvtar1,
    local_likelihood,
    ma1_filter_coeffs,
    objective_for,
)
from .processes import (
    Family,
    Innovation,
    ModelSpec,
    SimulatedSeries,
    simulate,
    simulate_stationary,
    simulate_tvar,
    simulate_tvarch,
    simulate_tvma1,
    simulate_tvtar1,
)
from .selection import (
    DegenerateBiasError,
    InfoMatrices,
    SelectionReport,
    cv_functional,
    dM_star_star,
    distance_dA,
    info_matrices_closed_form,
    misspecified_target,
    plugin_h0,
    select_bandwidth,
)

__version__ = "0.1.0"
