"""Local polynomial and kernel density estimation with robust bias-corrected inference."""

from .bandwidth import (
    BandwidthChoice,
    apply_bwcheck,
    h_ce_dpi,
    h_ce_rot,
    h_imse_dpi,
    h_mse_dpi,
    h_rot,
    pilot_derivatives,
    select_bandwidths,
)
from .errors import (
    DegenerateLeverageError,
    EmptyDataError,
    FlatObjectiveError,
    InvalidInputError,
    SingularDesignError,
    SmoothingError,
    UnsupportedMethodError,
)
from .inference import (
    FitSpec,
    KdeSpec,
    PointFit,
    confidence_interval,
    kdrobust,
    lprobust,
    summarize,
)
from .kde import kd_bandwidth, kde_point, kde_rbc
from .kernels import KernelType, kernel_constants, kernel_weight
from .lpcore import (
    DesignCache,
    Sample,
    bc_point_estimate,
    bias_components,
    build_design,
    effective_n,
    point_estimate,
)
from .variance import (
    VceKind,
    VceSpec,
    conventional_variance,
    rbc_variance,
    residuals_nn,
    residuals_plugin,
    sigma_hat,
)

__version__ = "0.1.0"
