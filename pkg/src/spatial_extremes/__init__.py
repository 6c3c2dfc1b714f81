"""Statistical modelling of spatial extremes.

Max-stable, extremal-copula and latent-variable models for block maxima
observed at fixed sites, with pairwise likelihood fitting, simulation and
model-checking diagnostics.
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .evd import (  # noqa: F401
    GevParams, GpdParams, KernelAccuracy, frechet_to_gumbel, from_unit_frechet, gev_cdf,
    gev_logpdf, gev_ppf, gpd_survivor, kernel_bessel_k, kernel_normal, kernel_normal_inv,
    kernel_student_t, kernel_student_t_inv, return_level, to_unit_frechet,
)
from .spatial import (  # noqa: F401
    CorrelationSpec, SiteSet, VariogramSpec, cholesky, corr_matrix, correlation, gp_sample,
    gp_conditional_sample, kriging, semivariogram,
)
from .dependence import (  # noqa: F401
    BrownResnick, ExtremalT, GaussianCopula, GeometricGaussian, HuslerReiss, Independence,
    MarshallOlkin, RandomSetSchlather, Schlather, Smith, StudentTCopula, V_partials,
    bivariate_logdensity, br_hr_convert, exponent_V, extremal_coefficient, pickands_A,
    practical_range, tail_dependence, theta_curve,
)
from .margins import (  # noqa: F401
    MaximaPanel, SurfaceModel, TrendSurface, empirical_uniform, gev_at_site, panel_from_frechet,
    panel_to_frechet,
)
from .simulation import SimConfig, simulate_copula_limit, simulate_maxstable, synth_dataset  # noqa: F401
from .diagnostics import ThetaEstimate, area_statistic_T, fmadogram, groupwise_check  # noqa: F401
from .fitting import (  # noqa: F401
    FitConfig, FitReport, ModelTemplate, OptimConfig, PairSet, ParameterVector, fit_model,
    full_nll_elliptical, optimize_multistart, pairwise_nll, sandwich_and_clic, score_and_hessian,
)
from .latent import (  # noqa: F401
    ChainState, McmcConfig, PriorConfig, posterior_return_map, run_chain, step_gev_sites,
    step_range, step_regression, step_sill,
)
