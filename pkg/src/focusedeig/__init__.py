"""Expected information gain estimation for focused Bayesian optimal
experimental design: nested Monte Carlo and layered multiple importance
sampling estimators, built-in linear-Gaussian and Mossbauer models,
diagnostics, and an experiment harness."""

from .numkit import (
    GaussianMoments,
    StudentTParams,
    cholesky,
    gaussian_condition,
    logsumexp,
    mvn_logpdf,
    mvn_sample,
    mvt_logpdf,
    mvt_sample,
    stream,
)
from .models import (
    ForwardCache,
    LinearGaussianModel,
    MossbauerModel,
    make_model,
)
from .estimator import (
    EigEstimate,
    EstimatorConfig,
    draw_outer,
    estimate_conditional_likelihood,
    estimate_eig,
    estimate_eig_joint,
    estimate_marginal_likelihood,
    estimate_posterior_moments,
    order_samples,
    prune,
)
from .diagnostics import (
    DeltaConstants,
    ReplicateStats,
    ScalingPlan,
    cess,
    estimate_delta_constants,
    fixed_ratio_plan,
    optimal_alpha,
    replicate_stats,
)

__version__ = "0.1.0"
