"""Numerical verification of gradient intertwining for birth-death chains.

The package turns the commutation relation between the discrete gradient and
a birth-death semigroup into machine-checkable residuals: u-modified chains
and their Feynman-Kac potentials, sub-commutation and Bregman inequalities,
Wasserstein curvature bounds and spectral gaps, hitting-time identities,
stochastic orderings, and Monte Carlo cross-checks, all exposed through a
library API, a JSON service, and a CLI.
"""

from .errors import (
    BdtwineError,
    InfeasibleError,
    InvalidModelError,
    InvalidParameterError,
    NumericalFailureError,
    PreconditionError,
    SizeGuardError,
)
from .inequalities import (
    DeviationParams,
    KappaEstimate,
    MetricSpace,
    TransportPlan,
    deviation_function,
    dirichlet_form,
    fisher_information,
    infinite_server_drift_rule,
    isoperimetry_margin,
    kappa_u,
    lipschitz_contraction,
    lyapunov_check,
    phi_entropy_margin,
    poincare_margin,
    poisson_gradient_bound,
    spectral_gap,
    transport_info_margin,
    wasserstein_du,
    wasserstein_lp,
)
from .intertwine import (
    PhiFunction,
    VerificationReport,
    bounded_gradient_corpus,
    gradients,
    hitting_identity_check,
    infinitesimal_residual,
    phi_power,
    phi_rlogr,
    phi_square,
    phi_transforms,
    verify_bicommutation,
    verify_intertwining,
    verify_subcommutation,
)
from .model import (
    ChenExponent,
    Distribution,
    ErgodicityReport,
    Potential,
    RateSpec,
    Weight,
    chen_exponent,
    ergodicity_report,
    make_builtin,
    make_tabulated,
    model_from_config,
    potential,
    stationary_distribution,
    u_modification,
    weight_from_config,
)
from .optimize import GapReport, OptimizeResult, WeightFamily, gap_report, optimize_weight
from .ordering import (
    OrderingVerdict,
    binomial_domination_check,
    comparison_lemma_check,
    convex_domination_check,
    convex_order,
    domination_pair,
    functional_order_gap,
    laplace_report,
    stochastic_order,
)
from .semigroup import (
    TruncatedGenerator,
    apply_semigroup,
    boundary_margin,
    build_generator,
    expm_oracle,
    poisson_solve,
    survival_probability,
    transient_distribution,
)
from .simulate import (
    BLOCK,
    HittingTimeSample,
    McEstimate,
    Path,
    coupled_mm1_paths,
    coupled_survival_estimate,
    feynman_kac_estimate,
    hitting_time_sample,
    mehler_distribution,
    sample_path,
)

__version__ = "0.1.0"
