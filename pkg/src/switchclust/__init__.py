"""Model-based clustering of multivariate longitudinal data with
time-varying cluster assignments.

Observations follow per-cluster Gaussians whose conditional mean blends
the cluster mean with the object's previous value; cluster membership
follows a Markov chain whose initial and transition probabilities may
be regressed on covariates. Estimation uses a generalized EM algorithm
with likelihood recursions that are linear in the series length.
"""

from .errors import (
    DegenerateCluster,
    DegenerateCovariance,
    GapError,
    NumericalUnderflow,
    PanelFormatError,
    SeparationWarning,
    SingleClusterError,
)
from .inference import (
    Posterior,
    backward_q,
    brute_force_posterior,
    posterior,
    transition_memorylessness_gap,
)
from .learn import (
    FitConfig,
    FitReport,
    bfgs_maximize,
    fit,
    kmeans_init,
    logistic_objective_initial,
    logistic_objective_transition,
    q_function,
    update_alpha,
    update_beta,
    update_lambda,
    update_mu,
    update_sigma,
)
from .metrics import (
    average_silhouette,
    corrected_rand,
    silhouette_scan,
    variation_of_information,
)
from .model import (
    ClusterParams,
    FixedTransition,
    ModelParams,
    ObjectSeries,
    PanelDataset,
    RegressedTransition,
    brute_force_loglik,
    dataset_loglik,
    emission_initial_log,
    emission_transition_log,
    eval_alpha,
    eval_beta_row,
    forward_filter,
    permute_clusters,
)
from .numkernel import (
    RngStream,
    SpdMatrix,
    cholesky,
    mvn_logpdf,
    sample_beta,
    sample_chisq,
    sample_dirichlet,
    sample_inverse_wishart,
    sample_normal,
    sample_uniform_int,
)
from .panelio import build_indices, load_panel, load_params, save_params, write_panel
from .simulate import (
    SimConfig,
    SimTruth,
    build_beta_row,
    build_regressed_coeffs,
    simulate,
    simulate_nonregressed,
    simulate_regressed,
)

__version__ = "0.1.0"
