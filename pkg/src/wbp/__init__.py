"""wbp: weighted branching processes, simulated and verified.

Simulates weighted multi-type branching populations, computes their mean
(semigroup) kernels and spectral data exactly on finite type grids, and
statistically verifies martingale convergence, L^p error bounds and
L log L moment criteria on a zoo of reference models.
"""

from ._backend import BACKEND, available_backends
from .cascades import (
    CascadeLaw,
    DeterministicCascade,
    MixtureCascade,
    ScaledUniformCascade,
    UniformSplitCascade,
    cascade_martingale_mass,
)
from .certify import (
    CertificationError,
    MDCertificate,
    certify_md,
    proxy_gap_bound,
    theorem1_rhs,
    weighted_sup_norm,
)
from .finite_type import (
    MixtureFiniteTypeLaw,
    markov_chain_law,
    stationary_distribution,
    two_type_flip_law,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    RateFit,
    RunResult,
    fit_rate,
    make_model,
    run_experiment,
    run_replicates,
)
from .ifs import (
    AffineMap,
    DoobData,
    IfsLaw,
    doob_transition,
    ifs_convergence_probe,
    ifs_weighted_law,
)
from .kernel_products import KernelProductLaw, kernel_norm, kernel_product_observable
from .lineage import LineageLaw, lineage_average_increment, lineage_average_observable
from .llogl import (
    LlogLReport,
    centered_functional,
    default_rho,
    exp_1,
    hfk_partial_sums,
    liu_conditions,
    log_a,
)
from .martingale import (
    IncrementReport,
    LpErrorReport,
    MartingaleTrack,
    biggins_track,
    degeneracy_probe,
    lp_error,
    martingale_increment_test,
    track_matrix,
)
from .population import (
    AncestryUnavailableError,
    BranchingError,
    Generation,
    Individual,
    Label,
    LineageMeasure,
    PopulationCapError,
    ProgenyError,
    ReproductionLaw,
    TruncationPolicy,
    advance_generation,
    initial_generation,
    integrate,
    lineage_measure,
    pth_power_measure,
    sample_progeny,
    simulate_trajectory,
)
from .spectral import (
    BetaFit,
    MeanKernel,
    SpectralConvergenceError,
    SpectralData,
    TypeGrid,
    alpha_sequence,
    attach_alpha,
    build_mean_kernel,
    estimate_beta,
    kernel_power_apply,
    kernel_power_expect,
    power_iteration,
)
from .streams import derive_seed, derive_stream, splitmix64
from .wasserstein import wasserstein_1d

__version__ = "0.1.0"
