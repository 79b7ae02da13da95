"""fracdrift: spectral and particle solvers for fractional diffusion with a
Calderon-Zygmund drift, plus the probes that cross-validate them."""

from .errors import (
    ConfigurationError,
    DivergenceError,
    FracdriftError,
    LineageError,
    ParameterError,
    UnsupportedKernelForm,
)
from .fields import (
    Field,
    GridSpec,
    SpectralField,
    field_from_function,
    lp_norm,
    mass,
    mean,
    zero_field,
)
from .kernels import (
    CZKernel,
    cz_apply,
    cz_apply_pv,
    hilbert_kernel,
    kernel_from_name,
    lipschitz_probe,
    operator_norm_probe,
    periodized_hilbert_pointwise,
    riesz_kernel,
    smooth_multiplier_kernel,
    zero_kernel,
)
from .metrics import (
    DistanceReport,
    contraction_diagnostic,
    coupled_path_distance,
    ensemble_distance,
    exact_w1_slice,
    lp_density_distance,
)
from .mild import (
    EtaEstimate,
    FieldTrajectory,
    LocalExistenceCert,
    TestFunction,
    duhamel_bilinear,
    eta_estimate,
    free_evolution,
    local_horizon,
    picard_solve,
    traj_norm,
    weak_residual,
)
from .particles import (
    NoiseBundle,
    ParticleEnsemble,
    SimConfig,
    density_from_ensemble,
    drift_eval,
    make_noise_bundle,
    picard_map,
    picard_processes,
    sample_initial,
    sample_stable,
)
from .spectral import (
    StableParams,
    decay_curve,
    decay_rate_probe,
    frac_laplacian,
    from_spectral,
    jump_normalization,
    semigroup_apply,
    semigroup_gradient,
    theoretical_decay_slope,
    to_spectral,
)

__version__ = "0.1.0"
