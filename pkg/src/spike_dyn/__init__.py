"""Two-phase learning dynamics and generalization of two-layer linear networks on spiked data."""

__version__ = "0.1.0"

from .adapted_basis import (  # noqa: E402
    AdaptedBasis,
    basis_for_dataset,
    basis_for_model,
    build_basis,
    correlation_norm,
    effective_coefficients,
    spike_basis_overlaps,
)
from .errors import (  # noqa: E402
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    DomainError,
    PhaseNotFoundError,
    SpikeDynError,
)
from .genx_error import (  # noqa: E402
    RiskModel,
    SpectrumSummary,
    empirical_min_norm_risk,
    kappa_derivative,
    kappa_ridgeless_limit,
    min_norm_estimator,
    normalized_risk,
    population_risk_of,
    ridge_estimator,
    ridge_risk,
    ridgeless_risk,
    solve_kappa,
)
from .linear_net import (  # noqa: E402
    TrainConfig,
    TrajectoryRecord,
    TwoLayerNet,
    conservation_residual,
    detect_phases,
    deviation_energy,
    gradient_step,
    init_network,
    loss,
    train,
)
from .reduced_dynamics import (  # noqa: E402
    ReducedParams,
    ReducedState,
    early_phase_magnitude,
    early_timescale,
    fixed_point,
    integrate_reduced,
    later_phase_bound,
    phase_plane_field,
    reduced_rhs,
)
from .spiked_data import (  # noqa: E402
    Dataset,
    SpikedModel,
    empirical_moments,
    input_output_correlation,
    make_model,
    population_covariance,
    sample,
)
