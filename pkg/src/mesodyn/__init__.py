"""Solvers and diagnostics for i*hbar*dK/dt = -K H - B^2 (K*)^-1."""

__version__ = "0.1.0"

from .diagnostics import (
    CriticalPointSpec,
    DiagnosticsReport,
    FluxInput,
    critical_point,
    differential_check,
    flux_distribution,
    hamiltonian_rate,
    invariant_report,
    special_diagonal_solution,
    total_hamiltonian,
)
from .errors import (
    ConfigInvalidError,
    ConvergenceWarning,
    InsufficientSamplesError,
    MesodynError,
    NearSingularError,
    NonFiniteError,
    NonSquareError,
    NotDiagonalError,
    NotHermitianGaugeError,
    NotOrthonormalError,
    NotPSDError,
    NuDoesNotDominateError,
    OutOfDomainError,
    RankDeficientError,
    RequiresConstantCoefficientsError,
    ShapeMismatchError,
    TruncationDominatesError,
    UsageError,
    ZeroImageError,
)
from .fixed_domain import (
    EvolutionState,
    FactorizedCache,
    Trajectory,
    evolve_V,
    evolve_W,
    evolve_direct,
    evolve_factorized,
    evolve_series,
    polar_init,
)
from .linalg import (
    PolarFactors,
    Pairing,
    adjoint_inverse,
    adjoint_pseudo_inverse,
    hermitian_eigendecompose,
    matrix_from_json,
    matrix_to_json,
    pairing,
    polar_decompose,
    psd_inverse,
    psd_sqrt,
    unitary_exponential,
)
from .moving_domain import (
    AmbientSpace,
    MovingSolution,
    assemble_moving_solution,
    build_moving_solution,
    coefficient_matrix_evolution,
    evolve_frame_schrodinger,
    gauge_equivalence_check,
    gauge_propagators,
    weak_residual,
)
from .scenario import (
    FieldProfile,
    HamiltonianProfile,
    ScenarioConfig,
    ValidationReport,
    integrate_b_squared,
    sample_field,
    sample_hamiltonian,
    scenario_from_json,
    scenario_to_json,
    validate_scenario,
)
