"""Identifiability of bilinear inverse problems through lifting."""

from .bilinear_core import (
    LiftedOperator,
    Observation,
    RankOneInstance,
    SignalPair,
    adjoint_apply,
    apply_bilinear,
    apply_lifted,
    lift_from_matrices,
    lift_linear_convolution,
    transform_with_dictionaries,
)
from .null_space import (
    NullSpaceFamily,
    RankTwoElement,
    SubspacePair,
    conv_rank2_element,
    family_bernoulli,
    family_biorthogonal,
    family_convolution,
    subspace_pair,
)
from .identifiability import (
    IdentifiabilityVerdict,
    check_corollary2,
    check_sufficient_instance,
    check_universal,
    detect_ambiguity_exhaustive,
)
from .solver import (
    InfeasibleError,
    NullSpaceBasis,
    SolverConfig,
    SolverResult,
    detect_event_E2,
    kernel_basis,
    project_onto_kernel,
    solve_min_rank_near,
)

from .ensembles import EnsembleSpec, MagnitudeLaw, ValidationReport, sample, validate_assumptions
from .experiments import (
    ExperimentConfig,
    FailureCurve,
    SlopeFit,
    fit_slope,
    run_example_A,
    run_example_B,
    run_example_C,
)

__version__ = "0.1.0"
