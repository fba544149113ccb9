"""Blind deconvolution of randomly modulated inputs.

Recovers an unknown filter and subspace-constrained inputs from circular
convolutions of sign-modulated signals, via spectral initialization and
regularized Wirtinger gradient descent, with a Monte-Carlo experiment
harness and a random-mask image-deblurring demo.
"""

from .signal_model import (
    CoherenceProfile,
    DimensionError,
    DomainError,
    GroundTruth,
    MeasurementSet,
    ModulationSet,
    ProblemInstance,
    SubspaceBasis,
    build_dct2_mask_subspace,
    build_dct_subspace,
    build_fourier_subspace,
    coherence_profile,
    make_instance_1d,
    sample_ground_truth,
    sample_modulations,
    synthesize_measurements,
)
from .transforms import TransformDescriptor, dft_1d, dft_2d
from .linop import (
    apply_adjoint,
    apply_forward_general,
    apply_forward_rank1,
    chaos_oracle,
    dense_measurement_oracle,
    dense_operator_matrix,
    frobenius_block_distance,
    lifted_distance,
    lifted_outer,
    operator_norm_estimate,
)
from .objective import (
    GradientPair,
    RegularizerParams,
    g0_penalty,
    grad_F,
    grad_F_via_adjoint,
    grad_G,
    loss_F,
    loss_and_grad,
    regularizer_G,
)
from .solver import (
    Initialization,
    NeighborhoodFlags,
    SolveOptions,
    SolveResult,
    coherence_projection,
    initialize,
    initialize_batch,
    neighborhood_flags,
    relative_error,
    run_gradient_descent,
    run_gradient_descent_batch,
    solve_blind,
)
from .experiments import (
    PhaseGrid,
    RipReport,
    SweepTable,
    empirical_rip_check,
    run_noise_sweep,
    run_oversampling_sweep,
    run_phase_transition,
)
from .imaging import (
    DeblurResult,
    GrayImage,
    PgmFormatError,
    deblur_demo,
    gaussian_kernel2d,
    read_pgm,
    synthetic_cell_images,
    write_pgm,
)

__version__ = "0.1.0"
