"""Sparse recovery with the truncated Huber penalty.

The penalty ``min(1, x**2/mu**2)`` is a bounded, continuous surrogate of the
nonzero count.  This package provides its calculus (value, filter, gradient,
prox, surrogate), exact block-coordinate solvers for the constrained and
regularized recovery models with an outer threshold-continuation loop,
reference baselines (basis pursuit, IHT, IRLS-Lp), seeded problem
generators, a benchmark harness with a CLI, and a gradient-domain extension
for signal denoising and image smoothing.
"""

from .baselines import BaselineResult, basis_pursuit, iht, irls_lp
from .bcd import (
    CardinalityExceeded,
    IndexPartition,
    SolverState,
    SurrogateBoundExceeded,
    ThConfig,
    bcd_run,
    kkt_residual_constrained,
    kkt_residual_regularized,
    partition_from_omega,
    x_update_noisefree,
    x_update_noisy,
    x_update_noisy_direct,
)
from .bench import (
    SUCCESS_RRE,
    RecoveryReport,
    SweepSpec,
    classify_failure,
    rre,
    run_sweep,
    run_trial,
    sweep_to_csv,
)
from .continuation import (
    ContinuationConfig,
    EpochRecord,
    EpochTrace,
    continuation_run,
    mu0_auto,
    mu0_gap,
    mu_next,
)
from .gradient_domain import (
    SmoothingProblem,
    SmoothResult,
    apply_gradient,
    edge_pixels,
    gradient_matrix,
    make_blocks,
    read_pgm,
    smooth_continuation,
    smooth_run,
    smooth_step_omega,
    smooth_step_x,
    write_pgm,
)
from .linalg import (
    NearSingular,
    enumerate_oracle,
    l1_min_bruteforce,
    load_matrix,
    save_matrix,
    spark_bruteforce,
    spd_solve,
    submatrix_cols,
)
from .penalty import (
    NotDifferentiableError,
    PenaltyEvaluation,
    evaluate,
    hard_filter,
    objective_regularized,
    penalty_gradient,
    penalty_scalar,
    penalty_value,
    prox,
    surrogate_objective_regularized,
    surrogate_value,
)
from .problems import (
    GenSpec,
    Problem,
    achieved_snr_db,
    gen_dct,
    gen_decaying_truth,
    gen_gaussian,
    gen_sparse_truth,
    load_problem,
    make_problem,
    observe,
    rng_stream,
    save_problem,
    sigma_for_snr,
)

__version__ = "0.1.0"
