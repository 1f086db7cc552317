"""Numerical laboratory for gradient descent on asymmetric low-rank
factorization: exact update rules, proof-quantity diagnostics, closed-form
flow oracles, randomized property checks, and phase/rate measurements."""

from . import backend
from .problem import (
    DEFAULT_C,
    InitSpec,
    ProblemInstance,
    assemble_full_sigma,
    init_factors,
    make_instance,
    reduce_to_diagonal,
    theory_epsilon,
    theory_eta,
    verify_init_bounds,
)
from .dynamics import (
    CSV_COLUMNS,
    DiagnosticsRecord,
    FactorState,
    SymmetrizedView,
    Trajectory,
    ab_step,
    desymmetrize,
    diagnostics,
    gd_step_blocks,
    gd_step_full,
    p_step_residual,
    perturbation_terms,
    regularized_gd_step,
    run_trajectory,
    symmetrize,
)
from .flow_oracle import (
    ClosedFormInputs,
    FlowState,
    closed_form_P,
    closed_form_S,
    integrate_flow,
    invariance_drift,
    magical_identity_residual,
    rank1_solution,
)
from .phases import PhaseReport, detect_phases, fit_decay_rate, fit_growth_rate, total_time_scaling
from .verification import (
    ConditionReport,
    LemmaParams,
    check_B_recursion,
    check_lemma_P,
    check_lemma_S,
    check_stage1_conditions,
    check_stage2_conditions,
    sweep_lemma_P,
    sweep_lemma_S,
)

__version__ = "0.1.0"
