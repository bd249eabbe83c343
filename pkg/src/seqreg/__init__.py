"""Elastic-net and l1 Tikhonov regularization in truncated sequence space.

A numpy library for ill-posed linear operator equations A x = y with
quasi-sparse solutions: penalized solvers with optimality certificates,
three a-posteriori regularization-parameter choice rules (two-sided and
sequential discrepancy, adapted Lepskii balancing), and a smoothness
calculus (distance and index functions) that predicts and verifies
convergence rates on synthetic benchmarks.
"""

from .seq_core import (
    DenseOperator,
    DiagonalOperator,
    LinearOperator,
    Representers,
    StackedOperator,
    as_vector,
    norm,
    op_norm_estimate,
    operator_from_json,
    operator_hash,
    representer_norms,
)
from .solvers import (
    OptimalityReport,
    PenaltyConfig,
    SolveResult,
    certify_optimality,
    diagonal_reference_solution,
    kkt_residual,
    objective_value,
    prox_elastic_net,
    soft_threshold,
    solve_elastic_net,
    solve_l1,
    solve_l2,
    solve_penalized,
)

__version__ = "0.1.0"
