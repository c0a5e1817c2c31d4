"""Fenchel dual gradient methods for constrained, strongly convex
multi-agent optimization over time-varying undirected networks, with
baselines and a numerical certification layer."""

from .errors import (CertificationUnavailable, InfeasibleWindow,
                     InvalidConfig, OracleFailure)
from .graphs import (GraphSequence, GraphSnapshot, WeightMatrix,
                     algebraic_connectivity, generate_sequence,
                     laplacian_weights, max_degree, metropolis_weights,
                     read_sequence, spectral_radius, verify_b_connectivity,
                     write_sequence)
from .oracle import (LocalProblem, ProblemInstance, conjugate_argmax,
                     conjugate_value, generate_instance, objective_value,
                     read_instance, write_instance)
from .solver import (MetricsRecord, RunResult, SolverState, StepSizePolicy,
                     compute_delta, constant_policy, consensus_projection,
                     default_policy, dual_value, feasibility_gap, init_state,
                     run, step, write_csv)
from .baselines import BaselineConfig, diging_step, mixing_matrix, subgrad_step
from .certify import (CertificationReport, ReferenceSolution, TheoryConstants,
                      check_rate_bounds, dual_norm_bound,
                      estimate_dual_optimum, solve_centralized,
                      theory_constants)

__version__ = "0.1.0"
