"""Distributed AC optimal power flow with ADMM and ALADIN.

The package splits a nonlinear program into regions coupled by affine
consensus rows ``sum_i A_i x_i = 0`` and solves it with either coordination
scheme.  ``dopf.opf`` builds such problems from MATPOWER cases, and
``dopf.bench`` runs and records experiments.
"""

from .admm import (AdmmConfig, ConsensusOperator, RunResult, StallReport, admm_consensus_step,
                   admm_local_step, admm_run, detect_stall, dual_update)
from .aladin import (AladinConfig, CoordinationResult, aladin_coordination, aladin_local_step,
                     aladin_run, similarity_packs)
from .centralized import CentralizedResult, centralized_solve
from .errors import (CaseFormatError, ConvergenceError, CoordinationError, DimensionError,
                     DopfError, LocalSolveError, ModelBuildError, PoisonedEvaluationError,
                     UnsupportedFeatureError)
from .problem import (IterateState, KKTDuals, KKTResidual, PartitionedProblem, SmoothFunction,
                      Subproblem, consensus_gap, constraint_violation, estimate_duals,
                      kkt_residual, objective_value, primal_gap)
from .trace import ConvergenceTrace, IterationRecord

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig", "AladinConfig", "CaseFormatError", "CentralizedResult", "ConsensusOperator",
    "ConvergenceError", "ConvergenceTrace", "CoordinationError", "CoordinationResult",
    "DimensionError", "DopfError", "IterateState", "IterationRecord", "KKTDuals", "KKTResidual",
    "LocalSolveError", "ModelBuildError", "PartitionedProblem", "PoisonedEvaluationError",
    "RunResult", "SmoothFunction", "StallReport", "Subproblem", "UnsupportedFeatureError",
    "admm_consensus_step", "admm_local_step", "admm_run", "aladin_coordination",
    "aladin_local_step", "aladin_run", "centralized_solve", "consensus_gap",
    "constraint_violation", "detect_stall", "dual_update", "estimate_duals", "kkt_residual",
    "objective_value", "primal_gap", "similarity_packs",
]
