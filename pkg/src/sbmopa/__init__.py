"""Policy-constrained delta-SBM efficiency assessment with ordinal priority weights."""

from .delta_sbm import DmuPanel, VariableWeights, assess, default_weights, solve_dual
from .hybrid import PolicyRankingSet, assess_scenario, solve_hybrid
from .opa import RankingInstance, solve_opa
from .pipeline import Report, RunConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "DmuPanel",
    "PolicyRankingSet",
    "RankingInstance",
    "Report",
    "RunConfig",
    "VariableWeights",
    "assess",
    "assess_scenario",
    "default_weights",
    "run_pipeline",
    "solve_dual",
    "solve_hybrid",
    "solve_opa",
]
