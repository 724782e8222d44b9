"""Plan proposers, prompts and the verifier loop that produce guide plans."""

from .backends import BackendError, ConstantBackend, HttpBackend, OracleBackend, ScriptedBackend, grid_shortest_path
from .loop import GuidePlan, LoopBudget, Transcript, direct_plan, hierarchical_score, verified_plan
from .prompts import (
    Abstraction,
    Feedback,
    ParseError,
    PromptBundle,
    build_back_prompt,
    build_direct_prompt,
    build_step_prompt,
    parse_response,
)
from .verifier import Feasibility, feasible_lowlevel_actions, symbolic_reason

__all__ = [
    "Abstraction",
    "BackendError",
    "ConstantBackend",
    "Feasibility",
    "Feedback",
    "GuidePlan",
    "HttpBackend",
    "LoopBudget",
    "OracleBackend",
    "ParseError",
    "PromptBundle",
    "ScriptedBackend",
    "Transcript",
    "build_back_prompt",
    "build_direct_prompt",
    "build_step_prompt",
    "direct_plan",
    "feasible_lowlevel_actions",
    "grid_shortest_path",
    "hierarchical_score",
    "parse_response",
    "symbolic_reason",
    "verified_plan",
]
