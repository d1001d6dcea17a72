"""Multi-agent answering pipeline: schema selection, question-type detection,
decomposition, and execution-guided SQL refinement."""

from .pipeline import (
    AgentConfig,
    Detection,
    EmptyDecomposition,
    Session,
    SubStep,
    TurnOutcome,
    UnparseableDetection,
    decompose,
    detect_question,
    new_session,
    refine,
    run_benchmark,
    run_turn,
    select_schema,
    trace_signature,
)

__all__ = [
    "AgentConfig",
    "Detection",
    "EmptyDecomposition",
    "Session",
    "SubStep",
    "TurnOutcome",
    "UnparseableDetection",
    "decompose",
    "detect_question",
    "new_session",
    "refine",
    "run_benchmark",
    "run_turn",
    "select_schema",
    "trace_signature",
]
