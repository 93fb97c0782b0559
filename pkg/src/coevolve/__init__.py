"""Ground-truth-free co-evolution of candidate programs and self-generated unit tests."""
from .consensus import ERR, observed_compatible, pair_agreement, select_final, select_from_signatures
from .core import (
    CodeCandidate,
    EvalTest,
    ExecutionMatrix,
    PassStats,
    Problem,
    Provenance,
    UnitTest,
    bon_tie_set,
    compute_pass_stats,
    is_saturated,
    non_trivial_best_ut,
    non_trivial_worst_ut,
)
from .llm import Gateway, OpenAIChatProvider, ScriptedProvider
from .runner import RunConfig, RunResult, compute_metrics, emit_run_log, load_problems, run_pipeline
from .sandbox import ExecLimits, Executor, normalize_output, run_candidate

__version__ = "0.1.0"
