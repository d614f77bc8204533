"""Structured cognitive loop: proposal-only cognition, external typed memory,
guarded execution control, and auditable hash-chained traces, with scenario
generators and metrics for desk-scale evaluation."""

from .actions import ToolCall, ToolRegistry, ToolResult, ToolSpec, default_registry
from .cognition import (
    AdapterPolicy,
    Assertion,
    FaultModel,
    FaultyPolicy,
    OraclePolicy,
    Proposal,
)
from .control import Controller, Decision, DedupKey, TerminationStatus
from .loop import AgentConfig, EpisodeOutcome, Trace, TraceEvent, replay, run_episode, verify_trace
from .memory import (
    EpisodeMemory,
    MemPath,
    MemRecord,
    MemSnapshot,
    MemoryStore,
    StateView,
    Timestamp,
)
from .metrics import EpisodeScores, SuiteReport, aggregate, score_episode
from .scenarios import EpisodeSpec, generate_episode, oracle_outcome
from .suite import RunManifest, run_suite

__version__ = "0.1.0"
