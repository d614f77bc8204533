"""The agent cycle: retrieve, propose, decide, act, update memory, check stop.

Every phase emits a hash-chained trace event, so a finished episode is a
tamper-evident log that replays to the exact final memory snapshot. One
cycle may execute several approved calls (an observation batch approved
together, or a deferred follow-up approved after its gate lands), each
paired with its own approval in the same cycle.

Ablations are plain configuration: `memory_enabled=False` swaps in the
windowed overwrite store, `control_enabled=False` turns the controller
into a rubber stamp.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .actions import (
    OBSERVATION_TOOLS,
    EpisodeEnvironment,
    ToolCall,
    ToolRegistry,
    default_registry,
    execute,
)
from .canonical import GENESIS_HASH, canonical_json, content_hash, sha256_hex, stream_rng
from .cognition import (
    DIRECTIVES_VERSION,
    META_DIRECTIVES,
    FaultModel,
    Proposal,
    make_policy,
)
from .control import (
    Controller,
    Decision,
    GUARD_BUDGET,
    TerminationStatus,
    current_epoch,
)
from .memory import EpisodeMemory, MemPath, MemRecord, MemSnapshot, MemoryStore
from .scenarios import EpisodeSpec, build_goal_predicate

PHASES = ("init", "retrieve", "propose", "decide", "act", "mem_write", "snapshot", "terminate")

_PHASE_CHAR = {
    "init": "i",
    "retrieve": "r",
    "propose": "p",
    "decide": "d",
    "act": "a",
    "mem_write": "m",
    "snapshot": "s",
    "terminate": "t",
}
_CYCLE0_PATTERN = re.compile(r"^im*st?$")
_CYCLE_PATTERN = re.compile(r"^rpm*dm*(am*)*st?$")


class ConfigurationError(RuntimeError):
    """Episode cannot start: unknown tool, bad config. Raised before cycle 1."""


class TraceTamperError(ValueError):
    """Hash chain broken; `index` names the first bad event."""

    def __init__(self, index: int, message: str) -> None:
        super().__init__(f"event {index}: {message}")
        self.index = index


class TraceStructureError(TraceTamperError):
    """Trace truncated or phases out of loop order."""


class ReplayMismatchError(ValueError):
    """Replayed memory does not reproduce the recorded final snapshot hash."""


@dataclass(frozen=True)
class TraceEvent:
    episode_id: str
    cycle: int
    phase: str
    payload: dict[str, Any]
    prev_hash: str
    hash: str

    @staticmethod
    def compute_hash(
        episode_id: str, cycle: int, phase: str, payload: dict[str, Any], prev_hash: str
    ) -> str:
        body = canonical_json(
            {"episode_id": episode_id, "cycle": cycle, "phase": phase, "payload": payload}
        )
        return sha256_hex(prev_hash + body)

    def to_canonical(self) -> dict[str, Any]:
        return {
            "episode_id": self.episode_id,
            "cycle": self.cycle,
            "phase": self.phase,
            "payload": self.payload,
            "prev_hash": self.prev_hash,
            "hash": self.hash,
        }

    @classmethod
    def from_canonical(cls, data: dict[str, Any]) -> "TraceEvent":
        return cls(
            episode_id=data["episode_id"],
            cycle=data["cycle"],
            phase=data["phase"],
            payload=data["payload"],
            prev_hash=data["prev_hash"],
            hash=data["hash"],
        )


@dataclass(frozen=True)
class EpisodeOutcome:
    terminated_by: str
    final_snapshot_hash: str
    executed_calls: tuple[tuple[str, tuple[str, ...], str], ...]
    artifacts: tuple[str, ...]
    cycles_used: int

    def to_canonical(self) -> dict[str, Any]:
        return {
            "terminated_by": self.terminated_by,
            "final_snapshot_hash": self.final_snapshot_hash,
            "executed_calls": [[t, list(a), o] for t, a, o in self.executed_calls],
            "artifacts": list(self.artifacts),
            "cycles_used": self.cycles_used,
        }

    @classmethod
    def from_canonical(cls, data: dict[str, Any]) -> "EpisodeOutcome":
        return cls(
            terminated_by=data["terminated_by"],
            final_snapshot_hash=data["final_snapshot_hash"],
            executed_calls=tuple(
                (t, tuple(a), o) for t, a, o in data["executed_calls"]
            ),
            artifacts=tuple(data["artifacts"]),
            cycles_used=data["cycles_used"],
        )


@dataclass
class Trace:
    episode_id: str
    events: list[TraceEvent] = field(default_factory=list)
    outcome: EpisodeOutcome | None = None

    def to_lines(self) -> list[str]:
        lines = [canonical_json(e.to_canonical()) for e in self.events]
        if self.outcome is not None:
            lines.append(canonical_json({"outcome": self.outcome.to_canonical()}))
        return lines

    @classmethod
    def from_lines(cls, lines: list[str]) -> "Trace":
        import json

        events: list[TraceEvent] = []
        outcome: EpisodeOutcome | None = None
        for line in lines:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if "outcome" in data and "phase" not in data:
                outcome = EpisodeOutcome.from_canonical(data["outcome"])
            else:
                events.append(TraceEvent.from_canonical(data))
        episode_id = events[0].episode_id if events else ""
        return cls(episode_id=episode_id, events=events, outcome=outcome)

    def write_file(self, path) -> None:
        from pathlib import Path

        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def read_file(cls, path) -> "Trace":
        from pathlib import Path

        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())


@dataclass(frozen=True)
class AgentConfig:
    """Loop configuration; the memory/control toggles span the ablation grid."""

    memory_enabled: bool = True
    control_enabled: bool = True
    cognition: str = "oracle"  # oracle | faulty | adapter
    fault_model: FaultModel = field(default_factory=FaultModel)
    budget: int = 20
    confidence_threshold: float = 0.99
    window_size: int = 2
    transient_failure_rate: float = 0.0

    @property
    def system_name(self) -> str:
        if self.memory_enabled and self.control_enabled:
            return "scl"
        if self.control_enabled:
            return "no-mem"
        if self.memory_enabled:
            return "no-control"
        return "none"

    @classmethod
    def from_system(cls, system: str, **kwargs: Any) -> "AgentConfig":
        toggles = {
            "scl": (True, True),
            "no-mem": (False, True),
            "no-control": (True, False),
            "none": (False, False),
        }
        if system not in toggles:
            raise ConfigurationError(f"unknown system {system!r}")
        memory_enabled, control_enabled = toggles[system]
        return cls(memory_enabled=memory_enabled, control_enabled=control_enabled, **kwargs)

    def to_canonical(self) -> dict[str, Any]:
        return {
            "memory_enabled": self.memory_enabled,
            "control_enabled": self.control_enabled,
            "cognition": self.cognition,
            "fault_model": self.fault_model.to_canonical(),
            "budget": self.budget,
            "confidence_threshold": self.confidence_threshold,
            "window_size": self.window_size,
            "transient_failure_rate": self.transient_failure_rate,
        }


class _EpisodeRun:
    def __init__(
        self,
        spec: EpisodeSpec,
        config: AgentConfig,
        run_seed: int,
        registry: ToolRegistry,
        store: MemoryStore | None,
        transport: Any,
    ) -> None:
        self.spec = spec
        self.config = config
        self.run_seed = run_seed
        self.registry = registry
        self.trace = Trace(episode_id=spec.episode_id)
        self._prev_hash = GENESIS_HASH
        self.cycle = 0
        self.acts: list[tuple[str, tuple[str, ...], str]] = []
        self.artifacts: list[str] = []
        self.final_snapshot_hash = GENESIS_HASH

        for tool in spec.required_tools():
            if tool not in registry:
                self.emit("init", {"error": f"tool {tool!r} not registered"})
                raise ConfigurationError(f"tool {tool!r} not registered", )

        window = None if config.memory_enabled else config.window_size
        if store is not None:
            self.memory = store.create_episode(spec.episode_id, on_write=self._on_write, window=window)
        else:
            self.memory = EpisodeMemory(spec.episode_id, on_write=self._on_write, window=window)

        ground = spec.ground_truth
        self.env = EpisodeEnvironment(
            spec.episode_id,
            spec_seed=spec.seed,
            run_seed=run_seed,
            temps=ground.get("temps"),
            contacts=ground.get("contacts"),
            scores=ground.get("scores"),
            confirmations=ground.get("confirmations"),
            noise_bound=spec.noise_bound,
            transient_rate=config.transient_failure_rate,
        )
        self.policy = make_policy(
            spec,
            config.cognition,
            config.fault_model,
            stream_rng("cognition", run_seed, spec.episode_id),
            transport=transport,
        )
        self.controller = Controller(
            build_goal_predicate(spec),
            control_enabled=config.control_enabled,
            budget=config.budget,
            confidence_threshold=config.confidence_threshold,
        )

    # -- trace plumbing ---------------------------------------------------------

    def emit(self, phase: str, payload: dict[str, Any]) -> None:
        digest = TraceEvent.compute_hash(
            self.spec.episode_id, self.cycle, phase, payload, self._prev_hash
        )
        event = TraceEvent(
            episode_id=self.spec.episode_id,
            cycle=self.cycle,
            phase=phase,
            payload=payload,
            prev_hash=self._prev_hash,
            hash=digest,
        )
        self.trace.events.append(event)
        self._prev_hash = digest

    def _on_write(self, record: MemRecord) -> None:
        self.emit("mem_write", record.to_canonical())

    def write(self, path: str, kind: str, value: Any, source: str) -> None:
        self.memory.write(
            MemRecord(
                path=MemPath.parse(path),
                kind=kind,
                value=value,
                source=source,
                timestamp=self.memory.next_timestamp(self.cycle),
            )
        )

    def _snapshot(self) -> None:
        snap = self.memory.snapshot(self.cycle)
        self.final_snapshot_hash = snap.content_hash
        self.emit("snapshot", {"cycle": self.cycle, "content_hash": snap.content_hash})

    def _write_termination(self, status: TerminationStatus) -> None:
        value: dict[str, Any] = {"ready": status.ready}
        if status.ready:
            value["guard"] = status.guard
        self.write("termination", "termination", value, "control")

    def _finish(self, status: TerminationStatus) -> EpisodeOutcome:
        self.emit("terminate", status.to_canonical())
        outcome = EpisodeOutcome(
            terminated_by=status.guard,
            final_snapshot_hash=self.final_snapshot_hash,
            executed_calls=tuple(self.acts),
            artifacts=tuple(self.artifacts),
            cycles_used=self.cycle,
        )
        self.trace.outcome = outcome
        return outcome

    # -- the loop -----------------------------------------------------------------

    def run(self) -> tuple[EpisodeOutcome, Trace]:
        self.emit(
            "init",
            {
                "episode_id": self.spec.episode_id,
                "spec_hash": self.spec.spec_hash,
                "config": self.config.to_canonical(),
                "run_seed": self.run_seed,
                "directives_version": DIRECTIVES_VERSION,
                "directives_hash": sha256_hex(META_DIRECTIVES),
            },
        )
        self.write("goal", "goal", self.spec.goal_text, "init")
        self.write("constraints", "constraint", self.spec.constraints, "init")
        self.write("termination", "termination", {"ready": False}, "control")
        self._snapshot()
        if self.config.budget <= 0:
            return self._finish(TerminationStatus(True, GUARD_BUDGET)), self.trace

        while True:
            self.cycle += 1
            view = self.memory.state_view()
            self.emit(
                "retrieve",
                {"cycle": self.cycle, "state_hash": content_hash(view.to_canonical())},
            )
            proposal = self.policy.propose(view, META_DIRECTIVES)
            self.emit("propose", proposal.to_canonical())
            if proposal.diagnostic is not None:
                index = self.memory.count("failures")
                self.write(
                    f"failures.{index}",
                    "failure_event",
                    {"name": "cognition", "args": [], "error": proposal.diagnostic},
                    "cognition",
                )
            decision = self.controller.evaluate(proposal, view, self.cycle)
            self.emit("decide", decision.to_canonical())

            if decision.termination is not None:
                self._write_termination(decision.termination)
                self._snapshot()
                return self._finish(decision.termination), self.trace

            if decision.verdict == "approve":
                for assertion in proposal.assertions:
                    index = self.memory.count("judgments")
                    self.write(
                        f"judgments.{index}",
                        "judgment",
                        {"proposition": assertion.claim, "evidence": [assertion.evidence]},
                        "cognition",
                    )
            self._write_decision_notes(decision)
            if decision.verdict == "approve":
                epoch = current_epoch(view)
                for call in decision.approved_calls:
                    self._execute_call(call, epoch)

            status = self.controller.check_termination(self.memory.state_view(), self.cycle)
            self._write_termination(status)
            self._snapshot()
            if status.ready:
                return self._finish(status), self.trace

    def _write_decision_notes(self, decision: Decision) -> None:
        for note in decision.notes:
            category = note["category"]
            index = self.memory.count(category)
            kind = "pending_action" if category == "pending" else "note"
            self.write(f"{category}.{index}", kind, note["value"], "control")

    def _execute_call(self, call: ToolCall, epoch: int) -> None:
        result = execute(call, self.env, self.registry)
        payload = result.to_canonical()
        payload["epoch"] = epoch
        self.emit("act", payload)
        self.acts.append((call.tool, call.args, result.outcome))
        if result.outcome == "ok":
            for key in ("artifact", "receipt"):
                if key in result.value:
                    self.artifacts.append(result.value[key])
            if call.tool in OBSERVATION_TOOLS:
                self.write(f"obs.{call.args[0]}", "observation", result.value, call.tool)
            else:
                index = self.memory.count("approved_actions")
                value = {
                    "name": call.tool,
                    "args": list(call.args),
                    "status": "executed",
                    **result.value,
                }
                self.write(f"approved_actions.{index}", "approved_action", value, call.tool)
                self._mark_pending_done(call)
        else:
            index = self.memory.count("failures")
            self.write(
                f"failures.{index}",
                "failure_event",
                {
                    "name": call.tool,
                    "args": list(call.args),
                    "error": result.error,
                    "attempts": result.attempts,
                },
                call.tool,
            )

    def _mark_pending_done(self, call: ToolCall) -> None:
        for index in range(self.memory.count("pending")):
            record = self.memory.read(f"pending.{index}")
            if record is None or not isinstance(record.value, dict):
                continue
            value = record.value
            if (
                value.get("name") == call.tool
                and value.get("args") == list(call.args)
                and value.get("status") != "done"
            ):
                self.write(
                    f"pending.{index}",
                    "pending_action",
                    {"name": call.tool, "args": list(call.args), "status": "done"},
                    "control",
                )
                return


def run_episode(
    spec: EpisodeSpec,
    config: AgentConfig,
    run_seed: int = 0,
    registry: ToolRegistry | None = None,
    store: MemoryStore | None = None,
    transport: Any = None,
) -> tuple[EpisodeOutcome, Trace]:
    """Run one episode; deterministic given (spec, config, run_seed)."""
    run = _EpisodeRun(
        spec,
        config,
        run_seed,
        registry if registry is not None else default_registry(),
        store,
        transport,
    )
    return run.run()


# -- verification and replay --------------------------------------------------------


def verify_trace(trace: Trace) -> None:
    """Full integrity check: hash chain, loop phase order, completeness, outcome."""
    prev = GENESIS_HASH
    for index, event in enumerate(trace.events):
        if event.prev_hash != prev:
            raise TraceTamperError(index, "previous-hash link broken")
        recomputed = TraceEvent.compute_hash(
            event.episode_id, event.cycle, event.phase, event.payload, event.prev_hash
        )
        if recomputed != event.hash:
            raise TraceTamperError(index, "event hash mismatch")
        prev = event.hash
    if not trace.events:
        raise TraceStructureError(0, "empty trace")
    if trace.events[-1].phase != "terminate":
        raise TraceStructureError(
            len(trace.events) - 1,
            f"truncated trace; last good event is {len(trace.events) - 1}",
        )
    _check_phase_order(trace.events)
    if trace.outcome is not None:
        recomputed_outcome = outcome_from_events(trace.events)
        if recomputed_outcome != trace.outcome:
            raise TraceStructureError(
                len(trace.events) - 1, "outcome line inconsistent with events"
            )


def _check_phase_order(events: list[TraceEvent]) -> None:
    by_cycle: dict[int, str] = {}
    order: list[int] = []
    for event in events:
        if event.cycle not in by_cycle:
            by_cycle[event.cycle] = ""
            order.append(event.cycle)
        by_cycle[event.cycle] += _PHASE_CHAR[event.phase]
    if order != sorted(order) or order[0] != 0:
        raise TraceStructureError(0, "cycles out of order")
    for cycle in order:
        pattern = _CYCLE0_PATTERN if cycle == 0 else _CYCLE_PATTERN
        if not pattern.match(by_cycle[cycle]):
            raise TraceStructureError(0, f"cycle {cycle} phases out of loop order: {by_cycle[cycle]}")
    terminates = [e for e in events if e.phase == "terminate"]
    if len(terminates) != 1 or events[-1].phase != "terminate":
        raise TraceStructureError(len(events) - 1, "terminate must appear exactly once, last")


def outcome_from_events(events: list[TraceEvent]) -> EpisodeOutcome:
    """Recompute the outcome summary from the event stream alone."""
    acts: list[tuple[str, tuple[str, ...], str]] = []
    artifacts: list[str] = []
    final_hash = GENESIS_HASH
    guard = "none"
    cycles = 0
    for event in events:
        if event.phase == "act":
            call = event.payload["call"]
            acts.append((call["tool"], tuple(call["args"]), event.payload["outcome"]))
            if event.payload["outcome"] == "ok":
                for key in ("artifact", "receipt"):
                    if key in event.payload["value"]:
                        artifacts.append(event.payload["value"][key])
        elif event.phase == "snapshot":
            final_hash = event.payload["content_hash"]
        elif event.phase == "terminate":
            guard = event.payload["guard"]
            cycles = event.cycle
    return EpisodeOutcome(
        terminated_by=guard,
        final_snapshot_hash=final_hash,
        executed_calls=tuple(acts),
        artifacts=tuple(artifacts),
        cycles_used=cycles,
    )


def replay(trace: Trace) -> MemSnapshot:
    """Fold memory writes back into a fresh store; no tool ever runs here."""
    verify_trace(trace)
    init = trace.events[0]
    config = init.payload.get("config", {})
    window = None if config.get("memory_enabled", True) else config.get("window_size", 2)
    memory = EpisodeMemory(trace.episode_id, window=window)
    last_snapshot: dict[str, Any] | None = None
    for event in trace.events:
        if event.phase == "mem_write":
            memory.write(MemRecord.from_canonical(event.payload))
        elif event.phase == "snapshot":
            last_snapshot = event.payload
    if last_snapshot is None:
        raise ReplayMismatchError("trace has no snapshot events")
    snapshot = memory.snapshot(last_snapshot["cycle"])
    if snapshot.content_hash != last_snapshot["content_hash"]:
        raise ReplayMismatchError(
            f"replayed hash {snapshot.content_hash} != recorded {last_snapshot['content_hash']}"
        )
    return snapshot
