"""Execution control: precondition guards, deduplication, termination checks.

The controller never acts; it turns proposals into decisions. Approval
requires every cited precondition to hold against the current memory view,
and a call identical to one already executed (same tool, same args, same
context epoch) is rejected as a duplicate. The dedup identity is derived
from the memory view itself - observation sources, executed action records,
and failure events - so a degraded memory degrades deduplication with it.

Termination guards, in precedence order: goal satisfied (including drained
deferrals), confidence threshold (for explicit termination proposals),
cycle budget exhausted. With control disabled, every proposal is approved
and proposed terminations pass through unguarded.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Any, Callable

from .actions import EFFECT_TOOLS, OBSERVATION_TOOLS, ToolCall
from .cognition import Proposal
from .evidence import Citation, CitationSyntaxError
from .memory import EpisodeMemory, MemPath, MemRecord, StateView, Timestamp

GUARD_GOAL = "goal_satisfied"
GUARD_CONFIDENCE = "confidence_threshold"
GUARD_BUDGET = "budget_exhausted"
GUARD_NONE = "none"

VERDICT_APPROVE = "approve"
VERDICT_DEFER = "defer"
VERDICT_QUERY = "query"
VERDICT_REJECT_DUPLICATE = "reject_duplicate"


@dataclass(frozen=True)
class TerminationStatus:
    ready: bool
    guard: str

    def to_canonical(self) -> dict[str, Any]:
        return {"ready": self.ready, "guard": self.guard}


@dataclass(frozen=True)
class DedupKey:
    tool: str
    args: tuple[str, ...]
    context_epoch: int


@dataclass(frozen=True)
class Decision:
    verdict: str
    action: ToolCall | None = None
    extra_actions: tuple[ToolCall, ...] = ()
    deferred: tuple[ToolCall, ...] = ()
    termination: TerminationStatus | None = None
    notes: tuple[dict[str, Any], ...] = ()
    guard_report: tuple[dict[str, Any], ...] = ()

    @property
    def approved_calls(self) -> tuple[ToolCall, ...]:
        if self.verdict != VERDICT_APPROVE or self.action is None:
            return ()
        return (self.action,) + self.extra_actions

    def to_canonical(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "action": self.action.to_canonical() if self.action else None,
            "extra_actions": [c.to_canonical() for c in self.extra_actions],
            "deferred": [c.to_canonical() for c in self.deferred],
            "termination": self.termination.to_canonical() if self.termination else None,
            "notes": list(self.notes),
            "guard_report": list(self.guard_report),
        }


def _context_change_timestamps(view: StateView) -> list[Timestamp]:
    stamps = [
        record.timestamp
        for key, record in view.latest.items()
        if key.startswith("notes.")
        and isinstance(record.value, dict)
        and record.value.get("event") == "context_change"
    ]
    return sorted(stamps)


def current_epoch(view: StateView) -> int:
    """Context epoch of the view: one bump per recorded context change."""
    return len(_context_change_timestamps(view))


def _epoch_at(changes: list[Timestamp], stamp: Timestamp) -> int:
    return bisect_left(changes, stamp)


def dedup_keys(view: StateView) -> set[DedupKey]:
    """Executed-call identities visible in the memory view.

    Observation results carry their producing call in (source, entity);
    side-effect executions and failures carry theirs explicitly. Each key is
    stamped with the context epoch at execution time.
    """
    changes = _context_change_timestamps(view)
    keys: set[DedupKey] = set()
    for entity, entry in view.observations.items():
        source = entry.get("source")
        if source in OBSERVATION_TOOLS:
            stamp = Timestamp.from_canonical(entry["t"])
            keys.add(DedupKey(source, (entity,), _epoch_at(changes, stamp)))
    for entry in view.approved_actions:
        if entry.get("status") == "executed" and "name" in entry:
            stamp = Timestamp.from_canonical(entry["t"])
            keys.add(DedupKey(entry["name"], tuple(entry["args"]), _epoch_at(changes, stamp)))
    for key, record in view.latest.items():
        if not key.startswith("failures."):
            continue
        value = record.value
        if isinstance(value, dict) and "name" in value and "args" in value:
            keys.add(
                DedupKey(value["name"], tuple(value["args"]), _epoch_at(changes, record.timestamp))
            )
    return keys


def register_context_change(memory: EpisodeMemory, reason: str, cycle: int) -> int:
    """Record a context change in MEM; returns the new epoch."""
    index = memory.count("notes")
    memory.write(
        MemRecord(
            path=MemPath.parse(f"notes.{index}"),
            kind="note",
            value={"event": "context_change", "reason": reason},
            source="control",
            timestamp=memory.next_timestamp(cycle),
        )
    )
    return current_epoch(memory.state_view())


def _note(text: str, event: str = "query") -> dict[str, Any]:
    return {"category": "notes", "value": {"event": event, "text": text}}


def _pending_note(call: ToolCall) -> dict[str, Any]:
    return {"category": "pending", "value": {"name": call.tool, "args": list(call.args)}}


class Controller:
    """Per-episode decision maker; stateless beyond its configuration."""

    def __init__(
        self,
        goal_predicate: Callable[[StateView], bool],
        *,
        control_enabled: bool = True,
        budget: int = 20,
        confidence_threshold: float = 0.99,
    ) -> None:
        self.goal_predicate = goal_predicate
        self.control_enabled = control_enabled
        self.budget = budget
        self.confidence_threshold = confidence_threshold

    # -- termination -----------------------------------------------------------

    def check_termination(
        self,
        view: StateView,
        cycles_done: int,
        confidence: float | None = None,
    ) -> TerminationStatus:
        """Guard precedence: goal satisfied, then confidence, then budget."""
        pending_open = any(e.get("status") != "done" for e in view.pending)
        if self.goal_predicate(view) and not pending_open:
            return TerminationStatus(True, GUARD_GOAL)
        if confidence is not None and confidence >= self.confidence_threshold:
            return TerminationStatus(True, GUARD_CONFIDENCE)
        if cycles_done >= self.budget:
            return TerminationStatus(True, GUARD_BUDGET)
        return TerminationStatus(False, GUARD_NONE)

    # -- evaluation --------------------------------------------------------------

    def evaluate(self, proposal: Proposal, view: StateView, cycles_done: int) -> Decision:
        if proposal.is_query:
            return Decision(
                verdict=VERDICT_QUERY,
                notes=(_note(proposal.diagnostic or "clarification requested"),),
            )
        try:
            citations = [Citation.parse(text) for text in proposal.because]
        except CitationSyntaxError as exc:
            return Decision(
                verdict=VERDICT_QUERY,
                notes=(_note(f"unparseable citation: {exc}"),),
            )
        guard_report = tuple(
            {"citation": c.render(), "holds": c.evaluate(view)} for c in citations
        )
        if not self.control_enabled:
            return self._rubber_stamp(proposal, view, cycles_done, guard_report)
        reason = proposal.invalid_reason()
        if reason is not None:
            return Decision(verdict=VERDICT_QUERY, notes=(_note(reason),))
        if proposal.is_terminate:
            status = self.check_termination(view, cycles_done, confidence=proposal.confidence)
            if status.ready:
                return Decision(
                    verdict=VERDICT_APPROVE, termination=status, guard_report=guard_report
                )
            return Decision(
                verdict=VERDICT_DEFER,
                notes=(_note("termination requested but no guard is satisfied", "defer"),),
                guard_report=guard_report,
            )
        if not all(entry["holds"] for entry in guard_report):
            failed = [e["citation"] for e in guard_report if not e["holds"]]
            return Decision(
                verdict=VERDICT_DEFER,
                notes=(_note(f"unsupported preconditions: {', '.join(failed)}", "defer"),),
                guard_report=guard_report,
            )
        return self._gate_calls(proposal, view, guard_report)

    def _gate_calls(
        self,
        proposal: Proposal,
        view: StateView,
        guard_report: tuple[dict[str, Any], ...],
    ) -> Decision:
        keys = dedup_keys(view)
        epoch = current_epoch(view)
        calls = proposal.calls()
        primary = calls[0]
        report = list(guard_report)
        primary_key = DedupKey(primary.tool, primary.args, epoch)
        report.append(
            {"dedup": primary.to_canonical(), "duplicate": primary_key in keys}
        )
        if primary_key in keys:
            return Decision(
                verdict=VERDICT_REJECT_DUPLICATE,
                notes=(
                    _note(
                        f"duplicate call {primary.tool}{list(primary.args)} "
                        "with no context change",
                        "reject_duplicate",
                    ),
                ),
                guard_report=tuple(report),
            )
        approved: list[ToolCall] = [primary]
        deferred: list[ToolCall] = []
        notes: list[dict[str, Any]] = []
        seen = {primary_key}
        for call in calls[1:]:
            key = DedupKey(call.tool, call.args, epoch)
            duplicate = key in keys or key in seen
            report.append({"dedup": call.to_canonical(), "duplicate": duplicate})
            if duplicate:
                notes.append(
                    _note(f"dropped duplicate follow-up {call.tool}{list(call.args)}",
                          "reject_duplicate")
                )
                continue
            seen.add(key)
            # observation batches run together; side-effect follow-ups wait
            # for the primary confirmation
            if primary.tool in OBSERVATION_TOOLS and call.tool in OBSERVATION_TOOLS:
                approved.append(call)
            else:
                deferred.append(call)
                notes.append(_pending_note(call))
        return Decision(
            verdict=VERDICT_APPROVE,
            action=approved[0],
            extra_actions=tuple(approved[1:]),
            deferred=tuple(deferred),
            notes=tuple(notes),
            guard_report=tuple(report),
        )

    def _rubber_stamp(
        self,
        proposal: Proposal,
        view: StateView,
        cycles_done: int,
        guard_report: tuple[dict[str, Any], ...],
    ) -> Decision:
        """Control-disabled ablation: approve everything, dedup off.

        A proposed termination passes through even when no guard holds;
        the resulting unguarded stop is visible to the trace auditor.
        """
        if proposal.is_terminate:
            status = self.check_termination(view, cycles_done)
            if not status.ready:
                status = TerminationStatus(True, GUARD_NONE)
            return Decision(
                verdict=VERDICT_APPROVE, termination=status, guard_report=guard_report
            )
        calls = proposal.calls()
        return Decision(
            verdict=VERDICT_APPROVE,
            action=calls[0],
            extra_actions=tuple(calls[1:]),
            guard_report=guard_report,
        )
