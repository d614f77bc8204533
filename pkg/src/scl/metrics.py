"""The five trace-derived measures, suite aggregation, and the trace auditor.

Per episode: task success (final outcome matches the ground-truth oracle and
required side effects completed), goal fidelity (weighted rubric in [0, 1]),
redundant executed calls (same tool, same args, same context epoch), memory
fidelity (the decision-forming proposal cites observations written in earlier
cycles that still match), and unsupported assertions (claims whose cited
evidence is absent or contradicted at proposal time).

Redundancy is counted twice by construction: a streaming scan inside
`score_episode` and an independent grouping recount in `recount_redundant`;
the two must always agree.

Aggregation mirrors the results-table layout: one row per system with TSR %,
mean GFS, TUE per episode, MF proportion, and hallucinations per 100 tool
calls, each with a bootstrap confidence interval over episodes.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Sequence

from .canonical import stream_rng
from .cognition import Proposal
from .control import GUARD_BUDGET, GUARD_CONFIDENCE, GUARD_GOAL, GUARD_NONE
from .evidence import Citation, CitationSyntaxError
from .loop import AgentConfig, Trace, TraceEvent, run_episode, verify_trace
from .memory import EpisodeMemory, MemRecord, StateView
from .scenarios import (
    EpisodeSpec,
    ExpectedOutcome,
    GFS_WEIGHT_DENOM,
    build_goal_predicate,
    oracle_outcome,
)

OUTCOME_TOOLS = ("book_flight", "send_email", "draft_note", "generate_image")

FAILURE_LABELS = (
    "bad_proposal",
    "wrong_decision",
    "tool_failure",
    "premature_termination",
    "budget_exhausted",
)


class ScoringRefusedError(ValueError):
    """Trace failed verification; scores would be meaningless."""


class ManifestMismatchError(ValueError):
    """Systems under comparison did not run the same episode suite."""


@dataclass(frozen=True)
class EpisodeScores:
    episode_id: str
    scenario: str
    run_seed: int
    success: bool
    gfs: float
    redundant_calls: int
    memory_faithful: bool
    unsupported_assertions: int
    tool_calls: int
    failure_label: str | None = None

    def to_canonical(self) -> dict[str, Any]:
        return {
            "episode_id": self.episode_id,
            "scenario": self.scenario,
            "run_seed": self.run_seed,
            "success": self.success,
            "gfs": self.gfs,
            "redundant_calls": self.redundant_calls,
            "memory_faithful": self.memory_faithful,
            "unsupported_assertions": self.unsupported_assertions,
            "tool_calls": self.tool_calls,
            "failure_label": self.failure_label,
        }


def _window_from_init(trace: Trace) -> int | None:
    config = trace.events[0].payload.get("config", {})
    if config.get("memory_enabled", True):
        return None
    return config.get("window_size", 2)


def _fold_walk(trace: Trace, memory: EpisodeMemory | None = None):
    """Yield (event, memory-before-event) folding memory writes along the way."""
    if memory is None:
        memory = EpisodeMemory(trace.episode_id, window=_window_from_init(trace))
    for event in trace.events:
        yield event, memory
        if event.phase == "mem_write":
            memory.write(MemRecord.from_canonical(event.payload))


def _extract_effects(view: StateView) -> set[tuple[str, str]]:
    effects: set[tuple[str, str]] = set()
    for entry in view.approved_actions:
        if entry.get("status") != "executed":
            continue
        name = entry.get("name")
        target = (entry.get("args") or [""])[0]
        if name == "book_flight" and "confirmation" in entry:
            effects.add(("confirmation", target))
        elif name == "draw_weather":
            effects.add(("draw", target))
        elif name == "send_email" and "receipt" in entry:
            effects.add(("receipt", target))
        elif name == "draft_note":
            effects.add(("note", target))
        elif name == "generate_image":
            effects.add(("image", target))
    return effects


def _extract_outcome(
    acts: list[tuple[int, str, tuple[str, ...], str]], view: StateView
) -> tuple[str, str | None]:
    """(kind, target) the episode actually produced, most decisive action first."""
    ok_by_tool: dict[str, list[tuple[str, ...]]] = {}
    for _, tool, args, outcome in acts:
        if outcome == "ok":
            ok_by_tool.setdefault(tool, []).append(args)
    if "book_flight" in ok_by_tool:
        return "book", ok_by_tool["book_flight"][-1][0]
    if "send_email" in ok_by_tool:
        return "send", ok_by_tool["send_email"][-1][0]
    if "generate_image" in ok_by_tool:
        return "image", ok_by_tool["generate_image"][-1][0]
    if "draft_note" in ok_by_tool:
        return "note", ok_by_tool["draft_note"][-1][0]
    return "none", None


def _judgment_evidence_holds(view: StateView) -> bool:
    for entry in view.judgments:
        for text in entry.get("evidence", ()):
            try:
                citation = Citation.parse(text)
            except CitationSyntaxError:
                continue
            if citation.path.startswith("obs.") and citation.evaluate(view):
                return True
    return False


def _last_message_body(acts: list[tuple[int, str, tuple[str, ...], str]]) -> str | None:
    for _, tool, args, outcome in reversed(acts):
        if outcome == "ok" and tool in ("send_email", "draft_note") and len(args) >= 2:
            return args[1]
    return None


def score_episode(trace: Trace, spec: EpisodeSpec, expected: ExpectedOutcome) -> EpisodeScores:
    """Score one verified trace against the independent expected outcome."""
    try:
        verify_trace(trace)
    except ValueError as exc:
        raise ScoringRefusedError(f"unverifiable trace: {exc}") from exc

    acts: list[tuple[int, str, tuple[str, ...], str]] = []
    seen_calls: Counter = Counter()
    redundant = 0
    unsupported = 0
    # per propose event: (cycle, proposal, obs citation facts)
    proposals: list[dict[str, Any]] = []
    terminate_approved_cycle: int | None = None

    fold_memory = EpisodeMemory(trace.episode_id, window=_window_from_init(trace))
    for event, memory in _fold_walk(trace, fold_memory):
        if event.phase == "propose":
            view = memory.state_view()
            proposal = Proposal.from_canonical(event.payload)
            obs_citations: list[dict[str, Any]] = []
            for text in proposal.because:
                if not text.startswith("obs."):
                    continue
                fact: dict[str, Any] = {"holds": False, "prior_cycle": False}
                try:
                    citation = Citation.parse(text)
                except CitationSyntaxError:
                    obs_citations.append(fact)
                    continue
                found, _, record = view.resolve_record(citation.path)
                fact["holds"] = found and citation.evaluate(view)
                fact["prior_cycle"] = (
                    record is not None and record.timestamp.cycle < event.cycle
                )
                obs_citations.append(fact)
            for assertion in proposal.assertions:
                try:
                    citation = Citation.parse(assertion.evidence)
                except CitationSyntaxError:
                    unsupported += 1
                    continue
                if not citation.evaluate(view):
                    unsupported += 1
            proposals.append(
                {"cycle": event.cycle, "proposal": proposal, "obs": obs_citations}
            )
        elif event.phase == "decide":
            if (
                event.payload.get("verdict") == "approve"
                and event.payload.get("termination") is not None
            ):
                terminate_approved_cycle = event.cycle
        elif event.phase == "act":
            call = event.payload["call"]
            key = (call["tool"], tuple(call["args"]), event.payload.get("epoch", 0))
            if seen_calls[key]:
                redundant += 1
            seen_calls[key] += 1
            acts.append((event.cycle, call["tool"], tuple(call["args"]), event.payload["outcome"]))

    final_view = fold_memory.state_view()

    kind, target = _extract_outcome(acts, final_view)
    effects = _extract_effects(final_view)
    outcome_match = kind == expected.kind and target == expected.target
    side_effects_ok = all(effect in effects for effect in expected.side_effects)
    success = outcome_match and side_effects_ok

    # decision-forming proposal: the one whose approved action produced the
    # outcome, else the approved termination proposal
    decision_entry: dict[str, Any] | None = None
    outcome_cycle: int | None = None
    for cycle, tool, args, outcome in acts:
        if outcome == "ok" and tool in OUTCOME_TOOLS:
            outcome_cycle = cycle
            break
    if outcome_cycle is not None:
        decision_entry = next(
            (p for p in proposals if p["cycle"] == outcome_cycle), None
        )
    elif terminate_approved_cycle is not None:
        decision_entry = next(
            (p for p in proposals if p["cycle"] == terminate_approved_cycle), None
        )
    memory_faithful = bool(
        decision_entry
        and decision_entry["obs"]
        and all(f["holds"] and f["prior_cycle"] for f in decision_entry["obs"])
    )

    earned = 0
    body = _last_message_body(acts)
    for item in spec.rubric:
        check = item.check["check"]
        if check == "outcome_match":
            passed = outcome_match
        elif check == "side_effects":
            passed = side_effects_ok
        elif check == "judgment_evidence":
            passed = _judgment_evidence_holds(final_view)
        elif check == "message_contains":
            passed = body is not None and item.check["token"] in body
        else:
            raise ValueError(f"unknown rubric check {check!r}")
        if passed:
            earned += item.weight_units
    gfs = earned / GFS_WEIGHT_DENOM

    label = None
    if not success:
        label = classify_failure(trace, spec)

    return EpisodeScores(
        episode_id=spec.episode_id,
        scenario=spec.scenario,
        run_seed=_run_seed_tag(trace),
        success=success,
        gfs=gfs,
        redundant_calls=redundant,
        memory_faithful=memory_faithful,
        unsupported_assertions=unsupported,
        tool_calls=len(acts),
        failure_label=label,
    )


def _run_seed_tag(trace: Trace) -> int:
    return trace.events[0].payload.get("run_seed", 0) if trace.events else 0


def recount_redundant(trace: Trace) -> int:
    """Independent redundancy recount: group executed calls by dedup identity."""
    keys = [
        (e.payload["call"]["tool"], tuple(e.payload["call"]["args"]), e.payload.get("epoch", 0))
        for e in trace.events
        if e.phase == "act"
    ]
    return sum(count - 1 for count in Counter(keys).values())


def classify_failure(trace: Trace, spec: EpisodeSpec) -> str:
    """Label a failed episode by the first loop phase that diverged.

    Unguarded stops and budget exhaustion are read off the terminate event;
    otherwise the trace is compared cycle by cycle against the reference
    oracle run of the same spec.
    """
    terminate = trace.events[-1]
    guard = terminate.payload.get("guard", GUARD_NONE)
    if guard in (GUARD_NONE, GUARD_CONFIDENCE):
        return "premature_termination"
    if guard == GUARD_BUDGET:
        return "budget_exhausted"
    if any(e.phase == "act" and e.payload["outcome"] == "failed" for e in trace.events):
        return "tool_failure"
    reference_config = AgentConfig(
        budget=trace.events[0].payload.get("config", {}).get("budget", spec.budget)
    )
    _, reference = run_episode(spec, reference_config, run_seed=0)

    def per_cycle(t: Trace, phase: str) -> dict[int, dict[str, Any]]:
        return {e.cycle: e.payload for e in t.events if e.phase == phase}

    ours_p, refs_p = per_cycle(trace, "propose"), per_cycle(reference, "propose")
    ours_d, refs_d = per_cycle(trace, "decide"), per_cycle(reference, "decide")
    for cycle in sorted(set(ours_p) | set(refs_p)):
        mine, ref = ours_p.get(cycle), refs_p.get(cycle)
        if mine != ref:
            mine_core = {k: v for k, v in (mine or {}).items() if k != "confidence"}
            ref_core = {k: v for k, v in (ref or {}).items() if k != "confidence"}
            if mine_core != ref_core:
                return "bad_proposal"
        if ours_d.get(cycle) != refs_d.get(cycle):
            return "wrong_decision"
    return "wrong_decision"


# -- guarded-execution auditor ----------------------------------------------------


def audit_guarded_execution(trace: Trace, spec: EpisodeSpec) -> list[str]:
    """Check that every execution was approved in-cycle with true guards and
    that the terminate event cites a satisfied guard. Returns findings."""
    verify_trace(trace)
    findings: list[str] = []
    config = trace.events[0].payload.get("config", {})
    budget = config.get("budget", spec.budget)
    threshold = config.get("confidence_threshold", 0.99)
    goal_done = build_goal_predicate(spec)
    approved: dict[int, list[dict[str, Any]]] = {}
    last_confidence: float | None = None

    for event, memory in _fold_walk(trace):
        if event.phase == "propose":
            last_confidence = event.payload.get("confidence")
        elif event.phase == "decide":
            payload = event.payload
            if payload.get("verdict") != "approve":
                continue
            view = memory.state_view()
            for entry in payload.get("guard_report", ()):
                if "citation" not in entry:
                    continue
                try:
                    citation = Citation.parse(entry["citation"])
                except CitationSyntaxError:
                    findings.append(f"event {event.cycle}: unparseable citation in approval")
                    continue
                if not citation.evaluate(view):
                    findings.append(
                        f"cycle {event.cycle}: approval guard {entry['citation']!r} "
                        "does not hold against the snapshot"
                    )
            if payload.get("termination") is None:
                calls = [payload["action"]] + list(payload.get("extra_actions", ()))
                approved.setdefault(event.cycle, []).extend(c for c in calls if c)
        elif event.phase == "act":
            call = event.payload["call"]
            cycle_approved = approved.get(event.cycle, [])
            if call in cycle_approved:
                cycle_approved.remove(call)
            else:
                findings.append(
                    f"cycle {event.cycle}: executed {call['tool']}{call['args']} "
                    "without a same-cycle approval"
                )
        elif event.phase == "terminate":
            guard = event.payload.get("guard", GUARD_NONE)
            view = memory.state_view()
            if guard == GUARD_GOAL:
                pending_open = any(e.get("status") != "done" for e in view.pending)
                if not goal_done(view) or pending_open:
                    findings.append("terminate cites goal_satisfied but the goal check fails")
            elif guard == GUARD_BUDGET:
                if event.cycle < budget:
                    findings.append("terminate cites budget_exhausted before the budget")
            elif guard == GUARD_CONFIDENCE:
                if last_confidence is None or last_confidence < threshold:
                    findings.append("terminate cites confidence_threshold without the confidence")
            else:
                findings.append(f"terminate cites unsatisfied guard {guard!r}")
    return findings


# -- aggregation -------------------------------------------------------------------


def _percentile(sorted_values: list[float], q: float) -> float:
    if not sorted_values:
        return 0.0
    if q <= 0:
        return float(sorted_values[0])
    if q >= 1:
        return float(sorted_values[-1])
    pos = q * (len(sorted_values) - 1)
    low = int(math.floor(pos))
    high = int(math.ceil(pos))
    if low == high:
        return float(sorted_values[low])
    weight = pos - low
    return float(sorted_values[low] * (1.0 - weight) + sorted_values[high] * weight)


def bootstrap_ci(
    values: Sequence[float],
    *,
    n_resamples: int = 1000,
    confidence: float = 0.95,
    seed: int = 17,
) -> tuple[float, float, float]:
    """(mean, ci_low, ci_high) by bootstrap resampling over episodes."""
    data = [float(v) for v in values]
    n = len(data)
    if n == 0:
        return 0.0, 0.0, 0.0
    mean = math.fsum(data) / n
    if n == 1 or n_resamples <= 0:
        return mean, mean, mean
    rng = random.Random(seed)
    means = []
    for _ in range(n_resamples):
        sample = rng.choices(data, k=n)
        means.append(math.fsum(sample) / n)
    means.sort()
    alpha = (1.0 - confidence) / 2.0
    return mean, _percentile(means, alpha), _percentile(means, 1.0 - alpha)


def bootstrap_diff_ci(
    values_a: Sequence[float],
    values_b: Sequence[float],
    *,
    n_resamples: int = 1000,
    confidence: float = 0.95,
    seed: int = 17,
) -> tuple[float, float, float]:
    """Paired bootstrap CI for mean(a) - mean(b) over the same episode list."""
    if len(values_a) != len(values_b):
        raise ValueError("paired bootstrap needs equal-length samples")
    a = [float(v) for v in values_a]
    b = [float(v) for v in values_b]
    n = len(a)
    if n == 0:
        return 0.0, 0.0, 0.0
    diff = math.fsum(a) / n - math.fsum(b) / n
    rng = random.Random(seed)
    diffs = []
    indices = range(n)
    for _ in range(n_resamples):
        sample = rng.choices(indices, k=n)
        diffs.append(
            math.fsum(a[i] for i in sample) / n - math.fsum(b[i] for i in sample) / n
        )
    diffs.sort()
    alpha = (1.0 - confidence) / 2.0
    return diff, _percentile(diffs, alpha), _percentile(diffs, 1.0 - alpha)


MEASURES = ("tsr", "gfs", "tue", "mf", "hallucinations")


@dataclass
class SuiteReport:
    rows: dict[str, dict[str, float]]
    cis: dict[str, dict[str, tuple[float, float]]]
    failure_counts: dict[str, dict[str, int]]
    episodes_per_system: int
    run_seeds: tuple[int, ...]
    manifest_hash: str

    def to_canonical(self) -> dict[str, Any]:
        return {
            "rows": self.rows,
            "cis": {
                system: {measure: list(ci) for measure, ci in per.items()}
                for system, per in self.cis.items()
            },
            "failure_counts": self.failure_counts,
            "episodes_per_system": self.episodes_per_system,
            "run_seeds": list(self.run_seeds),
            "manifest_hash": self.manifest_hash,
        }

    def render_text(self) -> str:
        header = f"{'System':<14}{'TSR%':>8}{'GFS':>8}{'TUE':>8}{'MF':>8}{'Halluc/100':>12}"
        lines = [header, "-" * len(header)]
        for system, row in self.rows.items():
            lines.append(
                f"{system:<14}{row['tsr']:>8.1f}{row['gfs']:>8.3f}"
                f"{row['tue']:>8.2f}{row['mf']:>8.3f}{row['hallucinations']:>12.2f}"
            )
        lines.append("")
        lines.append(
            f"episodes per system: {self.episodes_per_system}  "
            f"run seeds: {list(self.run_seeds)}  manifest: {self.manifest_hash[:12]}"
        )
        return "\n".join(lines)


def _measures(scores: list[EpisodeScores]) -> dict[str, float]:
    n = len(scores)
    calls = sum(s.tool_calls for s in scores)
    return {
        "tsr": 100.0 * sum(s.success for s in scores) / n,
        "gfs": math.fsum(s.gfs for s in scores) / n,
        "tue": math.fsum(s.redundant_calls for s in scores) / n,
        "mf": sum(s.memory_faithful for s in scores) / n,
        "hallucinations": (
            100.0 * sum(s.unsupported_assertions for s in scores) / calls if calls else 0.0
        ),
    }


def aggregate(
    scores_by_system: dict[str, list[EpisodeScores]],
    manifest_hashes: dict[str, str],
    *,
    n_resamples: int = 1000,
    seed: int = 17,
) -> SuiteReport:
    """Suite report over systems that ran the same manifest."""
    if not scores_by_system:
        raise ValueError("no scores to aggregate")
    hashes = set(manifest_hashes.values())
    if len(hashes) != 1 or set(manifest_hashes) != set(scores_by_system):
        raise ManifestMismatchError(
            f"systems ran different suites: { {k: v[:12] for k, v in manifest_hashes.items()} }"
        )
    rows: dict[str, dict[str, float]] = {}
    cis: dict[str, dict[str, tuple[float, float]]] = {}
    failures: dict[str, dict[str, int]] = {}
    counts = {len(scores) for scores in scores_by_system.values()}
    if 0 in counts:
        raise ValueError("a system has no scored episodes")
    for system, scores in scores_by_system.items():
        rows[system] = _measures(scores)
        rng = random.Random(seed)
        per_ci: dict[str, tuple[float, float]] = {}
        n = len(scores)
        resampled: dict[str, list[float]] = {m: [] for m in MEASURES}
        for _ in range(n_resamples):
            sample = rng.choices(scores, k=n)
            sample_measures = _measures(sample)
            for measure in MEASURES:
                resampled[measure].append(sample_measures[measure])
        alpha = 0.025
        for measure in MEASURES:
            values = sorted(resampled[measure])
            per_ci[measure] = (_percentile(values, alpha), _percentile(values, 1 - alpha))
        cis[system] = per_ci
        failures[system] = dict(
            Counter(s.failure_label for s in scores if s.failure_label is not None)
        )
    seeds = tuple(sorted({s.run_seed for scores in scores_by_system.values() for s in scores}))
    return SuiteReport(
        rows=rows,
        cis=cis,
        failure_counts=failures,
        episodes_per_system=max(counts),
        run_seeds=seeds,
        manifest_hash=next(iter(hashes)),
    )
