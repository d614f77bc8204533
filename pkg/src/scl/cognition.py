"""Proposal-producing policies: deterministic oracle, fault-injected, adapter.

Policies are pure functions of (state view, rules, explicit RNG stream) and
never execute tools or touch memory; their only output is a Proposal. The
oracle policy is the reference behavior: minimal next action, no repeats,
branch decisions on the latest observations, early stop. The faulty policy
wraps it with seeded failure modes (redundant call, forgotten observation,
premature termination, unsupported assertion). The adapter policy speaks the
external request/response contract and degrades unparseable replies into
query proposals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .actions import OBSERVATION_TOOLS, ToolCall
from .memory import StateView
from .scenarios import EpisodeSpec, build_goal_predicate

TERMINATE = "terminate"
QUERY = "query"

META_DIRECTIVES = (
    "Propose the single smallest next step that advances the goal. "
    "Do not repeat a call whose result is already recorded. "
    "Ground every proposal in memory records cited as evidence. "
    "Declare termination only when the recorded state satisfies the goal."
)
DIRECTIVES_VERSION = "1"


@dataclass(frozen=True)
class Assertion:
    """Free-text claim paired with a memory citation backing it."""

    claim: str
    evidence: str

    def to_canonical(self) -> dict[str, str]:
        return {"claim": self.claim, "evidence": self.evidence}


@dataclass(frozen=True)
class Proposal:
    propose: str  # tool name, "terminate", or "query"
    args: tuple[str, ...] = ()
    because: tuple[str, ...] = ()
    assertions: tuple[Assertion, ...] = ()
    also: tuple[ToolCall, ...] = ()
    confidence: float = 1.0
    diagnostic: str | None = None  # set when an adapter reply failed to parse

    @property
    def is_terminate(self) -> bool:
        return self.propose == TERMINATE

    @property
    def is_query(self) -> bool:
        return self.propose == QUERY

    def calls(self) -> tuple[ToolCall, ...]:
        if self.is_terminate or self.is_query:
            return ()
        return (ToolCall(self.propose, self.args),) + self.also

    def invalid_reason(self) -> str | None:
        if not self.propose:
            return "missing propose field"
        if self.is_terminate:
            heads = {text.split(".")[0].split(" ")[0] for text in self.because}
            if not self.because or not heads & {"goal", "termination"}:
                return "terminate proposal must cite goal or termination evidence"
        return None

    def to_canonical(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "propose": self.propose,
            "args": list(self.args),
            "because": list(self.because),
            "assertions": [a.to_canonical() for a in self.assertions],
            "also": [c.to_canonical() for c in self.also],
            "confidence": self.confidence,
        }
        if self.diagnostic is not None:
            data["diagnostic"] = self.diagnostic
        return data

    @classmethod
    def from_canonical(cls, data: dict[str, Any]) -> "Proposal":
        return cls(
            propose=data["propose"],
            args=tuple(data.get("args", ())),
            because=tuple(data.get("because", ())),
            assertions=tuple(
                Assertion(a["claim"], a["evidence"]) for a in data.get("assertions", ())
            ),
            also=tuple(ToolCall.from_canonical(c) for c in data.get("also", ())),
            confidence=data.get("confidence", 1.0),
            diagnostic=data.get("diagnostic"),
        )


@dataclass(frozen=True)
class FaultModel:
    """Per-proposal failure-mode probabilities, each in [0, 1]."""

    p_redundant: float = 0.0
    p_forget: float = 0.0
    p_premature: float = 0.0
    p_unsupported: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_redundant", "p_forget", "p_premature", "p_unsupported"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} out of [0,1]: {p}")

    @classmethod
    def defaults(cls) -> "FaultModel":
        return cls(p_redundant=0.3, p_forget=0.2, p_premature=0.1, p_unsupported=0.1)

    def to_canonical(self) -> dict[str, float]:
        return {
            "p_redundant": self.p_redundant,
            "p_forget": self.p_forget,
            "p_premature": self.p_premature,
            "p_unsupported": self.p_unsupported,
        }


def _query_proposal(reason: str) -> Proposal:
    return Proposal(propose=QUERY, diagnostic=reason)


def _terminate_proposal(extra: tuple[str, ...] = (), confidence: float = 1.0) -> Proposal:
    return Proposal(
        propose=TERMINATE, because=("goal exists",) + extra, confidence=confidence
    )


def _outstanding_pending(view: StateView) -> list[dict[str, Any]]:
    return [entry for entry in view.pending if entry.get("status") != "done"]


def _executed_names(view: StateView) -> dict[str, list[dict[str, Any]]]:
    by_name: dict[str, list[dict[str, Any]]] = {}
    for entry in view.approved_actions:
        if entry.get("status") == "executed":
            by_name.setdefault(entry.get("name", ""), []).append(entry)
    return by_name


class OraclePolicy:
    """Deterministic reference cognition for generated episode rules."""

    def __init__(self, spec: EpisodeSpec) -> None:
        self.spec = spec
        self.rules = spec.rules
        self._done = build_goal_predicate(spec)

    def propose(self, view: StateView, directives: str = META_DIRECTIVES) -> Proposal:
        followup = self._gated_followup(view)
        if followup is not None:
            return followup
        if self._done(view) and not _outstanding_pending(view):
            return _terminate_proposal()
        kind = self.rules["kind"]
        if kind == "sequential":
            return self._sequential(view)
        if kind == "gather":
            return self._gather(view)
        if kind == "email":
            return self._email(view)
        if kind == "gated_image":
            return self._gated_image(view)
        return _query_proposal(f"no policy for rule kind {kind!r}")

    # a deferred follow-up becomes proposable once the primary confirmation landed
    def _gated_followup(self, view: StateView) -> Proposal | None:
        pending = _outstanding_pending(view)
        if not pending:
            return None
        for idx, entry in enumerate(view.approved_actions):
            if "confirmation" in entry:
                head = pending[0]
                return Proposal(
                    propose=head["name"],
                    args=tuple(head["args"]),
                    because=(f"approved_actions.{idx}.confirmation exists",),
                )
        return None

    def _sequential(self, view: StateView) -> Proposal:
        checks = self.rules["checks"]
        citations: list[str] = []
        selected: str | None = None
        assertion: Assertion | None = None
        for city, threshold in checks:
            entry = view.observations.get(city)
            if entry is None or "temp_f" not in entry:
                return Proposal("get_weather", (city,), because=("goal exists",))
            temp = entry["temp_f"]
            if temp > threshold:
                selected = city
                citations.append(f"obs.{city}.temp_f>={threshold}")
                assertion = Assertion(
                    f"{city} is the first listed city over its threshold",
                    f"obs.{city}.temp_f={temp}",
                )
                break
            citations.append(f"obs.{city}.temp_f<={threshold}")
        if selected is None:
            selected = self.rules["default"]
            last_city, _ = checks[-1]
            assertion = Assertion(
                f"No checked city exceeds its threshold; defaulting to {selected}",
                f"obs.{last_city}.temp_f={view.observations[last_city]['temp_f']}",
            )
        executed = _executed_names(view)
        if any(e.get("args") == [selected] for e in executed.get("book_flight", ())):
            # booked already; only the optional drawing can be left
            return Proposal(
                "draw_weather", (selected,),
                because=(f"obs.{selected}.temp_f exists",)
                if selected in view.observations
                else ("goal exists",),
            )
        also = (
            (ToolCall("draw_weather", (selected,)),)
            if self.rules.get("draw_followup")
            else ()
        )
        return Proposal(
            "book_flight", (selected,), because=tuple(citations),
            assertions=(assertion,), also=also,
        )

    def _gather(self, view: StateView) -> Proposal:
        cities = self.rules["cities"]
        threshold = self.rules["threshold"]
        missing = [
            c for c in cities
            if c not in view.observations or "temp_f" not in view.observations[c]
        ]
        if missing:
            extra = tuple(ToolCall("get_weather", (c,)) for c in missing[1:])
            return Proposal(
                "get_weather", (missing[0],), because=("goal exists",), also=extra
            )
        temps = {c: view.observations[c]["temp_f"] for c in cities}
        hot = {c: t for c, t in temps.items() if t > threshold}
        warmest = max(cities, key=lambda c: (temps[c], c))
        if not hot and self.rules["default"] is None:
            requester = self.rules["requester"]
            body = (
                f"Hello {requester},\n\nNo listed city is above {threshold}F, "
                f"so the plan is to stay home.\n\nRegards,\nthe agent"
            )
            return Proposal(
                "draft_note",
                (requester, body),
                because=tuple(f"obs.{c}.temp_f<={threshold}" for c in cities),
                assertions=(
                    Assertion("No listed city is hot", f"obs.{warmest}.temp_f={temps[warmest]}"),
                ),
            )
        if not hot:
            selected = self.rules["default"]
            claim = f"No listed city is hot; defaulting to {selected}"
        elif len(hot) == 1:
            selected = next(iter(hot))
            claim = f"Only {selected} is hot"
        elif self.rules["select"] == "preferred" and self.rules["preferred"] in hot:
            selected = self.rules["preferred"]
            claim = f"{len(hot)} cities are hot; the rule prefers {selected}"
        else:
            selected = max(hot, key=lambda c: (hot[c], c))
            claim = f"{len(hot)} cities are hot; {selected} is the warmest"
        because = [f"obs.{c}.temp_f>={threshold}" for c in cities if c in hot]
        because += [f"obs.{c}.temp_f<={threshold}" for c in cities if c not in hot]
        evidence_city = selected if selected in hot else warmest
        assertion = Assertion(claim, f"obs.{evidence_city}.temp_f={temps[evidence_city]}")
        executed = _executed_names(view)
        if not any(e.get("args") == [selected] for e in executed.get("book_flight", ())):
            also = (
                (ToolCall("draw_weather", (warmest,)),)
                if self.rules["draw_followup"]
                else ()
            )
            return Proposal(
                "book_flight", (selected,), because=tuple(because),
                assertions=(assertion,), also=also,
            )
        # booked already; only the optional drawing can be left
        return Proposal(
            "draw_weather", (warmest,),
            because=(f"obs.{warmest}.temp_f={temps[warmest]}",),
        )

    def _email(self, view: StateView) -> Proposal:
        rules = self.rules
        recipient = rules["recipient"]
        entry = view.observations.get(recipient)
        if entry is None or "found" not in entry:
            return Proposal("lookup_contact", (recipient,), because=("goal exists",))
        first_name = recipient.split(" ")[0]
        if entry["found"]:
            body = (
                f"{rules['greeting']} {first_name},\n\n"
                f"Update on {rules['topic']}: the requested details are ready for review.\n\n"
                f"{rules['signoff']},\n{rules['requester']}"
            )
            return Proposal(
                "send_email",
                (recipient, body),
                because=(f"obs.{recipient}.found==true",),
                assertions=(
                    Assertion(
                        f"{recipient} is in the contact store",
                        f"obs.{recipient}.found=true",
                    ),
                ),
            )
        requester = rules["requester"]
        body = (
            f"{rules['greeting']} {requester},\n\n"
            f"Could not send the {rules['topic']} email: {recipient} has no entry "
            f"in the contact store.\n\n{rules['signoff']},\nthe agent"
        )
        return Proposal(
            "draft_note",
            (requester, body),
            because=(f"obs.{recipient}.found==false",),
            assertions=(
                Assertion(
                    f"{recipient} is absent from the contact store",
                    f"obs.{recipient}.found=false",
                ),
            ),
        )

    def _gated_image(self, view: StateView) -> Proposal:
        rules = self.rules
        source = rules["source"]
        entry = view.observations.get(source)
        if entry is None or "score" not in entry:
            return Proposal("compute_score", (source,), because=("goal exists",))
        score = entry["score"]
        threshold = rules["threshold"]
        if score > threshold:
            return Proposal(
                "generate_image",
                (rules["subject"],),
                because=(f"obs.{source}.score>={threshold}",),
                assertions=(
                    Assertion(
                        f"Score {score} from {source} clears the threshold {threshold}",
                        f"obs.{source}.score={score}",
                    ),
                ),
            )
        if rules["fallback"] == "note":
            requester = rules["requester"]
            body = (
                f"Hello {requester},\n\nThe {source} score {score} is not above "
                f"{threshold}, so no image was generated.\n\nRegards,\nthe agent"
            )
            return Proposal(
                "draft_note",
                (requester, body),
                because=(f"obs.{source}.score<={threshold}",),
                assertions=(
                    Assertion(
                        f"Score {score} from {source} is below the threshold {threshold}",
                        f"obs.{source}.score={score}",
                    ),
                ),
            )
        return _terminate_proposal(extra=(f"obs.{source}.score<={threshold}",))


class FaultyPolicy:
    """Oracle behavior with seeded failure modes layered on top.

    The four fault draws are consumed every call in a fixed order, so the
    proposal sequence is a pure function of (state sequence, fault model,
    RNG seed). Only faulted proposals carry the reduced 0.9 confidence; with
    all probabilities at zero the output is bitwise identical to the oracle.
    """

    def __init__(self, spec: EpisodeSpec, fault_model: FaultModel, rng) -> None:
        self.fault_model = fault_model
        self._oracle = OraclePolicy(spec)
        self._rng = rng

    def propose(self, view: StateView, directives: str = META_DIRECTIVES) -> Proposal:
        draws = [self._rng.random() for _ in range(4)]
        fm = self.fault_model
        if draws[0] < fm.p_redundant:
            call = self._pick_executed(view)
            if call is not None:
                return Proposal(
                    call.tool, call.args, because=("goal exists",), confidence=0.9
                )
        if draws[1] < fm.p_forget:
            call = self._pick_observed_query(view)
            if call is not None:
                return Proposal(
                    call.tool, call.args, because=("goal exists",), confidence=0.9
                )
        if draws[2] < fm.p_premature:
            return _terminate_proposal(confidence=0.9)
        proposal = self._oracle.propose(view, directives)
        if draws[3] < fm.p_unsupported:
            bogus = Assertion(
                "Confirmed a remote reading for Atlantis",
                "obs.Atlantis.temp_f=70",
            )
            return replace(
                proposal, assertions=proposal.assertions + (bogus,), confidence=0.9
            )
        return proposal

    def _pick_executed(self, view: StateView) -> ToolCall | None:
        candidates = self._call_candidates(view)
        if not candidates:
            return None
        return candidates[self._rng.randrange(len(candidates))]

    def _pick_observed_query(self, view: StateView) -> ToolCall | None:
        candidates = sorted(
            (
                ToolCall(entry["source"], (entity,))
                for entity, entry in view.observations.items()
                if entry.get("source") in OBSERVATION_TOOLS
            ),
            key=lambda c: (c.tool, c.args),
        )
        if not candidates:
            return None
        return candidates[self._rng.randrange(len(candidates))]

    def _call_candidates(self, view: StateView) -> list[ToolCall]:
        calls = {
            ToolCall(entry["source"], (entity,))
            for entity, entry in view.observations.items()
            if entry.get("source") in OBSERVATION_TOOLS
        }
        for entry in view.approved_actions:
            if entry.get("status") == "executed":
                calls.add(ToolCall(entry["name"], tuple(entry["args"])))
        return sorted(calls, key=lambda c: (c.tool, c.args))


def parse_adapter_response(response: Any) -> Proposal:
    """Parse an external reply into a Proposal; failures become query proposals."""
    if isinstance(response, (str, bytes)):
        if not response:
            return _query_proposal("empty adapter response")
        try:
            response = json.loads(response)
        except json.JSONDecodeError as exc:
            return _query_proposal(f"adapter response is not valid JSON: {exc}")
    if not isinstance(response, dict):
        return _query_proposal("adapter response is not an object")
    if "propose" not in response or not isinstance(response["propose"], str):
        return _query_proposal("adapter response missing propose field")
    try:
        proposal = Proposal.from_canonical(response)
    except (KeyError, TypeError) as exc:
        return _query_proposal(f"malformed adapter response: {exc}")
    reason = proposal.invalid_reason()
    if reason is not None:
        return _query_proposal(reason)
    return proposal


class AdapterPolicy:
    """External-cognition contract: canonical state out, structured Proposal in."""

    def __init__(self, transport: Callable[[dict[str, Any]], Any]) -> None:
        self._transport = transport

    def propose(self, view: StateView, directives: str = META_DIRECTIVES) -> Proposal:
        request = {"state": view.to_canonical(), "directives": directives}
        try:
            response = self._transport(request)
        except Exception as exc:  # transport errors must not kill the loop
            return _query_proposal(f"adapter transport error: {exc}")
        return parse_adapter_response(response)


class OracleTransport:
    """In-process stub transport: replays oracle proposals over the wire format."""

    def __init__(self, spec: EpisodeSpec) -> None:
        self._policy = OraclePolicy(spec)

    def __call__(self, request: dict[str, Any]) -> str:
        view = StateView.from_canonical(request["state"])
        proposal = self._policy.propose(view, request.get("directives", META_DIRECTIVES))
        return json.dumps(proposal.to_canonical())


def make_policy(
    spec: EpisodeSpec,
    cognition: str,
    fault_model: FaultModel,
    rng,
    transport: Callable[[dict[str, Any]], Any] | None = None,
):
    if cognition == "oracle":
        return OraclePolicy(spec)
    if cognition == "faulty":
        return FaultyPolicy(spec, fault_model, rng)
    if cognition == "adapter":
        return AdapterPolicy(transport if transport is not None else OracleTransport(spec))
    raise ValueError(f"unknown cognition policy {cognition!r}")
