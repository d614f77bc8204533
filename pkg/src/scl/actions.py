"""Thin, auditable tool interface: registry, validation, normalization, retry.

Built-in mock tools implement the scenario environments: a seeded-noisy
weather query, a contact store lookup, gated email send, note drafting,
flight booking with deterministic confirmation codes, score computation,
and image generation (plus its drawing alias).

Failures are first-class: a failed result always pairs with a failure
record in memory written by the loop. Transient failures injected by the
robustness configuration hit only the first attempt, so the bounded retry
always recovers; permanent failures are tool-semantic (for example sending
to an unresolved recipient).
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Any, Callable

from .canonical import stream_rng

MAX_RETRIES = 2
# recorded per retry, never slept in tests
BACKOFF_SCHEDULE_MS = (100, 400)

OBSERVATION_TOOLS = ("get_weather", "lookup_contact", "compute_score")
EFFECT_TOOLS = ("book_flight", "send_email", "draft_note", "generate_image", "draw_weather")


class UnknownToolError(KeyError):
    """Tool absent from the registry; a configuration error, not a tool failure."""


class DuplicateToolError(ValueError):
    """Registry already holds a tool with this name."""


class ToolFailure(Exception):
    """Raised by handlers; `transient` failures are retried, others are not."""

    def __init__(self, reason: str, transient: bool = False) -> None:
        super().__init__(reason)
        self.reason = reason
        self.transient = transient


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: tuple[str, ...]

    def to_canonical(self) -> dict[str, Any]:
        return {"tool": self.tool, "args": list(self.args)}

    @classmethod
    def from_canonical(cls, data: dict[str, Any]) -> "ToolCall":
        return cls(tool=data["tool"], args=tuple(data["args"]))


@dataclass(frozen=True)
class ToolSpec:
    """Declared tool contract: argument names, determinism class, failure modes."""

    name: str
    arg_names: tuple[str, ...]
    determinism: str  # "deterministic" | "seeded_noisy"
    failure_modes: tuple[str, ...] = ()
    result_key: str | None = None

    def validate_args(self, args: tuple[str, ...]) -> str | None:
        """Returns a rejection reason for schema-invalid args, else None."""
        if len(args) != len(self.arg_names):
            return f"expected {len(self.arg_names)} args, got {len(args)}"
        for name, value in zip(self.arg_names, args):
            if not isinstance(value, str) or not value.strip():
                return f"argument {name!r} must be a non-empty string"
        return None

    def to_schema(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "args": list(self.arg_names),
            "determinism": self.determinism,
            "failure_modes": list(self.failure_modes),
        }


@dataclass(frozen=True)
class ToolResult:
    call: ToolCall
    outcome: str  # "ok" | "failed"
    value: dict[str, Any]
    attempts: int
    backoff_ms: tuple[int, ...] = ()
    error: str | None = None

    def to_canonical(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "call": self.call.to_canonical(),
            "outcome": self.outcome,
            "value": self.value,
            "attempts": self.attempts,
            "backoff_ms": list(self.backoff_ms),
        }
        if self.error is not None:
            data["error"] = self.error
        return data


Handler = Callable[["EpisodeEnvironment", tuple[str, ...]], dict[str, Any]]


class ToolRegistry:
    def __init__(self) -> None:
        self._specs: dict[str, ToolSpec] = {}
        self._handlers: dict[str, Handler] = {}

    def register(self, spec: ToolSpec, handler: Handler) -> ToolSpec:
        if spec.name in self._specs:
            raise DuplicateToolError(spec.name)
        self._specs[spec.name] = spec
        self._handlers[spec.name] = handler
        return spec

    def spec(self, name: str) -> ToolSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise UnknownToolError(name) from None

    def handler(self, name: str) -> Handler:
        self.spec(name)
        return self._handlers[name]

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._specs))

    def schemas(self) -> dict[str, dict[str, Any]]:
        return {name: spec.to_schema() for name, spec in self._specs.items()}


class EpisodeEnvironment:
    """Per-episode tool world: ground truth, seeded noise, attempt bookkeeping."""

    def __init__(
        self,
        episode_id: str,
        *,
        spec_seed: int,
        run_seed: int,
        temps: dict[str, int] | None = None,
        contacts: dict[str, str] | None = None,
        scores: dict[str, int] | None = None,
        confirmations: dict[str, str] | None = None,
        noise_bound: float = 1.0,
        transient_rate: float = 0.0,
    ) -> None:
        self.episode_id = episode_id
        self.spec_seed = spec_seed
        self.temps = dict(temps or {})
        self.contacts = dict(contacts or {})
        self.scores = dict(scores or {})
        self.confirmations = dict(confirmations or {})
        self.noise_bound = noise_bound
        self.transient_rate = transient_rate
        self.resolved_names: set[str] = set()
        self.artifact_seq = 0
        self._noise_rng = stream_rng("noise", run_seed, episode_id)
        self._transient_rng = stream_rng("transient", run_seed, episode_id)

    def next_handle(self, tool: str) -> str:
        self.artifact_seq += 1
        return f"{tool}:{self.episode_id}:{self.artifact_seq}"

    def noise(self) -> int:
        bound = int(self.noise_bound)
        if bound <= 0:
            return 0
        return self._noise_rng.randint(-bound, bound)

    def transient_glitch(self) -> bool:
        if self.transient_rate <= 0:
            return False
        return self._transient_rng.random() < self.transient_rate

    def confirmation_for(self, city: str) -> str:
        if city in self.confirmations:
            return self.confirmations[city]
        rng = stream_rng("confirm", self.spec_seed, city)
        alphabet = string.ascii_uppercase + string.digits
        return "".join(rng.choice(alphabet) for _ in range(6))


def normalize(value: dict[str, Any]) -> dict[str, Any]:
    """Normalize a raw tool payload; idempotent on normalized values."""
    out: dict[str, Any] = {}
    for key, item in value.items():
        if key.startswith("temp"):
            out["temp_f"] = int(round(float(item)))
        elif isinstance(item, float) and item.is_integer():
            out[key] = int(item)
        else:
            out[key] = item
    return out


def execute(call: ToolCall, env: EpisodeEnvironment, registry: "ToolRegistry") -> ToolResult:
    """Run one approved call with validation, retry, and normalization."""
    spec = registry.spec(call.tool)
    rejection = spec.validate_args(call.args)
    if rejection is not None:
        # schema-invalid input never reaches the tool and is never retried
        return ToolResult(call=call, outcome="failed", value={}, attempts=0, error=rejection)
    handler = registry.handler(call.tool)
    backoffs: list[int] = []
    attempts = 0
    while True:
        attempts += 1
        try:
            if attempts == 1 and env.transient_glitch():
                raise ToolFailure("transient glitch injected", transient=True)
            raw = handler(env, call.args)
        except ToolFailure as failure:
            if failure.transient and attempts <= MAX_RETRIES:
                backoffs.append(BACKOFF_SCHEDULE_MS[min(attempts - 1, len(BACKOFF_SCHEDULE_MS) - 1)])
                continue
            return ToolResult(
                call=call,
                outcome="failed",
                value={},
                attempts=attempts,
                backoff_ms=tuple(backoffs),
                error=failure.reason,
            )
        return ToolResult(
            call=call,
            outcome="ok",
            value=normalize(raw),
            attempts=attempts,
            backoff_ms=tuple(backoffs),
        )


# -- built-in mock tools -------------------------------------------------------


def _get_weather(env: EpisodeEnvironment, args: tuple[str, ...]) -> dict[str, Any]:
    city = args[0]
    if city not in env.temps:
        raise ToolFailure(f"no weather station for {city!r}")
    return {"temp_f": env.temps[city] + env.noise()}


def _lookup_contact(env: EpisodeEnvironment, args: tuple[str, ...]) -> dict[str, Any]:
    name = args[0]
    address = env.contacts.get(name)
    if address is None:
        return {"found": False}
    env.resolved_names.add(name)
    return {"found": True, "address": address}


def _send_email(env: EpisodeEnvironment, args: tuple[str, ...]) -> dict[str, Any]:
    recipient = args[0]
    if recipient not in env.resolved_names:
        raise ToolFailure(f"recipient {recipient!r} not resolved in contact store")
    return {"receipt": env.next_handle("send_email"), "recipient": recipient}


def _draft_note(env: EpisodeEnvironment, args: tuple[str, ...]) -> dict[str, Any]:
    return {"artifact": env.next_handle("draft_note"), "requester": args[0]}


def _book_flight(env: EpisodeEnvironment, args: tuple[str, ...]) -> dict[str, Any]:
    return {"confirmation": env.confirmation_for(args[0])}


def _generate_image(env: EpisodeEnvironment, args: tuple[str, ...]) -> dict[str, Any]:
    return {"artifact": env.next_handle("generate_image"), "subject": args[0]}


def _draw_weather(env: EpisodeEnvironment, args: tuple[str, ...]) -> dict[str, Any]:
    return {"artifact": env.next_handle("draw_weather"), "subject": args[0]}


def _compute_score(env: EpisodeEnvironment, args: tuple[str, ...]) -> dict[str, Any]:
    source = args[0]
    if source not in env.scores:
        raise ToolFailure(f"no score input {source!r}")
    return {"score": env.scores[source]}


def default_registry() -> ToolRegistry:
    registry = ToolRegistry()
    registry.register(
        ToolSpec("get_weather", ("city",), "seeded_noisy", ("unknown-city",)), _get_weather
    )
    registry.register(
        ToolSpec("lookup_contact", ("name",), "deterministic"), _lookup_contact
    )
    registry.register(
        ToolSpec(
            "send_email", ("recipient", "body"), "deterministic", ("recipient-unresolved",),
            result_key="receipt",
        ),
        _send_email,
    )
    registry.register(
        ToolSpec("draft_note", ("requester", "body"), "deterministic", result_key="artifact"),
        _draft_note,
    )
    registry.register(
        ToolSpec("book_flight", ("city",), "deterministic", result_key="confirmation"),
        _book_flight,
    )
    registry.register(
        ToolSpec("generate_image", ("subject",), "deterministic", result_key="artifact"),
        _generate_image,
    )
    registry.register(
        ToolSpec("draw_weather", ("city",), "deterministic", result_key="artifact"),
        _draw_weather,
    )
    registry.register(
        ToolSpec("compute_score", ("input",), "deterministic", ("unknown-input",)),
        _compute_score,
    )
    return registry
