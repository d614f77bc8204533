"""Deterministic episode generators and the brute-force outcome oracle.

Three scenario families, 12 templates each, sampled per seed:

* A - conditional travel planning over temperature thresholds, as ordered
  threshold chains with a default city, or gather-then-branch rules over a
  city set (with an optional weather drawing of the warmest city).
* B - email drafting with a contingent send: send only when the recipient
  resolves in the contact store, otherwise draft a note to the requester.
* C - gated image generation: generate only when a computed score clears a
  threshold, otherwise fall back to a note.

The generator enforces a margin guarantee so bounded tool noise can never
flip a branch: every ground-truth temperature sits strictly more than the
noise bound away from every threshold in the episode, and pairwise city
gaps exceed twice the noise bound so relative order is stable.

`oracle_outcome` evaluates the rules directly over ground truth and is the
independent oracle used to score task success; it shares no code with the
state-based goal predicate that drives loop termination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .canonical import canonical_json, content_hash, stream_rng
from .memory import StateView

GFS_WEIGHT_DENOM = 15

CITY_POOL_3 = ("San Francisco", "Miami", "New York")
CITY_POOL_5 = CITY_POOL_3 + ("Denver", "Boston")

_SF, _MIA, _NY, _DEN, _BOS = CITY_POOL_5

# (kind, params) per template; threshold families follow the 73/77/82 pattern
_A_TEMPLATES_3 = (
    ("sequential", {"checks": ((_SF, 73), (_MIA, 77)), "default": _NY}),
    ("sequential", {"checks": ((_MIA, 82), (_SF, 77)), "default": _NY}),
    ("sequential", {"checks": ((_SF, 77), (_MIA, 82)), "default": _NY}),
    ("sequential", {"checks": ((_NY, 73), (_SF, 82)), "default": _MIA}),
    ("sequential", {"checks": ((_MIA, 73), (_NY, 82)), "default": _SF}),
    ("sequential", {"checks": ((_NY, 77), (_MIA, 73)), "default": _SF}),
    ("sequential", {"checks": ((_SF, 82), (_NY, 77)), "default": _MIA}),
    ("sequential", {"checks": ((_MIA, 77), (_NY, 73)), "default": _SF}),
    ("gather", {"cities": (_SF, _MIA), "threshold": 77, "select": "preferred",
                "preferred": _MIA, "default": None, "draw_followup": True}),
    ("gather", {"cities": (_SF, _MIA, _NY), "threshold": 73, "select": "warmest",
                "preferred": None, "default": _NY, "draw_followup": False}),
    ("gather", {"cities": (_MIA, _NY, _SF), "threshold": 77, "select": "preferred",
                "preferred": _SF, "default": _NY, "draw_followup": False}),
    ("gather", {"cities": (_NY, _SF, _MIA), "threshold": 82, "select": "warmest",
                "preferred": None, "default": _MIA, "draw_followup": True}),
)

# deeper chains plus drawing follow-ups: the five-city variant must cost
# noticeably more cycles than the three-city one
_A_TEMPLATES_5 = (
    ("sequential", {"checks": ((_SF, 82), (_MIA, 82), (_DEN, 82), (_BOS, 82), (_NY, 82)),
                    "default": _NY, "draw_followup": True}),
    ("sequential", {"checks": ((_MIA, 82), (_SF, 82), (_BOS, 77), (_NY, 82), (_DEN, 82)),
                    "default": _DEN, "draw_followup": True}),
    ("sequential", {"checks": ((_SF, 82), (_DEN, 82), (_MIA, 82), (_NY, 77), (_BOS, 82)),
                    "default": _BOS, "draw_followup": True}),
    ("sequential", {"checks": ((_NY, 82), (_BOS, 82), (_SF, 77), (_DEN, 82), (_MIA, 82)),
                    "default": _MIA, "draw_followup": True}),
    ("sequential", {"checks": ((_DEN, 82), (_MIA, 82), (_NY, 82), (_SF, 82), (_BOS, 82)),
                    "default": _BOS, "draw_followup": True}),
    ("sequential", {"checks": ((_BOS, 82), (_NY, 82), (_DEN, 77), (_MIA, 82), (_SF, 82)),
                    "default": _SF, "draw_followup": True}),
    ("sequential", {"checks": ((_SF, 82), (_NY, 82), (_MIA, 82), (_DEN, 77), (_BOS, 82)),
                    "default": _BOS, "draw_followup": True}),
    ("sequential", {"checks": ((_MIA, 82), (_BOS, 82), (_DEN, 82), (_NY, 82), (_SF, 82)),
                    "default": _SF, "draw_followup": True}),
    ("gather", {"cities": (_SF, _MIA, _DEN, _BOS), "threshold": 77, "select": "preferred",
                "preferred": _MIA, "default": None, "draw_followup": True}),
    ("gather", {"cities": CITY_POOL_5, "threshold": 73, "select": "warmest",
                "preferred": None, "default": _NY, "draw_followup": False}),
    ("gather", {"cities": (_MIA, _NY, _SF, _BOS), "threshold": 77, "select": "preferred",
                "preferred": _SF, "default": _NY, "draw_followup": False}),
    ("gather", {"cities": (_NY, _SF, _MIA, _DEN, _BOS), "threshold": 82, "select": "warmest",
                "preferred": None, "default": _MIA, "draw_followup": True}),
)

_RECIPIENTS = (
    "Alice Kim", "Bob Ortiz", "Chen Wei", "Dana Fox", "Elif Demir", "Farid Rahman",
    "Grace Park", "Hiro Tanaka", "Ines Silva", "Jonas Weber", "Kara Novak", "Liam Walsh",
)
_REQUESTERS = ("Morgan Lee", "Noa Cohen", "Omar Haddad", "Priya Nair")
_TOPICS = (
    "budget-review", "release-notes", "travel-plan", "onboarding-checklist",
    "roadmap-sync", "invoice-042", "lab-results", "menu-update",
    "grant-draft", "retro-summary", "q3-forecast", "site-audit",
)
_DECOY_CONTACTS = {
    "Pat Decoy": "pat.decoy@example.com",
    "Sam Decoy": "sam.decoy@example.com",
}
GREETING_TOKEN = "Hello"
SIGNOFF_TOKEN = "Regards"

_SUBJECTS = (
    "sunrise skyline", "harbor map", "molecule render", "forest trail",
    "city night", "glacier edge", "market scene", "river delta",
    "desert bloom", "aurora field", "canyon path", "orchard row",
)
_SOURCES = (
    "survey-alpha", "survey-beta", "metric-gamma", "poll-delta",
    "index-eps", "gauge-zeta", "panel-eta", "probe-theta",
    "scan-iota", "audit-kappa", "trend-lambda", "sample-mu",
)
_C_THRESHOLDS = (50, 60, 70)

TEMPLATES_PER_SCENARIO = 12
SEEDS_PER_TEMPLATE = 10
DEFAULT_BUDGET = 20
DEFAULT_NOISE_BOUND = 1.0


@dataclass(frozen=True)
class RubricItem:
    item_id: str
    category: str  # "outcome" | "side_effect" | "format"
    weight_units: int  # numerator over GFS_WEIGHT_DENOM
    check: dict[str, Any]

    def to_canonical(self) -> dict[str, Any]:
        return {
            "id": self.item_id,
            "category": self.category,
            "weight_units": self.weight_units,
            "check": self.check,
        }


@dataclass(frozen=True)
class ExpectedOutcome:
    """What a correct run must produce, computed from ground truth alone."""

    kind: str  # "book" | "send" | "note" | "image" | "none"
    target: str | None
    side_effects: tuple[tuple[str, str], ...]

    def to_canonical(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "target": self.target,
            "side_effects": [list(e) for e in self.side_effects],
        }


@dataclass(frozen=True)
class EpisodeSpec:
    scenario: str
    template_id: int
    seed: int
    episode_id: str
    goal_text: str
    constraints: dict[str, Any]
    rules: dict[str, Any]
    ground_truth: dict[str, Any]
    rubric: tuple[RubricItem, ...]
    budget: int
    noise_bound: float

    def to_canonical(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "template_id": self.template_id,
            "seed": self.seed,
            "episode_id": self.episode_id,
            "goal_text": self.goal_text,
            "constraints": self.constraints,
            "rules": self.rules,
            "ground_truth": self.ground_truth,
            "rubric": [item.to_canonical() for item in self.rubric],
            "budget": self.budget,
            "noise_bound": self.noise_bound,
        }

    @property
    def spec_hash(self) -> str:
        return content_hash(self.to_canonical())

    def required_tools(self) -> tuple[str, ...]:
        kind = self.rules["kind"]
        if kind == "sequential":
            tools = ["get_weather", "book_flight"]
            if self.rules.get("draw_followup"):
                tools.append("draw_weather")
            return tuple(tools)
        if kind == "gather":
            tools = ["get_weather", "book_flight"]
            if self.rules.get("draw_followup"):
                tools.append("draw_weather")
            if self.rules.get("default") is None:
                tools.append("draft_note")
            return tuple(tools)
        if kind == "email":
            return ("lookup_contact", "send_email", "draft_note")
        if kind == "gated_image":
            tools = ["compute_score", "generate_image"]
            if self.rules.get("fallback") == "note":
                tools.append("draft_note")
            return tuple(tools)
        raise ValueError(f"unknown rule kind {kind!r}")


class TemplateRangeError(IndexError):
    """template_id outside 0..11."""


def _outcome_rubric(scenario: str) -> tuple[RubricItem, ...]:
    return (
        RubricItem(f"{scenario}-outcome", "outcome", 9, {"check": "outcome_match"}),
        RubricItem(f"{scenario}-side", "side_effect", 3, {"check": "side_effects"}),
        RubricItem(f"{scenario}-evidence", "format", 3, {"check": "judgment_evidence"}),
    )


def _email_rubric(topic: str) -> tuple[RubricItem, ...]:
    return (
        RubricItem("B-outcome", "outcome", 9, {"check": "outcome_match"}),
        RubricItem("B-side", "side_effect", 3, {"check": "side_effects"}),
        RubricItem("B-greeting", "format", 1, {"check": "message_contains", "token": GREETING_TOKEN}),
        RubricItem("B-topic", "format", 1, {"check": "message_contains", "token": topic}),
        RubricItem("B-signoff", "format", 1, {"check": "message_contains", "token": SIGNOFF_TOKEN}),
    )


def _draw_temps(
    rng, cities: tuple[str, ...], thresholds: tuple[int, ...], noise_bound: float
) -> dict[str, int]:
    """Uniform 55..95 temperatures subject to the margin guarantee."""
    bound = int(noise_bound)
    temps: dict[str, int] = {}
    for city in cities:
        while True:
            temp = rng.randint(55, 95)
            if any(abs(temp - th) <= bound for th in thresholds):
                continue
            if any(abs(temp - other) <= 2 * bound for other in temps.values()):
                continue
            temps[city] = temp
            break
    return temps


def _generate_a(template_id: int, seed: int, cities: int, noise_bound: float, budget: int) -> EpisodeSpec:
    table = _A_TEMPLATES_3 if cities == 3 else _A_TEMPLATES_5
    kind, params = table[template_id]
    rng = stream_rng("spec", "A", cities, template_id, seed)
    suffix = "-c5" if cities == 5 else ""
    episode_id = f"A{template_id:02d}-s{seed:03d}{suffix}"
    if kind == "sequential":
        checks = params["checks"]
        draw = params.get("draw_followup", False)
        involved = tuple(dict.fromkeys([c for c, _ in checks] + [params["default"]]))
        thresholds = tuple(th for _, th in checks)
        temps = _draw_temps(rng, involved, thresholds, noise_bound)
        rules = {
            "kind": "sequential",
            "checks": [[c, th] for c, th in checks],
            "default": params["default"],
            "draw_followup": draw,
        }
        goal = (
            "Book a flight to the first listed city whose temperature exceeds its "
            f"threshold; if none does, go to {params['default']}."
        )
        if draw:
            goal += " Also draw the weather for the selected city."
        constraints = {
            "thresholds_f": {c: th for c, th in checks},
            "default_city": params["default"],
        }
    else:
        involved = tuple(params["cities"]) + ((params["default"],) if params["default"] else ())
        involved = tuple(dict.fromkeys(involved))
        temps = _draw_temps(rng, involved, (params["threshold"],), noise_bound)
        rules = {
            "kind": "gather",
            "cities": list(params["cities"]),
            "threshold": params["threshold"],
            "select": params["select"],
            "preferred": params["preferred"],
            "default": params["default"],
            "draw_followup": params["draw_followup"],
            "requester": _REQUESTERS[template_id % len(_REQUESTERS)],
        }
        tail = (
            f"if none is hot, draft a stay-home note."
            if params["default"] is None
            else f"if none is hot, go to {params['default']}."
        )
        goal = (
            f"Check {', '.join(params['cities'])} and book a flight to the city the "
            f"hot-city rule selects (threshold {params['threshold']}F); {tail}"
        )
        if params["draw_followup"]:
            goal += " Also draw the weather for the warmest city."
        constraints = {"threshold_hot_f": params["threshold"]}
    return EpisodeSpec(
        scenario="A",
        template_id=template_id,
        seed=seed,
        episode_id=episode_id,
        goal_text=goal,
        constraints=constraints,
        rules=rules,
        ground_truth={"temps": temps},
        rubric=_outcome_rubric("A"),
        budget=budget,
        noise_bound=noise_bound,
    )


def _generate_b(template_id: int, seed: int, noise_bound: float, budget: int) -> EpisodeSpec:
    rng = stream_rng("spec", "B", template_id, seed)
    recipient = _RECIPIENTS[template_id]
    requester = _REQUESTERS[template_id % len(_REQUESTERS)]
    topic = _TOPICS[template_id]
    present = rng.random() < 0.5
    contacts = dict(_DECOY_CONTACTS)
    if present:
        contacts[recipient] = recipient.lower().replace(" ", ".") + "@example.com"
    rules = {
        "kind": "email",
        "recipient": recipient,
        "requester": requester,
        "topic": topic,
        "greeting": GREETING_TOKEN,
        "signoff": SIGNOFF_TOKEN,
    }
    return EpisodeSpec(
        scenario="B",
        template_id=template_id,
        seed=seed,
        episode_id=f"B{template_id:02d}-s{seed:03d}",
        goal_text=(
            f"Email {recipient} about {topic} if they are in the contact store; "
            f"otherwise draft a note to {requester} and stop without sending."
        ),
        constraints={"recipient": recipient, "topic": topic,
                     "checklist": [GREETING_TOKEN, topic, SIGNOFF_TOKEN]},
        rules=rules,
        ground_truth={"contacts": contacts},
        rubric=_email_rubric(topic),
        budget=budget,
        noise_bound=noise_bound,
    )


def _generate_c(template_id: int, seed: int, noise_bound: float, budget: int) -> EpisodeSpec:
    rng = stream_rng("spec", "C", template_id, seed)
    subject = _SUBJECTS[template_id]
    source = _SOURCES[template_id]
    requester = _REQUESTERS[template_id % len(_REQUESTERS)]
    threshold = _C_THRESHOLDS[template_id % len(_C_THRESHOLDS)]
    above = rng.random() < 0.5
    delta = rng.randint(5, 25)
    score = threshold + delta if above else threshold - delta
    rules = {
        "kind": "gated_image",
        "subject": subject,
        "source": source,
        "threshold": threshold,
        "fallback": "note",
        "requester": requester,
    }
    return EpisodeSpec(
        scenario="C",
        template_id=template_id,
        seed=seed,
        episode_id=f"C{template_id:02d}-s{seed:03d}",
        goal_text=(
            f"Generate an image of {subject} only if the {source} score exceeds "
            f"{threshold}; otherwise draft a note to {requester}."
        ),
        constraints={"score_threshold": threshold, "score_source": source},
        rules=rules,
        ground_truth={"scores": {source: score}},
        rubric=_outcome_rubric("C"),
        budget=budget,
        noise_bound=noise_bound,
    )


def generate_episode(
    scenario: str,
    template_id: int,
    seed: int,
    *,
    cities: int = 3,
    noise_bound: float = DEFAULT_NOISE_BOUND,
    budget: int = DEFAULT_BUDGET,
) -> EpisodeSpec:
    """Deterministic spec for (scenario, template, seed); same inputs, same bytes."""
    if not 0 <= template_id < TEMPLATES_PER_SCENARIO:
        raise TemplateRangeError(template_id)
    if cities not in (3, 5):
        raise ValueError("city pool is 3 or 5")
    if scenario == "A":
        return _generate_a(template_id, seed, cities, noise_bound, budget)
    if scenario == "B":
        return _generate_b(template_id, seed, noise_bound, budget)
    if scenario == "C":
        return _generate_c(template_id, seed, noise_bound, budget)
    raise ValueError(f"unknown scenario {scenario!r}")


# -- brute-force outcome oracle -------------------------------------------------


def _gather_selection(temps: dict[str, int], rules: dict[str, Any]) -> str | None:
    """Hot-city rule over a temperature map; None means the no-hot branch."""
    hot = {c: temps[c] for c in rules["cities"] if temps[c] > rules["threshold"]}
    if not hot:
        return rules["default"]
    if len(hot) == 1:
        return next(iter(hot))
    if rules["select"] == "preferred" and rules["preferred"] in hot:
        return rules["preferred"]
    return max(hot, key=lambda c: (hot[c], c))


def oracle_outcome(spec: EpisodeSpec) -> ExpectedOutcome:
    """Expected outcome by direct evaluation of the rules over ground truth."""
    rules = spec.rules
    kind = rules["kind"]
    if kind == "sequential":
        temps = spec.ground_truth["temps"]
        selected = rules["default"]
        for city, threshold in rules["checks"]:
            if temps[city] > threshold:
                selected = city
                break
        effects: list[tuple[str, str]] = [("confirmation", selected)]
        if rules.get("draw_followup"):
            effects.append(("draw", selected))
        return ExpectedOutcome("book", selected, tuple(effects))
    if kind == "gather":
        temps = spec.ground_truth["temps"]
        selected = _gather_selection(temps, rules)
        if selected is None:
            requester = rules["requester"]
            return ExpectedOutcome("note", requester, (("note", requester),))
        effects = [("confirmation", selected)]
        if rules["draw_followup"]:
            warmest = max(rules["cities"], key=lambda c: (temps[c], c))
            effects.append(("draw", warmest))
        return ExpectedOutcome("book", selected, tuple(effects))
    if kind == "email":
        recipient = rules["recipient"]
        if recipient in spec.ground_truth["contacts"]:
            return ExpectedOutcome("send", recipient, (("receipt", recipient),))
        requester = rules["requester"]
        return ExpectedOutcome("note", requester, (("note", requester),))
    if kind == "gated_image":
        score = spec.ground_truth["scores"][rules["source"]]
        if score > rules["threshold"]:
            return ExpectedOutcome("image", rules["subject"], (("image", rules["subject"]),))
        if rules["fallback"] == "note":
            requester = rules["requester"]
            return ExpectedOutcome("note", requester, (("note", requester),))
        return ExpectedOutcome("none", None, ())
    raise ValueError(f"unknown rule kind {kind!r}")


# -- state-based goal predicate (drives loop termination) -----------------------


def _executed(view: StateView, tool: str) -> list[dict[str, Any]]:
    return [
        entry
        for entry in view.approved_actions
        if entry.get("name") == tool and entry.get("status") == "executed"
    ]


def _booking_confirmed(view: StateView, city: str) -> bool:
    return any(
        entry.get("args") == [city] and "confirmation" in entry
        for entry in _executed(view, "book_flight")
    )


def _observed_temps(view: StateView, cities: list[str] | tuple[str, ...]) -> dict[str, int] | None:
    temps: dict[str, int] = {}
    for city in cities:
        entry = view.observations.get(city)
        if entry is None or "temp_f" not in entry:
            return None
        temps[city] = entry["temp_f"]
    return temps


def build_goal_predicate(spec: EpisodeSpec) -> Callable[[StateView], bool]:
    """Success check over the memory view alone (observations, not ground truth)."""
    rules = spec.rules
    kind = rules["kind"]

    if kind == "sequential":

        def sequential_done(view: StateView) -> bool:
            selected = rules["default"]
            for city, threshold in rules["checks"]:
                entry = view.observations.get(city)
                if entry is None or "temp_f" not in entry:
                    return False
                if entry["temp_f"] > threshold:
                    selected = city
                    break
            if not _booking_confirmed(view, selected):
                return False
            if rules.get("draw_followup") and not _executed(view, "draw_weather"):
                return False
            return True

        return sequential_done

    if kind == "gather":

        def gather_done(view: StateView) -> bool:
            temps = _observed_temps(view, rules["cities"])
            if temps is None:
                return False
            selected = _gather_selection(temps, rules)
            if selected is None:
                return bool(_executed(view, "draft_note"))
            if not _booking_confirmed(view, selected):
                return False
            if rules["draw_followup"] and not _executed(view, "draw_weather"):
                return False
            return True

        return gather_done

    if kind == "email":

        def email_done(view: StateView) -> bool:
            entry = view.observations.get(rules["recipient"])
            if entry is None or "found" not in entry:
                return False
            if entry["found"]:
                return any(
                    e.get("args", [None])[0] == rules["recipient"] and "receipt" in e
                    for e in _executed(view, "send_email")
                )
            return bool(_executed(view, "draft_note")) and not _executed(view, "send_email")

        return email_done

    if kind == "gated_image":

        def image_done(view: StateView) -> bool:
            entry = view.observations.get(rules["source"])
            if entry is None or "score" not in entry:
                return False
            generated = _executed(view, "generate_image")
            if entry["score"] > rules["threshold"]:
                return bool(generated)
            if generated:
                return False
            if rules["fallback"] == "note":
                return bool(_executed(view, "draft_note"))
            return True

        return image_done

    raise ValueError(f"unknown rule kind {kind!r}")


# -- golden episodes -------------------------------------------------------------


def walkthrough_episode(budget: int = DEFAULT_BUDGET) -> EpisodeSpec:
    """The two-city hot-rule episode: SF 68, Miami 82, threshold 77, code ABC123."""
    return EpisodeSpec(
        scenario="A",
        template_id=8,
        seed=0,
        episode_id="golden-walkthrough",
        goal_text="Choose destination based on temperature thresholds",
        constraints={"threshold_hot_f": 77},
        rules={
            "kind": "gather",
            "cities": [_SF, _MIA],
            "threshold": 77,
            "select": "preferred",
            "preferred": _MIA,
            "default": None,
            "draw_followup": True,
            "requester": _REQUESTERS[0],
        },
        ground_truth={
            "temps": {_SF: 68, _MIA: 82},
            "confirmations": {_MIA: "ABC123"},
        },
        rubric=_outcome_rubric("A"),
        budget=budget,
        noise_bound=0.0,
    )


def golden_episode_a(budget: int = DEFAULT_BUDGET) -> EpisodeSpec:
    """SF-first chain with SF 74 and Miami 84: the correct pick is Miami."""
    return EpisodeSpec(
        scenario="A",
        template_id=2,
        seed=0,
        episode_id="golden-ep-a",
        goal_text=(
            "Book a flight to the first listed city whose temperature exceeds its "
            "threshold; if none does, go to New York."
        ),
        constraints={"thresholds_f": {_SF: 77, _MIA: 82}, "default_city": _NY},
        rules={"kind": "sequential", "checks": [[_SF, 77], [_MIA, 82]], "default": _NY},
        ground_truth={"temps": {_SF: 74, _MIA: 84, _NY: 70}},
        rubric=_outcome_rubric("A"),
        budget=budget,
        noise_bound=0.0,
    )


def golden_episode_b(budget: int = DEFAULT_BUDGET) -> EpisodeSpec:
    """Miami-first chain with Miami 81 and SF 78: early stop at San Francisco."""
    return EpisodeSpec(
        scenario="A",
        template_id=1,
        seed=0,
        episode_id="golden-ep-b",
        goal_text=(
            "Book a flight to the first listed city whose temperature exceeds its "
            "threshold; if none does, go to New York."
        ),
        constraints={"thresholds_f": {_MIA: 82, _SF: 77}, "default_city": _NY},
        rules={"kind": "sequential", "checks": [[_MIA, 82], [_SF, 77]], "default": _NY},
        ground_truth={"temps": {_MIA: 81, _SF: 78, _NY: 70}},
        rubric=_outcome_rubric("A"),
        budget=budget,
        noise_bound=0.0,
    )


# -- suites -----------------------------------------------------------------------


def default_suite(
    scenarios: tuple[str, ...] = ("A", "B", "C"),
    templates: int = TEMPLATES_PER_SCENARIO,
    seeds: int = SEEDS_PER_TEMPLATE,
    *,
    cities: int = 3,
    noise_bound: float = DEFAULT_NOISE_BOUND,
    budget: int = DEFAULT_BUDGET,
) -> list[EpisodeSpec]:
    specs = []
    for scenario in scenarios:
        for template_id in range(templates):
            for seed in range(seeds):
                specs.append(
                    generate_episode(
                        scenario, template_id, seed,
                        cities=cities, noise_bound=noise_bound, budget=budget,
                    )
                )
    return specs


def suite_listing(specs: list[EpisodeSpec]) -> list[dict[str, Any]]:
    return [
        {
            "scenario": spec.scenario,
            "template_id": spec.template_id,
            "seed": spec.seed,
            "episode_id": spec.episode_id,
            "spec_hash": spec.spec_hash,
        }
        for spec in specs
    ]


def suite_hash(specs: list[EpisodeSpec]) -> str:
    return content_hash(suite_listing(specs))


def margin_holds(spec: EpisodeSpec) -> bool:
    """Directly assert the margin guarantee on a scenario A spec."""
    if spec.scenario != "A":
        return True
    temps = spec.ground_truth["temps"]
    rules = spec.rules
    if rules["kind"] == "sequential":
        thresholds = [th for _, th in rules["checks"]]
    else:
        thresholds = [rules["threshold"]]
    for temp in temps.values():
        if any(abs(temp - th) <= spec.noise_bound for th in thresholds):
            return False
    values = list(temps.values())
    for i, a in enumerate(values):
        for b in values[i + 1:]:
            if abs(a - b) <= 2 * spec.noise_bound:
                return False
    return True
