"""External memory (MEM): typed, time-stamped, dot-path-addressable records.

Episode memory is append-only: a write at an existing path supersedes the
previous record in the latest-wins view but never erases history. A windowed
variant models the degraded "state lives in the prompt" mode used by the
no-memory ablation: it keeps a single slot per path and evicts whole paths
beyond a small per-category capacity.

Long-term memory holds tool schemas and archived episode summaries; episode
records move there wholesale at archival time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any, Callable, Iterable

from .canonical import canonical_json, content_hash


class PathValidationError(ValueError):
    """Raised for malformed memory paths."""


class TimestampOrderError(RuntimeError):
    """A write arrived with a timestamp not newer than the episode's latest.

    This always signals a loop-ordering bug in the caller, never a data
    problem, so it is deliberately loud.
    """


class UnknownEpisodeError(KeyError):
    """Episode id not present in the active store."""


class ArchiveStateError(RuntimeError):
    """Archival attempted on a live episode, or repeated on an archived one."""


class SnapshotIntegrityError(ValueError):
    """A deserialized snapshot failed its content-hash recheck."""


# record kind <-> top-level path family; mirrors the episode memory layout
KIND_BY_HEAD = {
    "obs": "observation",
    "judgments": "judgment",
    "approved_actions": "approved_action",
    "pending": "pending_action",
    "failures": "failure_event",
    "notes": "note",
    "goal": "goal",
    "constraints": "constraint",
    "termination": "termination",
}

# categories subject to window eviction in degraded (no-memory) mode
HISTORY_HEADS = ("obs", "approved_actions", "judgments", "notes", "failures")

# head segments are bare identifiers; entity segments (city names, contact
# names) may contain spaces
_HEAD_RE = re.compile(r"^[A-Za-z0-9_]+$")
_SEGMENT_RE = re.compile(r"^[A-Za-z0-9_ -]+$")


@dataclass(frozen=True, order=True)
class Timestamp:
    """Logical episode clock tick: (cycle, intra-cycle sequence)."""

    cycle: int
    seq: int

    def to_canonical(self) -> list[int]:
        return [self.cycle, self.seq]

    @classmethod
    def from_canonical(cls, data: Iterable[int]) -> "Timestamp":
        cycle, seq = data
        return cls(int(cycle), int(seq))


@dataclass(frozen=True)
class MemPath:
    """Dot-separated address like ``obs.Miami`` or ``judgments.0``."""

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.segments:
            raise PathValidationError("path needs at least one segment")
        head = self.segments[0]
        if not _HEAD_RE.match(head):
            raise PathValidationError(f"bad head segment: {head!r}")
        if head not in KIND_BY_HEAD:
            raise PathValidationError(f"unknown path family: {head!r}")
        for seg in self.segments[1:]:
            if not _SEGMENT_RE.match(seg):
                raise PathValidationError(f"bad path segment: {seg!r}")

    @property
    def head(self) -> str:
        return self.segments[0]

    @classmethod
    def parse(cls, text: str) -> "MemPath":
        if not isinstance(text, str) or not text:
            raise PathValidationError(f"not a path: {text!r}")
        return cls(tuple(text.split(".")))

    def __str__(self) -> str:
        return ".".join(self.segments)


@dataclass(frozen=True)
class MemRecord:
    """One typed, time-stamped fact/judgment/action-result in MEM."""

    path: MemPath
    kind: str
    value: Any
    source: str
    timestamp: Timestamp

    def __post_init__(self) -> None:
        expected = KIND_BY_HEAD[self.path.head]
        if self.kind != expected:
            raise PathValidationError(
                f"kind {self.kind!r} inconsistent with path {self.path} "
                f"(expected {expected!r})"
            )
        if self.kind == "observation" and isinstance(self.value, dict):
            # temperature observations must carry the Fahrenheit unit tag
            for key in self.value:
                if key.startswith("temp") and key != "temp_f":
                    raise PathValidationError(f"temperature key must be temp_f, got {key!r}")

    def to_canonical(self) -> dict[str, Any]:
        return {
            "path": str(self.path),
            "kind": self.kind,
            "value": self.value,
            "source": self.source,
            "t": self.timestamp.to_canonical(),
        }

    @classmethod
    def from_canonical(cls, data: dict[str, Any]) -> "MemRecord":
        return cls(
            path=MemPath.parse(data["path"]),
            kind=data["kind"],
            value=data["value"],
            source=data["source"],
            timestamp=Timestamp.from_canonical(data["t"]),
        )


def _strip_clocks(obj: Any) -> Any:
    """Drop presentational clock fields for modulo-clock comparisons."""
    if isinstance(obj, dict):
        return {k: _strip_clocks(v) for k, v in obj.items() if k != "t"}
    if isinstance(obj, list):
        return [_strip_clocks(v) for v in obj]
    return obj


@dataclass
class StateView:
    """Compact latest-wins view of an episode's memory.

    The canonical form mirrors the episode memory layout field for field:
    goal, constraints, observations (latest record per path), judgments,
    approved_actions, pending, termination.
    """

    goal: str | None
    constraints: dict[str, Any]
    observations: dict[str, dict[str, Any]]
    judgments: list[dict[str, Any]]
    approved_actions: list[dict[str, Any]]
    pending: list[dict[str, Any]]
    termination: dict[str, Any]
    latest: dict[str, MemRecord] = field(default_factory=dict, repr=False)

    def to_canonical(self) -> dict[str, Any]:
        return {
            "goal": self.goal,
            "constraints": self.constraints,
            "observations": self.observations,
            "judgments": self.judgments,
            "approved_actions": self.approved_actions,
            "pending": self.pending,
            "termination": self.termination,
        }

    def to_comparable(self) -> dict[str, Any]:
        """Canonical form with clock fields removed."""
        return _strip_clocks(self.to_canonical())

    def resolve(self, path_text: str) -> tuple[bool, Any]:
        """Resolve a dot path to a value, drilling into record values.

        Returns (found, value); absence is a value, never an error.
        """
        found, value, _ = self.resolve_record(path_text)
        return found, value

    def resolve_record(self, path_text: str) -> tuple[bool, Any, MemRecord | None]:
        """Like resolve, but also returns the backing record when found."""
        try:
            path = MemPath.parse(path_text)
        except PathValidationError:
            return False, None, None
        segs = path.segments
        for cut in range(len(segs), 0, -1):
            key = ".".join(segs[:cut])
            rec = self.latest.get(key)
            if rec is None:
                continue
            value = rec.value
            for seg in segs[cut:]:
                if isinstance(value, dict) and seg in value:
                    value = value[seg]
                else:
                    return False, None, rec
            return True, value, rec
        return False, None, None

    @classmethod
    def from_canonical(cls, data: dict[str, Any]) -> "StateView":
        """Rebuild a functional view (including path resolution) from its canonical form."""
        latest: dict[str, MemRecord] = {}

        def put(path: str, kind: str, value: Any, source: str, t: Any) -> None:
            ts = Timestamp.from_canonical(t) if t is not None else Timestamp(0, 0)
            latest[path] = MemRecord(MemPath.parse(path), kind, value, source, ts)

        if data.get("goal") is not None:
            put("goal", "goal", data["goal"], "init", None)
        if data.get("constraints"):
            put("constraints", "constraint", data["constraints"], "init", None)
        for entity, entry in data.get("observations", {}).items():
            entry = dict(entry)
            t = entry.pop("t", None)
            source = entry.pop("source", "")
            put(f"obs.{entity}", "observation", entry, source, t)
        for idx, entry in enumerate(data.get("judgments", [])):
            entry = dict(entry)
            t = entry.pop("t", None)
            put(f"judgments.{idx}", "judgment", entry, "control", t)
        for idx, entry in enumerate(data.get("approved_actions", [])):
            entry = dict(entry)
            t = entry.pop("t", None)
            put(f"approved_actions.{idx}", "approved_action", entry, "control", t)
        for idx, entry in enumerate(data.get("pending", [])):
            entry = dict(entry)
            t = entry.pop("t", None)
            put(f"pending.{idx}", "pending_action", entry, "control", t)
        term = data.get("termination") or {"ready": False}
        put("termination", "termination", term, "control", None)
        return cls(
            goal=data.get("goal"),
            constraints=dict(data.get("constraints", {})),
            observations={k: dict(v) for k, v in data.get("observations", {}).items()},
            judgments=[dict(v) for v in data.get("judgments", [])],
            approved_actions=[dict(v) for v in data.get("approved_actions", [])],
            pending=[dict(v) for v in data.get("pending", [])],
            termination=dict(term),
            latest=latest,
        )


@dataclass(frozen=True)
class MemSnapshot:
    """All episode records at a point in time, with a deterministic hash."""

    episode_id: str
    cycle: int
    records: tuple[MemRecord, ...]
    content_hash: str

    @classmethod
    def build(cls, episode_id: str, cycle: int, records: Iterable[MemRecord]) -> "MemSnapshot":
        ordered = tuple(sorted(records, key=lambda r: (str(r.path), r.timestamp)))
        digest = content_hash([r.to_canonical() for r in ordered])
        return cls(episode_id=episode_id, cycle=cycle, records=ordered, content_hash=digest)

    def serialize(self) -> str:
        return canonical_json(
            {
                "episode_id": self.episode_id,
                "cycle": self.cycle,
                "content_hash": self.content_hash,
                "records": [r.to_canonical() for r in self.records],
            }
        )

    @classmethod
    def deserialize(cls, text: str) -> "MemSnapshot":
        import json

        data = json.loads(text)
        records = tuple(MemRecord.from_canonical(r) for r in data["records"])
        snap = cls.build(data["episode_id"], data["cycle"], records)
        if snap.content_hash != data["content_hash"]:
            raise SnapshotIntegrityError(
                f"content hash mismatch: stored {data['content_hash']}, "
                f"recomputed {snap.content_hash}"
            )
        return snap


class EpisodeMemory:
    """Single-episode record store with a monotonic logical clock.

    `window=None` gives the normal append-only store. An integer window
    gives the degraded overwrite buffer: one slot per path, and at most
    `window` most-recently-written paths per history category (older paths
    become unreadable). Goal, constraints, pending, and termination records
    are exempt from eviction.
    """

    def __init__(
        self,
        episode_id: str,
        on_write: Callable[[MemRecord], None] | None = None,
        window: int | None = None,
    ) -> None:
        if window is not None and window < 1:
            raise ValueError("window must be >= 1")
        self.episode_id = episode_id
        self.window = window
        self._on_write = on_write
        self._history: dict[str, list[MemRecord]] = {}
        self._latest_ts: Timestamp | None = None
        self._clock_cycle = -1
        self._clock_seq = 0

    # -- clock ---------------------------------------------------------------

    def next_timestamp(self, cycle: int) -> Timestamp:
        if cycle != self._clock_cycle:
            self._clock_cycle = cycle
            self._clock_seq = 0
        else:
            self._clock_seq += 1
        return Timestamp(cycle, self._clock_seq)

    @property
    def latest_timestamp(self) -> Timestamp | None:
        return self._latest_ts

    # -- writes --------------------------------------------------------------

    def write(self, record: MemRecord) -> MemPath:
        if self._latest_ts is not None and record.timestamp <= self._latest_ts:
            raise TimestampOrderError(
                f"write at {record.timestamp} not after {self._latest_ts} "
                f"(episode {self.episode_id}); loop ordering bug"
            )
        key = str(record.path)
        if self.window is None:
            self._history.setdefault(key, []).append(record)
        else:
            self._history[key] = [record]
            self._evict(record.path.head)
        self._latest_ts = record.timestamp
        if self._on_write is not None:
            self._on_write(record)
        return record.path

    def _evict(self, head: str) -> None:
        if head not in HISTORY_HEADS:
            return
        family = [key for key in self._history if key.split(".", 1)[0] == head]
        while len(family) > self.window:
            oldest = min(family, key=lambda k: self._history[k][-1].timestamp)
            del self._history[oldest]
            family.remove(oldest)

    # -- reads ---------------------------------------------------------------

    def read(self, path: MemPath | str) -> MemRecord | None:
        key = str(path) if isinstance(path, MemPath) else path
        records = self._history.get(key)
        return records[-1] if records else None

    def history(self, path: MemPath | str) -> tuple[MemRecord, ...]:
        key = str(path) if isinstance(path, MemPath) else path
        return tuple(self._history.get(key, ()))

    def records(self) -> tuple[MemRecord, ...]:
        flat = [rec for records in self._history.values() for rec in records]
        return tuple(sorted(flat, key=lambda r: (str(r.path), r.timestamp)))

    def _indexed(self, head: str) -> list[dict[str, Any]]:
        entries: list[tuple[int, dict[str, Any]]] = []
        for key, records in self._history.items():
            segs = key.split(".")
            if segs[0] != head or len(segs) != 2:
                continue
            rec = records[-1]
            entry = {"t": rec.timestamp.to_canonical()}
            if isinstance(rec.value, dict):
                entry.update(rec.value)
            else:
                entry["value"] = rec.value
            entries.append((int(segs[1]), entry))
        return [entry for _, entry in sorted(entries)]

    def state_view(self) -> StateView:
        latest = {key: records[-1] for key, records in self._history.items()}
        observations: dict[str, dict[str, Any]] = {}
        for key, rec in latest.items():
            segs = key.split(".")
            if segs[0] != "obs" or len(segs) != 2:
                continue
            entry = dict(rec.value) if isinstance(rec.value, dict) else {"value": rec.value}
            entry["source"] = rec.source
            entry["t"] = rec.timestamp.to_canonical()
            observations[segs[1]] = entry
        goal_rec = latest.get("goal")
        constraints_rec = latest.get("constraints")
        termination_rec = latest.get("termination")
        return StateView(
            goal=goal_rec.value if goal_rec else None,
            constraints=dict(constraints_rec.value) if constraints_rec else {},
            observations=observations,
            judgments=self._indexed("judgments"),
            approved_actions=self._indexed("approved_actions"),
            pending=self._indexed("pending"),
            termination=dict(termination_rec.value) if termination_rec else {"ready": False},
            latest=latest,
        )

    def snapshot(self, cycle: int) -> MemSnapshot:
        return MemSnapshot.build(self.episode_id, cycle, self.records())

    def count(self, head: str) -> int:
        """Number of existing paths in a family; used to index the next record."""
        return sum(1 for key in self._history if key.split(".", 1)[0] == head)


@dataclass
class LongTermMemory:
    """Read-mostly store of tool schemas and archived episode summaries.

    User preferences are read-only seed data; nothing in the runtime
    writes them.
    """

    tool_schemas: dict[str, dict[str, Any]] = field(default_factory=dict)
    episode_summaries: dict[str, dict[str, Any]] = field(default_factory=dict)
    preferences: dict[str, Any] = field(default_factory=dict)

    def add_tool_schema(self, name: str, schema: dict[str, Any]) -> None:
        self.tool_schemas[name] = schema

    def add_episode_summary(self, episode_id: str, summary: dict[str, Any]) -> None:
        self.episode_summaries[episode_id] = summary


class MemoryArchive:
    """Archived episodes: final snapshots plus an outcome index.

    With a root directory set, snapshots persist as
    ``{episode_id}.cycle{n}.snap`` files next to an ``index.json``.
    """

    def __init__(self, root: FsPath | None = None) -> None:
        self.root = FsPath(root) if root is not None else None
        self.snapshots: dict[str, MemSnapshot] = {}
        self.index: dict[str, dict[str, Any]] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def store(self, snapshot: MemSnapshot, summary: dict[str, Any]) -> None:
        self.snapshots[snapshot.episode_id] = snapshot
        self.index[snapshot.episode_id] = summary
        if self.root is not None:
            name = f"{snapshot.episode_id}.cycle{snapshot.cycle}.snap"
            (self.root / name).write_text(snapshot.serialize(), encoding="utf-8")
            (self.root / "index.json").write_text(
                canonical_json(self.index), encoding="utf-8"
            )

    def __contains__(self, episode_id: str) -> bool:
        return episode_id in self.snapshots


class MemoryStore:
    """Top-level MEM: active episodes, long-term memory, and the archive."""

    def __init__(self, archive_root: FsPath | None = None) -> None:
        self.episodes: dict[str, EpisodeMemory] = {}
        self.long_term = LongTermMemory()
        self.archive = MemoryArchive(archive_root)

    def create_episode(
        self,
        episode_id: str,
        on_write: Callable[[MemRecord], None] | None = None,
        window: int | None = None,
    ) -> EpisodeMemory:
        if episode_id in self.episodes:
            raise ValueError(f"episode {episode_id!r} already active")
        episode = EpisodeMemory(episode_id, on_write=on_write, window=window)
        self.episodes[episode_id] = episode
        return episode

    def get(self, episode_id: str) -> EpisodeMemory:
        try:
            return self.episodes[episode_id]
        except KeyError:
            raise UnknownEpisodeError(episode_id) from None

    def read(self, episode_id: str, path: MemPath | str) -> MemRecord | None:
        episode = self.episodes.get(episode_id)
        if episode is None:
            return None
        return episode.read(path)

    def retrieve_state(self, episode_id: str) -> StateView:
        return self.get(episode_id).state_view()

    def snapshot(self, episode_id: str, cycle: int) -> MemSnapshot:
        return self.get(episode_id).snapshot(cycle)

    def archive_episode(self, episode_id: str, outcome: dict[str, Any]) -> dict[str, Any]:
        """Move a terminated episode to the archive; returns the summary record."""
        if episode_id in self.archive:
            raise ArchiveStateError(f"episode {episode_id!r} already archived")
        episode = self.get(episode_id)
        view = episode.state_view()
        if not view.termination.get("ready", False):
            raise ArchiveStateError(f"episode {episode_id!r} is still live")
        confirmations = [
            entry["confirmation"]
            for entry in view.approved_actions
            if "confirmation" in entry
        ]
        summary = {
            "episode_id": episode_id,
            "goal": view.goal,
            "outcome": outcome,
            "confirmations": confirmations,
        }
        snapshot = episode.snapshot(cycle=view.latest["termination"].timestamp.cycle)
        self.archive.store(snapshot, summary)
        self.long_term.add_episode_summary(episode_id, summary)
        del self.episodes[episode_id]
        return summary
