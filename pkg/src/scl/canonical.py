"""Canonical serialization and hashing shared by memory, traces, and suites.

Every hashed artifact in the system (memory snapshots, trace events,
episode specs, suite manifests) goes through `canonical_json`, so hashes
are byte-stable across runs and platforms.
"""

from __future__ import annotations

import hashlib
import json
import random
from typing import Any

# prev_hash of the first event in every trace chain
GENESIS_HASH = "0" * 64


def canonical_json(obj: Any) -> str:
    """Serialize to the canonical wire form: sorted keys, no whitespace, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def content_hash(obj: Any) -> str:
    """Hash of the canonical serialization of `obj`."""
    return sha256_hex(canonical_json(obj))


def stream_seed(*parts: Any) -> int:
    """Stable integer seed derived from labeled parts.

    Built on SHA-256, never on builtin hash(), so derived RNG streams are
    reproducible across processes.
    """
    tag = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "big")


def stream_rng(*parts: Any) -> random.Random:
    """Independent seeded RNG stream for the given labels."""
    return random.Random(stream_seed(*parts))
