"""Manifest-driven suite runner: reproducible episode grids on disk.

A manifest pins every byte of the output: the episode grid (scenarios,
templates, seeds, city pool, noise bound, budget), the system/ablation
list, the cognition policy and fault model, and the global seed that
drives episode ordering and per-episode RNG streams. Rerunning an
unchanged manifest reproduces identical trace files; episodes whose
trace already verifies on disk are skipped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .canonical import canonical_json, content_hash, stream_rng
from .cognition import FaultModel
from .loop import AgentConfig, Trace, run_episode, verify_trace
from .memory import MemoryStore
from .metrics import EpisodeScores, SuiteReport, aggregate, score_episode
from .scenarios import (
    EpisodeSpec,
    default_suite,
    oracle_outcome,
    suite_hash,
    suite_listing,
)

SYSTEMS = ("scl", "no-mem", "no-control", "none")


class ManifestError(ValueError):
    """Manifest fails validation; nothing was run."""


@dataclass(frozen=True)
class RunManifest:
    scenarios: tuple[str, ...] = ("A", "B", "C")
    templates: int = 12
    seeds: int = 10
    systems: tuple[str, ...] = ("scl",)
    cognition: str = "oracle"
    fault_model: FaultModel = field(default_factory=FaultModel)
    budget: int = 20
    noise_bound: float = 1.0
    transient_failure_rate: float = 0.0
    cities: int = 3
    global_seed: int = 0
    run_seeds: tuple[int, ...] = ()

    def validate(self) -> None:
        if not self.scenarios or any(s not in ("A", "B", "C") for s in self.scenarios):
            raise ManifestError(f"bad scenarios {self.scenarios}")
        if not 1 <= self.templates <= 12:
            raise ManifestError(f"templates must be 1..12, got {self.templates}")
        if self.seeds < 1:
            raise ManifestError("at least one seed per template is required")
        if not self.systems or any(s not in SYSTEMS for s in self.systems):
            raise ManifestError(f"bad systems {self.systems}")
        if self.cognition not in ("oracle", "faulty", "adapter"):
            raise ManifestError(f"bad cognition {self.cognition!r}")
        if self.cities not in (3, 5):
            raise ManifestError("cities must be 3 or 5")
        if self.budget < 0:
            raise ManifestError("budget must be >= 0")

    @property
    def effective_run_seeds(self) -> tuple[int, ...]:
        return self.run_seeds if self.run_seeds else (self.global_seed,)

    def to_canonical(self) -> dict[str, Any]:
        return {
            "scenarios": list(self.scenarios),
            "templates": self.templates,
            "seeds": self.seeds,
            "systems": list(self.systems),
            "cognition": self.cognition,
            "fault_model": self.fault_model.to_canonical(),
            "budget": self.budget,
            "noise_bound": self.noise_bound,
            "transient_failure_rate": self.transient_failure_rate,
            "cities": self.cities,
            "global_seed": self.global_seed,
            "run_seeds": list(self.effective_run_seeds),
        }

    @property
    def manifest_hash(self) -> str:
        return content_hash(self.to_canonical())

    @classmethod
    def from_canonical(cls, data: dict[str, Any]) -> "RunManifest":
        return cls(
            scenarios=tuple(data["scenarios"]),
            templates=data["templates"],
            seeds=data["seeds"],
            systems=tuple(data["systems"]),
            cognition=data["cognition"],
            fault_model=FaultModel(**data["fault_model"]),
            budget=data["budget"],
            noise_bound=data["noise_bound"],
            transient_failure_rate=data["transient_failure_rate"],
            cities=data["cities"],
            global_seed=data["global_seed"],
            run_seeds=tuple(data["run_seeds"]),
        )

    def episode_specs(self) -> list[EpisodeSpec]:
        return default_suite(
            self.scenarios,
            self.templates,
            self.seeds,
            cities=self.cities,
            noise_bound=self.noise_bound,
            budget=self.budget,
        )

    def agent_config(self, system: str) -> AgentConfig:
        return AgentConfig.from_system(
            system,
            cognition=self.cognition,
            fault_model=self.fault_model,
            budget=self.budget,
            transient_failure_rate=self.transient_failure_rate,
        )


def _reusable_trace(path: Path, spec: EpisodeSpec, config: AgentConfig) -> Trace | None:
    if not path.exists():
        return None
    try:
        trace = Trace.read_file(path)
        verify_trace(trace)
    except (ValueError, json.JSONDecodeError, KeyError):
        return None
    init = trace.events[0].payload
    if init.get("spec_hash") != spec.spec_hash:
        return None
    if init.get("config") != config.to_canonical():
        return None
    return trace


def run_suite(manifest: RunManifest, out_dir: Path | str) -> SuiteReport:
    """Run (or resume) every episode of the manifest; write traces and reports."""
    manifest.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = manifest.episode_specs()
    (out / "manifest.json").write_text(canonical_json(manifest.to_canonical()), encoding="utf-8")
    (out / "suite.json").write_text(canonical_json(suite_listing(specs)), encoding="utf-8")

    order = list(specs)
    stream_rng("order", manifest.global_seed).shuffle(order)

    scores_by_system: dict[str, list[EpisodeScores]] = {}
    expected_cache = {spec.episode_id: oracle_outcome(spec) for spec in specs}
    for system in manifest.systems:
        config = manifest.agent_config(system)
        scores: list[EpisodeScores] = []
        for run_seed in manifest.effective_run_seeds:
            seed_dir = out / system / f"seed{run_seed}"
            seed_dir.mkdir(parents=True, exist_ok=True)
            store = MemoryStore(archive_root=out / "archive" / system / f"seed{run_seed}")
            for spec in order:
                trace_path = seed_dir / f"{spec.episode_id}.trace"
                trace = _reusable_trace(trace_path, spec, config)
                if trace is None:
                    outcome, trace = run_episode(
                        spec, config, run_seed=run_seed, store=store
                    )
                    trace.write_file(trace_path)
                    snap_path = seed_dir / f"{spec.episode_id}.cycle{outcome.cycles_used}.snap"
                    store.archive_episode(spec.episode_id, outcome.to_canonical())
                    snap = store.archive.snapshots[spec.episode_id]
                    snap_path.write_text(snap.serialize(), encoding="utf-8")
                scores.append(score_episode(trace, spec, expected_cache[spec.episode_id]))
        scores_by_system[system] = scores

    manifest_tag = content_hash(
        {"suite": suite_hash(specs), "manifest": manifest.manifest_hash}
    )
    report = aggregate(
        scores_by_system, {system: manifest_tag for system in manifest.systems}
    )
    (out / "report.txt").write_text(report.render_text() + "\n", encoding="utf-8")
    (out / "report.json").write_text(canonical_json(report.to_canonical()), encoding="utf-8")
    return report


def load_report_inputs(out_dir: Path | str):
    """Rebuild (manifest, specs, traces-by-system) from a finished run directory."""
    out = Path(out_dir)
    manifest = RunManifest.from_canonical(
        json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    )
    specs = manifest.episode_specs()
    return manifest, specs


def rescore(out_dir: Path | str) -> SuiteReport:
    """Recompute the suite report from traces on disk."""
    manifest, specs = load_report_inputs(out_dir)
    out = Path(out_dir)
    expected_cache = {spec.episode_id: oracle_outcome(spec) for spec in specs}
    scores_by_system: dict[str, list[EpisodeScores]] = {}
    for system in manifest.systems:
        scores: list[EpisodeScores] = []
        for run_seed in manifest.effective_run_seeds:
            seed_dir = out / system / f"seed{run_seed}"
            for spec in specs:
                trace = Trace.read_file(seed_dir / f"{spec.episode_id}.trace")
                scores.append(score_episode(trace, spec, expected_cache[spec.episode_id]))
        scores_by_system[system] = scores
    manifest_tag = content_hash(
        {"suite": suite_hash(specs), "manifest": manifest.manifest_hash}
    )
    return aggregate(scores_by_system, {system: manifest_tag for system in manifest.systems})
