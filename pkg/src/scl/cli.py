"""Command line entry points: run suites, verify and replay traces, report.

Exit codes: 0 success, 1 usage error, 2 verification failure,
3 acceptance-gate failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .cognition import FaultModel
from .loop import Trace, TraceTamperError, replay, verify_trace
from .metrics import SuiteReport
from .suite import ManifestError, RunManifest, rescore, run_suite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_GATE = 3


class GateFailure(Exception):
    pass


@click.group()
def cli() -> None:
    """Structured cognitive loop runner and trace tooling."""


@cli.command()
@click.option("--scenario", type=click.Choice(["A", "B", "C", "all"]), default="all",
              show_default=True, help="Scenario family to run.")
@click.option("--templates", type=int, default=12, show_default=True,
              help="Templates per scenario (1..12).")
@click.option("--seeds", type=int, default=10, show_default=True,
              help="Episode seeds per template.")
@click.option("--system", "systems", multiple=True,
              type=click.Choice(["scl", "no-mem", "no-control", "none"]),
              help="System/ablation to run; repeatable. Default: scl.")
@click.option("--cognition", type=click.Choice(["oracle", "faulty", "adapter"]),
              default="oracle", show_default=True)
@click.option("--fault-redundant", type=float, default=None,
              help="Probability of proposing an already-executed call.")
@click.option("--fault-forget", type=float, default=None,
              help="Probability of re-querying an existing observation.")
@click.option("--fault-premature", type=float, default=None,
              help="Probability of proposing termination early.")
@click.option("--fault-unsupported", type=float, default=None,
              help="Probability of attaching an unsupported assertion.")
@click.option("--budget", type=int, default=20, show_default=True)
@click.option("--noise-bound", type=float, default=1.0, show_default=True)
@click.option("--transient-rate", type=float, default=0.0, show_default=True,
              help="Injected transient tool failure rate (first attempt only).")
@click.option("--cities", type=click.Choice(["3", "5"]), default="3", show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--seed", type=int, default=0, show_default=True, help="Global seed.")
def run(scenario, templates, seeds, systems, cognition, fault_redundant, fault_forget,
        fault_premature, fault_unsupported, budget, noise_bound, transient_rate,
        cities, out, seed) -> None:
    """Run a manifest-driven episode suite and write traces plus a report."""
    fault_given = any(
        p is not None
        for p in (fault_redundant, fault_forget, fault_premature, fault_unsupported)
    )
    if cognition == "faulty" and not fault_given:
        fault_model = FaultModel.defaults()
    else:
        fault_model = FaultModel(
            p_redundant=fault_redundant or 0.0,
            p_forget=fault_forget or 0.0,
            p_premature=fault_premature or 0.0,
            p_unsupported=fault_unsupported or 0.0,
        )
    manifest = RunManifest(
        scenarios=("A", "B", "C") if scenario == "all" else (scenario,),
        templates=templates,
        seeds=seeds,
        systems=systems or ("scl",),
        cognition=cognition,
        fault_model=fault_model,
        budget=budget,
        noise_bound=noise_bound,
        transient_failure_rate=transient_rate,
        cities=int(cities),
        global_seed=seed,
    )
    try:
        manifest.validate()
    except ManifestError as exc:
        raise click.UsageError(str(exc)) from exc
    report = run_suite(manifest, Path(out))
    click.echo(report.render_text())


@cli.command()
@click.argument("trace_path", type=click.Path(exists=True))
def verify(trace_path) -> None:
    """Verify a trace's hash chain, phase order, and outcome line."""
    trace = Trace.read_file(trace_path)
    try:
        verify_trace(trace)
    except TraceTamperError as exc:
        click.echo(f"verification failed: {exc}")
        sys.exit(EXIT_VERIFY)
    click.echo(f"ok: {len(trace.events)} events, chain verified")


@cli.command(name="replay")
@click.argument("trace_path", type=click.Path(exists=True))
def replay_cmd(trace_path) -> None:
    """Replay memory writes and check the final snapshot hash."""
    trace = Trace.read_file(trace_path)
    try:
        snapshot = replay(trace)
    except ValueError as exc:
        click.echo(f"replay failed: {exc}")
        sys.exit(EXIT_VERIFY)
    click.echo(f"ok: final snapshot {snapshot.content_hash} reproduced")


@cli.command()
@click.argument("run_dir", type=click.Path(exists=True))
@click.option("--expect-perfect", "expect_perfect", metavar="SYSTEM", default=None,
              help="Gate: fail unless SYSTEM scores TSR=100, TUE=0, MF=1, "
                   "hallucinations=0, GFS=1.")
def report(run_dir, expect_perfect) -> None:
    """Recompute and print the suite report from traces on disk."""
    suite_report = rescore(run_dir)
    click.echo(suite_report.render_text())
    if expect_perfect is not None:
        _check_gate(suite_report, expect_perfect)


def _check_gate(suite_report: SuiteReport, system: str) -> None:
    row = suite_report.rows.get(system)
    if row is None:
        raise GateFailure(f"system {system!r} not in report")
    expected = {"tsr": 100.0, "gfs": 1.0, "tue": 0.0, "mf": 1.0, "hallucinations": 0.0}
    off = {k: row[k] for k, v in expected.items() if row[k] != v}
    if off:
        raise GateFailure(f"{system} missed the gate: {off}")


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    except GateFailure as exc:
        click.echo(f"gate failure: {exc}", err=True)
        sys.exit(EXIT_GATE)
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
