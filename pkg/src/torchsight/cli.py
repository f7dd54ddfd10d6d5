"""Command line interface.

Exit codes are CI contract: 0 clean, 1 severity-gate breach (fail-closed on
per-file classification errors), 2 operational error.
"""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path
from typing import Optional

import click

from . import __version__
from .errors import TorchsightError
from .evalkit import (
    load_benchmark,
    load_replay,
    run_benchmark,
    system_from_client,
    system_from_engine,
    system_from_replay,
)
from .inference import InferenceClient, InferenceOptions
from .ingest import diff_filter
from .patterns import compile_patterns, load_pattern_set
from .report import to_html, to_json, to_sarif
from .scan import ScanConfig, run_scan, run_scan_stdin, scan_exit_code
from .taxonomy import Severity, load_registry

EXIT_CLEAN = 0
EXIT_THRESHOLD = 1
EXIT_OPERATIONAL = 2

_FORMATS = {"json": (to_json, "report.json"), "sarif": (to_sarif, "report.sarif"), "html": (to_html, "report.html")}


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(EXIT_OPERATIONAL)


def _read_ignore_files(paths: tuple[str, ...]) -> tuple[str, ...]:
    lines: list[str] = []
    for path in paths:
        try:
            lines.extend(Path(path).read_text(encoding="utf-8").splitlines())
        except OSError as exc:
            _fail(f"cannot read ignore file {path}: {exc}")
    return tuple(lines)


def _probe_backend(client: InferenceClient) -> None:
    """Reachability check so a dead backend is an operational error (exit 2)
    instead of a wall of per-file failures."""
    import httpx

    try:
        httpx.get(client.options.endpoint, timeout=5.0)
    except httpx.TransportError as exc:
        _fail(f"inference backend unreachable at {client.options.endpoint}: {exc}")


@click.group()
@click.version_option(version=__version__, prog_name="torchsight")
def main() -> None:
    """Local security document classification and reporting."""


@main.command()
@click.argument("roots", nargs=-1, type=click.Path())
@click.option(
    "--mode",
    type=click.Choice(["regex_only", "llm_only", "hybrid"]),
    default="regex_only",
    show_default=True,
)
@click.option(
    "--format",
    "formats",
    type=click.Choice(sorted(_FORMATS)),
    multiple=True,
    default=("json",),
    show_default=True,
    help="Report format; repeat for several.",
)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Directory for report files; default prints the first format to stdout.")
@click.option("--fail-on", type=click.Choice([s.value for s in Severity]), default=None,
              help="Exit 1 when any finding reaches this severity.")
@click.option("--stdin", "use_stdin", is_flag=True, help="Classify piped stdin instead of walking roots.")
@click.option("--diff", "diff_source", type=str, default=None,
              help="Unified diff (path or '-') restricting the scan to touched files.")
@click.option("--ignore-file", "ignore_files", multiple=True, type=click.Path(),
              help="Extra ignore-rule file; rules take precedence over tree rules.")
@click.option("--patterns", "patterns_path", type=click.Path(), default=None,
              help="Pattern config JSON replacing the builtin set.")
@click.option("--endpoint", default=None, help="Inference endpoint URL (loopback unless --allow-remote).")
@click.option("--model", "model_name", default=None, help="Model name sent to the backend.")
@click.option("--allow-remote", is_flag=True, help="Permit a non-loopback inference endpoint.")
@click.option("--reproducible", is_flag=True, help="Suppress timestamps for byte-stable reports.")
@click.option("--workers", type=int, default=4, show_default=True)
def scan(
    roots: tuple[str, ...],
    mode: str,
    formats: tuple[str, ...],
    out_dir: Optional[str],
    fail_on: Optional[str],
    use_stdin: bool,
    diff_source: Optional[str],
    ignore_files: tuple[str, ...],
    patterns_path: Optional[str],
    endpoint: Optional[str],
    model_name: Optional[str],
    allow_remote: bool,
    reproducible: bool,
    workers: int,
) -> None:
    """Scan directory trees (or stdin, or a diff's files) for findings."""
    if use_stdin and roots:
        _fail("--stdin and ROOTS are mutually exclusive")
    if use_stdin and diff_source:
        _fail("--stdin and --diff are mutually exclusive")
    if diff_source and len(roots) > 1:
        _fail("--diff supports a single root")

    registry = load_registry()
    options = InferenceOptions(
        endpoint=endpoint or InferenceOptions.endpoint,
        model_name=model_name or InferenceOptions.model_name,
        allow_remote=allow_remote,
    )
    config = ScanConfig(
        roots=list(roots) if roots else ["."],
        mode=mode,
        fail_on=Severity(fail_on) if fail_on else None,
        reproducible=reproducible,
        ignore_extra=_read_ignore_files(ignore_files),
        inference=options,
        workers=workers,
    )

    engine = None
    client = None
    try:
        if mode != "llm_only":
            pattern_set = load_pattern_set(patterns_path) if patterns_path else None
            engine = compile_patterns(pattern_set, registry)
        if mode != "regex_only":
            client = InferenceClient(options)
            _probe_backend(client)
    except TorchsightError as exc:
        _fail(str(exc))

    try:
        if use_stdin:
            report = run_scan_stdin(config, registry, engine=engine, client=client)
        elif diff_source is not None:
            if diff_source == "-":
                diff_text = sys.stdin.read()
            else:
                try:
                    diff_text = Path(diff_source).read_text(encoding="utf-8")
                except OSError as exc:
                    _fail(f"cannot read diff {diff_source}: {exc}")
            path_filter = set(diff_filter(diff_text, config.roots[0]))
            report = run_scan(
                config, registry, engine=engine, client=client, path_filter=path_filter
            )
        else:
            report = run_scan(config, registry, engine=engine, client=client)
    except TorchsightError as exc:
        _fail(str(exc))
    finally:
        if client is not None:
            client.close()

    if out_dir is not None:
        target = Path(out_dir)
        target.mkdir(parents=True, exist_ok=True)
        for name in formats:
            serializer, filename = _FORMATS[name]
            (target / filename).write_bytes(serializer(report))
    else:
        serializer, _ = _FORMATS[formats[0]]
        sys.stdout.buffer.write(serializer(report))
        sys.stdout.buffer.flush()

    sys.exit(scan_exit_code(report, config.fail_on))


@main.command()
@click.option("--benchmark", "benchmark_path", required=True, type=click.Path())
@click.option("--endpoint", default=None, help="Score a live loopback backend.")
@click.option("--replay", "replay_path", default=None, type=click.Path(),
              help="Score recorded model outputs keyed by sample id.")
@click.option("--regex-only", "regex_only", is_flag=True, help="Score the builtin pattern layer.")
@click.option("--model", "model_name", default=None)
@click.option("--allow-remote", is_flag=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def eval(
    benchmark_path: str,
    endpoint: Optional[str],
    replay_path: Optional[str],
    regex_only: bool,
    model_name: Optional[str],
    allow_remote: bool,
    out_dir: str,
) -> None:
    """Run a benchmark against one system and write metrics artifacts."""
    chosen = [bool(endpoint), bool(replay_path), regex_only]
    if sum(chosen) != 1:
        _fail("choose exactly one of --endpoint, --replay, --regex-only")

    registry = load_registry()
    client = None
    try:
        samples = load_benchmark(benchmark_path, registry)
        if regex_only:
            system = system_from_engine(compile_patterns(None, registry), registry)
        elif replay_path:
            system = system_from_replay(load_replay(replay_path), registry)
        else:
            options = InferenceOptions(
                endpoint=endpoint,
                model_name=model_name or InferenceOptions.model_name,
                allow_remote=allow_remote,
            )
            client = InferenceClient(options)
            _probe_backend(client)
            system = system_from_client(client, registry)
        records, metrics = run_benchmark(samples, system, registry)
    except TorchsightError as exc:
        _fail(str(exc))
    finally:
        if client is not None:
            client.close()

    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    (target / "metrics.json").write_text(
        json.dumps(metrics.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    (target / "metrics.txt").write_text(metrics.to_text_table(), encoding="utf-8")
    with open(target / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "id": record.sample_id,
                        "predicted_category": (
                            record.predicted_category.value
                            if record.predicted_category
                            else None
                        ),
                        "predicted_subcategory_raw": record.predicted_subcategory_raw,
                        "latency": record.latency,
                        "error": record.error,
                        "diagnostics": record.diagnostics,
                    }
                )
                + "\n"
            )
    click.echo(metrics.to_text_table(), nl=False)
    sys.exit(EXIT_CLEAN)


@main.group()
def dataset() -> None:
    """Dataset curation pipeline stages."""


@dataset.command()
@click.option("--in", "input_path", required=True, type=click.Path())
@click.option("--out", "output_path", required=True, type=click.Path())
def dedupe(input_path: str, output_path: str) -> None:
    """Drop records whose normalized text was already seen."""
    from .datakit import dedupe as dedupe_records, load_corpus, write_records

    registry = load_registry()
    try:
        records = load_corpus(input_path, registry)
    except TorchsightError as exc:
        _fail(str(exc))
    kept, removed = dedupe_records(records)
    write_records(kept, output_path)
    click.echo(f"kept {len(kept)}, removed {removed} duplicates")


@dataset.command()
@click.option("--in", "input_path", required=True, type=click.Path())
@click.option("--out", "output_path", required=True, type=click.Path())
@click.option("--cap", type=int, default=5000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def rebalance(input_path: str, output_path: str, cap: int, seed: int) -> None:
    """Downsample every subcategory to at most --cap records."""
    from .datakit import load_corpus, rebalance as rebalance_records, write_records

    registry = load_registry()
    try:
        records = load_corpus(input_path, registry)
        kept, counts = rebalance_records(records, cap=cap, seed=seed)
    except TorchsightError as exc:
        _fail(str(exc))
    write_records(kept, output_path)
    for canonical in sorted(counts):
        before, after = counts[canonical]
        if before != after:
            click.echo(f"{canonical}: {before} -> {after}")
    click.echo(f"kept {len(kept)} of {len(records)}")


@dataset.command()
@click.option("--in", "input_path", required=True, type=click.Path())
@click.option("--train-out", required=True, type=click.Path())
@click.option("--val-out", required=True, type=click.Path())
@click.option("--fraction", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def split(
    input_path: str, train_out: str, val_out: str, fraction: float, seed: int
) -> None:
    """Seeded train/validation split with a floor-rule validation size."""
    from .datakit import load_corpus, split as split_records, write_records

    registry = load_registry()
    try:
        records = load_corpus(input_path, registry)
        train, validation = split_records(records, fraction, seed)
    except TorchsightError as exc:
        _fail(str(exc))
    write_records(train, train_out)
    write_records(validation, val_out)
    click.echo(f"train {len(train)}, validation {len(validation)}")


@dataset.command("to-sft")
@click.option("--in", "input_path", required=True, type=click.Path())
@click.option("--out", "output_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
def to_sft_command(input_path: str, output_path: str, seed: int) -> None:
    """Convert records to instruction-tuning samples (JSON-lines)."""
    from .datakit import load_corpus, write_sft

    registry = load_registry()
    try:
        records = load_corpus(input_path, registry)
        count = write_sft(records, output_path, phrasing_rng_seed=seed, registry=registry)
    except TorchsightError as exc:
        _fail(str(exc))
    click.echo(f"wrote {count} samples")


@main.command()
@click.option("--bind", default="127.0.0.1:8787", show_default=True,
              help="ADDR:PORT to listen on; loopback unless --allow-remote.")
@click.option("--workspace", "workspace_dir", default="torchsight_workspace",
              show_default=True, type=click.Path())
@click.option("--endpoint", default=None, help="Inference endpoint for scan jobs.")
@click.option("--model", "model_name", default=None)
@click.option("--allow-remote", is_flag=True)
def serve(
    bind: str,
    workspace_dir: str,
    endpoint: Optional[str],
    model_name: Optional[str],
    allow_remote: bool,
) -> None:
    """Run the local HTTP service the analyst UI talks to."""
    import ipaddress

    import uvicorn

    from .server import create_app

    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        _fail(f"--bind must be ADDR:PORT, got {bind!r}")
    port = int(port_text)

    if not allow_remote:
        loopback = host == "localhost"
        if not loopback:
            try:
                loopback = ipaddress.ip_address(host).is_loopback
            except ValueError:
                loopback = False
        if not loopback:
            _fail(f"refusing non-loopback bind {bind!r} without --allow-remote")

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        _fail(f"cannot bind {bind}: {exc}")
    finally:
        probe.close()

    options = InferenceOptions(
        endpoint=endpoint or InferenceOptions.endpoint,
        model_name=model_name or InferenceOptions.model_name,
        allow_remote=allow_remote,
    )
    app = create_app(Path(workspace_dir), default_inference=options)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
