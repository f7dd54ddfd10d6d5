"""Scan orchestration: walk, load, classify, and assemble reports.

Shared by the CLI and the serve API. Fail-closed: a document that cannot be
classified is an error result, and errors trip the severity gate whenever a
gate is configured.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Callable, Optional

from .classifier import classify_document
from .errors import BinaryDocumentError, IngestError
from .findings import DocumentResult
from .inference import InferenceClient, InferenceOptions, prompt_hash
from .ingest import (
    DEFAULT_MAX_FILE_BYTES,
    SkipRecord,
    load_document,
    read_stdin,
    walk_tree,
)
from .patterns import RegexEngine
from .report import ScanReport, build_report, utc_now_iso
from .taxonomy import Severity, TaxonomyRegistry


@dataclass
class ScanConfig:
    roots: list[str] = field(default_factory=list)
    mode: str = "regex_only"
    fail_on: Optional[Severity] = None
    reproducible: bool = False
    ignore_extra: tuple[str, ...] = ()
    inference: InferenceOptions = field(default_factory=InferenceOptions)
    max_file_bytes: int = DEFAULT_MAX_FILE_BYTES
    follow_symlinks: bool = False
    workers: int = 4


def _skip_result(record: SkipRecord, mode: str) -> DocumentResult:
    reason = record.reason if not record.detail else f"{record.reason}: {record.detail}"
    return DocumentResult(
        path=record.path, status="skipped", mode=mode, reason=reason
    )


def _classify_path(
    root: Path,
    rel: str,
    display: str,
    config: ScanConfig,
    registry: TaxonomyRegistry,
    engine: Optional[RegexEngine],
    client: Optional[InferenceClient],
) -> DocumentResult:
    try:
        doc = load_document(root / rel, display_path=display)
    except BinaryDocumentError as exc:
        return DocumentResult(
            path=display, status="skipped", mode=config.mode, reason=str(exc)
        )
    except IngestError as exc:
        return DocumentResult(
            path=display, status="error", mode=config.mode, reason=str(exc)
        )
    return classify_document(
        doc, config.mode, registry, engine=engine, client=client
    )


def run_scan(
    config: ScanConfig,
    registry: TaxonomyRegistry,
    engine: Optional[RegexEngine] = None,
    client: Optional[InferenceClient] = None,
    path_filter: Optional[set[str]] = None,
    progress: Optional[Callable[[int, int], None]] = None,
    on_result: Optional[Callable[[DocumentResult], None]] = None,
) -> ScanReport:
    """Scan every configured root and build the report.

    `path_filter` restricts scanning to the given root-relative paths (diff
    mode); ignore rules still apply. `progress(done, total)` is called as
    files finish; `on_result` receives each DocumentResult as it lands,
    letting callers expose partial results while the scan runs.
    """
    started = utc_now_iso()
    multi_root = len(config.roots) > 1
    results: list[DocumentResult] = []
    jobs: list[tuple[Path, str, str]] = []

    for root_text in config.roots:
        root = Path(root_text)
        walk = walk_tree(
            root,
            extra_patterns=config.ignore_extra,
            max_file_bytes=config.max_file_bytes,
            follow_symlinks=config.follow_symlinks,
        )
        prefix = str(PurePosixPath(root_text)) + "/" if multi_root else ""
        for record in walk.skipped:
            if path_filter is not None and record.path not in path_filter:
                continue
            results.append(
                _skip_result(
                    SkipRecord(prefix + record.path, record.reason, record.detail),
                    config.mode,
                )
            )
        for rel in walk.files:
            if path_filter is not None and rel not in path_filter:
                continue
            jobs.append((walk.root, rel, prefix + rel))

    for result in results:
        if on_result:
            on_result(result)

    total = len(jobs)
    done = 0
    if progress:
        progress(0, total)

    def work(job: tuple[Path, str, str]) -> DocumentResult:
        root, rel, display = job
        return _classify_path(root, rel, display, config, registry, engine, client)

    def collect(result: DocumentResult) -> None:
        nonlocal done
        results.append(result)
        done += 1
        if on_result:
            on_result(result)
        if progress:
            progress(done, total)

    workers = max(1, config.workers)
    if workers == 1 or len(jobs) <= 1:
        for job in jobs:
            collect(work(job))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(work, jobs):
                collect(result)

    return build_report(
        results,
        taxonomy_version=registry.version,
        prompt_hash=(
            prompt_hash(registry) if config.mode != "regex_only" else None
        ),
        reproducible=config.reproducible,
        started=started,
        finished=utc_now_iso(),
    )


def run_scan_stdin(
    config: ScanConfig,
    registry: TaxonomyRegistry,
    engine: Optional[RegexEngine] = None,
    client: Optional[InferenceClient] = None,
    stream=None,
) -> ScanReport:
    started = utc_now_iso()
    doc = read_stdin(stream)
    result = classify_document(
        doc, config.mode, registry, engine=engine, client=client
    )
    return build_report(
        [result],
        taxonomy_version=registry.version,
        prompt_hash=(
            prompt_hash(registry) if config.mode != "regex_only" else None
        ),
        reproducible=config.reproducible,
        started=started,
        finished=utc_now_iso(),
    )


def scan_exit_code(report: ScanReport, fail_on: Optional[Severity]) -> int:
    """0 when nothing meets the gate, 1 on breach or (fail-closed) errors."""
    if fail_on is None:
        return 0
    if any(r.status == "error" for r in report.results):
        return 1
    for result in report.results:
        severity = result.max_severity
        if severity is not None and severity.rank >= fail_on.rank:
            return 1
    return 0


def make_client(config: ScanConfig) -> Optional[InferenceClient]:
    if config.mode == "regex_only":
        return None
    return InferenceClient(config.inference)
