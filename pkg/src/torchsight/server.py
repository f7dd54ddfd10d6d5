"""Loopback HTTP service for the analyst UI.

Scan jobs run in background threads; reports and triage overlays persist as
plain files under the workspace so nothing is lost on restart. Every
response body carries schema_version.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .errors import TorchsightError
from .findings import DocumentResult, elect_primary
from .inference import InferenceClient, InferenceOptions
from .patterns import compile_patterns
from .report import (
    ScanReport,
    build_report,
    finding_id,
    parse_report,
    to_html,
    to_json,
    to_sarif,
)
from .scan import ScanConfig, run_scan, scan_exit_code
from .taxonomy import Severity, TaxonomyRegistry, load_registry

SCHEMA_VERSION = "1"
TRIAGE_VERDICTS = ("confirmed", "false_positive", "unreviewed")

JOB_STATES = ("queued", "running", "done", "failed")


class ScanRequest(BaseModel):
    root: str
    mode: str = "regex_only"
    fail_on: Optional[str] = None
    ignore: list[str] = Field(default_factory=list)
    reproducible: bool = False


class TriageRequest(BaseModel):
    verdict: str


@dataclass
class Job:
    id: str
    config: ScanConfig
    state: str = "queued"
    done: int = 0
    total: int = 0
    results: list[DocumentResult] = dataclass_field(default_factory=list)
    report: Optional[ScanReport] = None
    error: Optional[str] = None
    triage: dict[str, str] = dataclass_field(default_factory=dict)
    lock: threading.Lock = dataclass_field(default_factory=threading.Lock)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(
        {"schema_version": SCHEMA_VERSION, "error": message}, status_code=status
    )


def _finding_row(result: DocumentResult, index: int, triage: dict[str, str]) -> dict:
    finding = result.findings[index]
    fid = finding_id(result.path, index)
    return {
        "finding_id": fid,
        "path": result.path,
        "category": finding.category.value,
        "subcategory": finding.subcategory.canonical if finding.subcategory else None,
        "severity": finding.severity.value,
        "detectors": list(finding.detectors),
        "rule": finding.rule,
        "span": list(finding.span) if finding.span else None,
        "evidence": finding.evidence,
        "explanation": finding.explanation,
        "triage": triage.get(fid, "unreviewed"),
    }


def create_app(
    workspace: Path,
    default_inference: Optional[InferenceOptions] = None,
    registry: Optional[TaxonomyRegistry] = None,
) -> FastAPI:
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)
    registry = registry or load_registry()
    inference = default_inference or InferenceOptions()
    engine = compile_patterns(None, registry)

    app = FastAPI(title="torchsight", docs_url=None, redoc_url=None)
    # the UI may be served from another loopback port; the trust boundary is
    # the loopback bind, not the Origin header
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    jobs: dict[str, Job] = {}
    jobs_lock = threading.Lock()

    def job_dir(job_id: str) -> Path:
        return workspace / job_id

    def persist_report(job: Job) -> None:
        target = job_dir(job.id)
        target.mkdir(parents=True, exist_ok=True)
        (target / "report.json").write_bytes(to_json(job.report))

    def persist_triage(job: Job) -> None:
        target = job_dir(job.id)
        target.mkdir(parents=True, exist_ok=True)
        (target / "triage.json").write_text(
            json.dumps(job.triage, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def load_job_from_disk(job_id: str) -> Optional[Job]:
        report_path = job_dir(job_id) / "report.json"
        if not report_path.is_file():
            return None
        try:
            report = parse_report(report_path.read_bytes())
        except TorchsightError:
            return None
        job = Job(id=job_id, config=ScanConfig(), state="done")
        job.report = report
        job.results = list(report.results)
        job.done = job.total = len(report.results)
        triage_path = job_dir(job_id) / "triage.json"
        if triage_path.is_file():
            try:
                stored = json.loads(triage_path.read_text(encoding="utf-8"))
                job.triage = {str(k): str(v) for k, v in stored.items()}
            except (OSError, json.JSONDecodeError):
                pass
        return job

    def get_job(job_id: str) -> Optional[Job]:
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None:
                job = load_job_from_disk(job_id)
                if job is not None:
                    jobs[job_id] = job
            return job

    def run_job(job: Job) -> None:
        client = None
        try:
            if job.config.mode != "regex_only":
                client = InferenceClient(job.config.inference)
            with job.lock:
                job.state = "running"

            def progress(done: int, total: int) -> None:
                with job.lock:
                    job.done = done
                    job.total = total

            def on_result(result: DocumentResult) -> None:
                with job.lock:
                    job.results.append(result)

            report = run_scan(
                job.config,
                registry,
                engine=engine if job.config.mode != "llm_only" else None,
                client=client,
                progress=progress,
                on_result=on_result,
            )
            with job.lock:
                job.report = report
                job.state = "done"
            persist_report(job)
        except Exception as exc:
            with job.lock:
                job.state = "failed"
                job.error = str(exc)
        finally:
            if client is not None:
                client.close()

    @app.get("/taxonomy")
    def taxonomy() -> JSONResponse:
        return JSONResponse(
            {"schema_version": SCHEMA_VERSION, "taxonomy": registry.dump()}
        )

    @app.post("/scan", status_code=202)
    def submit_scan(request: ScanRequest):
        root = Path(request.root)
        if not root.is_dir():
            return _error(400, f"root is not a readable directory: {request.root}")
        if request.mode not in ("regex_only", "llm_only", "hybrid"):
            return _error(400, f"unknown mode: {request.mode}")
        fail_on = None
        if request.fail_on:
            try:
                fail_on = Severity(request.fail_on)
            except ValueError:
                return _error(400, f"unknown severity: {request.fail_on}")
        config = ScanConfig(
            roots=[request.root],
            mode=request.mode,
            fail_on=fail_on,
            reproducible=request.reproducible,
            ignore_extra=tuple(request.ignore),
            inference=inference,
        )
        if request.mode != "regex_only":
            try:
                InferenceClient(config.inference).close()
            except TorchsightError as exc:
                return _error(400, str(exc))
        job = Job(id=uuid.uuid4().hex[:12], config=config)
        with jobs_lock:
            jobs[job.id] = job
        threading.Thread(target=run_job, args=(job,), daemon=True).start()
        return JSONResponse(
            {"schema_version": SCHEMA_VERSION, "job_id": job.id}, status_code=202
        )

    @app.get("/scan/{job_id}")
    def job_state(job_id: str):
        job = get_job(job_id)
        if job is None:
            return _error(404, f"unknown job: {job_id}")
        with job.lock:
            body = {
                "schema_version": SCHEMA_VERSION,
                "job_id": job.id,
                "state": job.state,
                "progress": {"done": job.done, "total": job.total},
                "error": job.error,
            }
            if job.report is not None and job.config.fail_on is not None:
                body["exit_code"] = scan_exit_code(job.report, job.config.fail_on)
        return JSONResponse(body)

    @app.get("/scan/{job_id}/findings")
    def job_findings(
        job_id: str,
        severity: Optional[str] = None,
        category: Optional[str] = None,
    ):
        job = get_job(job_id)
        if job is None:
            return _error(404, f"unknown job: {job_id}")
        min_rank = None
        if severity:
            try:
                min_rank = Severity(severity).rank
            except ValueError:
                return _error(400, f"unknown severity: {severity}")
        with job.lock:
            results = list(job.results)
            state = job.state
            triage = dict(job.triage)
        rows = []
        for result in sorted(results, key=lambda r: r.path):
            for index in range(len(result.findings)):
                row = _finding_row(result, index, triage)
                if min_rank is not None and Severity(row["severity"]).rank < min_rank:
                    continue
                if category and row["category"] != category:
                    continue
                rows.append(row)
        return JSONResponse(
            {
                "schema_version": SCHEMA_VERSION,
                "job_id": job_id,
                "state": state,
                "findings": rows,
            }
        )

    @app.post("/scan/{job_id}/findings/{fid}/triage")
    def triage_finding(job_id: str, fid: str, request: TriageRequest):
        job = get_job(job_id)
        if job is None:
            return _error(404, f"unknown job: {job_id}")
        if request.verdict not in TRIAGE_VERDICTS:
            return _error(
                400,
                f"unknown verdict {request.verdict!r}, expected one of "
                f"{', '.join(TRIAGE_VERDICTS)}",
            )
        with job.lock:
            known = {
                finding_id(result.path, index)
                for result in job.results
                for index in range(len(result.findings))
            }
            if fid not in known:
                return _error(404, f"unknown finding id: {fid}")
            job.triage[fid] = request.verdict
            persist_triage(job)
        return JSONResponse(
            {
                "schema_version": SCHEMA_VERSION,
                "job_id": job_id,
                "finding_id": fid,
                "triage": request.verdict,
            }
        )

    @app.get("/scan/{job_id}/report")
    def job_report(
        job_id: str, format: str = "json", exclude: Optional[str] = None
    ):
        job = get_job(job_id)
        if job is None:
            return _error(404, f"unknown job: {job_id}")
        with job.lock:
            report = job.report
            triage = dict(job.triage)
        if report is None:
            return _error(409, f"job {job_id} has no report yet")
        if exclude is not None and exclude != "false_positive":
            return _error(400, f"unsupported exclude filter: {exclude}")
        if exclude == "false_positive":
            report = _without_false_positives(report, triage)
        if format == "json":
            return Response(to_json(report), media_type="application/json")
        if format == "sarif":
            return Response(to_sarif(report), media_type="application/json")
        if format == "html":
            return Response(to_html(report), media_type="text/html")
        return _error(400, f"unknown report format: {format}")

    return app


def _without_false_positives(
    report: ScanReport, triage: dict[str, str]
) -> ScanReport:
    """Rebuild the report with triaged-away findings removed."""
    filtered: list[DocumentResult] = []
    for result in report.results:
        keep = [
            finding
            for index, finding in enumerate(result.findings)
            if triage.get(finding_id(result.path, index)) != "false_positive"
        ]
        if result.status == "ok" and keep != result.findings:
            primary_category, primary_subcategory = elect_primary(keep)
        else:
            primary_category = result.primary_category
            primary_subcategory = result.primary_subcategory
        copy = DocumentResult(
            path=result.path,
            status=result.status,
            mode=result.mode,
            primary_category=primary_category,
            primary_subcategory=primary_subcategory,
            findings=keep,
            reason=result.reason,
            truncated=result.truncated,
            scanned_chars=result.scanned_chars,
            diagnostics=list(result.diagnostics),
        )
        filtered.append(copy)
    rebuilt = build_report(
        filtered,
        taxonomy_version=report.taxonomy_version,
        prompt_hash=report.prompt_hash,
        reproducible=report.reproducible,
        started=report.started,
        finished=report.finished,
    )
    return rebuilt
