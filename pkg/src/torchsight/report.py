"""Report assembly and serialization: canonical JSON, SARIF 2.1.0, HTML.

All three serializers are pure functions of the report; with the
reproducible flag set there is no timestamp and two runs over identical
results produce byte-identical output.
"""

from __future__ import annotations

import hashlib
import html
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from . import __version__ as TOOL_VERSION
from .errors import ReportError
from .findings import DocumentResult, Finding
from .taxonomy import SEVERITY_ORDER, Category, Severity, SubcategoryId

REPORT_SCHEMA_VERSION = "1"
TOOL_NAME = "torchsight"
SARIF_SCHEMA_URI = "https://json.schemastore.org/sarif-2.1.0.json"

#: SARIF has no critical level; the original severity rides in properties.
SARIF_LEVELS = {
    Severity.CRITICAL: "error",
    Severity.HIGH: "error",
    Severity.MEDIUM: "warning",
    Severity.LOW: "note",
    Severity.INFO: "note",
}


@dataclass
class ScanReport:
    taxonomy_version: str
    results: list[DocumentResult] = field(default_factory=list)
    prompt_hash: Optional[str] = None
    started: Optional[str] = None
    finished: Optional[str] = None
    reproducible: bool = False
    tool_name: str = TOOL_NAME
    tool_version: str = TOOL_VERSION

    @property
    def scanned_files(self) -> int:
        return sum(1 for r in self.results if r.status == "ok")

    @property
    def skipped_files(self) -> int:
        return sum(1 for r in self.results if r.status == "skipped")

    @property
    def error_files(self) -> int:
        return sum(1 for r in self.results if r.status == "error")


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_report(
    results: list[DocumentResult],
    taxonomy_version: str,
    prompt_hash: Optional[str] = None,
    reproducible: bool = False,
    started: Optional[str] = None,
    finished: Optional[str] = None,
) -> ScanReport:
    """Order results by path and stamp tool metadata."""
    ordered = sorted(results, key=lambda r: r.path)
    return ScanReport(
        taxonomy_version=taxonomy_version,
        results=ordered,
        prompt_hash=prompt_hash,
        started=None if reproducible else started,
        finished=None if reproducible else finished,
        reproducible=reproducible,
    )


def finding_id(path: str, finding_index: int) -> str:
    """Stable per-finding id: path digest + ordinal within the document."""
    digest = hashlib.sha256(path.encode("utf-8")).hexdigest()[:12]
    return f"{digest}-{finding_index:02d}"


def summarize(results: list[DocumentResult]) -> dict:
    """Zero-filled counts by category, severity, and per-file primary label."""
    by_category = {c.value: 0 for c in Category}
    by_severity = {s.value: 0 for s in SEVERITY_ORDER}
    files_by_primary = {c.value: 0 for c in Category}
    for result in results:
        for finding in result.findings:
            by_category[finding.category.value] += 1
            by_severity[finding.severity.value] += 1
        if result.status == "ok" and result.primary_category is not None:
            files_by_primary[result.primary_category.value] += 1
    return {
        "findings_by_category": by_category,
        "findings_by_severity": by_severity,
        "files_by_primary_category": files_by_primary,
    }


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _finding_json(finding: Finding, fid: str) -> dict:
    return {
        "id": fid,
        "category": finding.category.value,
        "subcategory": (
            finding.subcategory.canonical if finding.subcategory else None
        ),
        "severity": finding.severity.value,
        "detectors": list(finding.detectors),
        "rule": finding.rule,
        "span": list(finding.span) if finding.span is not None else None,
        "evidence": finding.evidence,
        "explanation": finding.explanation,
    }


def _result_json(result: DocumentResult) -> dict:
    return {
        "path": result.path,
        "status": result.status,
        "mode": result.mode,
        "primary_category": (
            result.primary_category.value if result.primary_category else None
        ),
        "primary_subcategory": (
            result.primary_subcategory.canonical
            if result.primary_subcategory
            else None
        ),
        "truncated": result.truncated,
        "scanned_chars": result.scanned_chars,
        "reason": result.reason,
        "diagnostics": list(result.diagnostics),
        "findings": [
            _finding_json(f, finding_id(result.path, i))
            for i, f in enumerate(result.findings)
        ],
    }


def report_to_dict(report: ScanReport) -> dict:
    return {
        "report_schema": REPORT_SCHEMA_VERSION,
        "tool": {
            "name": report.tool_name,
            "version": report.tool_version,
            "taxonomy_version": report.taxonomy_version,
            "prompt_hash": report.prompt_hash,
        },
        "started": report.started,
        "finished": report.finished,
        "scanned_files": report.scanned_files,
        "skipped_files": report.skipped_files,
        "error_files": report.error_files,
        "summary": summarize(report.results),
        "results": [_result_json(r) for r in report.results],
    }


def to_json(report: ScanReport) -> bytes:
    return (
        json.dumps(report_to_dict(report), ensure_ascii=False, indent=2) + "\n"
    ).encode("utf-8")


def _subcategory_from_canonical(canonical: Optional[str]) -> Optional[SubcategoryId]:
    if not canonical:
        return None
    prefix, _, name = canonical.partition(".")
    return SubcategoryId(Category(prefix), name)


def parse_report(data: bytes) -> ScanReport:
    """Rebuild a ScanReport from its JSON serialization."""
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ReportError(f"not a valid JSON report: {exc}") from exc
    if payload.get("report_schema") != REPORT_SCHEMA_VERSION:
        raise ReportError(
            f"unsupported report schema: {payload.get('report_schema')!r}"
        )
    results = []
    for entry in payload.get("results", []):
        findings = []
        for fj in entry.get("findings", []):
            findings.append(
                Finding(
                    category=Category(fj["category"]),
                    subcategory=_subcategory_from_canonical(fj.get("subcategory")),
                    severity=Severity(fj["severity"]),
                    detectors=tuple(fj.get("detectors", ())),
                    explanation=fj.get("explanation") or "",
                    evidence=fj.get("evidence"),
                    span=tuple(fj["span"]) if fj.get("span") else None,
                    rule=fj.get("rule"),
                )
            )
        results.append(
            DocumentResult(
                path=entry["path"],
                status=entry["status"],
                mode=entry.get("mode"),
                primary_category=(
                    Category(entry["primary_category"])
                    if entry.get("primary_category")
                    else None
                ),
                primary_subcategory=_subcategory_from_canonical(
                    entry.get("primary_subcategory")
                ),
                findings=findings,
                reason=entry.get("reason"),
                truncated=bool(entry.get("truncated")),
                scanned_chars=int(entry.get("scanned_chars", 0)),
                diagnostics=list(entry.get("diagnostics", ())),
            )
        )
    tool = payload.get("tool", {})
    return ScanReport(
        taxonomy_version=tool.get("taxonomy_version", ""),
        results=results,
        prompt_hash=tool.get("prompt_hash"),
        started=payload.get("started"),
        finished=payload.get("finished"),
        reproducible=payload.get("started") is None,
        tool_name=tool.get("name", TOOL_NAME),
        tool_version=tool.get("version", TOOL_VERSION),
    )


# ---------------------------------------------------------------------------
# SARIF 2.1.0
# ---------------------------------------------------------------------------


def _sarif_rule_id(finding: Finding) -> str:
    if finding.subcategory is not None:
        return finding.subcategory.canonical
    return finding.category.value


def to_sarif(report: ScanReport) -> bytes:
    rules: dict[str, dict] = {}
    results = []
    for doc in report.results:
        for i, finding in enumerate(doc.findings):
            rule_id = _sarif_rule_id(finding)
            if rule_id not in rules:
                rules[rule_id] = {
                    "id": rule_id,
                    "shortDescription": {"text": rule_id},
                    "properties": {"category": finding.category.value},
                }
            message = finding.explanation or rule_id
            sarif_result = {
                "ruleId": rule_id,
                "level": SARIF_LEVELS[finding.severity],
                "message": {"text": message},
                "locations": [
                    {
                        "physicalLocation": {
                            "artifactLocation": {"uri": doc.path},
                        }
                    }
                ],
                "properties": {
                    "severity": finding.severity.value,
                    "detectors": list(finding.detectors),
                    "finding_id": finding_id(doc.path, i),
                },
            }
            if finding.span is not None:
                start, end = finding.span
                sarif_result["locations"][0]["physicalLocation"]["region"] = {
                    "charOffset": start,
                    "charLength": end - start,
                }
            if finding.evidence is not None:
                sarif_result["properties"]["evidence"] = finding.evidence
            results.append(sarif_result)

    document = {
        "$schema": SARIF_SCHEMA_URI,
        "version": "2.1.0",
        "runs": [
            {
                "tool": {
                    "driver": {
                        "name": report.tool_name,
                        "version": report.tool_version,
                        "rules": sorted(rules.values(), key=lambda r: r["id"]),
                    }
                },
                "results": results,
            }
        ],
    }
    return (json.dumps(document, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# HTML
# ---------------------------------------------------------------------------

_HTML_STYLE = """
body { font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 70rem;
       color: #1a1a1a; }
h1 { font-size: 1.4rem; } h2 { font-size: 1.1rem; margin-top: 2rem; }
table { border-collapse: collapse; margin: 0.5rem 0 1rem; width: 100%; }
th, td { border: 1px solid #ccc; padding: 0.3rem 0.6rem; text-align: left;
         font-size: 0.9rem; }
th { background: #f0f0f0; }
.sev-critical { color: #b30000; font-weight: 600; }
.sev-high { color: #cc5200; font-weight: 600; }
.sev-medium { color: #996600; }
.sev-low, .sev-info { color: #555; }
.status-error { color: #b30000; }
.meta { color: #555; font-size: 0.85rem; }
@media print { body { margin: 0.5rem; } section { page-break-inside: avoid; } }
"""


def _count_table(title: str, counts: dict[str, int]) -> str:
    rows = "".join(
        f"<tr><td>{html.escape(key)}</td><td>{count}</td></tr>"
        for key, count in counts.items()
    )
    return (
        f"<h2>{html.escape(title)}</h2>"
        f"<table><tr><th>name</th><th>count</th></tr>{rows}</table>"
    )


def to_html(report: ScanReport) -> bytes:
    summary = summarize(report.results)
    parts = [
        "<!DOCTYPE html>",
        "<html lang=\"en\"><head><meta charset=\"utf-8\">",
        f"<title>{html.escape(report.tool_name)} scan report</title>",
        f"<style>{_HTML_STYLE}</style></head><body>",
        f"<h1>{html.escape(report.tool_name)} scan report</h1>",
        "<p class=\"meta\">"
        f"tool {html.escape(report.tool_version)} · "
        f"taxonomy {html.escape(report.taxonomy_version)} · "
        f"scanned {report.scanned_files} · skipped {report.skipped_files} · "
        f"errors {report.error_files}"
        + (
            f" · started {html.escape(report.started)}"
            if report.started
            else ""
        )
        + "</p>",
        _count_table("Findings by category", summary["findings_by_category"]),
        _count_table("Findings by severity", summary["findings_by_severity"]),
        _count_table(
            "Files by primary category", summary["files_by_primary_category"]
        ),
        "<h2>Files</h2>",
    ]
    for doc in report.results:
        label = doc.primary_category.value if doc.primary_category else doc.status
        parts.append("<section class=\"file\">")
        parts.append(
            f"<h3>{html.escape(doc.path)} "
            f"<span class=\"status-{html.escape(doc.status)}\">"
            f"[{html.escape(label)}]</span></h3>"
        )
        if doc.reason:
            parts.append(
                f"<p class=\"status-error\">{html.escape(doc.reason)}</p>"
            )
        if doc.findings:
            rows = []
            for i, finding in enumerate(doc.findings):
                sev = finding.severity.value
                rows.append(
                    "<tr>"
                    f"<td>{html.escape(finding_id(doc.path, i))}</td>"
                    f"<td class=\"sev-{sev}\">{html.escape(sev)}</td>"
                    f"<td>{html.escape(_sarif_rule_id(finding))}</td>"
                    f"<td>{html.escape(finding.evidence or '')}</td>"
                    f"<td>{html.escape(finding.explanation)}</td>"
                    "</tr>"
                )
            parts.append(
                "<table><tr><th>id</th><th>severity</th><th>label</th>"
                "<th>evidence</th><th>explanation</th></tr>"
                + "".join(rows)
                + "</table>"
            )
        else:
            parts.append("<p class=\"meta\">no findings</p>")
        parts.append("</section>")
    parts.append("</body></html>")
    return "\n".join(parts).encode("utf-8")
