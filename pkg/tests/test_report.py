"""Report serialization: canonical JSON, SARIF 2.1.0, and HTML."""

import json
import re
from pathlib import Path

import pytest
from jsonschema import validate

from torchsight.errors import ReportError
from torchsight.findings import DocumentResult, Finding
from torchsight.report import (
    SARIF_LEVELS,
    build_report,
    finding_id,
    parse_report,
    report_to_dict,
    summarize,
    to_html,
    to_json,
    to_sarif,
)
from torchsight.taxonomy import Category, Severity

SARIF_SCHEMA = json.loads(
    (Path(__file__).parent / "data" / "sarif-2.1.0-core.schema.json").read_text(
        encoding="utf-8"
    )
)


def make_finding(
    registry,
    canonical,
    severity,
    span=None,
    rule=None,
    evidence=None,
    explanation="",
    detectors=("regex",),
):
    category = Category(canonical.split(".", 1)[0])
    sub = registry.lookup(canonical) if "." in canonical else None
    return Finding(
        category=category,
        subcategory=sub,
        severity=severity,
        detectors=tuple(detectors),
        explanation=explanation,
        evidence=evidence,
        span=span,
        rule=rule,
    )


def make_results(registry):
    cred = make_finding(
        registry,
        "credentials.api_key",
        Severity.CRITICAL,
        span=(4, 24),
        rule="aws_access_key_id",
        evidence="AKIA…MPLE",
        explanation="access key in config",
    )
    pii = make_finding(
        registry, "pii", Severity.LOW, detectors=("llm",), explanation="a name"
    )
    ok = DocumentResult(
        path="src/config.py",
        status="ok",
        mode="hybrid",
        primary_category=Category.CREDENTIALS,
        primary_subcategory=registry.lookup("credentials.api_key"),
        findings=[cred, pii],
        scanned_chars=120,
    )
    skipped = DocumentResult(path="vendor/blob.bin", status="skipped", reason="binary")
    errored = DocumentResult(
        path="notes/drafts.txt",
        status="error",
        mode="hybrid",
        reason="backend unavailable",
    )
    return [ok, skipped, errored]


class TestFindingIds:
    def test_format(self):
        fid = finding_id("a/b.txt", 3)
        assert re.fullmatch(r"[0-9a-f]{12}-03", fid)

    def test_stable_and_path_scoped(self):
        assert finding_id("x", 0) == finding_id("x", 0)
        assert finding_id("x", 0) != finding_id("y", 0)
        assert finding_id("x", 0) != finding_id("x", 1)


class TestJson:
    def test_byte_determinism(self, registry):
        def build():
            return build_report(
                make_results(registry),
                taxonomy_version=registry.version,
                prompt_hash="ab" * 32,
                reproducible=True,
            )

        assert to_json(build()) == to_json(build())

    def test_top_level_key_order(self, registry):
        payload = json.loads(to_json(build_report([], taxonomy_version="v2")))
        assert list(payload) == [
            "report_schema",
            "tool",
            "started",
            "finished",
            "scanned_files",
            "skipped_files",
            "error_files",
            "summary",
            "results",
        ]
        assert list(payload["tool"]) == [
            "name",
            "version",
            "taxonomy_version",
            "prompt_hash",
        ]

    def test_summary_zero_filled(self):
        summary = summarize([])
        assert set(summary["findings_by_category"]) == {c.value for c in Category}
        assert set(summary["findings_by_severity"]) == {s.value for s in Severity}
        assert all(v == 0 for v in summary["findings_by_category"].values())

    def test_results_sorted_by_path(self, registry):
        report = build_report(make_results(registry), taxonomy_version="v2")
        paths = [r.path for r in report.results]
        assert paths == sorted(paths)

    def test_reproducible_nulls_timestamps(self, registry):
        report = build_report(
            [],
            taxonomy_version="v2",
            reproducible=True,
            started="2026-01-01T00:00:00Z",
            finished="2026-01-01T00:00:01Z",
        )
        assert report.started is None and report.finished is None

    def test_round_trip(self, registry):
        report = build_report(
            make_results(registry),
            taxonomy_version=registry.version,
            prompt_hash="cd" * 32,
            started="2026-08-19T10:00:00Z",
            finished="2026-08-19T10:00:02Z",
        )
        data = to_json(report)
        rebuilt = parse_report(data)
        assert report_to_dict(rebuilt) == report_to_dict(report)
        assert to_json(rebuilt) == data

    def test_parse_rejects_garbage(self):
        with pytest.raises(ReportError):
            parse_report(b"not json at all")

    def test_parse_rejects_unknown_schema(self, registry):
        payload = json.loads(to_json(build_report([], taxonomy_version="v2")))
        payload["report_schema"] = "999"
        with pytest.raises(ReportError):
            parse_report(json.dumps(payload).encode("utf-8"))

    def test_counts(self, registry):
        report = build_report(make_results(registry), taxonomy_version="v2")
        assert report.scanned_files == 1
        assert report.skipped_files == 1
        assert report.error_files == 1
        summary = summarize(report.results)
        assert summary["findings_by_category"]["credentials"] == 1
        assert summary["findings_by_severity"]["critical"] == 1
        assert summary["files_by_primary_category"]["credentials"] == 1


class TestSarif:
    def sarif_dict(self, registry, results):
        report = build_report(results, taxonomy_version=registry.version)
        return json.loads(to_sarif(report))

    def test_empty_report_validates(self, registry):
        doc = self.sarif_dict(registry, [])
        validate(doc, SARIF_SCHEMA)
        assert doc["version"] == "2.1.0"
        assert doc["runs"][0]["results"] == []

    def test_single_finding_validates(self, registry):
        doc = self.sarif_dict(registry, make_results(registry))
        validate(doc, SARIF_SCHEMA)

    def test_hundred_findings_validate(self, registry):
        subs = registry.all_subcategories()
        severities = list(Severity)
        results = []
        for i in range(100):
            sub = subs[i % len(subs)]
            finding = make_finding(
                registry,
                sub.canonical,
                severities[i % len(severities)],
                span=(i, i + 5),
                rule=f"rule_{i % 7}",
            )
            results.append(
                DocumentResult(
                    path=f"f{i:03d}.txt",
                    status="ok",
                    mode="regex_only",
                    primary_category=sub.category,
                    primary_subcategory=sub,
                    findings=[finding],
                )
            )
        doc = self.sarif_dict(registry, results)
        validate(doc, SARIF_SCHEMA)
        assert len(doc["runs"][0]["results"]) == 100

    def test_severity_level_mapping_is_total(self, registry):
        assert set(SARIF_LEVELS) == set(Severity)
        expected = {
            Severity.CRITICAL: "error",
            Severity.HIGH: "error",
            Severity.MEDIUM: "warning",
            Severity.LOW: "note",
            Severity.INFO: "note",
        }
        assert SARIF_LEVELS == expected
        for severity, level in expected.items():
            finding = make_finding(registry, "pii.contact", severity)
            result = DocumentResult(
                path="p.txt",
                status="ok",
                primary_category=Category.PII,
                findings=[finding],
            )
            doc = self.sarif_dict(registry, [result])
            assert doc["runs"][0]["results"][0]["level"] == level

    def test_rule_ids_and_regions(self, registry):
        doc = self.sarif_dict(registry, make_results(registry))
        run = doc["runs"][0]
        rule_ids = [r["id"] for r in run["tool"]["driver"]["rules"]]
        assert rule_ids == sorted(rule_ids)
        assert "credentials.api_key" in rule_ids
        assert "pii" in rule_ids  # category-level finding falls back to category

        spanned = [
            r
            for r in run["results"]
            if r["ruleId"] == "credentials.api_key"
        ]
        region = spanned[0]["locations"][0]["physicalLocation"]["region"]
        assert region == {"charOffset": 4, "charLength": 20}
        assert spanned[0]["properties"]["evidence"] == "AKIA…MPLE"
        assert re.fullmatch(
            r"[0-9a-f]{12}-\d{2}", spanned[0]["properties"]["finding_id"]
        )

    def test_error_documents_produce_no_results(self, registry):
        errored = DocumentResult(path="x.txt", status="error", reason="down")
        doc = self.sarif_dict(registry, [errored])
        validate(doc, SARIF_SCHEMA)
        assert doc["runs"][0]["results"] == []


class TestHtml:
    def test_hostile_content_escaped(self, registry):
        finding = make_finding(
            registry,
            "pii.contact",
            Severity.LOW,
            evidence="<b>bo…ld</b>",
            explanation='<img src=x onerror="pwn()">',
        )
        result = DocumentResult(
            path="<script>alert(1)</script>.txt",
            status="ok",
            primary_category=Category.PII,
            findings=[finding],
        )
        html_text = to_html(
            build_report([result], taxonomy_version="v2")
        ).decode("utf-8")
        assert "<script>alert(1)</script>" not in html_text
        assert "&lt;script&gt;alert(1)&lt;/script&gt;.txt" in html_text
        assert "<img" not in html_text
        assert "&lt;img src=x onerror=" in html_text
        assert "<b>bo…ld</b>" not in html_text

    def test_document_sections_and_counts(self, registry):
        html_text = to_html(
            build_report(make_results(registry), taxonomy_version="v2")
        ).decode("utf-8")
        assert html_text.startswith("<!DOCTYPE html>")
        assert html_text.count('<section class="file">') == 3
        assert "backend unavailable" in html_text
        assert "Findings by severity" in html_text
        assert "@media print" in html_text
