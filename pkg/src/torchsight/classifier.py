"""Per-document classification: detector orchestration and primary labeling."""

from __future__ import annotations

from typing import Optional

from .errors import (
    FindingsParseError,
    InferenceError,
    PolicyError,
    TorchsightError,
)
from .findings import (
    DocumentResult,
    Finding,
    elect_primary as primary_category,
    merge_findings,
)
from .inference import InferenceClient, build_prompt, parse_findings
from .ingest import SourceDocument
from .patterns import RegexEngine, scan_text
from .taxonomy import Category, TaxonomyRegistry

MODES = ("regex_only", "llm_only", "hybrid")

#: Fixed phrasing used for scanning; varied phrasings are a training-time
#: concern, determinism wins at scan time.
SCAN_PHRASING_INDEX = 0


def classify_document(
    doc: SourceDocument,
    mode: str,
    registry: TaxonomyRegistry,
    engine: Optional[RegexEngine] = None,
    client: Optional[InferenceClient] = None,
) -> DocumentResult:
    """Run the detectors the mode calls for and resolve the primary label.

    Inference failures (backend down, unusable output) mark the document as
    an error, never as safe.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    if mode in ("regex_only", "hybrid") and engine is None:
        raise ValueError(f"mode {mode!r} requires a compiled regex engine")
    if mode in ("llm_only", "hybrid") and client is None:
        raise ValueError(f"mode {mode!r} requires an inference client")

    result = DocumentResult(
        path=doc.path,
        status="ok",
        mode=mode,
        truncated=doc.truncated,
        scanned_chars=len(doc.text),
    )

    if not doc.text.strip():
        result.primary_category = Category.SAFE
        return result

    regex_findings: list[Finding] = []
    llm_findings: list[Finding] = []

    if mode in ("regex_only", "hybrid"):
        regex_findings = scan_text(engine, doc)

    if mode in ("llm_only", "hybrid"):
        try:
            prompt = build_prompt(doc, SCAN_PHRASING_INDEX, registry)
            raw = client.complete(prompt)
            llm_findings, diagnostics = parse_findings(raw, registry, policy="coerce")
            result.diagnostics.extend(diagnostics)
        except (InferenceError, FindingsParseError, PolicyError) as exc:
            result.status = "error"
            result.reason = str(exc)
            result.findings = merge_findings(regex_findings, [])
            return result
        except TorchsightError as exc:
            result.status = "error"
            result.reason = str(exc)
            return result

    result.findings = merge_findings(regex_findings, llm_findings)
    category, subcategory = primary_category(result.findings)
    result.primary_category = category
    result.primary_subcategory = subcategory
    return result
