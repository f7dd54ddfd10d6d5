"""Finding and per-document result types shared by the pattern and model layers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .taxonomy import Category, Severity, SubcategoryId

#: Detector identifiers attached to findings.
DETECTOR_REGEX = "regex"
DETECTOR_LLM = "llm"

# Category priority used only to break exact severity ties when electing the
# primary category. Higher value wins.
_TIE_PRIORITY = {
    Category.CREDENTIALS: 6,
    Category.MALICIOUS: 5,
    Category.CONFIDENTIAL: 4,
    Category.FINANCIAL: 3,
    Category.MEDICAL: 2,
    Category.PII: 1,
    Category.SAFE: 0,
}


def mask_evidence(raw: str) -> str:
    """Redact matched text so reports never carry live secrets.

    Short strings are hidden entirely; longer ones keep just enough of the
    edges to be recognizable.
    """
    if len(raw) < 6:
        return "…"
    if len(raw) <= 12:
        return raw[:2] + "…" + raw[-2:]
    return raw[:4] + "…" + raw[-4:]


@dataclass(frozen=True)
class Finding:
    """One detected issue inside one document.

    ``span`` is a (start, end) character offset pair into the scanned text,
    present for pattern matches and absent when the model did not localize.
    ``evidence`` is always masked before it is stored here.
    ``subcategory_raw`` preserves the model's literal label token for strict
    evaluation; pattern findings leave it equal to the canonical name.
    """

    category: Category
    subcategory: Optional[SubcategoryId]
    severity: Severity
    detectors: tuple[str, ...]
    explanation: str = ""
    evidence: Optional[str] = None
    span: Optional[tuple[int, int]] = None
    rule: Optional[str] = None
    subcategory_raw: Optional[str] = None

    @property
    def is_safe(self) -> bool:
        return self.category is Category.SAFE

    @property
    def label(self) -> str:
        if self.subcategory is not None:
            return self.subcategory.canonical
        return self.category.value

    def with_detectors(self, detectors: tuple[str, ...]) -> "Finding":
        return replace(self, detectors=detectors)


def sort_findings(findings: list[Finding]) -> list[Finding]:
    """Deterministic order: span start (unlocated last), severity desc, label."""

    def key(f: Finding):
        start = f.span[0] if f.span is not None else float("inf")
        return (start, -f.severity.rank, f.label)

    return sorted(findings, key=key)


def merge_findings(regex: list[Finding], llm: list[Finding]) -> list[Finding]:
    """Combine the two detector layers, collapsing duplicates.

    A model finding is folded into a pattern finding when both name the same
    category and subcategory and either the model gave no span or the spans
    overlap. The survivor keeps the pattern's span and evidence, the maximum
    severity, and the union of detector names. Everything else passes through.
    """
    merged: list[Finding] = list(regex)
    for candidate in llm:
        absorbed = False
        for i, existing in enumerate(merged):
            if existing.category is not candidate.category:
                continue
            if existing.subcategory != candidate.subcategory:
                continue
            if candidate.span is not None and existing.span is not None:
                a, b = existing.span, candidate.span
                if a[0] >= b[1] or b[0] >= a[1]:
                    continue
            severity = max(
                existing.severity, candidate.severity, key=lambda s: s.rank
            )
            detectors = existing.detectors + tuple(
                d for d in candidate.detectors if d not in existing.detectors
            )
            merged[i] = replace(existing, severity=severity, detectors=detectors)
            absorbed = True
            break
        if not absorbed:
            merged.append(candidate)
    return sort_findings(merged)


def elect_primary_finding(findings: list[Finding]) -> Optional[Finding]:
    """The finding that determines the document's primary label, if any.

    The most severe non-safe finding wins. Severity ties fall to a fixed
    category priority, then to the earliest span, then to list order. With
    no non-safe findings, the first safe finding stands in (or None).
    """
    non_safe = [f for f in findings if not f.is_safe]
    if not non_safe:
        for f in findings:
            if f.is_safe:
                return f
        return None

    def key(f: Finding):
        start = f.span[0] if f.span is not None else float("inf")
        return (-f.severity.rank, -_TIE_PRIORITY[f.category], start)

    return min(non_safe, key=key)


def elect_primary(
    findings: list[Finding],
) -> tuple[Category, Optional[SubcategoryId]]:
    """Resolve the primary label: most severe non-safe finding, else safe."""
    winner = elect_primary_finding(findings)
    if winner is None or winner.is_safe:
        return (Category.SAFE, winner.subcategory if winner else None)
    return (winner.category, winner.subcategory)


@dataclass
class DocumentResult:
    """Outcome of scanning one document."""

    path: str
    status: str  # "ok" | "error" | "skipped"
    mode: Optional[str] = None
    primary_category: Optional[Category] = None
    primary_subcategory: Optional[SubcategoryId] = None
    findings: list[Finding] = field(default_factory=list)
    reason: Optional[str] = None
    truncated: bool = False
    scanned_chars: int = 0
    diagnostics: list[str] = field(default_factory=list)

    @property
    def max_severity(self) -> Optional[Severity]:
        best: Optional[Severity] = None
        for f in self.findings:
            if f.is_safe:
                continue
            if best is None or f.severity.rank > best.rank:
                best = f.severity
        return best
