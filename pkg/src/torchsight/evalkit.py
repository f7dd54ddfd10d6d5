"""Evaluation harness: benchmark execution and classification metrics.

Error-marker predictions (backend failures, unparseable output) score as
incorrect everywhere and as non-safe for false-positive purposes; a system
that fails is never credited with safety.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Iterable, Mapping, Optional, Union

from .errors import DatasetError, TorchsightError
from .findings import DocumentResult, elect_primary_finding
from .inference import parse_findings
from .ingest import MAX_SCAN_CHARS, SourceDocument, truncate_text
from .taxonomy import Category, SubcategoryId, TaxonomyRegistry, parse_label

ClassifyFn = Callable[[SourceDocument], DocumentResult]


@dataclass(frozen=True)
class BenchmarkSample:
    id: str
    text: str
    gold_category: Category
    gold_subcategory: SubcategoryId
    source: str = ""


@dataclass
class PredictionRecord:
    sample_id: str
    predicted_category: Optional[Category]  # None = error marker
    predicted_subcategory_raw: Optional[str] = None
    latency: float = 0.0
    diagnostics: list[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def is_error(self) -> bool:
        return self.predicted_category is None


@dataclass(frozen=True)
class PrF1:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


@dataclass
class MetricsSummary:
    n: int
    category_accuracy: float
    category_ci: tuple[float, float]
    subcategory_accuracy: float
    per_category_accuracy: dict[str, float]
    per_category_prf1: dict[str, PrF1]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    safe_fpr: Optional[float]
    mean_latency: float
    error_count: int
    per_source: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "category_accuracy": self.category_accuracy,
            "category_accuracy_ci95": list(self.category_ci),
            "subcategory_accuracy": self.subcategory_accuracy,
            "per_category_accuracy": dict(self.per_category_accuracy),
            "per_category_prf1": {
                cat: {
                    "precision": v.precision,
                    "recall": v.recall,
                    "f1": v.f1,
                    "degenerate": v.degenerate,
                }
                for cat, v in self.per_category_prf1.items()
            },
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "safe_fpr": self.safe_fpr,
            "mean_latency_seconds": self.mean_latency,
            "error_count": self.error_count,
            "per_source": dict(self.per_source),
        }

    def to_text_table(self) -> str:
        lines = [
            f"samples                 {self.n}",
            f"category accuracy       {self.category_accuracy:.3f} "
            f"[{self.category_ci[0]:.3f}, {self.category_ci[1]:.3f}]",
            f"subcategory accuracy    {self.subcategory_accuracy:.3f}",
            f"macro P/R/F1            {self.macro_precision:.3f} / "
            f"{self.macro_recall:.3f} / {self.macro_f1:.3f}",
            f"safe FPR                "
            + (f"{self.safe_fpr:.3f}" if self.safe_fpr is not None else "n/a"),
            f"errors                  {self.error_count}",
            "",
            f"{'category':<14}{'acc':>8}{'prec':>8}{'rec':>8}{'f1':>8}",
        ]
        for cat in Category:
            acc = self.per_category_accuracy.get(cat.value)
            prf = self.per_category_prf1.get(cat.value)
            lines.append(
                f"{cat.value:<14}"
                + (f"{acc:>8.3f}" if acc is not None else f"{'-':>8}")
                + (
                    f"{prf.precision:>8.3f}{prf.recall:>8.3f}{prf.f1:>8.3f}"
                    if prf is not None
                    else f"{'-':>8}{'-':>8}{'-':>8}"
                )
            )
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Pairing
# ---------------------------------------------------------------------------


def _pair(
    preds: list[PredictionRecord], golds: list[BenchmarkSample]
) -> list[tuple[PredictionRecord, BenchmarkSample]]:
    if not golds:
        raise DatasetError("no benchmark samples")
    if len(preds) != len(golds):
        raise DatasetError(
            f"prediction/gold length mismatch: {len(preds)} vs {len(golds)}"
        )
    by_id: dict[str, PredictionRecord] = {}
    for pred in preds:
        if pred.sample_id in by_id:
            raise DatasetError(f"duplicate prediction id: {pred.sample_id}")
        by_id[pred.sample_id] = pred
    pairs = []
    for gold in golds:
        pred = by_id.get(gold.id)
        if pred is None:
            raise DatasetError(f"missing prediction for sample id: {gold.id}")
        pairs.append((pred, gold))
    return pairs


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def accuracy(preds: list[PredictionRecord], golds: list[BenchmarkSample]) -> float:
    """Correct / total; error markers are incorrect."""
    pairs = _pair(preds, golds)
    correct = sum(
        1 for pred, gold in pairs if pred.predicted_category is gold.gold_category
    )
    return correct / len(pairs)


def wilson_ci(
    successes: int, n: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= successes <= n:
        raise ValueError(f"successes {successes} outside 0..{n}")
    if not 0 < confidence < 1:
        raise ValueError(f"confidence {confidence} outside (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # The score bound is exactly 0 at k=0 and 1 at k=n; pin those so float
    # residue never pushes the interval off the point estimate.
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == n else min(1.0, center + half)
    return (low, high)


def prf1(
    preds: list[PredictionRecord],
    golds: list[BenchmarkSample],
    target: Category,
) -> PrF1:
    """One-vs-rest precision/recall/F1 for one category."""
    pairs = _pair(preds, golds)
    tp = fp = fn = 0
    for pred, gold in pairs:
        predicted_target = pred.predicted_category is target
        gold_target = gold.gold_category is target
        if predicted_target and gold_target:
            tp += 1
        elif predicted_target:
            fp += 1
        elif gold_target:
            fn += 1
    degenerate = (tp + fp == 0) or (tp + fn == 0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PrF1(precision, recall, f1, degenerate)


def macro_prf1(
    preds: list[PredictionRecord],
    golds: list[BenchmarkSample],
    registry: TaxonomyRegistry,
) -> tuple[float, float, float]:
    """Unweighted mean of per-category P/R/F1 over all seven categories."""
    values = [prf1(preds, golds, category) for category in registry.categories]
    k = len(values)
    return (
        sum(v.precision for v in values) / k,
        sum(v.recall for v in values) / k,
        sum(v.f1 for v in values) / k,
    )


def per_category_accuracy(
    preds: list[PredictionRecord], golds: list[BenchmarkSample]
) -> dict[Category, float]:
    """Accuracy within each gold-category slice; absent slices omitted."""
    pairs = _pair(preds, golds)
    totals: dict[Category, int] = {}
    correct: dict[Category, int] = {}
    for pred, gold in pairs:
        totals[gold.gold_category] = totals.get(gold.gold_category, 0) + 1
        if pred.predicted_category is gold.gold_category:
            correct[gold.gold_category] = correct.get(gold.gold_category, 0) + 1
    return {
        category: correct.get(category, 0) / total
        for category, total in totals.items()
    }


def safe_fpr(preds: list[PredictionRecord], golds: list[BenchmarkSample]) -> float:
    """Fraction of gold-safe documents predicted non-safe (or errored)."""
    pairs = _pair(preds, golds)
    safe_pairs = [
        (pred, gold) for pred, gold in pairs if gold.gold_category is Category.SAFE
    ]
    if not safe_pairs:
        raise DatasetError("benchmark contains no safe samples")
    false_positives = sum(
        1 for pred, _ in safe_pairs if pred.predicted_category is not Category.SAFE
    )
    return false_positives / len(safe_pairs)


def subcategory_accuracy(
    preds: list[PredictionRecord],
    golds: list[BenchmarkSample],
    registry: TaxonomyRegistry,
) -> float:
    """Strict schema adherence: invented subcategory names score zero."""
    pairs = _pair(preds, golds)
    correct = 0
    for pred, gold in pairs:
        raw = pred.predicted_subcategory_raw
        if not raw:
            continue
        token = raw.strip()
        if "." not in token and pred.predicted_category is not None:
            token = f"{pred.predicted_category.value}.{token}"
        try:
            parsed = parse_label(token, registry, policy="strict")
        except TorchsightError:
            continue
        if parsed.subcategory == gold.gold_subcategory:
            correct += 1
    return correct / len(pairs)


def observed_agreement(labels_a: list[str], labels_b: list[str]) -> float:
    if len(labels_a) != len(labels_b) or not labels_a:
        raise ValueError("label sequences must be nonempty and equal-length")
    matches = sum(1 for a, b in zip(labels_a, labels_b) if a == b)
    return matches / len(labels_a)


def cohens_kappa(labels_a: list[str], labels_b: list[str]) -> float:
    """Chance-corrected agreement between two label sequences."""
    p_o = observed_agreement(labels_a, labels_b)
    n = len(labels_a)
    labels = set(labels_a) | set(labels_b)
    p_e = sum(
        (labels_a.count(label) / n) * (labels_b.count(label) / n)
        for label in labels
    )
    if p_e >= 1.0:
        return 1.0  # both raters constant and identical
    return (p_o - p_e) / (1 - p_e)


# ---------------------------------------------------------------------------
# Benchmark I/O
# ---------------------------------------------------------------------------


def load_benchmark(
    source: Union[str, Path, Iterable[str]], registry: TaxonomyRegistry
) -> list[BenchmarkSample]:
    """Read JSON-lines benchmark records, validating labels strictly."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DatasetError(f"cannot read benchmark {path}: {exc}") from exc
    else:
        lines = list(source)

    samples: list[BenchmarkSample] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"benchmark line {lineno}: invalid JSON: {exc}")
        for key in ("id", "text", "category", "subcategory"):
            if key not in record:
                raise DatasetError(f"benchmark line {lineno}: missing field {key!r}")
        sample_id = str(record["id"])
        if sample_id in seen:
            raise DatasetError(f"benchmark line {lineno}: duplicate id {sample_id!r}")
        seen.add(sample_id)
        label_token = str(record["subcategory"])
        if "." not in label_token:
            label_token = f"{record['category']}.{label_token}"
        try:
            parsed = parse_label(label_token, registry, policy="strict")
        except TorchsightError as exc:
            raise DatasetError(f"benchmark line {lineno}: {exc}") from exc
        if parsed.category.value != str(record["category"]):
            raise DatasetError(
                f"benchmark line {lineno}: category {record['category']!r} does "
                f"not match subcategory {record['subcategory']!r}"
            )
        samples.append(
            BenchmarkSample(
                id=sample_id,
                text=str(record["text"]),
                gold_category=parsed.category,
                gold_subcategory=parsed.subcategory,
                source=str(record.get("source", "")),
            )
        )
    if not samples:
        raise DatasetError("benchmark is empty")
    return samples


# ---------------------------------------------------------------------------
# Systems under test
# ---------------------------------------------------------------------------


def system_from_engine(engine, registry: TaxonomyRegistry) -> ClassifyFn:
    from .classifier import classify_document

    def classify(doc: SourceDocument) -> DocumentResult:
        return classify_document(doc, "regex_only", registry, engine=engine)

    return classify


def system_from_client(client, registry: TaxonomyRegistry) -> ClassifyFn:
    from .classifier import classify_document

    def classify(doc: SourceDocument) -> DocumentResult:
        return classify_document(doc, "llm_only", registry, client=client)

    return classify


def load_replay(source: Union[str, Path, Mapping[str, str]]) -> dict[str, str]:
    """Recorded raw model outputs keyed by sample id.

    Accepts a JSON object file, a JSON-lines file of {id, output} records,
    or an in-memory mapping.
    """
    if isinstance(source, Mapping):
        return {str(k): str(v) for k, v in source.items()}
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read replay file {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError:
        payload = None  # multiple documents: fall through to JSON lines
    if payload is not None:
        if not isinstance(payload, dict):
            raise DatasetError(f"replay file {path} must map ids to outputs")
        # A lone {id, output} object is a one-record JSON-lines file, not a
        # mapping of two samples named "id" and "output".
        if set(payload) != {"id", "output"}:
            return {str(k): str(v) for k, v in payload.items()}
    outputs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"replay line {lineno}: invalid JSON: {exc}")
        if not isinstance(record, dict) or "id" not in record or "output" not in record:
            raise DatasetError(f"replay line {lineno}: needs 'id' and 'output'")
        outputs[str(record["id"])] = str(record["output"])
    return outputs


def system_from_replay(
    replay: Mapping[str, str], registry: TaxonomyRegistry
) -> ClassifyFn:
    """Score pre-recorded outputs without any backend."""
    from .errors import FindingsParseError
    from .findings import elect_primary, merge_findings

    def classify(doc: SourceDocument) -> DocumentResult:
        result = DocumentResult(path=doc.path, status="ok", mode="llm_only")
        raw = replay.get(doc.path)
        if raw is None:
            result.status = "error"
            result.reason = f"no replay output for sample {doc.path!r}"
            return result
        try:
            findings, diagnostics = parse_findings(raw, registry, policy="coerce")
        except FindingsParseError as exc:
            result.status = "error"
            result.reason = str(exc)
            return result
        result.findings = merge_findings([], findings)
        result.diagnostics = diagnostics
        category, subcategory = elect_primary(result.findings)
        result.primary_category = category
        result.primary_subcategory = subcategory
        return result

    return classify


# ---------------------------------------------------------------------------
# Benchmark execution
# ---------------------------------------------------------------------------


def _record_from_result(
    sample: BenchmarkSample, result: DocumentResult, latency: float
) -> PredictionRecord:
    if result.status != "ok" or result.primary_category is None:
        return PredictionRecord(
            sample_id=sample.id,
            predicted_category=None,
            latency=latency,
            diagnostics=list(result.diagnostics),
            error=result.reason or "classification failed",
        )
    winner = elect_primary_finding(result.findings)
    raw = None
    if winner is not None:
        raw = winner.subcategory_raw or (
            winner.subcategory.canonical if winner.subcategory else None
        )
    return PredictionRecord(
        sample_id=sample.id,
        predicted_category=result.primary_category,
        predicted_subcategory_raw=raw,
        latency=latency,
        diagnostics=list(result.diagnostics),
    )


def compute_metrics(
    preds: list[PredictionRecord],
    golds: list[BenchmarkSample],
    registry: TaxonomyRegistry,
) -> MetricsSummary:
    pairs = _pair(preds, golds)
    n = len(pairs)
    correct = sum(
        1 for pred, gold in pairs if pred.predicted_category is gold.gold_category
    )
    acc = correct / n
    per_cat_acc = per_category_accuracy(preds, golds)
    per_cat_prf1 = {
        category.value: prf1(preds, golds, category)
        for category in registry.categories
    }
    macro_p, macro_r, macro_f = macro_prf1(preds, golds, registry)
    has_safe = any(g.gold_category is Category.SAFE for g in golds)

    per_source: dict[str, dict] = {}
    sources = sorted({g.source for g in golds if g.source})
    for source in sources:
        slice_golds = [g for g in golds if g.source == source]
        slice_ids = {g.id for g in slice_golds}
        slice_preds = [p for p in preds if p.sample_id in slice_ids]
        slice_correct = sum(
            1
            for pred, gold in _pair(slice_preds, slice_golds)
            if pred.predicted_category is gold.gold_category
        )
        per_source[source] = {
            "n": len(slice_golds),
            "category_accuracy": slice_correct / len(slice_golds),
        }

    return MetricsSummary(
        n=n,
        category_accuracy=acc,
        category_ci=wilson_ci(correct, n),
        subcategory_accuracy=subcategory_accuracy(preds, golds, registry),
        per_category_accuracy={c.value: v for c, v in per_cat_acc.items()},
        per_category_prf1=per_cat_prf1,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=macro_f,
        safe_fpr=safe_fpr(preds, golds) if has_safe else None,
        mean_latency=sum(p.latency for p in preds) / n,
        error_count=sum(1 for p in preds if p.is_error),
        per_source=per_source,
    )


def run_benchmark(
    samples: list[BenchmarkSample],
    system: ClassifyFn,
    registry: TaxonomyRegistry,
    clock: Callable[[], float] = time.monotonic,
) -> tuple[list[PredictionRecord], MetricsSummary]:
    """Classify every sample and score the run.

    Per-sample failures become error-marker records; the run always
    completes. Texts are truncated to the protocol limit before
    classification.
    """
    records: list[PredictionRecord] = []
    for sample in samples:
        text, truncated = truncate_text(sample.text, MAX_SCAN_CHARS)
        doc = SourceDocument(
            path=sample.id,
            detected_format="plain_text",
            text=text,
            original_char_count=len(sample.text),
            truncated=truncated,
        )
        start = clock()
        try:
            result = system(doc)
        except TorchsightError as exc:
            records.append(
                PredictionRecord(
                    sample_id=sample.id,
                    predicted_category=None,
                    latency=clock() - start,
                    error=str(exc),
                )
            )
            continue
        records.append(_record_from_result(sample, result, clock() - start))
    return records, compute_metrics(records, samples, registry)
