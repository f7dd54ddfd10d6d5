"""Dataset curation: dedup, per-subcategory rebalancing, splitting, and
instruction-tuning sample conversion.

No stage ever mutates a record's content; stages only select, reorder, and
wrap.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Union

from .errors import DatasetError, TorchsightError
from .inference import INSTRUCTION_PHRASINGS, PROMPT_ASSET
from .taxonomy import Category, Severity, SubcategoryId, TaxonomyRegistry, parse_label

DEFAULT_SUBCATEGORY_CAP = 5000
DEFAULT_VALIDATION_FRACTION = 0.05

#: Accepted license tokens; copyleft (GPL/LGPL) and ShareAlike sources are
#: excluded from training data on purpose.
LICENSE_ALLOWLIST = frozenset(
    {
        "public_domain",
        "apache2",
        "mit",
        "bsd2",
        "bsd3",
        "cc0",
        "cc_by_3",
        "cc_by_4",
        "generated",
        "internal",
    }
)

#: Severity attached to the single synthetic finding of a non-safe training
#: record. Chosen per category; safe records carry an empty findings array.
TRAINING_SEVERITY_BY_CATEGORY = {
    Category.CREDENTIALS: Severity.CRITICAL,
    Category.MALICIOUS: Severity.HIGH,
    Category.CONFIDENTIAL: Severity.HIGH,
    Category.FINANCIAL: Severity.HIGH,
    Category.MEDICAL: Severity.MEDIUM,
    Category.PII: Severity.MEDIUM,
}


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    text: str
    gold_category: Category
    gold_subcategory: SubcategoryId
    source: str = ""
    license: str = "generated"


@dataclass(frozen=True)
class SftSample:
    instruction: str
    input: str
    output: str
    system: str

    def to_dict(self) -> dict:
        return {
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "system": self.system,
        }


def load_corpus(
    source: Union[str, Path, Iterable[str]], registry: TaxonomyRegistry
) -> list[CorpusRecord]:
    """Read JSON-lines corpus records; labels strict, licenses allow-listed."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DatasetError(f"cannot read corpus {path}: {exc}") from exc
    else:
        lines = list(source)

    records: list[CorpusRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"corpus line {lineno}: invalid JSON: {exc}")
        for key in ("id", "text", "category", "subcategory"):
            if key not in entry:
                raise DatasetError(f"corpus line {lineno}: missing field {key!r}")
        record_id = str(entry["id"])
        if record_id in seen:
            raise DatasetError(f"corpus line {lineno}: duplicate id {record_id!r}")
        seen.add(record_id)
        license_token = str(entry.get("license", "generated"))
        if license_token not in LICENSE_ALLOWLIST:
            raise DatasetError(
                f"corpus line {lineno}: license {license_token!r} not in allow-list"
            )
        label_token = str(entry["subcategory"])
        if "." not in label_token:
            label_token = f"{entry['category']}.{label_token}"
        try:
            parsed = parse_label(label_token, registry, policy="strict")
        except TorchsightError as exc:
            raise DatasetError(f"corpus line {lineno}: {exc}") from exc
        records.append(
            CorpusRecord(
                id=record_id,
                text=str(entry["text"]),
                gold_category=parsed.category,
                gold_subcategory=parsed.subcategory,
                source=str(entry.get("source", "")),
                license=license_token,
            )
        )
    return records


def write_records(records: list[CorpusRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                json.dumps(
                    {
                        "id": record.id,
                        "text": record.text,
                        "category": record.gold_category.value,
                        "subcategory": record.gold_subcategory.canonical,
                        "source": record.source,
                        "license": record.license,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def normalize_text_key(text: str) -> str:
    """Dedup key: trimmed, whitespace runs collapsed, case preserved."""
    return " ".join(text.split())


def dedupe(records: list[CorpusRecord]) -> tuple[list[CorpusRecord], int]:
    """Keep the first record per normalized-text key; report removals."""
    seen: set[str] = set()
    kept: list[CorpusRecord] = []
    for record in records:
        key = normalize_text_key(record.text)
        if key in seen:
            continue
        seen.add(key)
        kept.append(record)
    return kept, len(records) - len(kept)


def rebalance(
    records: list[CorpusRecord],
    cap: int = DEFAULT_SUBCATEGORY_CAP,
    seed: int = 0,
) -> tuple[list[CorpusRecord], dict[str, tuple[int, int]]]:
    """Downsample each subcategory to at most `cap` records.

    Subcategories are processed in sorted canonical order with a single
    seeded generator, so retained id sets are reproducible. Input order is
    preserved among survivors. Returns (records, {subcategory: (before,
    after)}).
    """
    if cap <= 0:
        raise DatasetError(f"cap must be positive, got {cap}")
    by_subcategory: dict[str, list[int]] = {}
    for index, record in enumerate(records):
        by_subcategory.setdefault(record.gold_subcategory.canonical, []).append(index)

    rng = random.Random(seed)
    keep: set[int] = set()
    counts: dict[str, tuple[int, int]] = {}
    for canonical in sorted(by_subcategory):
        indices = by_subcategory[canonical]
        if len(indices) > cap:
            chosen = set(rng.sample(indices, cap))
        else:
            chosen = set(indices)
        keep.update(chosen)
        counts[canonical] = (len(indices), len(chosen))
    return [r for i, r in enumerate(records) if i in keep], counts


def split(
    records: list[CorpusRecord],
    validation_fraction: float = DEFAULT_VALIDATION_FRACTION,
    seed: int = 0,
) -> tuple[list[CorpusRecord], list[CorpusRecord]]:
    """Seeded shuffle, then cut validation = floor(n * fraction) off the top.

    The floor is computed exactly (no float rounding at integer boundaries).
    """
    if not records:
        raise DatasetError("cannot split an empty record list")
    if not 0 < validation_fraction < 1:
        raise DatasetError(
            f"validation fraction {validation_fraction} outside (0, 1)"
        )
    validation_size = int(
        math.floor(Fraction(str(validation_fraction)) * len(records))
    )
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    return shuffled[validation_size:], shuffled[:validation_size]


def phrasing_index(record_id: str, phrasing_rng_seed: int) -> int:
    """Stable per-record draw over the seven instruction phrasings."""
    digest = hashlib.sha256(f"{phrasing_rng_seed}:{record_id}".encode("utf-8"))
    return int.from_bytes(digest.digest()[:8], "big") % len(INSTRUCTION_PHRASINGS)


def record_output_json(record: CorpusRecord) -> str:
    """The canonical findings array a trained model should emit."""
    if record.gold_category is Category.SAFE:
        return "[]"
    severity = TRAINING_SEVERITY_BY_CATEGORY[record.gold_category]
    finding = {
        "category": record.gold_category.value,
        "subcategory": record.gold_subcategory.canonical,
        "severity": severity.value,
        "explanation": f"document contains {record.gold_subcategory.canonical}",
    }
    return json.dumps([finding], ensure_ascii=False)


def to_sft(record: CorpusRecord, phrasing_rng_seed: int = 0) -> SftSample:
    """One instruction-tuning sample in Alpaca field layout."""
    index = phrasing_index(record.id, phrasing_rng_seed)
    return SftSample(
        instruction=INSTRUCTION_PHRASINGS[index],
        input=record.text,
        output=record_output_json(record),
        system=f"torchsight:{PROMPT_ASSET}",
    )


def write_sft(
    records: list[CorpusRecord],
    path: Union[str, Path],
    phrasing_rng_seed: int = 0,
    registry: Optional[TaxonomyRegistry] = None,
) -> int:
    """Convert and write SFT samples; every output is re-validated strictly."""
    from .inference import parse_findings

    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            sample = to_sft(record, phrasing_rng_seed)
            if registry is not None:
                findings, _ = parse_findings(
                    sample.output, registry, policy="strict"
                )
                if record.gold_category is not Category.SAFE:
                    if (
                        len(findings) != 1
                        or findings[0].subcategory != record.gold_subcategory
                    ):
                        raise DatasetError(
                            f"record {record.id}: output does not round-trip"
                        )
            fh.write(json.dumps(sample.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count
