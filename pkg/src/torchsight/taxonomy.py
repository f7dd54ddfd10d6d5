"""Security taxonomy: categories, subcategories, severity ordering, label parsing.

The registry is the single source of truth for every label in the system.
Scanner findings, model outputs, benchmark gold labels, and training records
all validate against it.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .errors import LabelParseError, TaxonomyError

CANONICAL_LABEL_RE = re.compile(r"^[a-z_]+\.[a-z_0-9]+$")


class Category(str, enum.Enum):
    """The seven top-level document security categories."""

    MALICIOUS = "malicious"
    CONFIDENTIAL = "confidential"
    CREDENTIALS = "credentials"
    PII = "pii"
    SAFE = "safe"
    FINANCIAL = "financial"
    MEDICAL = "medical"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


class Severity(str, enum.Enum):
    """Finding severity, totally ordered critical > high > medium > low > info."""

    CRITICAL = "critical"
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"
    INFO = "info"

    @property
    def rank(self) -> int:
        return _SEVERITY_RANK[self]

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


_SEVERITY_RANK = {
    Severity.CRITICAL: 4,
    Severity.HIGH: 3,
    Severity.MEDIUM: 2,
    Severity.LOW: 1,
    Severity.INFO: 0,
}

#: Severities in descending rank order, for deterministic report sections.
SEVERITY_ORDER = (
    Severity.CRITICAL,
    Severity.HIGH,
    Severity.MEDIUM,
    Severity.LOW,
    Severity.INFO,
)


@dataclass(frozen=True)
class SubcategoryId:
    """A single taxonomy leaf; canonical form is ``category.name``."""

    category: Category
    name: str

    @property
    def canonical(self) -> str:
        return f"{self.category.value}.{self.name}"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.canonical


@dataclass(frozen=True)
class ParsedLabel:
    """Result of validating a raw label string against the registry."""

    category: Category
    subcategory: Optional[SubcategoryId]
    coerced: bool = False


# Default subcategory lists. Names not fixed by the upstream taxonomy table
# are placeholders chosen here; override via a registry config file if a
# corrected list becomes available.
_DEFAULT_SUBCATEGORIES: dict[Category, tuple[str, ...]] = {
    Category.MALICIOUS: (
        "injection",
        "exploit",
        "shell",
        "phishing",
        "malware",
        "prompt_injection",
        "supply_chain",
        "ssti",
        "ssrf",
        # placeholder names (count is normative, names are not):
        "xss",
        "path_traversal",
        "dos",
        "c2",
        "obfuscation",
    ),
    Category.CONFIDENTIAL: (
        "classified",
        "internal",
        "military",
        "military_comms",
        "intelligence",
        "weapons_systems",
        # placeholder names:
        "legal",
        "trade_secret",
        "source_code_proprietary",
    ),
    Category.CREDENTIALS: (
        "password",
        "api_key",
        "token",
        "private_key",
        "connection_string",
        "cloud_config",
        "cicd",
        "container",
    ),
    Category.PII: (
        "identity",
        "contact",
        "government_id",
        "biometric",
        "behavioral",
        "metadata",
    ),
    Category.SAFE: (
        "documentation",
        "code",
        "config",
        "media",
        "email",
        "business",
    ),
    Category.FINANCIAL: (
        "credit_card",
        "bank_account",
        "transaction",
        "tax",
    ),
    Category.MEDICAL: (
        "diagnosis",
        "prescription",
        "lab_result",
        "insurance",
    ),
}

DEFAULT_TAXONOMY_VERSION = "builtin-1"


class TaxonomyRegistry:
    """Immutable set of subcategories grouped by category.

    Safe to share across threads once constructed.
    """

    def __init__(self, subcategories: Mapping[Category, Iterable[str]], version: str):
        self.version = version
        by_category: dict[Category, tuple[SubcategoryId, ...]] = {}
        by_canonical: dict[str, SubcategoryId] = {}
        for category in Category:
            names = tuple(subcategories.get(category, ()))
            subs = tuple(SubcategoryId(category, name) for name in names)
            by_category[category] = subs
            for sub in subs:
                if sub.canonical in by_canonical:
                    raise TaxonomyError(f"duplicate subcategory id: {sub.canonical}")
                if not CANONICAL_LABEL_RE.match(sub.canonical):
                    raise TaxonomyError(f"malformed subcategory id: {sub.canonical}")
                by_canonical[sub.canonical] = sub
        self._by_category = by_category
        self._by_canonical = by_canonical

    @property
    def categories(self) -> tuple[Category, ...]:
        return tuple(Category)

    def subcategories(self, category: Category) -> tuple[SubcategoryId, ...]:
        return self._by_category[category]

    def all_subcategories(self) -> tuple[SubcategoryId, ...]:
        return tuple(
            sub for category in Category for sub in self._by_category[category]
        )

    def counts(self) -> dict[Category, int]:
        return {c: len(self._by_category[c]) for c in Category}

    def total(self) -> int:
        return len(self._by_canonical)

    def __contains__(self, canonical: str) -> bool:
        return canonical in self._by_canonical

    def lookup(self, canonical: str) -> Optional[SubcategoryId]:
        return self._by_canonical.get(canonical)

    def dump(self) -> dict:
        """JSON-ready registry dump (used by prompts, the serve API, the UI)."""
        return {
            "version": self.version,
            "total": self.total(),
            "categories": {
                c.value: [s.name for s in self._by_category[c]] for c in Category
            },
        }


def load_registry(source: Union[str, Path, None] = None) -> TaxonomyRegistry:
    """Build a registry from a JSON config, or the builtin default.

    Config shape::

        {"version": "v2", "total": 51,
         "categories": {"credentials": ["password", ...], ...}}

    ``total`` is optional; when present the summed subcategory count must
    match it. Unknown category names and duplicate ids are rejected.
    """
    if source is None:
        return TaxonomyRegistry(_DEFAULT_SUBCATEGORIES, DEFAULT_TAXONOMY_VERSION)

    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    else:
        text = str(source)
        candidate = Path(text)
        if not text.lstrip().startswith("{") and candidate.is_file():
            text = candidate.read_text(encoding="utf-8")

    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"registry config is not valid JSON: {exc}") from exc

    if not isinstance(config, dict) or "categories" not in config:
        raise TaxonomyError("registry config must be an object with a 'categories' map")
    version = config.get("version")
    if not version or not isinstance(version, str):
        raise TaxonomyError("registry config requires a 'version' string")

    known = {c.value: c for c in Category}
    subcategories: dict[Category, list[str]] = {c: [] for c in Category}
    seen: set[str] = set()
    for raw_category, names in config["categories"].items():
        if raw_category not in known:
            raise TaxonomyError(f"unknown category name: {raw_category!r}")
        if not isinstance(names, list):
            raise TaxonomyError(f"category {raw_category!r} must map to a list")
        category = known[raw_category]
        for name in names:
            canonical = f"{category.value}.{name}"
            if canonical in seen:
                raise TaxonomyError(f"duplicate subcategory id: {canonical}")
            seen.add(canonical)
            subcategories[category].append(name)

    declared_total = config.get("total")
    if declared_total is not None and declared_total != len(seen):
        raise TaxonomyError(
            f"subcategory count mismatch: declared total {declared_total}, "
            f"found {len(seen)}"
        )
    return TaxonomyRegistry(subcategories, version)


def parse_category(raw: str) -> Category:
    """Validate a bare category token."""
    try:
        return Category(raw.strip().lower())
    except ValueError:
        raise LabelParseError(f"unknown category: {raw!r}", token=raw) from None


def parse_label(
    raw: str, registry: TaxonomyRegistry, policy: str = "strict"
) -> ParsedLabel:
    """Validate a raw ``category.subcategory`` string against the registry.

    strict: only the registry's canonical strings are accepted.
    coerce: a valid category prefix with an unknown (or missing) subcategory
    yields the category alone, flagged ``coerced``. An unknown category prefix
    is an error under both policies.
    """
    if policy not in ("strict", "coerce"):
        raise ValueError(f"unknown parse policy: {policy!r}")
    token = (raw or "").strip()
    prefix, _, rest = token.partition(".")
    try:
        category = Category(prefix.strip().lower())
    except ValueError:
        raise LabelParseError(
            f"unknown category prefix in label: {raw!r}", token=raw
        ) from None

    canonical = f"{category.value}.{rest.strip().lower()}" if rest else None
    if canonical is not None:
        sub = registry.lookup(canonical)
        if sub is not None:
            return ParsedLabel(category, sub, coerced=False)
    if policy == "strict":
        raise LabelParseError(
            f"subcategory not in taxonomy: {raw!r}", token=raw
        )
    return ParsedLabel(category, None, coerced=True)


def severity_max(findings: Iterable) -> Optional[Severity]:
    """Highest-rank severity among findings; None for an empty list."""
    best: Optional[Severity] = None
    for finding in findings:
        severity = finding.severity
        if best is None or severity.rank > best.rank:
            best = severity
    return best
