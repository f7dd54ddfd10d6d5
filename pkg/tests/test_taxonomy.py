"""Registry shape, label parsing, and the severity order."""

import json
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from torchsight.errors import LabelParseError, TaxonomyError
from torchsight.taxonomy import (
    Category,
    Severity,
    SEVERITY_ORDER,
    load_registry,
    parse_category,
    parse_label,
    severity_max,
)

EXPECTED_COUNTS = {
    "malicious": 14,
    "confidential": 9,
    "credentials": 8,
    "pii": 6,
    "safe": 6,
    "financial": 4,
    "medical": 4,
}


def test_builtin_counts(registry):
    assert registry.counts() == EXPECTED_COUNTS
    assert registry.total() == 51


def test_canonical_ids_unique_and_well_formed(registry):
    ids = [s.canonical for s in registry.all_subcategories()]
    assert len(ids) == len(set(ids)) == 51
    for canonical in ids:
        prefix, _, name = canonical.partition(".")
        assert prefix in EXPECTED_COUNTS
        assert name
        assert canonical in registry


def _sev_holder(severity):
    return SimpleNamespace(severity=severity)


def test_severity_total_order():
    ranks = [s.rank for s in SEVERITY_ORDER]
    assert ranks == sorted(ranks, reverse=True)
    assert Severity.CRITICAL.rank > Severity.HIGH.rank > Severity.MEDIUM.rank
    assert Severity.MEDIUM.rank > Severity.LOW.rank > Severity.INFO.rank
    assert severity_max([_sev_holder(Severity.LOW), _sev_holder(Severity.HIGH)]) is (
        Severity.HIGH
    )
    assert severity_max([]) is None


def test_parse_category_round_trip():
    for category in Category:
        assert parse_category(category.value) is category
    with pytest.raises(LabelParseError):
        parse_category("weaponized")


def test_parse_label_strict_accepts_every_canonical_id(registry):
    for sub in registry.all_subcategories():
        parsed = parse_label(sub.canonical, registry, policy="strict")
        assert parsed.category is sub.category
        assert parsed.subcategory == sub
        assert not parsed.coerced


def test_parse_label_unknown_subcategory(registry):
    with pytest.raises(LabelParseError):
        parse_label("credentials.master_key_9000", registry, policy="strict")
    parsed = parse_label("credentials.master_key_9000", registry, policy="coerce")
    assert parsed.category is Category.CREDENTIALS
    assert parsed.subcategory is None
    assert parsed.coerced


def test_parse_label_unknown_category_always_fails(registry):
    for policy in ("strict", "coerce"):
        with pytest.raises(LabelParseError):
            parse_label("weapons.bio", registry, policy=policy)


def test_load_registry_from_json(registry, tmp_path):
    dumped = registry.dump()
    path = tmp_path / "taxonomy.json"
    path.write_text(json.dumps(dumped), encoding="utf-8")
    loaded = load_registry(path)
    assert loaded.counts() == registry.counts()
    assert loaded.version == registry.version


def test_load_registry_rejects_bad_shapes(tmp_path):
    base = load_registry().dump()

    missing_version = dict(base)
    del missing_version["version"]
    with pytest.raises(TaxonomyError):
        load_registry(json.dumps(missing_version))

    unknown_category = dict(base)
    unknown_category["categories"] = dict(base["categories"])
    unknown_category["categories"]["weapons"] = ["bio"]
    with pytest.raises(TaxonomyError):
        load_registry(json.dumps(unknown_category))

    duplicated = dict(base)
    duplicated["categories"] = dict(base["categories"])
    first = duplicated["categories"]["pii"][0]
    duplicated["categories"]["pii"] = list(duplicated["categories"]["pii"]) + [first]
    with pytest.raises(TaxonomyError):
        load_registry(json.dumps(duplicated))


@given(st.lists(st.sampled_from(list(Severity)), min_size=1, max_size=8))
def test_severity_max_is_order_insensitive_and_ranked(severities):
    holders = [_sev_holder(s) for s in severities]
    top = severity_max(holders)
    assert top is severity_max(list(reversed(holders)))
    assert top.rank == max(s.rank for s in severities)
