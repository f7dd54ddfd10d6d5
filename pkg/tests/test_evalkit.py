"""Evaluation metrics and the benchmark runner."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torchsight.errors import DatasetError
from torchsight.evalkit import (
    BenchmarkSample,
    PredictionRecord,
    accuracy,
    cohens_kappa,
    load_benchmark,
    load_replay,
    macro_prf1,
    observed_agreement,
    per_category_accuracy,
    prf1,
    run_benchmark,
    safe_fpr,
    subcategory_accuracy,
    system_from_replay,
    wilson_ci,
)
from torchsight.taxonomy import Category, Severity


def gold(registry, sample_id, canonical, text="body", source=""):
    sub = registry.lookup(canonical)
    assert sub is not None, canonical
    return BenchmarkSample(
        id=sample_id,
        text=text,
        gold_category=sub.category,
        gold_subcategory=sub,
        source=source,
    )


def pred(sample_id, category, sub_raw=None, latency=0.0):
    return PredictionRecord(
        sample_id=sample_id,
        predicted_category=Category(category) if category else None,
        predicted_subcategory_raw=sub_raw,
        latency=latency,
    )


def paired(registry, rows):
    """rows: (gold_canonical, predicted_category_or_None, sub_raw)."""
    golds, preds = [], []
    for i, (canonical, predicted, sub_raw) in enumerate(rows):
        sid = f"s{i:04d}"
        golds.append(gold(registry, sid, canonical))
        preds.append(pred(sid, predicted, sub_raw))
    return preds, golds


class TestWilson:
    def test_published_anchors(self):
        low, high = wilson_ci(950, 1000)
        assert (round(low, 3), round(high, 3)) == (0.935, 0.962)
        low, high = wilson_ci(527, 1000)
        assert (round(low, 3), round(high, 3)) == (0.496, 0.558)

    def test_zero_successes_lower_bound_is_exactly_zero(self):
        low, _ = wilson_ci(0, 50)
        assert low == 0.0

    def test_perfect_upper_bound_clamped(self):
        _, high = wilson_ci(50, 50)
        assert high == 1.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            wilson_ci(1, 0)
        with pytest.raises(ValueError):
            wilson_ci(5, 4)
        with pytest.raises(ValueError):
            wilson_ci(-1, 4)
        with pytest.raises(ValueError):
            wilson_ci(1, 10, confidence=1.0)

    @given(
        n=st.integers(min_value=1, max_value=10**6),
        frac=st.floats(min_value=0.0, max_value=1.0),
    )
    def test_contains_point_estimate(self, n, frac):
        k = round(frac * n)
        low, high = wilson_ci(k, n)
        assert low <= k / n <= high
        assert 0.0 <= low <= high <= 1.0

    @given(
        exponent=st.integers(min_value=1, max_value=5),
        frac=st.floats(min_value=0.05, max_value=0.95),
    )
    def test_width_shrinks_with_n(self, exponent, frac):
        n_small = 10**exponent
        n_large = n_small * 10
        def width(n):
            low, high = wilson_ci(round(frac * n), n)
            return high - low
        assert width(n_large) < width(n_small)


class TestPrF1:
    def test_perfect_precision_row(self, registry):
        # 17 medical hits, 8 medical misses, zero false alarms.
        rows = [("medical.diagnosis", "medical", None)] * 17
        rows += [("medical.diagnosis", "safe", None)] * 8
        preds, golds = paired(registry, rows)
        v = prf1(preds, golds, Category.MEDICAL)
        assert (v.precision, v.recall) == (1.0, 0.68)
        assert round(v.f1 * 100, 1) == 81.0
        assert not v.degenerate

    def test_perfect_recall_row(self, registry):
        # 109 TP + 16 FP: precision 109/125 = 0.872 exactly.
        rows = [("pii.contact", "pii", None)] * 109
        rows += [("safe.documentation", "pii", None)] * 16
        preds, golds = paired(registry, rows)
        v = prf1(preds, golds, Category.PII)
        assert (v.precision, v.recall) == (0.872, 1.0)
        assert round(v.f1 * 100, 1) == 93.2

    def test_rounded_rate_pair(self):
        # No integer confusion matrix yields exactly (0.929, 0.953); the
        # published rates are checked as rates.
        p, r = 0.929, 0.953
        assert round(2 * p * r / (p + r) * 100, 1) == 94.1

    def test_degenerate_when_category_absent(self, registry):
        preds, golds = paired(registry, [("safe.code", "safe", None)] * 3)
        v = prf1(preds, golds, Category.FINANCIAL)
        assert (v.precision, v.recall, v.f1) == (0.0, 0.0, 0.0)
        assert v.degenerate

    @given(
        tp=st.integers(min_value=0, max_value=40),
        fp=st.integers(min_value=0, max_value=40),
        fn=st.integers(min_value=0, max_value=40),
    )
    @settings(max_examples=150)
    def test_f1_is_harmonic_mean_of_reported_rates(self, registry, tp, fp, fn):
        rows = [("financial.tax", "financial", None)] * tp
        rows += [("safe.code", "financial", None)] * fp
        rows += [("financial.tax", "safe", None)] * fn
        rows += [("safe.code", "safe", None)]  # keep lists nonempty
        preds, golds = paired(registry, rows)
        v = prf1(preds, golds, Category.FINANCIAL)
        if v.precision + v.recall == 0:
            assert v.f1 == 0.0
        else:
            expected = 2 * v.precision * v.recall / (v.precision + v.recall)
            assert abs(v.f1 - expected) < 1e-12

    def test_macro_averages_over_all_seven(self, registry):
        preds, golds = paired(
            registry,
            [
                ("credentials.api_key", "credentials", None),
                ("medical.diagnosis", "medical", None),
                ("safe.code", "pii", None),
            ],
        )
        macro_p, macro_r, macro_f = macro_prf1(preds, golds, registry)
        per = [prf1(preds, golds, c) for c in Category]
        assert macro_p == pytest.approx(sum(v.precision for v in per) / 7)
        assert macro_r == pytest.approx(sum(v.recall for v in per) / 7)
        assert macro_f == pytest.approx(sum(v.f1 for v in per) / 7)
        # absent categories contribute zeros, dragging the mean down
        assert macro_f < 1.0


class TestAccuracy:
    def test_error_markers_count_as_wrong(self, registry):
        preds, golds = paired(
            registry,
            [
                ("safe.code", "safe", None),
                ("pii.contact", "pii", None),
                ("pii.contact", None, None),  # backend failure
            ],
        )
        assert accuracy(preds, golds) == pytest.approx(2 / 3)

    def test_per_category_slices(self, registry):
        rows = [("safe.code", "safe", None)] * 245
        rows += [("safe.code", "pii", None)] * 5
        rows += [("credentials.token", "credentials", None)] * 10
        preds, golds = paired(registry, rows)
        per = per_category_accuracy(preds, golds)
        assert per[Category.SAFE] == pytest.approx(0.980)
        assert per[Category.CREDENTIALS] == 1.0
        assert Category.MEDICAL not in per  # absent slice omitted, not zeroed

    def test_safe_fpr_complements_safe_accuracy(self, registry):
        rows = [("safe.code", "safe", None)] * 8
        rows += [("safe.code", "malicious", None)] * 2
        rows += [("pii.contact", "pii", None)] * 5
        preds, golds = paired(registry, rows)
        fpr = safe_fpr(preds, golds)
        assert fpr == pytest.approx(0.2)
        assert fpr + per_category_accuracy(preds, golds)[Category.SAFE] == 1.0

    def test_safe_fpr_requires_safe_samples(self, registry):
        preds, golds = paired(registry, [("pii.contact", "pii", None)] * 4)
        with pytest.raises(DatasetError):
            safe_fpr(preds, golds)

    def test_pairing_validates_ids(self, registry):
        preds, golds = paired(registry, [("safe.code", "safe", None)] * 2)
        with pytest.raises(DatasetError):
            accuracy(preds[:1], golds)
        preds[1].sample_id = preds[0].sample_id
        with pytest.raises(DatasetError):
            accuracy(preds, golds)

    @given(st.data())
    @settings(max_examples=60)
    def test_accuracy_is_weighted_mean_of_slices(self, registry, data):
        canonicals = [
            "safe.code",
            "pii.contact",
            "credentials.token",
            "medical.diagnosis",
        ]
        cats = ["safe", "pii", "credentials", "medical", "financial"]
        rows = data.draw(
            st.lists(
                st.tuples(st.sampled_from(canonicals), st.sampled_from(cats)),
                min_size=1,
                max_size=60,
            )
        )
        preds, golds = paired(registry, [(c, p, None) for c, p in rows])
        per = per_category_accuracy(preds, golds)
        counts = {}
        for g in golds:
            counts[g.gold_category] = counts.get(g.gold_category, 0) + 1
        weighted = sum(per[c] * counts[c] for c in counts) / len(golds)
        assert accuracy(preds, golds) == pytest.approx(weighted)


class TestSubcategoryAccuracy:
    def test_invented_names_score_zero(self, registry):
        rows = [("credentials.api_key", "credentials", "credentials.aws_access_key_id")] * 5
        preds, golds = paired(registry, rows)
        assert subcategory_accuracy(preds, golds, registry) == 0.0

    def test_mixed_fixture(self, registry):
        rows = [("pii.contact", "pii", "pii.contact")] * 4  # correct
        rows += [("pii.contact", "pii", "pii.identity")] * 2  # valid, wrong
        rows += [("pii.contact", "pii", "pii.home_address")] * 2  # invented
        rows += [("pii.contact", "pii", None)]  # missing
        rows += [("pii.contact", None, None)]  # error marker
        preds, golds = paired(registry, rows)
        assert subcategory_accuracy(preds, golds, registry) == pytest.approx(0.4)

    def test_bare_name_joined_with_predicted_category(self, registry):
        preds, golds = paired(registry, [("pii.contact", "pii", "contact")])
        assert subcategory_accuracy(preds, golds, registry) == 1.0


class TestAgreement:
    def test_identical_sequences(self):
        labels = ["safe", "pii", "safe", "credentials"]
        assert observed_agreement(labels, labels) == 1.0
        assert cohens_kappa(labels, labels) == 1.0

    def test_constant_identical_raters(self):
        assert cohens_kappa(["safe"] * 9, ["safe"] * 9) == 1.0

    def test_hand_computed_two_by_two(self):
        a = ["x", "x", "y", "y"]
        b = ["x", "y", "y", "y"]
        # p_o = 0.75, p_e = 0.5*0.25 + 0.5*0.75 = 0.5
        assert cohens_kappa(a, b) == pytest.approx(0.5)

    def test_agreement_anchor(self):
        a = ["m"] * 200
        b = ["m"] * 197 + ["x", "y", "z"]
        assert observed_agreement(a, b) == pytest.approx(0.985)

    def test_symmetry(self):
        a = ["x", "y", "x", "z", "y"]
        b = ["x", "x", "x", "z", "z"]
        assert cohens_kappa(a, b) == pytest.approx(cohens_kappa(b, a))

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            observed_agreement(["a"], [])


class TestLoadBenchmark:
    def make_line(self, **overrides):
        record = {
            "id": "s1",
            "text": "hello",
            "category": "pii",
            "subcategory": "contact",
        }
        record.update(overrides)
        return json.dumps(record)

    def test_loads_and_parses_labels(self, registry):
        samples = load_benchmark([self.make_line()], registry)
        assert samples[0].gold_category is Category.PII
        assert samples[0].gold_subcategory.canonical == "pii.contact"

    def test_rejects_missing_field(self, registry):
        line = json.dumps({"id": "x", "text": "t", "category": "pii"})
        with pytest.raises(DatasetError, match="subcategory"):
            load_benchmark([line], registry)

    def test_rejects_duplicate_id(self, registry):
        with pytest.raises(DatasetError, match="duplicate"):
            load_benchmark([self.make_line(), self.make_line()], registry)

    def test_rejects_unknown_label(self, registry):
        with pytest.raises(DatasetError):
            load_benchmark([self.make_line(subcategory="made_up")], registry)

    def test_rejects_category_mismatch(self, registry):
        line = self.make_line(category="safe", subcategory="pii.contact")
        with pytest.raises(DatasetError, match="does not match"):
            load_benchmark([line], registry)

    def test_rejects_invalid_json_and_empty(self, registry):
        with pytest.raises(DatasetError, match="invalid JSON"):
            load_benchmark(["{nope"], registry)
        with pytest.raises(DatasetError, match="empty"):
            load_benchmark([], registry)


def replay_output(registry, canonical, severity=Severity.MEDIUM):
    assert registry.lookup(canonical) is not None, canonical
    return json.dumps(
        [
            {
                "category": canonical.split(".", 1)[0],
                "subcategory": canonical,
                "severity": severity.value,
                "explanation": "replayed",
            }
        ]
    )


class TestRunBenchmark:
    def make_benchmark(self, registry):
        return [
            gold(registry, "a1", "pii.contact", source="corpus_a"),
            gold(registry, "a2", "credentials.api_key", source="corpus_a"),
            gold(registry, "b1", "safe.code", source="corpus_b"),
            gold(registry, "b2", "safe.documentation", source="corpus_b"),
        ]

    def echo_replay(self, registry, samples):
        outputs = {}
        for s in samples:
            if s.gold_category is Category.SAFE:
                outputs[s.id] = "[]"
            else:
                outputs[s.id] = replay_output(registry, s.gold_subcategory.canonical)
        return outputs

    def test_echo_system_scores_perfectly(self, registry):
        samples = self.make_benchmark(registry)
        system = system_from_replay(self.echo_replay(registry, samples), registry)
        records, metrics = run_benchmark(samples, system, registry)
        assert metrics.category_accuracy == 1.0
        # Safe samples echo no findings, so they carry no raw subcategory
        # string to match; the rate runs over all samples, capping it at
        # the non-safe share (2 of 4 here).
        assert metrics.subcategory_accuracy == 0.5
        assert metrics.safe_fpr == 0.0
        assert metrics.error_count == 0
        assert [r.sample_id for r in records] == [s.id for s in samples]

    def test_missing_replay_entry_becomes_error_marker(self, registry):
        samples = self.make_benchmark(registry)
        outputs = self.echo_replay(registry, samples)
        del outputs["a1"]
        system = system_from_replay(outputs, registry)
        records, metrics = run_benchmark(samples, system, registry)
        assert records[0].is_error
        assert "a1" in records[0].error
        assert metrics.error_count == 1
        assert metrics.category_accuracy == pytest.approx(0.75)

    def test_injected_clock_gives_deterministic_latency(self, registry):
        samples = self.make_benchmark(registry)
        system = system_from_replay(self.echo_replay(registry, samples), registry)
        ticks = iter(range(1000))
        _, metrics = run_benchmark(
            samples, system, registry, clock=lambda: next(ticks) * 0.5
        )
        # each sample reads the clock twice: latency is one 0.5 s tick
        assert metrics.mean_latency == pytest.approx(0.5)

    def test_per_source_breakdown(self, registry):
        samples = self.make_benchmark(registry)
        outputs = self.echo_replay(registry, samples)
        outputs["b2"] = replay_output(registry, "pii.contact")  # one miss in b
        system = system_from_replay(outputs, registry)
        _, metrics = run_benchmark(samples, system, registry)
        assert metrics.per_source["corpus_a"] == {"n": 2, "category_accuracy": 1.0}
        assert metrics.per_source["corpus_b"]["category_accuracy"] == 0.5

    def test_run_is_deterministic(self, registry):
        samples = self.make_benchmark(registry)
        system = system_from_replay(self.echo_replay(registry, samples), registry)
        fixed = lambda: 0.0  # noqa: E731
        first = run_benchmark(samples, system, registry, clock=fixed)[1]
        second = run_benchmark(samples, system, registry, clock=fixed)[1]
        assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(
            second.to_dict(), sort_keys=True
        )

    def test_text_table_renders_all_categories(self, registry):
        samples = self.make_benchmark(registry)
        system = system_from_replay(self.echo_replay(registry, samples), registry)
        _, metrics = run_benchmark(samples, system, registry)
        table = metrics.to_text_table()
        for category in Category:
            assert category.value in table


class TestLoadReplay:
    def test_mapping_object_file(self, tmp_path):
        path = tmp_path / "replay.json"
        path.write_text(json.dumps({"a": "[]", "b": "[]"}), encoding="utf-8")
        assert load_replay(path) == {"a": "[]", "b": "[]"}

    def test_jsonl_records(self, tmp_path):
        path = tmp_path / "replay.jsonl"
        path.write_text(
            '{"id": "a", "output": "[]"}\n{"id": "b", "output": "x"}\n',
            encoding="utf-8",
        )
        assert load_replay(path) == {"a": "[]", "b": "x"}

    def test_jsonl_missing_keys(self, tmp_path):
        path = tmp_path / "replay.jsonl"
        path.write_text('{"id": "a", "output": "[]"}\n{"id": "b"}\n', encoding="utf-8")
        with pytest.raises(DatasetError, match="line 2"):
            load_replay(path)

    def test_single_record_jsonl(self, tmp_path):
        # One {id, output} line reads as a record, not as a two-sample map.
        path = tmp_path / "replay.jsonl"
        path.write_text('{"id": "a", "output": "[]"}\n', encoding="utf-8")
        assert load_replay(path) == {"a": "[]"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="cannot read"):
            load_replay(tmp_path / "nope.json")
