"""Metrics against a brute-force oracle and hand-worked confusion tables."""

import itertools
import json

import numpy as np
import pytest

from snoic.metrics import (
    ConfusionCounts,
    accuracy,
    confusion,
    evaluate,
    f1_all,
    f1_known,
    f1_open,
    f1_score,
    precision_recall,
)


def oracle_f1(preds, golds, class_id):
    """Straight-from-the-definition F1 for one class."""
    tp = sum(1 for p, g in zip(preds, golds) if p == g == class_id)
    fp = sum(1 for p, g in zip(preds, golds) if p == class_id and g != class_id)
    fn = sum(1 for p, g in zip(preds, golds) if g == class_id and p != class_id)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


class TestConfusion:
    def test_all_correct(self):
        counts = confusion([1, 2, 3], [1, 2, 3], 3)
        assert counts.tp == [1, 1, 1]
        assert counts.fp == [0, 0, 0]
        assert counts.fn == [0, 0, 0]

    def test_hand_worked_counts(self):
        counts = confusion([1, 2, 2, 3], [1, 1, 2, 3], 3)
        assert counts.tp == [1, 1, 1]
        assert counts.fp == [0, 1, 0]
        assert counts.fn == [1, 0, 0]
        assert counts.total == 4

    def test_empty_inputs(self):
        counts = confusion([], [], 2)
        assert counts.tp == [0, 0] and counts.total == 0
        assert accuracy(counts) == 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length mismatch"):
            confusion([1], [1, 2], 2)

    def test_out_of_range_ids_rejected(self):
        with pytest.raises(ValueError, match="out of range"):
            confusion([3], [1], 2)
        with pytest.raises(ValueError, match="out of range"):
            confusion([1], [0], 2)

    def test_for_class_bounds(self):
        counts = confusion([1], [1], 2)
        with pytest.raises(ValueError):
            counts.for_class(3)


class TestPerClassScores:
    def test_perfect_class(self):
        counts = confusion([1, 1], [1, 1], 2)
        assert precision_recall(counts, 1) == (1.0, 1.0)
        assert f1_score(counts, 1) == 1.0

    def test_absent_class_scores_zero(self):
        counts = confusion([1, 1], [1, 1], 3)
        assert precision_recall(counts, 3) == (0.0, 0.0)
        assert f1_score(counts, 3) == 0.0

    def test_balanced_errors(self):
        # Class 1: one hit, one false alarm, one miss.
        counts = confusion([1, 1, 2], [1, 2, 1], 2)
        p, r = precision_recall(counts, 1)
        assert p == 0.5 and r == 0.5
        assert f1_score(counts, 1) == 0.5


class TestAggregates:
    def test_hand_worked_report(self):
        # Known classes 1..2, open id 3. One known example drifts to the
        # other known class; the open example is caught.
        preds = [1, 2, 2, 3]
        golds = [1, 1, 2, 3]
        rep = evaluate(preds, golds, 3)
        assert rep.accuracy == 0.75
        assert rep.f1_all == pytest.approx(7 / 9, abs=1e-12)
        assert rep.f1_known == pytest.approx(2 / 3, abs=1e-12)
        assert rep.f1_open == 1.0
        assert rep.M == 2
        assert rep.count == 4

    def test_all_correct_is_all_ones(self):
        rep = evaluate([1, 2, 3, 4], [1, 2, 3, 4], 4)
        assert rep.accuracy == rep.f1_all == rep.f1_known == rep.f1_open == 1.0

    def test_single_known_class_decomposition(self):
        counts = confusion([1, 2, 1], [1, 2, 2], 2)
        assert f1_all(counts) == pytest.approx(
            (1 * f1_known(counts) + f1_open(counts)) / 2, abs=1e-12
        )

    def test_f1_known_requires_a_known_class(self):
        counts = confusion([1], [1], 1)
        with pytest.raises(ValueError):
            f1_known(counts)

    def test_scores_stay_in_unit_interval(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            c = int(rng.integers(2, 6))
            n = int(rng.integers(1, 40))
            preds = rng.integers(1, c + 1, size=n).tolist()
            golds = rng.integers(1, c + 1, size=n).tolist()
            rep = evaluate(preds, golds, c)
            for v in (rep.accuracy, rep.f1_all, rep.f1_known, rep.f1_open):
                assert 0.0 <= v <= 1.0

    def test_pair_permutation_invariance(self):
        rng = np.random.default_rng(1)
        preds = rng.integers(1, 4, size=30)
        golds = rng.integers(1, 4, size=30)
        rep = evaluate(preds.tolist(), golds.tolist(), 3)
        order = rng.permutation(30)
        rep2 = evaluate(preds[order].tolist(), golds[order].tolist(), 3)
        assert rep.to_json() == rep2.to_json()


class TestExhaustiveAgainstOracle:
    def test_every_assignment_up_to_five_examples(self):
        """Exact agreement with a brute-force scorer on all small inputs."""
        for c in (2, 3):
            for n in range(1, 6):
                for preds in itertools.product(range(1, c + 1), repeat=n):
                    for golds in itertools.product(range(1, c + 1), repeat=n):
                        rep = evaluate(list(preds), list(golds), c)
                        per = [oracle_f1(preds, golds, k) for k in range(1, c + 1)]
                        hits = sum(1 for p, g in zip(preds, golds) if p == g)
                        assert rep.accuracy == hits / n
                        assert rep.f1_all == sum(per) / c
                        assert rep.f1_known == sum(per[:-1]) / (c - 1)
                        assert rep.f1_open == per[-1]

    def test_decomposition_identity_on_random_tables(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            c = int(rng.integers(2, 7))
            n = int(rng.integers(1, 60))
            preds = rng.integers(1, c + 1, size=n).tolist()
            golds = rng.integers(1, c + 1, size=n).tolist()
            counts = confusion(preds, golds, c)
            m = c - 1
            lhs = (m * f1_known(counts) + f1_open(counts)) / (m + 1)
            assert abs(lhs - f1_all(counts)) <= 1e-9


class TestReportStructure:
    def test_to_dict_fields(self):
        rep = evaluate([1, 2], [1, 2], 2)
        d = rep.to_dict()
        assert set(d) == {
            "accuracy", "f1_all", "f1_known", "f1_open", "per_class", "M", "count",
        }
        assert d["M"] == 1 and d["count"] == 2

    def test_per_class_rows(self):
        rep = evaluate([1, 2, 3], [1, 2, 3], 3)
        assert [row["class"] for row in rep.per_class] == [1, 2, 3]
        for row in rep.per_class:
            assert row["precision"] == row["recall"] == row["f1"] == 1.0

    def test_to_json_round_trips(self):
        rep = evaluate([1, 2, 1], [1, 1, 2], 2)
        assert json.loads(rep.to_json()) == rep.to_dict()

    def test_counts_dataclass_accessor(self):
        counts = ConfusionCounts(num_classes=2, tp=[3, 1], fp=[0, 2], fn=[2, 0], total=6)
        assert counts.for_class(2) == (1, 2, 0)
