"""Metric oracles and evaluation protocol checks."""

import csv

import numpy as np
import pytest
from conftest import assert_close

from privemb.evaluation import (
    REPORT_COLUMNS,
    ClassifierSpec,
    EvalRecord,
    accuracy,
    attack_eval,
    fit_classifier,
    link_eval,
    macro_f1,
    sweep,
    utility_attr_eval,
    utility_privacy_ratio,
    write_report,
)
from privemb.graphcore import Graph, split_edges
from privemb.numkit import Rng
from privemb.training import TrainConfig


def onehot_of(labels, m):
    z = np.zeros((labels.size, m))
    z[np.arange(labels.size), labels - 1] = 1.0
    return z


# ---------------------------------------------------------------- metrics


class TestMetrics:
    def test_perfect(self):
        y = np.array([1, 2, 3, 1, 2, 3])
        assert accuracy(y, y) == 1.0
        assert macro_f1(y, y, 3) == 1.0

    def test_hand_confusion(self):
        true = np.array([1, 1, 2, 2])
        pred = np.array([1, 2, 2, 2])
        assert_close(accuracy(true, pred), 0.75, tol=1e-15)
        # class 1: P=1, R=1/2, F1=2/3; class 2: P=2/3, R=1, F1=4/5
        assert_close(macro_f1(true, pred, 2), (2.0 / 3.0 + 4.0 / 5.0) / 2.0,
                     tol=1e-12)

    def test_constant_predictor(self):
        true = np.array([1, 1, 2, 2])
        pred = np.ones(4, dtype=int)
        assert_close(accuracy(true, pred), 0.5, tol=1e-15)
        assert_close(macro_f1(true, pred, 2), 1.0 / 3.0, tol=1e-12)

    def test_absent_class_counts_zero(self):
        true = np.array([1, 1, 2])
        pred = np.array([1, 1, 2])
        # class 3 never appears: macro mean still divides by 3
        assert_close(macro_f1(true, pred, 3), 2.0 / 3.0, tol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            accuracy([1, 2], [1])
        with pytest.raises(ValueError):
            macro_f1([], [], 2)
        with pytest.raises(ValueError):
            macro_f1([1], [1], 0)

    def test_bounded(self):
        rng = Rng(0)
        true = rng.integers(1, 5, size=50)
        pred = rng.integers(1, 5, size=50)
        assert 0.0 <= accuracy(true, pred) <= 1.0
        assert 0.0 <= macro_f1(true, pred, 4) <= 1.0


# ---------------------------------------------------------------- battery


class TestClassifiers:
    def separable(self):
        rng = Rng(3)
        x = rng.randn(60, 4) * 0.1
        labels = np.repeat([1, 2, 3], 20)
        x[:20, 0] += 5.0
        x[20:40, 1] += 5.0
        x[40:, 2] += 5.0
        return x, labels

    @pytest.mark.parametrize("kind", ["softmax", "mlp", "knn"])
    def test_fits_separable(self, kind):
        x, labels = self.separable()
        predict = fit_classifier(ClassifierSpec(kind=kind), x, labels, 3, seed=0)
        assert np.array_equal(predict(x), labels)

    def test_label_range_checked(self):
        with pytest.raises(ValueError):
            fit_classifier(ClassifierSpec(), np.ones((3, 2)),
                           np.array([0, 1, 2]), 2, seed=0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ClassifierSpec(kind="svm")


# ---------------------------------------------------------------- attack


class TestAttackEval:
    def leaky_setup(self, m=3, n=90):
        labels = np.tile(np.arange(1, m + 1), n // m)
        return onehot_of(labels, m), labels, np.arange(n)

    @pytest.mark.parametrize("kind", ["softmax", "mlp", "knn"])
    def test_leaky_embedding_caught(self, kind):
        z, labels, mask = self.leaky_setup()
        rows = attack_eval(z, labels, mask, 3, ClassifierSpec(kind=kind),
                           fraction=0.5, seed=0, repeats=3)
        f1 = next(r for r in rows if r.metric == "MacroF1")
        assert f1.mean >= 0.99

    def test_noise_embedding_chance(self):
        rng = Rng(7)
        n = 200
        labels = np.tile([1, 2], n // 2)
        z = rng.randn(n, 16)
        rows = attack_eval(z, labels, np.arange(n), 2, ClassifierSpec(),
                           fraction=0.5, seed=0, repeats=10)
        acc = next(r for r in rows if r.metric == "ACC")
        assert abs(acc.mean - 0.5) <= 0.05

    def test_record_fields(self):
        z, labels, mask = self.leaky_setup()
        rows = attack_eval(z, labels, mask, 3, ClassifierSpec(), fraction=0.3,
                           seed=5, repeats=2, method="GAE")
        assert len(rows) == 2
        for r in rows:
            assert r.task == "privacy"
            assert r.method == "GAE"
            assert r.fraction == 0.3
            assert r.repeats == 2
            assert 0.0 <= r.mean <= 1.0 and r.std >= 0.0

    def test_reproducible(self):
        z, labels, mask = self.leaky_setup()
        a = attack_eval(z, labels, mask, 3, ClassifierSpec(), seed=9, repeats=3)
        b = attack_eval(z, labels, mask, 3, ClassifierSpec(), seed=9, repeats=3)
        assert a == b

    def test_fraction_and_mask_validation(self):
        z, labels, mask = self.leaky_setup()
        with pytest.raises(ValueError):
            attack_eval(z, labels, mask, 3, ClassifierSpec(), fraction=0.05)
        with pytest.raises(ValueError):
            attack_eval(z, labels, np.array([], dtype=int), 3, ClassifierSpec())
        with pytest.raises(ValueError):
            attack_eval(z, labels, mask, 3, ClassifierSpec(), repeats=0)

    def test_impossible_split_reported(self):
        # two labeled nodes, two classes: one side of a 0.5 split can never
        # hold both classes
        z = np.eye(2)
        labels = np.array([1, 2])
        with pytest.raises(ValueError, match="training side"):
            attack_eval(z, labels, np.array([0, 1]), 2, ClassifierSpec(),
                        fraction=0.5, repeats=1)


def test_utility_eval_task_name():
    labels = np.tile(np.arange(1, 4), 30)
    z = onehot_of(labels, 3)
    rows = utility_attr_eval(z, labels, np.arange(90), 3, ClassifierSpec(),
                             seed=0, repeats=2, name="dept")
    assert all(r.task == "utility:dept" for r in rows)
    assert next(r for r in rows if r.metric == "MacroF1").mean >= 0.99


# ---------------------------------------------------------------- link


def clique_pair_graph():
    """Two 6-cliques, no cross edges: non-edges are exactly the cross pairs."""
    edges = []
    for base in (0, 6):
        for i in range(6):
            for j in range(i + 1, 6):
                edges.append((base + i, base + j))
    g = Graph(n=12, edges=np.array(edges, dtype=np.int64),
              attributes={"group": np.tile([1, 2], 6)},
              node_ids=tuple(range(12)))
    return g


class TestLinkEval:
    def test_separable_cliques(self):
        g = clique_pair_graph()
        split = split_edges(g, 0.2, 3)
        z = np.zeros((12, 2))
        z[:6, 0] = 1.5
        z[6:, 1] = 1.5
        rows = link_eval(z, split, ClassifierSpec(), seed=0)
        assert next(r.mean for r in rows if r.metric == "ACC") == 1.0
        assert next(r.mean for r in rows if r.metric == "MacroF1") == 1.0

    def test_random_embedding_chance(self, default_synth):
        g, schema = default_synth
        split = split_edges(g, 0.15, 21)
        z = Rng(4).randn(g.n, 16)
        rows = link_eval(z, split, ClassifierSpec(), seed=0)
        acc = next(r.mean for r in rows if r.metric == "ACC")
        n_test = 2 * len(split.heldout_pos)
        sigma = 0.5 / np.sqrt(n_test)
        assert abs(acc - 0.5) <= max(3.0 * sigma, 0.06)

    def test_reproducible(self):
        g = clique_pair_graph()
        split = split_edges(g, 0.2, 3)
        z = Rng(8).randn(12, 4)
        assert link_eval(z, split, ClassifierSpec(), seed=1) == \
            link_eval(z, split, ClassifierSpec(), seed=1)

    def test_task_and_fraction(self):
        g = clique_pair_graph()
        split = split_edges(g, 0.2, 3)
        z = Rng(8).randn(12, 4)
        rows = link_eval(z, split, ClassifierSpec(), seed=1)
        for r in rows:
            assert r.task == "link"
            # knowledge fraction: share of edges the classifier trained on
            assert_close(r.fraction, 0.8, tol=1e-12)


# ---------------------------------------------------------------- ratio


def ratio_rows(link, util, priv):
    mk = lambda task, mean: EvalRecord(method="m", task=task, classifier="mlp",
                                       fraction=0.5, metric="MacroF1",
                                       mean=mean, std=0.0, repeats=1)
    return [mk("link", link), mk("utility:dept", util), mk("privacy", priv)]


class TestRatio:
    def test_equal_scores(self):
        assert_close(utility_privacy_ratio(ratio_rows(0.8, 0.8, 0.8)), 1.0,
                     tol=1e-12)

    def test_hand_value(self):
        got = utility_privacy_ratio(ratio_rows(0.82, 0.78, 0.52))
        assert_close(got, 0.8 / 0.52, tol=1e-12)

    def test_denominator_monotonicity(self):
        lo = utility_privacy_ratio(ratio_rows(0.8, 0.8, 0.9))
        hi = utility_privacy_ratio(ratio_rows(0.8, 0.8, 0.5))
        assert hi > lo

    def test_missing_rows(self):
        with pytest.raises(ValueError):
            utility_privacy_ratio(ratio_rows(0.8, 0.8, 0.8)[:2])


# ---------------------------------------------------------------- reports


def test_write_report_roundtrip(tmp_path):
    rows = ratio_rows(0.82, 0.78, 0.52)
    path = tmp_path / "report.csv"
    write_report(rows, path)
    with open(path, newline="") as fh:
        got = list(csv.reader(fh))
    assert got[0] == list(REPORT_COLUMNS)
    assert len(got) == 4
    assert got[1][0] == "m" and got[1][1] == "link"
    assert float(got[1][5]) == 0.82


# ---------------------------------------------------------------- sweeps


class TestSweep:
    def test_fraction_sweep_blocks(self, small_synth):
        g, schema = small_synth
        cfg = TrainConfig(variant="GAE", d=8, hidden=10, iterations=3)
        rows = sweep("fraction", [0.3, 0.5], g, schema, cfg,
                     ClassifierSpec(), repeats=2, seed=0)
        fractions = sorted({r.fraction for r in rows})
        assert fractions == [0.3, 0.5]
        assert all(r.task == "privacy" for r in rows)
        assert len(rows) == 4  # 2 values x 2 metrics

    def test_lambda_sweep_retrains(self, small_synth):
        g, schema = small_synth
        cfg = TrainConfig(variant="APGE", d=8, d_prime=4, hidden=10,
                          iterations=3)
        rows = sweep("lambda", [0.0, 1.0], g, schema, cfg, ClassifierSpec(),
                     repeats=1, seed=0)
        methods = {r.method for r in rows}
        assert methods == {"APGE[lambda=0]", "APGE[lambda=1]"}
        tasks = {r.task for r in rows}
        assert tasks == {"privacy", "utility:utility", "link"}

    def test_unknown_axis(self, small_synth):
        g, schema = small_synth
        with pytest.raises(ValueError):
            sweep("epsilon", [1], g, schema, TrainConfig(), ClassifierSpec())

    def test_empty_values(self, small_synth):
        g, schema = small_synth
        with pytest.raises(ValueError):
            sweep("lambda", [], g, schema, TrainConfig(variant="APGE"),
                  ClassifierSpec())
