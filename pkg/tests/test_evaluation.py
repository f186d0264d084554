"""Labels, classifier, AUC, link splits, classification sweeps and the PPMI curve."""

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sgne.corpus import CooccurrenceTable, ppmi
from sgne.errors import DegenerateLabelError, DomainError, SplitError
from sgne.evaluation import (DEFAULT_RATIOS, LabeledNodes, auc, hadamard_features,
                             link_prediction_auc, link_prediction_eval, load_labels,
                             node_classification_sweep, ppmi_similarity_curve, split_links,
                             stratified_split, train_linear_classifier, write_curve_csv)
from sgne.graph import Graph
from sgne.model import init_model
from sgne.training import CorpusConfig, ModelConfig


def cycle(n):
    src = np.arange(n)
    return Graph.from_edges(src, (src + 1) % n, node_count=n)


def complete(n):
    a, b = np.triu_indices(n, k=1)
    return Graph.from_edges(a, b, node_count=n)


class TestLinkSplit:
    def test_ten_edge_cardinalities(self):
        s = split_links(cycle(10), 0.8, seed=0)
        assert (len(s.train_pos), len(s.test_pos)) == (8, 2)
        assert (len(s.train_neg), len(s.test_neg)) == (8, 4)

    def test_same_seed_same_split(self):
        a, b = split_links(cycle(12), 0.8, 3), split_links(cycle(12), 0.8, 3)
        for name in ("train_pos", "test_pos", "train_neg", "test_neg"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_complete_graph(self):
        with pytest.raises(SplitError):
            split_links(complete(6), 0.8)

    def test_bad_fraction(self):
        with pytest.raises(DomainError):
            split_links(cycle(10), 1.0)

    def test_invariants(self, graph50):
        s = split_links(graph50, 0.8, seed=1)
        edges = {tuple(sorted(e)) for e in s.train_pos.tolist()}
        held = {tuple(sorted(e)) for e in s.test_pos.tolist()}
        assert not edges & held
        negs = np.vstack([s.train_neg, s.test_neg])
        assert not graph50.has_edges(negs[:, 0], negs[:, 1]).any()
        assert len({tuple(sorted(e)) for e in negs.tolist()}) == len(negs)
        assert len(s.test_pos) == int(0.2 * graph50.edge_count + 1e-9)
        assert len(s.test_neg) == 2 * len(s.test_pos)
        assert len(s.train_neg) == len(s.train_pos)
        assert s.train_graph.node_count == graph50.node_count
        assert s.train_graph.edge_count == len(s.train_pos)
        assert s.train_graph.degrees.min() >= 1


class TestHadamard:
    def test_cases(self):
        m = init_model(3, 4, seed=0)
        m.center[0] = 1.0
        m.center[1] = 1.0
        m.center[2] = 0.0
        np.testing.assert_array_equal(hadamard_features(m, [[0, 1]]), np.ones((1, 4)))
        np.testing.assert_array_equal(hadamard_features(m, [[0, 2]]), 0.0)

    def test_symmetric(self):
        m = init_model(5, 4, seed=1)
        np.testing.assert_array_equal(hadamard_features(m, [[1, 3]]),
                                      hadamard_features(m, [[3, 1]]))


class TestClassifier:
    def test_separable(self):
        x = np.array([[0.0, 0.0], [0.2, 0.1], [3.0, 3.0], [3.1, 2.8]])
        clf = train_linear_classifier(x, [0, 0, 1, 1])
        assert clf.accuracy(x, [0, 0, 1, 1]) == 1.0

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(40, 3)), rng.integers(3, size=40)
        a = train_linear_classifier(x, y, seed=1)
        b = train_linear_classifier(x, y, seed=1)
        np.testing.assert_array_equal(a.weights, b.weights)

    @pytest.mark.parametrize("labels", [[0, 0, 0, 1, 1], [2, 2, 1, 0, 2, 2]])
    def test_zero_features_predict_majority(self, labels):
        x = np.zeros((len(labels), 3))
        clf = train_linear_classifier(x, labels)
        values, counts = np.unique(labels, return_counts=True)
        assert set(clf.predict(x)) == {values[np.argmax(counts)]}
        assert clf.accuracy(x, labels) == pytest.approx(counts.max() / len(labels))

    def test_single_class(self):
        with pytest.raises(DegenerateLabelError):
            train_linear_classifier(np.ones((3, 2)), [1, 1, 1])

    @given(st.integers(0, 2**31 - 1), st.integers(2, 4))
    @settings(max_examples=25, deadline=None)
    def test_loss_non_increasing(self, seed, k):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(30, 4)) * rng.uniform(0.1, 10, size=4)
        y = rng.integers(k, size=30)
        y[:k] = np.arange(k)
        clf = train_linear_classifier(x, y, epochs=60)
        history = clf.loss_history
        assert len(history) == 61
        assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


class TestAUC:
    def test_examples(self):
        assert auc([0.9, 0.1], [1, 0]) == 1.0
        assert auc([0.1, 0.9], [1, 0]) == 0.0
        assert auc([0.5, 0.5, 0.5], [1, 0, 0]) == 0.5

    def test_one_class(self):
        with pytest.raises(DomainError):
            auc([0.1, 0.2], [1, 1])

    def test_against_pair_count(self):
        rng = np.random.default_rng(3)
        s = rng.integers(0, 5, size=40).astype(float)
        y = rng.integers(0, 2, size=40)
        pos, neg = s[y == 1], s[y == 0]
        brute = np.mean([(p > q) + 0.5 * (p == q) for p in pos for q in neg])
        assert auc(s, y) == pytest.approx(brute)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=30)
        y = np.r_[np.ones(10), np.zeros(20)]
        assert auc(np.exp(3 * s) + 1, y) == pytest.approx(auc(s, y))


class TestLabels:
    def test_load(self):
        g = cycle(4)
        lab = load_labels(io.StringIO("0 a\n1 b\n# note\n2 a\n99 c\n"), g)
        assert lab.nodes.tolist() == [0, 1, 2]
        assert lab.class_names == ("a", "b")
        assert lab.classes.tolist() == [0, 1, 0]

    def test_none_present(self):
        with pytest.raises(DegenerateLabelError):
            load_labels(io.StringIO("x a\n"), cycle(3))

    def test_malformed(self):
        with pytest.raises(DomainError):
            load_labels(io.StringIO("0 a b\n"), cycle(3))


def separated_model(n_per_class=30, classes=3, dim=6, seed=0):
    rng = np.random.default_rng(seed)
    n = n_per_class * classes
    model = init_model(n, dim, seed=seed)
    y = np.repeat(np.arange(classes), n_per_class)
    centers = np.eye(dim)[:classes] * 10
    model.center[:] = centers[y] + rng.normal(scale=0.1, size=(n, dim))
    return model, LabeledNodes.from_arrays(np.arange(n), y)


class TestSweep:
    def test_default_ratio_list(self):
        assert len(DEFAULT_RATIOS) == 18
        assert DEFAULT_RATIOS[0] == 0.01 and DEFAULT_RATIOS[-1] == 0.9

    def test_separable_perfect(self):
        model, labels = separated_model()
        report = node_classification_sweep(model, labels, ratios=(0.1, 0.5), runs=3)
        for row in report.rows:
            assert row["mean"] == 1.0 and len(row["runs"]) == 3

    def test_tiny_ratio_skipped(self):
        model, labels = separated_model()
        report = node_classification_sweep(model, labels, ratios=(0.01, 0.3), runs=2)
        assert report.rows[0]["skipped"] and not report.rows[1]["skipped"]
        assert report.summary["ratios_skipped"] == 1

    def test_reproducible_and_bounded(self):
        rng = np.random.default_rng(0)
        model = init_model(60, 4, seed=0)
        model.center[:] = rng.normal(size=(60, 4))
        labels = LabeledNodes.from_arrays(np.arange(60), rng.integers(3, size=60))
        a = node_classification_sweep(model, labels, ratios=(0.2, 0.6), runs=4, seed=5)
        b = node_classification_sweep(model, labels, ratios=(0.2, 0.6), runs=4, seed=5)
        assert a.to_json() == b.to_json()
        for row in a.rows:
            assert all(0.0 <= acc <= 1.0 for acc in row["runs"])

    def test_csv_layout(self):
        model, labels = separated_model()
        report = node_classification_sweep(model, labels, ratios=(0.1, 0.5), runs=2)
        header = report.to_csv().splitlines()[0]
        assert header == "metric,10%,50%,Mean"
        assert json.loads(report.to_json())["kind"] == "node_classification"

    def test_stratified_split_covers_classes(self):
        classes = np.repeat([0, 1, 2], [50, 30, 20])
        train, test = stratified_split(classes, 0.05, np.random.default_rng(0))
        assert set(classes[train]) == {0, 1, 2}
        assert len(np.intersect1d(train, test)) == 0
        assert len(train) + len(test) == 100
        assert stratified_split(classes, 0.01, np.random.default_rng(0)) is None


class TestLinkPrediction:
    def test_untrained_embeddings_near_chance(self, graph50):
        aucs = []
        for seed in range(10):
            split = split_links(graph50, 0.8, seed)
            model = init_model(graph50.node_count, 16, seed=seed + 100)
            aucs.append(link_prediction_auc(model, split))
        assert abs(np.mean(aucs) - 0.5) <= 0.05

    def test_eval_report(self, graph50):
        cfg = CorpusConfig(walk_length=10, window=3)
        a = link_prediction_eval(graph50, cfg, ModelConfig(dim=8), runs=2, epochs=2, seed=1)
        b = link_prediction_eval(graph50, cfg, ModelConfig(dim=8), runs=2, epochs=2, seed=1)
        assert a.to_json() == b.to_json()
        assert len(a.rows) == 2 and 0 <= a.summary["mean"] <= 1
        assert a.to_csv().splitlines()[0] == "model,auc_mean,auc_std,runs"


class TestPPMICurve:
    def table(self):
        pairs = {(0, 1): 4.0, (1, 2): 1.0, (2, 3): 3.0, (0, 3): 1.0, (1, 3): 2.0}
        return CooccurrenceTable.from_pairs(4, pairs)

    def test_full_fraction_and_sorted(self):
        scores = ppmi(self.table())
        model = init_model(4, 3, seed=0)
        rows = ppmi_similarity_curve(model, scores, 1.0)
        assert len(rows) == len(scores)
        values = [p for _, p, _ in rows]
        assert values == sorted(values)
        assert [r for r, _, _ in rows] == list(range(1, len(rows) + 1))

    def test_top_fraction_keeps_highest(self):
        scores = ppmi(self.table())
        model = init_model(4, 3, seed=0)
        rows = ppmi_similarity_curve(model, scores, 0.5)
        kept = sorted(p for _, p, _ in rows)
        assert kept == sorted(scores.values)[-len(rows):]

    def test_csv(self):
        buf = io.StringIO()
        write_curve_csv([(1, 0.5, 0.25)], buf)
        assert buf.getvalue() == "rank,ppmi,similarity\n1,0.5,0.25\n"

    def test_bad_fraction(self):
        with pytest.raises(DomainError):
            ppmi_similarity_curve(init_model(4, 3, seed=0), ppmi(self.table()), 0.0)
