"""Downstream evaluation: node classification, link prediction and the PPMI curve."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .corpus import PairScores
from .errors import DegenerateLabelError, DomainError, SplitError
from .graph import Graph
from .model import EmbeddingModel, normalized_similarity

DEFAULT_RATIOS = tuple([i / 100 for i in range(1, 10)] + [i / 10 for i in range(1, 10)])
DEFAULT_RUNS = 10


# -- labels -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabeledNodes:
    """Node ids with an integer class per node; ``class_names[c]`` is the original label."""

    nodes: np.ndarray
    classes: np.ndarray
    class_names: tuple

    def __len__(self):
        return len(self.nodes)

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @classmethod
    def from_arrays(cls, nodes, classes):
        nodes = np.asarray(nodes, dtype=np.int64)
        names, codes = np.unique(np.asarray(classes), return_inverse=True)
        return cls(nodes, codes.astype(np.int64), tuple(str(n) for n in names))


def load_labels(source, graph: Graph) -> LabeledNodes:
    """Read ``node_label class_label`` lines; nodes absent from ``graph`` are ignored."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return load_labels(fh, graph)
    index = {lab: i for i, lab in enumerate(graph.labels)}
    nodes, classes = [], []
    for raw in source:
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if len(tokens) != 2:
            raise DomainError(f"label line needs 2 tokens: {raw.strip()!r}")
        if tokens[0] in index:
            nodes.append(index[tokens[0]])
            classes.append(tokens[1])
    if not nodes:
        raise DegenerateLabelError("no labelled node is present in the graph")
    return LabeledNodes.from_arrays(nodes, classes)


# -- classifier ---------------------------------------------------------------

@dataclass
class LinearClassifier:
    """Linear squared-hinge (L2-SVM) model; one-vs-rest beyond two classes."""

    weights: np.ndarray        # (K', d) with K' = 1 for binary problems
    intercepts: np.ndarray     # (K',)
    classes: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    loss_history: list = field(default_factory=list)

    def decision_function(self, features) -> np.ndarray:
        x = (np.asarray(features, dtype=np.float64) - self.feature_mean) / self.feature_scale
        scores = x @ self.weights.T + self.intercepts
        return scores[:, 0] if len(self.classes) == 2 else scores

    def predict(self, features) -> np.ndarray:
        scores = self.decision_function(features)
        if len(self.classes) == 2:
            return self.classes[(scores > 0).astype(np.int64)]
        return self.classes[np.argmax(scores, axis=1)]

    def accuracy(self, features, labels) -> float:
        return float(np.mean(self.predict(features) == np.asarray(labels)))


def _fit_binary(x, y, l2, epochs, step):
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    history = []
    for _ in range(epochs + 1):
        margin = 1.0 - y * (x @ w + b)
        active = np.maximum(margin, 0.0)
        history.append(float(active @ active / n + 0.5 * l2 * (w @ w) / n))
        if len(history) > epochs:
            break
        coef = -2.0 * y * active / n
        w = w - step * (x.T @ coef + l2 * w / n)
        b = b - step * coef.sum()
    return w, b, history


def train_linear_classifier(features, labels, l2_weight: float = 1.0,
                            epochs: int = 200, seed: int | None = 0) -> LinearClassifier:
    """Full-batch gradient descent on the squared hinge loss plus ``l2/(2n) ||w||^2``.

    Features are standardised first and the intercept is not penalised.  The
    fixed step is the inverse of the objective's smoothness constant, which
    makes the training loss non-increasing.  The procedure has no random
    component; ``seed`` is accepted for interface symmetry.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise DomainError("features must be (n, d) with one label per row")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DegenerateLabelError("training labels contain a single class")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    xs = (x - mean) / scale
    n = len(xs)
    augmented = np.hstack([xs, np.ones((n, 1))])
    spectral = np.linalg.norm(augmented, ord=2) if augmented.size else 0.0
    lipschitz = 2.0 * spectral ** 2 / n + l2_weight / n
    step = 1.0 / lipschitz

    targets = [classes[1]] if len(classes) == 2 else list(classes)
    weights, intercepts, histories = [], [], []
    for c in targets:
        yy = np.where(y == c, 1.0, -1.0)
        w, b, hist = _fit_binary(xs, yy, l2_weight, epochs, step)
        weights.append(w)
        intercepts.append(b)
        histories.append(hist)
    history = list(np.sum(histories, axis=0))
    return LinearClassifier(np.array(weights), np.array(intercepts), classes,
                            mean, scale, history)


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with ties counted as one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DomainError("AUC needs both positive and negative examples")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# -- reports ------------------------------------------------------------------

@dataclass
class EvalReport:
    kind: str
    rows: list
    summary: dict
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "rows": self.rows, "summary": self.summary,
                           "config": self.config}, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.kind == "node_classification":
            ratios = [r for r in self.rows if not r.get("skipped")]
            writer.writerow(["metric"] + [f"{r['ratio']:.0%}" for r in ratios] + ["Mean"])
            writer.writerow(["accuracy"] + [f"{r['mean']:.6f}" for r in ratios]
                            + [_fmt(self.summary.get("mean"))])
            writer.writerow(["std"] + [f"{r['std']:.6f}" for r in ratios] + [""])
        else:
            writer.writerow(["model", "auc_mean", "auc_std", "runs"])
            writer.writerow([self.config.get("label", "model"), _fmt(self.summary["mean"]),
                             _fmt(self.summary["std"]), len(self.rows)])
        return buf.getvalue()


def _fmt(value):
    return "" if value is None or (isinstance(value, float) and math.isnan(value)) else f"{value:.6f}"


# -- node classification ----------------------------------------------------

def stratified_split(classes: np.ndarray, ratio: float, rng):
    """Indices ``(train, test)`` with every class present in the training part.

    Returns ``None`` when ``ratio`` cannot cover every class.
    """
    n = len(classes)
    labels = np.unique(classes)
    if round(ratio * n) < len(labels):
        return None
    train = []
    for c in labels:
        members = rng.permutation(np.flatnonzero(classes == c))
        take = max(1, int(round(ratio * len(members))))
        if len(members) > 1:
            take = min(take, len(members) - 1)
        train.append(members[:take])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(n), train)
    if len(test) == 0:
        return None
    return train, test


def node_classification_sweep(model: EmbeddingModel, labels: LabeledNodes,
                              ratios=DEFAULT_RATIOS, runs: int = DEFAULT_RUNS,
                              seed: int = 0, l2_weight: float = 1.0,
                              epochs: int = 200) -> EvalReport:
    """Accuracy of a linear classifier on center embeddings across training ratios."""
    if runs < 1:
        raise DomainError("runs must be >= 1")
    for r in ratios:
        if not 0.0 < r < 1.0:
            raise DomainError(f"training ratio {r} outside (0, 1)")
    features = model.center[labels.nodes]
    rows = []
    ratio_seeds = np.random.SeedSequence(seed).spawn(len(ratios))
    for ratio, ss in zip(ratios, ratio_seeds):
        rng = np.random.default_rng(ss)
        accs = []
        reason = None
        for _ in range(runs):
            split = stratified_split(labels.classes, ratio, rng)
            if split is None:
                reason = "training ratio too small to include every class"
                break
            train, test = split
            clf = train_linear_classifier(features[train], labels.classes[train],
                                          l2_weight, epochs)
            accs.append(clf.accuracy(features[test], labels.classes[test]))
        if reason:
            rows.append({"ratio": ratio, "skipped": True, "reason": reason})
        else:
            rows.append({"ratio": ratio, "skipped": False, "mean": float(np.mean(accs)),
                         "std": float(np.std(accs)), "runs": accs})
    done = [r["mean"] for r in rows if not r["skipped"]]
    summary = {"mean": float(np.mean(done)) if done else None,
               "ratios_evaluated": len(done), "ratios_skipped": len(rows) - len(done)}
    return EvalReport("node_classification", rows, summary,
                      {"runs": runs, "seed": seed, "l2_weight": l2_weight, "epochs": epochs})


# -- link prediction ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinkSplit:
    train_graph: Graph
    train_pos: np.ndarray   # (m, 2)
    test_pos: np.ndarray
    train_neg: np.ndarray
    test_neg: np.ndarray


def _sample_non_edges(graph: Graph, count: int, rng) -> np.ndarray:
    n = graph.node_count
    total_pairs = n * (n - 1) // 2
    available = total_pairs - graph.edge_count
    if count > available:
        raise SplitError(f"need {count} non-edges but only {available} exist")
    if total_pairs <= 2_000_000:
        a, b = np.triu_indices(n, k=1)
        free = ~graph.has_edges(a, b)
        chosen = rng.choice(int(free.sum()), size=count, replace=False)
        return np.column_stack([a[free][chosen], b[free][chosen]])
    picked: dict = {}
    while len(picked) < count:
        a = rng.integers(n, size=2 * (count - len(picked)) + 16)
        b = rng.integers(n, size=len(a))
        ok = (a != b) & ~graph.has_edges(a, b)
        for i, j in zip(np.minimum(a, b)[ok], np.maximum(a, b)[ok]):
            key = (int(i), int(j))
            if key not in picked:
                picked[key] = None
                if len(picked) == count:
                    break
    return np.array(list(picked), dtype=np.int64)


def split_links(graph: Graph, train_fraction: float = 0.8, seed: int = 0) -> LinkSplit:
    """Hold out ``floor((1 - f)|E|)`` edges; draw 1x / 2x non-edge negatives.

    Held-out edges are drawn uniformly among those whose removal leaves both
    endpoints with at least one training edge, so the training graph keeps
    every node (and its ids).
    """
    if not 0.0 < train_fraction < 1.0:
        raise DomainError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    m = graph.edge_count
    n_test = int(math.floor((1.0 - train_fraction) * m + 1e-9))
    remaining = (np.bincount(graph.src, minlength=graph.node_count)
                 + np.bincount(graph.dst, minlength=graph.node_count))
    test_mask = np.zeros(m, dtype=bool)
    chosen = 0
    for e in rng.permutation(m):
        if chosen == n_test:
            break
        a, b = graph.src[e], graph.dst[e]
        if remaining[a] > 1 and remaining[b] > 1:
            remaining[a] -= 1
            remaining[b] -= 1
            test_mask[e] = True
            chosen += 1
    if chosen < n_test:
        raise SplitError("cannot hold out enough edges without isolating a node")
    pos = np.column_stack([graph.src, graph.dst])
    train_pos, test_pos = pos[~test_mask], pos[test_mask]
    negatives = _sample_non_edges(graph, len(train_pos) + 2 * len(test_pos), rng)
    train_neg, test_neg = negatives[:len(train_pos)], negatives[len(train_pos):]
    train_graph = Graph.from_edges(train_pos[:, 0], train_pos[:, 1],
                                   graph.weight[~test_mask], graph.node_count, graph.labels)
    return LinkSplit(train_graph, train_pos, test_pos, train_neg, test_neg)


def hadamard_features(model: EmbeddingModel, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return model.center[pairs[:, 0]] * model.center[pairs[:, 1]]


def link_prediction_auc(model: EmbeddingModel, split: LinkSplit,
                        l2_weight: float = 1.0, epochs: int = 200) -> float:
    x_train = np.vstack([hadamard_features(model, split.train_pos),
                         hadamard_features(model, split.train_neg)])
    y_train = np.r_[np.ones(len(split.train_pos)), np.zeros(len(split.train_neg))]
    clf = train_linear_classifier(x_train, y_train, l2_weight, epochs)
    x_test = np.vstack([hadamard_features(model, split.test_pos),
                        hadamard_features(model, split.test_neg)])
    y_test = np.r_[np.ones(len(split.test_pos)), np.zeros(len(split.test_neg))]
    return auc(clf.decision_function(x_test), y_test)


def link_prediction_eval(graph: Graph, corpus_config=None, model_config=None,
                         optimizer_config=None, train_fraction: float = 0.8,
                         runs: int = DEFAULT_RUNS, seed: int = 0, epochs: int = 100,
                         batch_size: int = 2048, l2_weight: float = 1.0,
                         label: str = "model") -> EvalReport:
    """Per run: split, train on the training graph, fit on Hadamard features, score AUC.

    Run ``r`` uses the same split and training seed for any model
    configuration, so two calls with the same ``seed`` are paired run by run.
    """
    from .training import train

    if runs < 1:
        raise DomainError("runs must be >= 1")
    rows = []
    for r, ss in enumerate(np.random.SeedSequence(seed).spawn(runs)):
        split_seed, train_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        split = split_links(graph, train_fraction, split_seed)
        model, _ = train(split.train_graph, corpus_config, model_config, optimizer_config,
                         epochs, batch_size, train_seed, track_saturation=False)
        rows.append({"run": r, "auc": link_prediction_auc(model, split, l2_weight)})
    values = np.array([row["auc"] for row in rows])
    return EvalReport("link_prediction", rows,
                      {"mean": float(values.mean()), "std": float(values.std())},
                      {"label": label, "runs": runs, "seed": seed,
                       "train_fraction": train_fraction, "epochs": epochs})


# -- PPMI curve ------------------------------------------------------------------

def ppmi_similarity_curve(model: EmbeddingModel, scores: PairScores,
                          top_fraction: float = 0.85) -> list:
    """Rows ``(rank, ppmi, similarity)`` for the top PPMI pairs, PPMI ascending."""
    if not 0.0 < top_fraction <= 1.0:
        raise DomainError("top_fraction must lie in (0, 1]")
    n = len(scores)
    if n == 0:
        return []
    keep = int(math.ceil(top_fraction * n - 1e-9))
    order = np.argsort(-scores.values, kind="stable")[:keep]
    order = order[np.argsort(scores.values[order], kind="stable")]
    sims = normalized_similarity(model, scores.rows[order], scores.cols[order])
    return [(rank + 1, float(scores.values[idx]), float(sim))
            for rank, (idx, sim) in enumerate(zip(order, np.atleast_1d(sims)))]


def write_curve_csv(rows, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["rank", "ppmi", "similarity"])
    for rank, p, s in rows:
        writer.writerow([rank, f"{p:.9g}", f"{s:.9g}"])
