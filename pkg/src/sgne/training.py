"""End-to-end training loop: walks, co-occurrence pairs, batches, optimizer steps."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .corpus import build_noise_distribution, cooccurrence, random_walks
from .errors import ConfigError, NumericError
from .graph import Graph
from .model import SIGMOID, EmbeddingModel, SampleBatch, init_model, similarity
from .optim import KINDS, PER_ROW, SGD, OptimizerState, flush, step

SATURATION_THRESHOLD = 0.9


@dataclass
class CorpusConfig:
    walk_length: int = 40
    walks_per_node: int = 1
    window: int = 5
    negatives: int = 5
    noise_alpha: float = 1.0

    def validate(self):
        if self.walk_length < 2:
            raise ConfigError("walk_length must be >= 2")
        if self.walks_per_node < 1:
            raise ConfigError("walks_per_node must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.negatives < 1:
            raise ConfigError("negatives must be >= 1")


@dataclass
class ModelConfig:
    dim: int = 128
    activation: str = SIGMOID
    delta: float = 0.01

    def validate(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.activation not in ("sigmoid", "sine"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not self.delta > 0:
            raise ConfigError("delta must be > 0")


@dataclass
class OptimizerConfig:
    kind: str = SGD
    learning_rate: float = 0.0025
    eta: float = 0.9
    rho: float = 0.01
    lam: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    normalization: str = PER_ROW
    base: str = SGD

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        try:
            self.make_state()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def make_state(self) -> OptimizerState:
        return OptimizerState(**asdict(self))


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    mean_grad_norm: float
    saturated_fraction: float
    wallclock_ms: float
    app_cosine_diag: float | None = None


@dataclass
class TrainingTrace:
    epochs: list = field(default_factory=list)
    initial_loss: float | None = None
    gradient_calls: int = 0

    @property
    def losses(self) -> np.ndarray:
        return np.array([e.loss for e in self.epochs])

    def smoothed_final_loss(self, window: int = 10) -> float:
        losses = self.losses
        return float(losses[-window:].mean())

    def write_csv(self, stream, include_wallclock: bool = True) -> None:
        """One row per epoch.  Timing is left blank when ``include_wallclock`` is off."""
        writer = csv.writer(stream, lineterminator="\n")
        names = [f.name for f in fields(EpochRecord)]
        writer.writerow(names)
        for rec in self.epochs:
            row = []
            for name in names:
                value = getattr(rec, name)
                if name == "wallclock_ms" and not include_wallclock:
                    value = None
                if value is None:
                    row.append("")
                elif isinstance(value, float):
                    row.append(f"{value:.9g}")
                else:
                    row.append(str(value))
            writer.writerow(row)


@dataclass
class PreparedCorpus:
    """Aggregated training pairs ``(i, j, w_ij)`` plus the negative-sampling noise."""

    centers: np.ndarray
    contexts: np.ndarray
    weights: np.ndarray
    noise: object
    table: object


def prepare_corpus(graph: Graph, config: CorpusConfig, seed, workers: int = 1) -> PreparedCorpus:
    walks = random_walks(graph, config.walk_length, config.walks_per_node, seed, workers)
    table = cooccurrence(walks, config.window)
    noise = build_noise_distribution(graph, config.noise_alpha)
    return PreparedCorpus(table.rows, table.cols, table.weights, noise, table)


def saturated_fraction(model: EmbeddingModel, graph: Graph,
                       threshold: float = SATURATION_THRESHOLD) -> float:
    """Share of linked ordered pairs (both orientations) whose similarity exceeds ``threshold``."""
    src = np.concatenate([graph.src, graph.dst])
    dst = np.concatenate([graph.dst, graph.src])
    return float(np.mean(similarity(model, src, dst) > threshold))


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _streams(seed):
    return np.random.SeedSequence(seed).spawn(3)


def walk_seed(seed) -> int:
    """Seed :func:`train` passes to the walk generator for a given master seed."""
    return _seed_int(_streams(seed)[0])


def iterate_batches(corpus: PreparedCorpus, k: int, batch_size: int, rng):
    """One epoch: shuffled entries with freshly drawn negatives."""
    order = rng.permutation(len(corpus.centers))
    negatives = corpus.noise.sample(rng, (len(order), k))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield SampleBatch(corpus.centers[idx], corpus.contexts[idx],
                          corpus.weights[idx], negatives[start:start + batch_size])


def train(graph: Graph, corpus_config: CorpusConfig | None = None,
          model_config: ModelConfig | None = None,
          optimizer_config: OptimizerConfig | None = None,
          epochs: int = 100, batch_size: int = 2048, seed: int = 0,
          workers: int = 1, track_saturation: bool = True, callback=None):
    """Train embeddings on ``graph`` and return ``(model, trace)``.

    Three independent RNG streams are spawned from ``seed``: walks, parameter
    initialisation and the epoch schedule (shuffling plus negatives).  Sine
    running statistics are folded in from every batch's first gradient pass.
    ``callback(epoch, model, record)``, if given, runs after every epoch.
    """
    corpus_config = corpus_config or CorpusConfig()
    model_config = model_config or ModelConfig()
    optimizer_config = optimizer_config or OptimizerConfig()
    for cfg in (corpus_config, model_config, optimizer_config):
        cfg.validate()
    if epochs < 1:
        raise ConfigError("epochs must be >= 1")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")

    walk_ss, init_ss, train_ss = _streams(seed)
    corpus = prepare_corpus(graph, corpus_config, _seed_int(walk_ss), workers)
    model = init_model(graph.node_count, model_config.dim, model_config.activation,
                       model_config.delta, _seed_int(init_ss))
    state = optimizer_config.make_state()
    rng = np.random.default_rng(train_ss)
    trace = TrainingTrace()

    for epoch in range(1, epochs + 1):
        start = time.perf_counter()
        loss = 0.0
        norms, cosines = [], []
        for b, batch in enumerate(iterate_batches(corpus, corpus_config.negatives,
                                                  batch_size, rng)):
            try:
                report = step(model, state, batch)
            except NumericError as exc:
                raise NumericError("non-finite value during training", exc.pair,
                                   epoch, b) from exc
            model.update_running_stats(report.batch_mean, report.batch_var)
            loss += report.loss
            norms.append(report.grad_norm)
            if report.app_cosine is not None:
                cosines.append(report.app_cosine)
        elapsed = (time.perf_counter() - start) * 1000.0
        if trace.initial_loss is None:
            trace.initial_loss = loss
        sat = saturated_fraction(model, graph) if track_saturation else math.nan
        trace.epochs.append(EpochRecord(
            epoch, loss, float(np.mean(norms)), sat, elapsed,
            float(np.mean(cosines)) if cosines else None))
        if callback is not None:
            callback(epoch, model, trace.epochs[-1])
    flush(model, state)
    trace.gradient_calls = state.gradient_calls
    return model, trace
