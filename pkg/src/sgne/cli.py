"""Command-line interface: ``sgne <subcommand> [options]``.

Exit codes: 0 success, 2 invalid configuration or input, 3 I/O failure,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import evaluation, theory
from .corpus import ppmi
from .errors import ConfigError, SgneError
from .graph import generate_planted_partition_graph, generate_power_law_graph, load_edge_list
from .training import (CorpusConfig, ModelConfig, OptimizerConfig, prepare_corpus, train,
                       walk_seed)

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


@dataclass
class ExperimentConfig:
    edges: str | None = None
    generate: str | None = None
    directed: bool = False
    labels: str | None = None
    walk_length: int = 40
    walks_per_node: int = 1
    window: int = 5
    negatives: int = 5
    noise_alpha: float = 1.0
    dim: int = 128
    activation: str = "sigmoid"
    delta: float = 0.01
    optimizer: str = "sgd"
    learning_rate: float = 0.0025
    eta: float = 0.9
    rho: float = 0.01
    lam: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    normalization: str = "per_row"
    base: str = "sgd"
    epochs: int = 100
    batch_size: int = 2048
    seed: int = 0
    deterministic: bool = False
    threads: int = 1
    out: str = "out"

    def corpus(self) -> CorpusConfig:
        return CorpusConfig(self.walk_length, self.walks_per_node, self.window,
                            self.negatives, self.noise_alpha)

    def model(self) -> ModelConfig:
        return ModelConfig(self.dim, self.activation, self.delta)

    def optimizer_config(self, **overrides) -> OptimizerConfig:
        cfg = OptimizerConfig(self.optimizer, self.learning_rate, self.eta, self.rho, self.lam,
                              self.beta1, self.beta2, self.eps_adam, self.normalization,
                              self.base)
        for key, value in overrides.items():
            setattr(cfg, key, value)
        return cfg

    def validate(self, needs_graph: bool = True) -> None:
        if needs_graph and (self.edges is None) == (self.generate is None):
            raise ConfigError("give exactly one of --edges or --generate")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for cfg in (self.corpus(), self.model(), self.optimizer_config()):
            cfg.validate()

    @property
    def workers(self) -> int:
        return 1 if self.deterministic else self.threads


CONFIG_FIELDS = {f.name for f in fields(ExperimentConfig)}


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = sorted(set(data) - CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_config(args, needs_graph: bool = True) -> ExperimentConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in CONFIG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate(needs_graph)
    return cfg


# -- graph sources -------------------------------------------------------------

def parse_generator(text: str) -> tuple:
    """``powerlaw:n=1000,alpha=2.5`` or ``planted:n=1000,alpha=2.5,communities=4``."""
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"generator parameter {item!r} is not key=value")
        params[key.strip()] = float(value) if "." in value else int(value)
    allowed = {"powerlaw": {"n", "alpha", "min_degree", "seed"},
               "planted": {"n", "alpha", "communities", "mixing", "min_degree", "seed"}}
    if kind not in allowed:
        raise ConfigError(f"unknown generator {kind!r}; use powerlaw or planted")
    extra = set(params) - allowed[kind]
    if extra:
        raise ConfigError(f"unknown {kind} generator parameters: {', '.join(sorted(extra))}")
    return kind, params


def load_graph(cfg: ExperimentConfig):
    """Return ``(graph, labels or None)``."""
    if cfg.edges is not None:
        graph = load_edge_list(cfg.edges, cfg.directed)
        labels = evaluation.load_labels(cfg.labels, graph) if cfg.labels else None
        return graph, labels
    kind, params = parse_generator(cfg.generate)
    n = int(params.pop("n", 1000))
    alpha = float(params.pop("alpha", 2.5))
    if kind == "powerlaw":
        graph = generate_power_law_graph(n, alpha, **params)
        labels = evaluation.load_labels(cfg.labels, graph) if cfg.labels else None
        return graph, labels
    graph, communities = generate_planted_partition_graph(n, alpha, **params)
    labels = evaluation.LabeledNodes.from_arrays(np.arange(graph.node_count), communities)
    return graph, labels


# -- output helpers -----------------------------------------------------------------

def _open_out(cfg: ExperimentConfig, name: str):
    os.makedirs(cfg.out, exist_ok=True)
    return open(os.path.join(cfg.out, name), "w", encoding="utf-8", newline="")


def _write_text(cfg, name, text):
    with _open_out(cfg, name) as fh:
        fh.write(text)


def _write_config(cfg):
    settings = {k: v for k, v in asdict(cfg).items() if k != "out"}
    _write_text(cfg, "config.json", json.dumps(settings, indent=2, sort_keys=True) + "\n")


def _train(cfg, graph, **overrides):
    return train(graph, cfg.corpus(), cfg.model(), cfg.optimizer_config(**overrides),
                 cfg.epochs, cfg.batch_size, cfg.seed, cfg.workers)


def _write_model(cfg, model, trace, graph, prefix=""):
    with _open_out(cfg, prefix + "center.emb") as fh:
        model.write_embeddings(fh, "center", graph.labels)
    with _open_out(cfg, prefix + "context.emb") as fh:
        model.write_embeddings(fh, "context", graph.labels)
    if model.activation == "sine":
        _write_text(cfg, prefix + "sine_params.json", model.sine_params_json() + "\n")
    with _open_out(cfg, prefix + "trace.csv") as fh:
        trace.write_csv(fh, include_wallclock=not cfg.deterministic)


# -- subcommands -------------------------------------------------------------------

def cmd_train(cfg, args):
    graph, _ = load_graph(cfg)
    model, trace = _train(cfg, graph)
    _write_config(cfg)
    _write_text(cfg, "graph_summary.json", graph.summary_json() + "\n")
    _write_model(cfg, model, trace, graph)
    last = trace.epochs[-1]
    return (f"train: {graph.node_count} nodes, {graph.edge_count} edges, "
            f"{cfg.activation}/{cfg.optimizer}, {cfg.epochs} epochs, "
            f"loss {trace.initial_loss:.6g} -> {last.loss:.6g}, "
            f"saturated {last.saturated_fraction:.3f}; wrote {cfg.out}")


def _ratios(args):
    if args.ratios:
        try:
            return tuple(float(r) for r in args.ratios.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --ratios value: {args.ratios}") from exc
    return evaluation.DEFAULT_RATIOS


def cmd_eval_classify(cfg, args):
    graph, labels = load_graph(cfg)
    if labels is None:
        raise ConfigError("node classification needs --labels or a planted generator")
    model, trace = _train(cfg, graph)
    report = evaluation.node_classification_sweep(model, labels, _ratios(args), args.runs,
                                                  cfg.seed)
    _write_config(cfg)
    _write_model(cfg, model, trace, graph)
    _write_text(cfg, "classification.csv", report.to_csv())
    _write_text(cfg, "classification.json", report.to_json() + "\n")
    mean = report.summary["mean"]
    return (f"eval-classify: {report.summary['ratios_evaluated']} ratios x {args.runs} runs, "
            f"mean accuracy {mean:.4f}; wrote {cfg.out}" if mean is not None else
            f"eval-classify: every ratio skipped; wrote {cfg.out}")


def cmd_eval_linkpred(cfg, args):
    graph, _ = load_graph(cfg)
    report = evaluation.link_prediction_eval(
        graph, cfg.corpus(), cfg.model(), cfg.optimizer_config(), args.train_fraction,
        args.runs, cfg.seed, cfg.epochs, cfg.batch_size,
        label=f"{cfg.activation}/{cfg.optimizer}")
    _write_config(cfg)
    _write_text(cfg, "linkpred.csv", report.to_csv())
    _write_text(cfg, "linkpred.json", report.to_json() + "\n")
    s = report.summary
    return (f"eval-linkpred: AUC {s['mean']:.4f} +/- {s['std']:.4f} over {args.runs} runs; "
            f"wrote {cfg.out}")


def cmd_theory(cfg, args):
    if args.worked_example:
        result = theory.worked_example(args.trials, cfg.seed)
        text = theory.format_worked_example(result)
        print(text)
        _write_text(cfg, "worked_example.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
        return (f"theory: published {result['published_ratio']:.1%}, closed form "
                f"{result['closed_form_ratio']:.1%}, Monte Carlo {result['monte_carlo_ratio']:.1%}")
    report = theory.validation_suite(cfg.seed, trials=args.trials)
    _write_text(cfg, "theory_report.json", report.to_json() + "\n")
    _write_text(cfg, "theory_table.txt", report.to_table() + "\n")
    judged = [r for r in report.records if r.passed is not None]
    passed = sum(bool(r.passed) for r in judged)
    return f"theory: {passed}/{len(judged)} checks passed; wrote {cfg.out}"


def cmd_analyze_ppmi(cfg, args):
    graph, _ = load_graph(cfg)
    model, trace = _train(cfg, graph)
    corpus = prepare_corpus(graph, cfg.corpus(), walk_seed(cfg.seed), cfg.workers)
    scores = ppmi(corpus.table)
    rows = evaluation.ppmi_similarity_curve(model, scores, args.top_fraction)
    _write_config(cfg)
    with _open_out(cfg, "ppmi.csv") as fh:
        scores.write_csv(fh, graph.labels)
    with _open_out(cfg, "ppmi_curve.csv") as fh:
        evaluation.write_curve_csv(rows, fh)
    mean = float(np.mean([r[2] for r in rows])) if rows else float("nan")
    return (f"analyze-ppmi: {len(rows)} of {len(scores)} pairs, mean normalized similarity "
            f"{mean:.4f}; wrote {cfg.out}")


def cmd_compare_as_nm(cfg, args):
    graph, labels = load_graph(cfg)
    runs = {
        "AS": cfg.optimizer_config(kind="app"),
        "NM": cfg.optimizer_config(kind="momentum", eta=args.eta_nm),
    }
    ratios = _ratios(args) if args.ratios else (0.1, 0.3, 0.5)
    table, out = [], {}
    for name, opt in runs.items():
        model, trace = train(graph, cfg.corpus(), cfg.model(), opt, cfg.epochs,
                             cfg.batch_size, cfg.seed, cfg.workers)
        _write_model(cfg, model, trace, graph, prefix=name + "_")
        row = {"model": name, "final_loss": trace.smoothed_final_loss()}
        if labels is not None:
            rep = evaluation.node_classification_sweep(model, labels, ratios, args.runs, cfg.seed)
            for r in rep.rows:
                row[f"{r['ratio']:.0%}"] = None if r["skipped"] else r["mean"]
            row["Mean"] = rep.summary["mean"]
        table.append(row)
        out[name] = row
    _write_config(cfg)
    columns = list(table[0])
    lines = [",".join(columns)]
    for row in table:
        lines.append(",".join(row["model"] if c == "model" else
                              ("" if row[c] is None else f"{row[c]:.6f}") for c in columns))
    _write_text(cfg, "compare_as_nm.csv", "\n".join(lines) + "\n")
    _write_text(cfg, "compare_as_nm.json", json.dumps(out, indent=2, sort_keys=True) + "\n")
    gap = abs(out["AS"]["final_loss"] - out["NM"]["final_loss"]) / out["NM"]["final_loss"]
    acc = ""
    if labels is not None:
        acc = f", mean accuracy AS {out['AS']['Mean']:.4f} vs NM {out['NM']['Mean']:.4f}"
    return f"compare-as-nm: final-loss gap {gap:.2%}{acc}; wrote {cfg.out}"


def cmd_bench(cfg, args):
    graph, _ = load_graph(cfg)
    result, timings = {}, {}
    for kind in ("app", "app_approx"):
        model, trace = train(graph, cfg.corpus(), cfg.model(), cfg.optimizer_config(kind=kind),
                             cfg.epochs, cfg.batch_size, cfg.seed, cfg.workers,
                             track_saturation=False)
        per_epoch = float(np.median([e.wallclock_ms for e in trace.epochs]))
        timings[kind] = per_epoch
        result[kind] = {"gradient_calls": trace.gradient_calls,
                        "final_loss": trace.epochs[-1].loss}
    ratio = timings["app_approx"] / timings["app"]
    timing_line = (f"bench timings: app {timings['app']:.1f} ms/epoch, app_approx "
                   f"{timings['app_approx']:.1f} ms/epoch, ratio {ratio:.3f}")
    if cfg.deterministic:
        print(timing_line, file=sys.stderr)
    else:
        for kind in timings:
            result[kind]["median_epoch_ms"] = timings[kind]
        result["ratio"] = ratio
    _write_config(cfg)
    _write_text(cfg, "bench.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    calls = f"gradient calls app {result['app']['gradient_calls']} vs app_approx " \
            f"{result['app_approx']['gradient_calls']}"
    if cfg.deterministic:
        return f"bench: {calls}; timings on stderr; wrote {cfg.out}"
    return f"bench: {calls}; time ratio {ratio:.3f}; wrote {cfg.out}"


COMMANDS = {
    "train": cmd_train,
    "eval-classify": cmd_eval_classify,
    "eval-linkpred": cmd_eval_linkpred,
    "theory": cmd_theory,
    "analyze-ppmi": cmd_analyze_ppmi,
    "compare-as-nm": cmd_compare_as_nm,
    "bench": cmd_bench,
}


# -- parser --------------------------------------------------------------------------

def _add_common(p):
    d = ExperimentConfig()
    g = p.add_argument_group("input")
    g.add_argument("--config", help="JSON file with experiment settings; flags override it")
    g.add_argument("--edges", help="edge list: 'src dst [weight]' per line")
    g.add_argument("--generate", help="synthetic graph, e.g. powerlaw:n=1000,alpha=2.5,min_degree=3 "
                   "or planted:n=1000,alpha=2.5,communities=4,mixing=0.1")
    g.add_argument("--directed", action="store_const", const=True,
                   help="treat input lines as arcs and symmetrise them")
    g.add_argument("--labels", help="node labels: 'node_label class_label' per line")
    g = p.add_argument_group("corpus")
    g.add_argument("--walk-length", dest="walk_length", type=int,
                   help=f"random-walk length (default {d.walk_length}, reference setting)")
    g.add_argument("--walks-per-node", dest="walks_per_node", type=int,
                   help=f"walks started per node (default {d.walks_per_node}, reference setting)")
    g.add_argument("--window", type=int,
                   help=f"co-occurrence window (default {d.window}, reference setting)")
    g.add_argument("--negatives", type=int,
                   help=f"negative samples k per pair (default {d.negatives}, reference setting)")
    g.add_argument("--noise-alpha", dest="noise_alpha", type=float,
                   help=f"noise distribution exponent on degree (default {d.noise_alpha}, "
                   "reference setting)")
    g = p.add_argument_group("model")
    g.add_argument("--dim", type=int,
                   help=f"embedding dimension r (default {d.dim}, reference setting)")
    g.add_argument("--activation", choices=["sigmoid", "sine"],
                   help=f"pair score function (default {d.activation})")
    g.add_argument("--delta", type=float,
                   help=f"Sine score offset delta (default {d.delta})")
    g = p.add_argument_group("optimizer")
    g.add_argument("--optimizer", choices=["sgd", "momentum", "adam", "app", "app_approx"],
                   help=f"update rule (default {d.optimizer})")
    g.add_argument("--learning-rate", dest="learning_rate", type=float,
                   help=f"step size epsilon of the update rule (default {d.learning_rate})")
    g.add_argument("--eta", type=float,
                   help=f"momentum coefficient eta (default {d.eta})")
    g.add_argument("--rho", type=float,
                   help=f"adversarial perturbation radius rho, the adversarial noise level "
                   f"(default {d.rho})")
    g.add_argument("--lambda", dest="lam", type=float,
                   help=f"adversarial regularisation weight lambda (default {d.lam}, "
                   "reference setting)")
    g.add_argument("--beta1", type=float, help=f"Adam beta1 (default {d.beta1})")
    g.add_argument("--beta2", type=float, help=f"Adam beta2 (default {d.beta2})")
    g.add_argument("--eps-adam", dest="eps_adam", type=float,
                   help=f"Adam epsilon (default {d.eps_adam})")
    g.add_argument("--normalization", choices=["per_row", "global"],
                   help=f"perturbation norm scope (default {d.normalization})")
    g.add_argument("--base", choices=["sgd", "adam"],
                   help=f"rule applying the APP direction (default {d.base})")
    g = p.add_argument_group("schedule")
    g.add_argument("--epochs", type=int,
                   help=f"training epochs (default {d.epochs}, reference setting)")
    g.add_argument("--batch-size", dest="batch_size", type=int,
                   help=f"pairs per batch (default {d.batch_size}, reference setting)")
    g.add_argument("--seed", type=int, help=f"random seed (default {d.seed})")
    g.add_argument("--deterministic", action="store_const", const=True,
                   help="sequential reproducible mode; outputs are byte-identical per seed")
    g.add_argument("--threads", type=int,
                   help=f"walk-generation workers (default {d.threads}; forced to 1 by "
                   "--deterministic)")
    g.add_argument("--out", help=f"output directory (default {d.out})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgne",
        description="Skip-gram network embeddings with Sigmoid or Sine scores, adversarial "
                    "parameter perturbation, saturation analysis and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train embeddings and write them with a trace")
    _add_common(p)

    p = sub.add_parser("eval-classify", help="node classification sweep over training ratios")
    _add_common(p)
    p.add_argument("--ratios", help="comma-separated training ratios (default 1%%..9%%, 10%%..90%%)")
    p.add_argument("--runs", type=int, default=evaluation.DEFAULT_RUNS,
                   help="resamples per ratio (default 10, reference setting)")

    p = sub.add_parser("eval-linkpred", help="link prediction AUC with Hadamard edge features")
    _add_common(p)
    p.add_argument("--train-fraction", type=float, default=0.8,
                   help="share of edges kept for training (default 0.8, reference setting)")
    p.add_argument("--runs", type=int, default=evaluation.DEFAULT_RUNS,
                   help="independent splits (default 10, reference setting)")

    p = sub.add_parser("theory", help="closed forms versus oracles and Monte Carlo")
    _add_common(p)
    p.add_argument("--worked-example", action="store_true",
                   help="print the 1000-node / 3000-edge saturated-pair example: published "
                        "figure, closed form and Monte Carlo")
    p.add_argument("--trials", type=int, default=20,
                   help="configuration-model graphs per Monte Carlo estimate (default 20)")

    p = sub.add_parser("analyze-ppmi", help="normalized similarity of the top PPMI pairs")
    _add_common(p)
    p.add_argument("--top-fraction", type=float, default=0.85,
                   help="share of PPMI pairs kept, highest first (default 0.85, reference setting)")

    p = sub.add_parser("compare-as-nm",
                       help="APP with plain steps (AS) versus momentum without APP (NM)")
    _add_common(p)
    p.add_argument("--eta-nm", type=float, default=0.5,
                   help="momentum coefficient of the NM run (default 0.5)")
    p.add_argument("--ratios", help="comma-separated classification ratios (default 0.1,0.3,0.5)")
    p.add_argument("--runs", type=int, default=evaluation.DEFAULT_RUNS,
                   help="classification resamples per ratio (default 10)")

    p = sub.add_parser("bench", help="per-epoch wall clock of APP versus lagged APP")
    _add_common(p)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args, needs_graph=args.command != "theory")
        summary = COMMANDS[args.command](cfg, args)
    except SgneError as exc:
        print(f"sgne: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"sgne: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"sgne: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"sgne: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(summary)
    return 0


def main(argv=None):
    sys.exit(run(argv))
