"""Command-line entry point: artifacts, exit codes, configs and determinism."""

import json
import os

import pytest

from sgne.cli import build_parser, parse_generator, run

TINY = ["--generate", "powerlaw:n=60,alpha=2.5,min_degree=2,seed=1", "--dim", "8",
        "--epochs", "2", "--walk-length", "10", "--window", "3", "--batch-size", "256"]
PLANTED = ["--generate", "planted:n=80,alpha=2.5,communities=2,mixing=0.1,min_degree=3,seed=2",
           "--dim", "8", "--epochs", "2", "--walk-length", "10", "--window", "3"]


def files(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as fh:
            out[name] = fh.read()
    return out


@pytest.fixture
def edge_file(tmp_path):
    path = tmp_path / "g.tsv"
    path.write_text("a b\nb c\nc d\nd a\na c\nd e\ne b\n")
    return str(path)


class TestTrain:
    def test_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(["train", *TINY, "--out", str(out)]) == 0
        names = set(os.listdir(out))
        assert {"center.emb", "context.emb", "trace.csv", "config.json",
                "graph_summary.json"} <= names
        assert capsys.readouterr().out.startswith("train: 60 nodes")

    def test_sine_parameters_exported(self, tmp_path, edge_file):
        out = tmp_path / "out"
        assert run(["train", "--edges", edge_file, "--activation", "sine", "--optimizer", "app",
                    "--dim", "4", "--epochs", "2", "--seed", "7", "--out", str(out)]) == 0
        params = json.loads((out / "sine_params.json").read_text())
        assert len(params["w_t"]) == 4
        first = (out / "center.emb").read_text().splitlines()
        assert first[0] == "5 4"
        assert {line.split()[0] for line in first[1:]} == set("abcde")

    def test_config_file_with_override(self, tmp_path, edge_file):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"edges": edge_file, "dim": 6, "epochs": 1}))
        out = tmp_path / "out"
        assert run(["train", "--config", str(cfg), "--dim", "3", "--out", str(out)]) == 0
        saved = json.loads((out / "config.json").read_text())
        assert saved["dim"] == 3 and saved["epochs"] == 1


class TestExitCodes:
    def test_unknown_config_key(self, tmp_path, edge_file):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"edges": edge_file, "dimension": 6}))
        assert run(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_invalid_value(self, tmp_path, edge_file):
        assert run(["train", "--edges", edge_file, "--dim", "0",
                    "--out", str(tmp_path / "o")]) == 2

    def test_missing_graph(self, tmp_path):
        assert run(["train", "--out", str(tmp_path / "o")]) == 2

    def test_missing_file(self, tmp_path):
        assert run(["train", "--edges", str(tmp_path / "none.tsv"),
                    "--out", str(tmp_path / "o")]) == 3

    def test_malformed_edge_list(self, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("a b\nc\n")
        assert run(["train", "--edges", str(bad), "--out", str(tmp_path / "o")]) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_divergence(self, tmp_path, capsys):
        code = run(["train", *TINY, "--learning-rate", "1e6", "--epochs", "30",
                    "--out", str(tmp_path / "o")])
        assert code == 4
        assert "epoch" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as info:
            run(["fly"])
        assert info.value.code == 2

    def test_classification_needs_labels(self, tmp_path):
        assert run(["eval-classify", *TINY, "--out", str(tmp_path / "o")]) == 2


class TestSubcommands:
    def test_theory_worked_example(self, tmp_path, capsys):
        assert run(["theory", "--worked-example", "--trials", "3",
                    "--out", str(tmp_path / "o")]) == 0
        text = capsys.readouterr().out
        assert "0.816" in text and "0.9224" in text and "Monte Carlo" in text

    def test_theory_suite(self, tmp_path, capsys):
        assert run(["theory", "--trials", "3", "--out", str(tmp_path / "o")]) == 0
        assert "checks passed" in capsys.readouterr().out

    def test_classify_planted(self, tmp_path):
        out = tmp_path / "o"
        assert run(["eval-classify", *PLANTED, "--ratios", "0.3,0.5", "--runs", "2",
                    "--out", str(out)]) == 0
        assert (out / "classification.csv").read_text().startswith("metric,30%,50%,Mean")

    def test_classify_label_file(self, tmp_path, edge_file):
        labels = tmp_path / "l.txt"
        labels.write_text("a x\nb y\nc x\nd y\ne x\n")
        assert run(["eval-classify", "--edges", edge_file, "--labels", str(labels),
                    "--dim", "4", "--epochs", "1", "--ratios", "0.5", "--runs", "2",
                    "--out", str(tmp_path / "o")]) == 0

    def test_linkpred(self, tmp_path):
        out = tmp_path / "o"
        assert run(["eval-linkpred", *TINY, "--runs", "2", "--out", str(out)]) == 0
        assert json.loads((out / "linkpred.json").read_text())["kind"] == "link_prediction"

    def test_ppmi(self, tmp_path):
        out = tmp_path / "o"
        assert run(["analyze-ppmi", *TINY, "--top-fraction", "0.5", "--out", str(out)]) == 0
        assert (out / "ppmi_curve.csv").read_text().startswith("rank,ppmi,similarity")

    def test_compare(self, tmp_path):
        out = tmp_path / "o"
        assert run(["compare-as-nm", *PLANTED, "--ratios", "0.3", "--runs", "2",
                    "--out", str(out)]) == 0
        lines = (out / "compare_as_nm.csv").read_text().splitlines()
        assert lines[0] == "model,final_loss,30%,Mean"
        assert [line.split(",")[0] for line in lines[1:]] == ["AS", "NM"]

    def test_bench(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert run(["bench", *TINY, "--out", str(out)]) == 0
        data = json.loads((out / "bench.json").read_text())
        assert data["app"]["gradient_calls"] == 2 * data["app_approx"]["gradient_calls"]


DETERMINISM_CASES = {
    "train": ["train", *TINY, "--optimizer", "app"],
    "train-sine": ["train", *TINY, "--activation", "sine", "--optimizer", "adam"],
    "eval-classify": ["eval-classify", *PLANTED, "--ratios", "0.3", "--runs", "2"],
    "eval-linkpred": ["eval-linkpred", *TINY, "--runs", "2"],
    "theory": ["theory", "--trials", "2"],
    "theory-worked": ["theory", "--worked-example", "--trials", "2"],
    "analyze-ppmi": ["analyze-ppmi", *TINY],
    "compare-as-nm": ["compare-as-nm", *PLANTED, "--ratios", "0.3", "--runs", "2"],
    "bench": ["bench", *TINY],
}


class TestDeterminism:
    @pytest.mark.parametrize("name", sorted(DETERMINISM_CASES))
    def test_byte_identical(self, tmp_path, capsys, name):
        argv = DETERMINISM_CASES[name] + ["--deterministic", "--seed", "5"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(argv + ["--out", str(a)]) == 0
        out_a = capsys.readouterr().out.replace(str(a), "OUT")
        assert run(argv + ["--out", str(b)]) == 0
        out_b = capsys.readouterr().out.replace(str(b), "OUT")
        assert files(a) == files(b)
        assert out_a == out_b


class TestParser:
    def test_help_lists_defaults(self):
        text = build_parser()._subparsers._group_actions[0].choices["train"].format_help()
        for flag in ("--walk-length", "--rho", "--lambda", "--eta", "--learning-rate",
                     "--deterministic", "--threads", "--batch-size"):
            assert flag in text
        assert "default 40" in text and "default 2048" in text and "default 128" in text

    def test_generator_specs(self):
        kind, params = parse_generator("powerlaw:n=10,alpha=2.5,seed=3")
        assert kind == "powerlaw" and params["n"] == 10 and params["alpha"] == 2.5

    def test_bad_generator(self, tmp_path):
        assert run(["train", "--generate", "ring:n=5", "--out", str(tmp_path / "o")]) == 2
