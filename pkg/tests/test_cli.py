import json
import os
import subprocess
import sys

import pytest

from mgsa.cli import main
from mgsa.linearize import RESERVED

SMALL = {"d_model": 16, "n_heads": 2, "n_layers": 1, "dropout": 0.0, "epochs": 2,
         "warmup_steps": 0, "batch_size": 4, "max_gen_len": 16}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return path


def read_jsonl(path):
    return [json.loads(line) for line in open(path)]


class TestDumps:
    def test_matrices_golden(self, capsys, tmp_path, fixtures_dir):
        code, _, err = run(capsys, "matrices", fixtures_dir / "one_triple.jsonl", "--out", tmp_path)
        assert code == 0, err
        (row,) = read_jsonl(tmp_path / "matrices.jsonl")
        golden = json.loads((fixtures_dir / "one_triple_matrices.json").read_text())
        assert row.pop("id") == 0
        assert row == golden

    def test_linearize(self, capsys, tmp_path, fixtures_dir):
        code, _, _ = run(capsys, "linearize", fixtures_dir / "one_triple.jsonl", "--out", tmp_path)
        assert code == 0
        (row,) = read_jsonl(tmp_path / "linearized.jsonl")
        assert row["units"] == ["Alan Bean", "test pilot", "occupation"]
        assert row["entity_tokens"] == ["<H>", "Alan", "Bean", "<R>", "occupation", "<T>", "test", "pilot"]
        assert row["n_triples"] == 1

    def test_preprocess(self, capsys, tmp_path):
        src = tmp_path / "in.jsonl"
        src.write_text(json.dumps({"triples": [["a", "r", "b"], ["c", "s", "d"], ["a", "t", "e"]],
                                   "text": ["x"]}) + "\n")
        code, _, _ = run(capsys, "preprocess", src, "--out", tmp_path / "o")
        assert code == 0
        (row,) = read_jsonl(tmp_path / "o" / "corpus.jsonl")
        assert [t[0] for t in row["triples"]] == ["a", "a", "c"]
        vocab = json.loads((tmp_path / "o" / "vocab.json").read_text())
        assert vocab[:len(RESERVED)] == list(RESERVED)


class TestPipeline:
    def train_generate(self, capsys, root, config, fixtures_dir):
        corpus = fixtures_dir / "overfit16.jsonl"
        assert run(capsys, "train", "--train", corpus, "--valid", corpus, "--config", config,
                   "--out", root / "run")[0] == 0
        assert run(capsys, "generate", root / "run" / "best.ckpt", corpus, "--config", config,
                   "--out", root / "gen")[0] == 0
        return root

    def test_train_generate_evaluate(self, capsys, tmp_path, small_config, fixtures_dir):
        root = self.train_generate(capsys, tmp_path, small_config, fixtures_dir)
        run_dir = root / "run"
        assert sorted(p.name for p in (run_dir / "checkpoints").iterdir()) == \
            ["epoch_001.ckpt", "epoch_002.ckpt"]
        epochs = json.loads((run_dir / "epochs.json").read_text())
        assert [e["epoch"] for e in epochs] == [1, 2]
        assert json.loads((run_dir / "config.json").read_text())["decoder"]["d_model"] == 16
        assert (run_dir / "loss.csv").read_text().startswith("epoch,step,loss\n")
        rows = read_jsonl(root / "gen" / "outputs.jsonl")
        assert [r["id"] for r in rows] == list(range(16))
        code, out, _ = run(capsys, "evaluate", root / "gen" / "outputs.jsonl",
                           fixtures_dir / "overfit16.jsonl", "--out", root / "ev")
        assert code == 0
        scores = json.loads((root / "ev" / "scores.json").read_text())
        assert json.loads(out)["bleu4"] == scores["bleu4"]
        assert len(scores["per_example"]) == 16

    def test_reruns_are_byte_identical(self, capsys, tmp_path, small_config, fixtures_dir):
        a = self.train_generate(capsys, tmp_path / "a", small_config, fixtures_dir)
        b = self.train_generate(capsys, tmp_path / "b", small_config, fixtures_dir)
        for rel in ("run/loss.csv", "run/epochs.json", "run/best.ckpt",
                    "run/checkpoints/epoch_002.ckpt", "gen/outputs.jsonl"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_threads_do_not_change_outputs(self, capsys, tmp_path, small_config, fixtures_dir,
                                           monkeypatch):
        root = self.train_generate(capsys, tmp_path, small_config, fixtures_dir)
        monkeypatch.setenv("MGSA_THREADS", "3")
        assert run(capsys, "generate", root / "run" / "best.ckpt", fixtures_dir / "overfit16.jsonl",
                   "--out", root / "gen3")[0] == 0
        assert (root / "gen3" / "outputs.jsonl").read_bytes() == \
            (root / "gen" / "outputs.jsonl").read_bytes()

    def test_evaluate_references_score_100(self, capsys, tmp_path, fixtures_dir):
        corpus = fixtures_dir / "overfit16.jsonl"
        outputs = tmp_path / "outputs.jsonl"
        outputs.write_text("".join(json.dumps({"id": i, "text": row["text"][0]}) + "\n"
                                   for i, row in enumerate(read_jsonl(corpus))))
        code, out, _ = run(capsys, "evaluate", outputs, corpus, "--out", tmp_path)
        assert code == 0
        assert json.loads(out) == {"bleu4": 100.0, "rougeL": 100.0}


class TestErrors:
    def test_unknown_config_key(self, capsys, tmp_path, fixtures_dir):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"d_modle": 32}))
        out_dir = tmp_path / "never"
        code, _, err = run(capsys, "train", "--train", fixtures_dir / "one_triple.jsonl",
                           "--config", config, "--out", out_dir)
        assert code == 1
        assert err.splitlines() == ["mgsa: error: ConfigError: unknown config keys: d_modle"]
        assert not out_dir.exists()

    def test_failure_rolls_back_partial_output(self, capsys, tmp_path, fixtures_dir):
        # warmup longer than the run fails after config.json has been written
        config = tmp_path / "c.json"
        config.write_text(json.dumps({**SMALL, "warmup_steps": 1000}))
        code, _, err = run(capsys, "train", "--train", fixtures_dir / "one_triple.jsonl",
                           "--config", config, "--out", tmp_path / "run")
        assert code == 1 and err.startswith("mgsa: error: ValueError: ")
        assert not (tmp_path / "run").exists()

    def test_rollback_keeps_existing_files(self, capsys, tmp_path, fixtures_dir):
        keep = tmp_path / "keep.txt"
        keep.write_text("x")
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"triples": [["a", "r"]], "text": ["t"]}\n')
        code, _, err = run(capsys, "matrices", bad, "--out", tmp_path)
        assert code == 1 and len(err.splitlines()) == 1
        assert keep.read_text() == "x" and not (tmp_path / "matrices.jsonl").exists()

    def test_malformed_config(self, capsys, tmp_path, fixtures_dir):
        config = tmp_path / "c.json"
        config.write_text("{oops")
        code, _, err = run(capsys, "matrices", fixtures_dir / "one_triple.jsonl", "--config", config,
                           "--out", tmp_path / "o")
        assert code == 1 and "malformed JSON" in err

    def test_missing_outputs(self, capsys, tmp_path, fixtures_dir):
        outputs = tmp_path / "o.jsonl"
        outputs.write_text(json.dumps({"id": 0, "text": "a"}) + "\n")
        code, _, err = run(capsys, "evaluate", outputs, fixtures_dir / "overfit16.jsonl",
                           "--out", tmp_path)
        assert code == 1 and "no output for ids [1, 2, 3, 4, 5]" in err

    def test_bad_thread_count(self, capsys, tmp_path, fixtures_dir, monkeypatch):
        monkeypatch.setenv("MGSA_THREADS", "0")
        corpus = fixtures_dir / "one_triple.jsonl"
        config = tmp_path / "c.json"
        config.write_text(json.dumps({**SMALL, "epochs": 1}))
        assert run(capsys, "train", "--train", corpus, "--config", config, "--out", tmp_path / "r")[0] == 0
        code, _, err = run(capsys, "generate", tmp_path / "r" / "best.ckpt", corpus,
                           "--out", tmp_path / "g")
        assert code == 1 and "MGSA_THREADS" in err


class TestGradcheckCommand:
    def test_reports_json_and_matching_status(self, capsys, tmp_path, small_config):
        code, out, err = run(capsys, "gradcheck", "--config", small_config, "--coords", "2",
                             "--out", tmp_path)
        summary = json.loads(out)
        assert summary["threshold"] == 1e-5
        assert summary["pass"] == (summary["max_rel_error"] <= 1e-5)
        assert code == (0 if summary["pass"] else 1)
        # a red check is a failed command, so its report file is rolled back
        assert (tmp_path / "gradcheck.json").exists() == summary["pass"]


class TestAblateCommand:
    def test_lambda_grid(self, capsys, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({**SMALL, "epochs": 1, "ablate_task": "overfit"}))
        code, out, err = run(capsys, "ablate", "--grid", "lambda", "--config", config,
                             "--out", tmp_path / "ab")
        assert code == 0, err
        table = json.loads((tmp_path / "ab" / "ablation.json").read_text())["table"]
        assert [row["arm"] for row in table] == ["lambda=0", "lambda=0.25", "lambda=0.5",
                                                  "lambda=0.75", "lambda=1"]
        assert out.splitlines()[0].split() == ["arm", "bleu4", "rougeL", "exact"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mgsa", "--help"], capture_output=True, text=True,
                          env={**os.environ})
    assert proc.returncode == 0
    for name in ("preprocess", "linearize", "matrices", "train", "generate", "evaluate",
                 "gradcheck", "ablate"):
        assert name in proc.stdout
