"""Command-line entry point: ``mgsa <subcommand> ...``.

Every failure prints one line ``mgsa: error: <Kind>: <message>`` to stderr,
removes the files the command had written and exits with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, build_run_config, dumps, load_config_file
from .features import prepare
from .generate import generate
from .kg import Example, KnowledgeGraph, cluster_corpus, parse_corpus, write_corpus
from .linearize import build_vocab
from .metrics import bleu4, evaluate
from .model import MGSAModel
from .tensor import grad_check_detail
from .toy import direction_task, overfit_corpus
from .train import TrainLog, train, training_features

log = logging.getLogger("mgsa")

GRADCHECK_THRESHOLD = 1e-5
GRADCHECK_EPS = 1e-6
GRADCHECK_TRIPLES = (("New York", "capital of", "USA"), ("USA", "leader", "Joe Biden"))
GRADCHECK_TEXT = "New York is in the USA led by Joe Biden"


class CommandFailed(RuntimeError):
    """The command ran but its result is a failure (for example a red gradient check)."""


class Outputs:
    """Tracks files and directories a command creates so a failure can undo them."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.created: list[Path] = []

    def dir(self, rel: str | Path = "") -> Path:
        path = self.root / rel
        missing = []
        p = path
        while not p.exists():
            missing.append(p)
            p = p.parent
        path.mkdir(parents=True, exist_ok=True)
        self.created.extend(reversed(missing))
        return path

    def path(self, rel: str | Path) -> Path:
        path = self.root / rel
        self.dir(path.parent.relative_to(self.root))
        if not path.exists():
            self.created.append(path)
        return path

    def write_text(self, rel: str | Path, text: str) -> Path:
        path = self.path(rel)
        path.write_text(text, encoding="utf-8")
        return path

    def write_json(self, rel: str | Path, obj) -> Path:
        return self.write_text(rel, dumps(obj, indent=2) + "\n")

    def write_jsonl(self, rel: str | Path, rows) -> Path:
        return self.write_text(rel, "".join(dumps(r) + "\n" for r in rows))

    def rollback(self):
        for path in reversed(self.created):
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            elif path.exists():
                path.unlink()


def threads() -> int:
    raw = os.environ.get("MGSA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MGSA_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError(f"MGSA_THREADS={n} must be at least 1")
    return n


def run_config(args):
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {"seed": args.seed, "beam": args.beam}
    return build_run_config(args.profile, file_values, overrides)


def _examples(path) -> list[Example]:
    return list(parse_corpus(path).examples)


def generate_all(model: MGSAModel, graphs, beam: int) -> list[str]:
    def one(g):
        return generate(model, prepare(g, model.vocab, max_input_len=model.enc.max_input_len,
                                       labels=model.enc.labels), beam=beam)

    n = threads()
    if n == 1:
        return [one(g) for g in graphs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, graphs))


# subcommands -----------------------------------------------------------------

def cmd_preprocess(args, rc, out: Outputs):
    corpus = cluster_corpus(parse_corpus(args.corpus))
    write_corpus(corpus, out.path("corpus.jsonl"))
    out.write_json("vocab.json", build_vocab(corpus).to_list())
    print(out.root / "corpus.jsonl")


def cmd_linearize(args, rc, out: Outputs):
    examples = _examples(args.corpus)
    vocab = build_vocab(examples)
    rows = []
    for i, ex in enumerate(examples):
        f = prepare(ex.graph, vocab, max_input_len=rc.encoder.max_input_len, labels=rc.encoder.labels)
        rows.append({
            "id": i,
            "n_triples": f.entity_seq.n_triples,
            "entity_tokens": list(f.entity_seq.tokens),
            "entity_units": list(f.spans.units),
            "word_tokens": list(f.word_seq.tokens),
            "word_nodes": list(f.word_map.token_node),
            "units": f.graph.unit_labels(),
        })
    print(out.write_jsonl("linearized.jsonl", rows))


def cmd_matrices(args, rc, out: Outputs):
    from .structure import structure_to_json

    examples = _examples(args.corpus)
    vocab = build_vocab(examples)
    labels = rc.encoder.labels
    rows = []
    for i, ex in enumerate(examples):
        f = prepare(ex.graph, vocab, max_input_len=rc.encoder.max_input_len, labels=labels)
        rows.append({"id": i, **structure_to_json(f.graph, f.matrices, labels)})
    print(out.write_jsonl("matrices.jsonl", rows))


def cmd_train(args, rc, out: Outputs):
    train_path = args.train or rc.paths.get("train_path")
    if not train_path:
        raise ConfigError("no training corpus: pass --train or set train_path")
    valid_path = args.valid or rc.paths.get("valid_path")
    train_set = _examples(train_path)
    valid_set = _examples(valid_path) if valid_path else []
    vocab = build_vocab(train_set)
    model = MGSAModel(vocab, rc.encoder, rc.decoder, seed=rc.train.seed)
    out.write_json("config.json", rc.to_json())
    feats = training_features(train_set, vocab, rc.encoder, rc.decoder.max_gen_len)
    ckpt_dir = out.dir("checkpoints")
    scores = []

    def on_epoch(epoch, loss):
        out.created.append(ckpt_dir / f"epoch_{epoch:03d}.ckpt")
        if valid_set:
            hyps = generate_all(model, [ex.graph for ex in valid_set], beam=1)
            score = bleu4(hyps, [ex.references for ex in valid_set])
            scores.append({"epoch": epoch, "loss": loss, "valid_bleu4": score})
            log.info("epoch %d valid bleu4 %.2f", epoch, score)
        else:
            scores.append({"epoch": epoch, "loss": loss})
        return False

    history: TrainLog = train(model, feats, rc.train, checkpoint_dir=ckpt_dir, on_epoch=on_epoch)
    history.write_csv(out.path("loss.csv"))
    out.write_json("epochs.json", scores)
    if scores:
        # best validation BLEU-4, earliest epoch on ties; without validation data, the last epoch
        best = (max(scores, key=lambda s: (s["valid_bleu4"], -s["epoch"])) if valid_set
                else scores[-1])
        shutil.copyfile(ckpt_dir / f"epoch_{best['epoch']:03d}.ckpt", out.path("best.ckpt"))
        print(f"best epoch {best['epoch']}: {out.root / 'best.ckpt'}")
    else:
        save_checkpoint(model, out.path("best.ckpt"), {"epoch": 0})


def cmd_generate(args, rc, out: Outputs):
    model = load_checkpoint(args.checkpoint)
    examples = _examples(args.corpus)
    beam = args.beam if args.beam is not None else rc.train.beam
    texts = generate_all(model, [ex.graph for ex in examples], beam)
    print(out.write_jsonl("outputs.jsonl", [{"id": i, "text": t} for i, t in enumerate(texts)]))


def read_outputs(path) -> dict:
    texts = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                texts[row["id"]] = row["text"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ConfigError(f"{path}:{lineno}: expected an object with 'id' and 'text'") from None
    return texts


def cmd_evaluate(args, rc, out: Outputs):
    examples = _examples(args.corpus)
    texts = read_outputs(args.outputs)
    missing = [i for i in range(len(examples)) if i not in texts]
    if missing:
        raise ConfigError(f"{args.outputs}: no output for ids {missing[:5]}")
    report = evaluate([texts[i] for i in range(len(examples))],
                      [ex.references for ex in examples])
    out.write_json("scores.json", report.to_json())
    print(dumps({"bleu4": report.bleu4, "rougeL": report.rougeL}))


def gradcheck_example(args) -> Example:
    if args.corpus:
        return _examples(args.corpus)[0]
    return Example(KnowledgeGraph.from_triples(GRADCHECK_TRIPLES), (GRADCHECK_TEXT,))


def gradcheck_report(ex: Example, enc, dec, seed: int = 0, n_coords: int = 64) -> dict:
    """Check the full NLL of a freshly initialized model on one example."""
    from dataclasses import replace
    from .features import collate

    enc = replace(enc, dropout=0.0)
    vocab = build_vocab([ex])
    model = MGSAModel(vocab, enc, dec, seed=seed)
    batch = collate([prepare(ex.graph, vocab, ex.references[0], max_input_len=enc.max_input_len,
                             max_gen_len=dec.max_gen_len, labels=enc.labels)], enc.labels)
    report = grad_check_detail(lambda: model.loss(batch), model.params, eps=GRADCHECK_EPS,
                               n_coords=n_coords, seed=seed)
    worst = max(report, key=report.get)
    return {"max_rel_error": report[worst], "worst_param": worst,
            "threshold": GRADCHECK_THRESHOLD, "eps": GRADCHECK_EPS,
            "pass": report[worst] <= GRADCHECK_THRESHOLD, "per_param": report}


def cmd_gradcheck(args, rc, out: Outputs):
    result = gradcheck_report(gradcheck_example(args), rc.encoder, rc.decoder, rc.train.seed,
                              args.coords)
    if args.out:
        out.write_json("gradcheck.json", result)
    print(dumps({k: result[k] for k in ("max_rel_error", "worst_param", "threshold", "pass")}))
    if not result["pass"]:
        raise CommandFailed(f"max relative error {result['max_rel_error']:.3e} in "
                            f"{result['worst_param']} exceeds {GRADCHECK_THRESHOLD:g}")


def cmd_ablate(args, rc, out: Outputs):
    if "train_path" in rc.paths and "test_path" in rc.paths:
        train_set, test_set = _examples(rc.paths["train_path"]), _examples(rc.paths["test_path"])
    elif rc.extra["ablate_task"] == "direction":
        train_set, test_set = direction_task(seed=rc.train.seed)
    elif rc.extra["ablate_task"] == "overfit":
        train_set = test_set = overfit_corpus(seed=rc.train.seed)
    else:
        raise ConfigError(f"unknown ablate_task {rc.extra['ablate_task']!r}")
    seeds = [args.seed] if args.seed is not None else list(rc.extra["ablate_seeds"])
    arms = {}
    if args.grid in ("switches", "all"):
        arms.update(ablation.switch_arms(rc.encoder))
    if args.grid in ("lambda", "all"):
        arms.update(ablation.lambda_arms(rc.encoder))
    beam = args.beam if args.beam is not None else 1
    results = ablation.run_arms(arms, train_set, test_set, rc.decoder, rc.train, seeds, beam)
    table = ablation.summarize(results)
    out.write_json("config.json", rc.to_json())
    out.write_json("ablation.json", {"runs": [r.to_json() for r in results], "table": table})
    print(ablation.format_table(table))


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON file of config keys")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("--profile", choices=("paper", "desk"), default="paper",
                        help="base settings (desk: d=32, 2 heads, 2 layers, lr 1e-3)")
    common.add_argument("--beam", type=int, help="beam width (1 = greedy)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mgsa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preprocess", parents=[common], help="group triples by head entity")
    s.add_argument("corpus")
    s = sub.add_parser("linearize", parents=[common], help="dump both linearizations")
    s.add_argument("corpus")
    s = sub.add_parser("matrices", parents=[common], help="dump R^E, A and R^N per example")
    s.add_argument("corpus")
    s = sub.add_parser("train", parents=[common], help="train and keep per-epoch checkpoints")
    s.add_argument("--train", metavar="PATH")
    s.add_argument("--valid", metavar="PATH")
    s = sub.add_parser("generate", parents=[common], help="decode a corpus with a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("corpus")
    s = sub.add_parser("evaluate", parents=[common], help="BLEU-4 and ROUGE-L of outputs")
    s.add_argument("outputs")
    s.add_argument("corpus")
    s = sub.add_parser("gradcheck", parents=[common], help="analytic vs numeric gradients")
    s.add_argument("corpus", nargs="?", help="first example is used (default: built-in)")
    s.add_argument("--coords", type=int, default=64, help="sampled coordinates per parameter")
    s = sub.add_parser("ablate", parents=[common], help="structure switches and lambda sweep")
    s.add_argument("--grid", choices=("switches", "lambda", "all"), default="all")
    return p


COMMANDS = {
    "preprocess": cmd_preprocess, "linearize": cmd_linearize, "matrices": cmd_matrices,
    "train": cmd_train, "generate": cmd_generate, "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck, "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs(args.out or ".")
    try:
        rc = run_config(args)
        COMMANDS[args.command](args, rc, out)
    except KeyboardInterrupt:
        out.rollback()
        print("mgsa: error: Interrupted: stopped by user", file=sys.stderr)
        return 130
    except Exception as err:  # noqa: BLE001 - every failure maps to one error line
        out.rollback()
        message = " ".join(str(err).split()) or type(err).__name__
        print(f"mgsa: error: {type(err).__name__}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
