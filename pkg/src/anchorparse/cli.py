"""Command-line entry point: datagen, ingest, train, evaluate, probe, replay."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from . import __version__
from .errors import AnchorParseError, ConfigError
from .manifest import RunManifest, load_manifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
ABLATION_CHOICES = ("full", "no_sae", "no_saa", "no_hierarchy", "baseline")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _common(parser: argparse.ArgumentParser, *, config: bool = True) -> None:
    if config:
        parser.add_argument("--config", type=Path, default=None, help="TOML config file (version = 1)")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (default: $ANCHORPARSE_OUT/<command>)")
    parser.add_argument("--threads", type=int, default=None, help="Cap BLAS/OpenMP threads")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    parser.add_argument("--no-progress", action="store_true", help="Hide progress bars")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anchorparse", description="Semantic parsing with semantic anchor supervision")
    parser.add_argument("--version", action="version", version=f"anchorparse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("datagen", help="Generate a synthetic SQL/SPARQL corpus")
    _common(gen)
    gen.add_argument("--seed", type=int, default=None, help="Seed for deterministic corpora")
    gen.add_argument("--kind", choices=("sql", "sparql", "mixed"), default=None)

    ingest = sub.add_parser("ingest", help="Convert a WikiSQL split into the corpus format")
    _common(ingest, config=False)
    ingest.add_argument("--tables", type=Path, required=True, help="WikiSQL *.tables.jsonl")
    ingest.add_argument("--data", type=Path, required=True, help="WikiSQL *.jsonl questions")
    ingest.add_argument("--split", choices=("train", "dev", "test"), default="train")
    ingest.add_argument("--start-id", type=int, default=0)

    train = sub.add_parser("train", help="Train a model on a corpus")
    _common(train)
    train.add_argument("--corpus", type=Path, required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--ablation", choices=ABLATION_CHOICES, default=None)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--precision", choices=("float64", "float32"), default=None)

    evaluate = sub.add_parser("evaluate", help="Execution accuracy and hallucination counts on a split")
    _common(evaluate, config=False)
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    evaluate.add_argument("--corpus", type=Path, required=True)
    evaluate.add_argument("--split", choices=("train", "dev", "test"), default="test")
    evaluate.add_argument("--beam", type=int, default=0, help="Beam size; 0 or 1 decodes greedily")
    evaluate.add_argument("--emit-plot-data", action="store_true", help="Write (task, layer, weight) records")

    probe = sub.add_parser("probe", help="Layer weights and intermediate-layer decodings")
    _common(probe, config=False)
    probe.add_argument("--checkpoint", type=Path, required=True)
    probe.add_argument("--corpus", type=Path, default=None)
    probe.add_argument("--example-id", type=int, default=None)
    probe.add_argument("--split", choices=("train", "dev", "test"), default="test")
    probe.add_argument("--limit", type=int, default=0, help="Examples for layer anchor accuracy; 0 means all")
    probe.add_argument("--emit-plot-data", action="store_true", help="Write (task, layer, weight) records")

    replay = sub.add_parser("replay", help="Re-run a recorded invocation from its manifest")
    replay.add_argument("--manifest", type=Path, required=True)
    replay.add_argument("--out", type=Path, default=None, help="Write the replay somewhere other than the original")
    replay.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return parser


# === helpers ===

def _out_dir(args: argparse.Namespace) -> Path:
    from .config import default_out_dir

    return args.out if args.out is not None else default_out_dir() / args.command


def _record_config(args: argparse.Namespace, manifest: RunManifest, snapshot: Dict[str, Any]) -> None:
    expected = getattr(args, "expected_config", None)
    if expected is not None and json.loads(json.dumps(snapshot)) != expected:
        changed = sorted(k for k in set(snapshot) | set(expected) if snapshot.get(k) != expected.get(k))
        raise ConfigError(f"resolved configuration differs from the recorded run in {changed}")
    manifest.config = snapshot


def _set_precision(dtype: Any) -> None:
    from .tensor import set_default_dtype

    set_default_dtype(dtype)


# === subcommands ===

def _cmd_datagen(args: argparse.Namespace, manifest: RunManifest) -> Path:
    from .config import load_config, with_overrides
    from .datagen import generate_corpus, write_generated_corpus

    cfg = load_config(args.config)
    gen = with_overrides(cfg.gen, "gen", seed=args.seed, kind=args.kind)
    gen.validate()
    cfg.gen = gen
    _record_config(args, manifest, {"version": 1, "gen": cfg.to_dict()["gen"]})
    out = _out_dir(args)
    corpus = generate_corpus(gen)
    stats = write_generated_corpus(corpus, out, gen)
    manifest.seeds = {"gen": gen.seed}
    manifest.outputs = {"corpus": str(out)}
    if args.config is not None:
        manifest.inputs = {"config": str(args.config)}
    counts = stats["examples"]
    print(f"wrote {counts['train']}/{counts['dev']}/{counts['test']} examples over {stats['schemas']} schemas to {out}")
    return out


def _cmd_ingest(args: argparse.Namespace, manifest: RunManifest) -> Path:
    from .wikisql import ingest_wikisql

    _record_config(args, manifest, {"version": 1, "ingest": {"split": args.split, "start_id": args.start_id}})
    out = _out_dir(args)
    report = ingest_wikisql(args.tables, args.data, out, split=args.split, start_id=args.start_id)
    manifest.inputs = {"tables": str(args.tables), "data": str(args.data)}
    manifest.outputs = {"corpus": str(out)}
    print(f"kept {report.kept} of {report.total} {args.split} records ({report.skipped} skipped) into {out}")
    return out


def _cmd_train(args: argparse.Namespace, manifest: RunManifest) -> Path:
    from .config import load_config, with_overrides
    from .corpus import load_corpus
    from .training import fit

    cfg = load_config(args.config)
    cfg.train = with_overrides(
        cfg.train,
        "train",
        seed=args.seed,
        ablation=args.ablation,
        epochs=args.epochs,
        precision=args.precision,
        show_progress=False if args.no_progress else None,
    )
    cfg.train.validate()
    _record_config(args, manifest, {k: v for k, v in cfg.to_dict().items() if k != "gen"})
    corpus = load_corpus(args.corpus)
    out = _out_dir(args)
    result = fit(corpus, cfg.model, cfg.train, out)
    manifest.seeds = {"train": cfg.train.seed}
    manifest.inputs = {"corpus": str(args.corpus)}
    if args.config is not None:
        manifest.inputs["config"] = str(args.config)
    manifest.outputs = {"checkpoint": str(result.checkpoint), "metrics": str(result.metrics)}
    best = "n/a" if result.best_dev_exec_acc is None else f"{result.best_dev_exec_acc:.4f}"
    print(f"trained {cfg.train.ablation} for {cfg.train.epochs} epochs; best dev exec acc {best}; checkpoint {result.checkpoint}")
    return out


def _cmd_evaluate(args: argparse.Namespace, manifest: RunManifest) -> Path:
    from .analysis import evaluate, weight_distribution_report, write_plot_data, write_predictions
    from .corpus import load_corpus
    from .model import load_checkpoint

    if args.beam < 0:
        raise ConfigError("--beam must be >= 0")
    checkpoint = load_checkpoint(args.checkpoint)
    _set_precision(checkpoint.model.dtype)
    corpus = load_corpus(args.corpus)
    _record_config(args, manifest, {"version": 1, "evaluate": {"split": args.split, "beam": args.beam}})
    examples = corpus.split(args.split)
    if not examples:
        logger.warning("split %s of %s is empty", args.split, args.corpus)
    mode = "beam" if args.beam > 1 else "greedy"
    report, predictions = evaluate(
        checkpoint.model,
        checkpoint.vocab,
        examples,
        corpus.schemas,
        split=args.split,
        mode=mode,
        beam_size=max(args.beam, 1),
        show_progress=not args.no_progress,
    )
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "eval_report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_predictions(predictions, out / "predictions.jsonl")
    manifest.inputs = {"checkpoint": str(args.checkpoint), "corpus": str(args.corpus)}
    manifest.outputs = {"report": str(report_path), "predictions": str(out / "predictions.jsonl")}
    if args.emit_plot_data:
        plot_path = out / "layer_weights.jsonl"
        write_plot_data(weight_distribution_report(checkpoint.model), plot_path)
        manifest.outputs["plot_data"] = str(plot_path)
    print(report.summary_table())
    return out


def _cmd_probe(args: argparse.Namespace, manifest: RunManifest) -> Path:
    from .analysis import (
        decode_intermediate_layers,
        layer_anchor_accuracy,
        missing_task_heads,
        weight_distribution_report,
        write_plot_data,
    )
    from .corpus import load_corpus
    from .model import load_checkpoint

    checkpoint = load_checkpoint(args.checkpoint)
    corpus_path = args.corpus
    if corpus_path is None and checkpoint.extra.get("corpus"):
        corpus_path = Path(checkpoint.extra["corpus"])
    if args.example_id is not None and corpus_path is None:
        raise UsageError("--example-id needs --corpus; the checkpoint does not record one")
    _set_precision(checkpoint.model.dtype)
    _record_config(args, manifest, {"version": 1, "probe": {"split": args.split, "limit": args.limit}})
    model, vocab = checkpoint.model, checkpoint.vocab
    weights = weight_distribution_report(model)
    result: Dict[str, Any] = {
        "ablation": checkpoint.ablation,
        "layer_weights": weights.to_dict(),
        "tasks_not_applicable": missing_task_heads(model),
    }
    print(weights.render())

    manifest.inputs = {"checkpoint": str(args.checkpoint)}
    if corpus_path is not None:
        manifest.inputs["corpus"] = str(corpus_path)
        corpus = load_corpus(corpus_path)
        if args.example_id is not None:
            example = corpus.example_by_id(args.example_id)
            decodings = decode_intermediate_layers(model, vocab, example)
            result["example"] = {"id": example.id, "utterance": " ".join(example.utterance)}
            result["decodings"] = decodings.to_dict()["decodings"]
            print(f"\nexample {example.id}: {' '.join(example.utterance)}")
            print(decodings.render())
        examples = corpus.split(args.split)
        if args.limit:
            examples = examples[: args.limit]
        if examples and model.heads:
            accuracy = layer_anchor_accuracy(model, vocab, examples)
            result["layer_anchor_accuracy"] = accuracy
            print(f"\nanchor accuracy per layer on {len(examples)} {args.split} examples")
            for task, per_layer in accuracy.items():
                print(f"  {task}: " + "  ".join(f"{layer}:{acc:.3f}" for layer, acc in per_layer.items()))
        elif examples:
            print(f"\nanchor accuracy per layer: not applicable ({weights.reason})")

    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    probe_path = out / "probe.json"
    probe_path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest.outputs = {"probe": str(probe_path)}
    if args.emit_plot_data:
        plot_path = out / "layer_weights.jsonl"
        write_plot_data(weights, plot_path)
        manifest.outputs["plot_data"] = str(plot_path)
    return out


def _replay_argv(recorded: List[str], out: Path | None) -> List[str]:
    argv = list(recorded)
    if out is None:
        return argv
    if "--out" in argv:
        argv[argv.index("--out") + 1] = str(out)
    else:
        argv += ["--out", str(out)]
    return argv


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunManifest], Path]] = {
    "datagen": _cmd_datagen,
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "probe": _cmd_probe,
}


def _dispatch(args: argparse.Namespace, argv: List[str]) -> None:
    if getattr(args, "threads", None):
        for name in THREAD_VARS:
            os.environ[name] = str(args.threads)
    from .tensor import default_dtype

    manifest = RunManifest(subcommand=args.command, argv=argv, config={})
    with default_dtype():
        out = COMMANDS[args.command](args, manifest)
    manifest.finish()
    path = manifest.write(out)
    logger.info("wrote %s", path)


def _run(parser: argparse.ArgumentParser, argv: List[str]) -> None:
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr, force=True)
    if args.command == "replay":
        recorded = load_manifest(args.manifest)
        if recorded.subcommand not in COMMANDS:
            raise ConfigError(f"manifest records unknown subcommand {recorded.subcommand!r}")
        replay_argv = _replay_argv(recorded.argv, args.out)
        replayed = parser.parse_args(replay_argv)
        replayed.expected_config = recorded.config
        logger.info("replaying %s from %s", recorded.subcommand, args.manifest)
        _dispatch(replayed, replay_argv)
        return
    _dispatch(args, argv)


def _fail(category: str, message: str, code: int) -> int:
    print(f"error category={category} message={json.dumps(message)}", file=sys.stderr)
    return code


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _run(parser, argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except FileNotFoundError as exc:
        return _fail("missing-file", str(exc), EXIT_MISSING_FILE)
    except AnchorParseError as exc:
        return _fail(exc.category, str(exc), exc.exit_code)
    except KeyboardInterrupt:
        return _fail("internal", "interrupted", EXIT_INTERNAL)
    except Exception as exc:  # noqa: BLE001
        logger.debug("unhandled error", exc_info=True)
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
