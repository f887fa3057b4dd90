"""Multi-task loss assembly, self-adaptive task weighting, and the training loop."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping

import numpy as np
from tqdm import tqdm

from . import tensor as T
from .analysis import evaluate
from .corpus import Batch, Corpus, Example, make_batch
from .errors import ConfigError, TrainingDivergedError
from .model import ABLATIONS, Ablation, ForwardTrace, ModelConfig, Seq2SeqTransformer, apply_ablation, save_checkpoint
from .optim import AdamW, LinearWarmupSchedule, clip_grad_norm
from .tensor import Tensor
from .vocab import Vocabulary

logger = logging.getLogger(__name__)

Precision = Literal["float64", "float32"]
LossName = Literal["main", "sae", "saa"]
# metric keys for the two task weights
WEIGHT_KEYS = {"sae": "w1", "saa": "w2"}


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    warmup_proportion: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    seed: int = 0
    ablation: Ablation = "full"
    adaptive_weighting: bool = True
    precision: Precision = "float64"
    eval_every: int = 1
    dev_limit: int = 0
    shuffle: bool = True
    show_progress: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("train.epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("train.lr must be positive")
        if not 0.0 <= self.warmup_proportion < 1.0:
            raise ConfigError("train.warmup_proportion must lie in [0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("train.beta1 and train.beta2 must lie in [0, 1)")
        if self.weight_decay < 0 or self.clip_norm < 0:
            raise ConfigError("train.weight_decay and train.clip_norm must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"train.ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        if self.precision not in ("float64", "float32"):
            raise ConfigError(f"train.precision must be float64 or float32, got {self.precision!r}")
        if self.eval_every < 1:
            raise ConfigError("train.eval_every must be >= 1")
        if self.dev_limit < 0:
            raise ConfigError("train.dev_limit must be >= 0")


# === losses ===

def task_loss(trace: ForwardTrace, batch: Batch, task: LossName) -> Tensor:
    """Cross-entropy of one head against its targets, skipping the positions its mask ignores."""

    if task == "main":
        return T.cross_entropy_from_logits(trace.logits["main"], batch.main_target, batch.main_ignore)
    if task == "sae":
        return T.cross_entropy_from_logits(trace.logits["sae"], batch.sae_target, batch.sae_ignore)
    return T.cross_entropy_from_logits(trace.logits["saa"], batch.saa_target, batch.saa_ignore)


@dataclass
class TaskWeightState:
    """First-batch loss of the current epoch and the live weight, per task."""

    first_loss: Dict[str, float] = field(default_factory=dict)
    weights: Dict[str, float] = field(default_factory=dict)

    def start_epoch(self) -> None:
        self.first_loss.clear()
        self.weights.clear()


def update_task_weight(state: TaskWeightState, task: str, loss: float, *, batch_index: int) -> float:
    """sqrt(current loss / first-batch loss of this epoch); a plain float, never differentiated."""

    if batch_index == 0:
        state.first_loss[task] = loss
        state.weights[task] = 1.0
        return 1.0
    first = state.first_loss.get(task)
    if first is None:
        raise ConfigError(f"no first-batch loss recorded for task {task!r} this epoch")
    if first == 0.0:
        logger.warning("task %s had zero loss at the first batch of the epoch; weight set to 0", task)
        weight = 0.0
    else:
        weight = math.sqrt(loss / first)
    state.weights[task] = weight
    return weight


def total_loss(main: Tensor, task_losses: Mapping[str, Tensor], weights: Mapping[str, float]) -> Tensor:
    total = main
    for task, loss in task_losses.items():
        total = total + T.scale(loss, weights[task])
    return total


# === the loop ===

@dataclass
class FitResult:
    checkpoint: Path
    metrics: Path
    vocab: Vocabulary
    model_config: ModelConfig
    best_dev_exec_acc: float | None
    epochs: List[Dict[str, Any]] = field(default_factory=list)


def _check_lengths(corpus: Corpus, cfg: ModelConfig) -> None:
    examples = corpus.all_examples()
    longest_source = max(len(e.utterance) for e in examples)
    longest_target = max(len(e.targets.main) for e in examples) + 1
    if longest_source > cfg.max_source_len:
        raise ConfigError(f"model.max_source_len {cfg.max_source_len} < longest utterance {longest_source}")
    if longest_target > cfg.max_target_len:
        raise ConfigError(f"model.max_target_len {cfg.max_target_len} < longest target + <EOS> {longest_target}")


def _dump_batch(out_dir: Path, batch: Batch, vocab: Vocabulary, epoch: int, step: int, losses: Dict[str, float]) -> Path:
    path = out_dir / f"diverged_epoch{epoch}_step{step}.json"
    payload = {"epoch": epoch, "step": step, "losses": losses, "batch": batch.to_dict(vocab)}
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")
    return path


def _write_metric(handle: Any, record: Dict[str, Any]) -> None:
    handle.write(json.dumps(record) + "\n")
    handle.flush()


def build_model(corpus: Corpus, model_cfg: ModelConfig, train_cfg: TrainConfig) -> tuple[Seq2SeqTransformer, Vocabulary]:
    vocab = Vocabulary.build(corpus.token_sequences())
    cfg = apply_ablation(replace(model_cfg, vocab_size=len(vocab)), train_cfg.ablation)
    cfg.validate()
    return Seq2SeqTransformer(cfg, seed=train_cfg.seed, dtype=np.dtype(train_cfg.precision)), vocab


def fit(corpus: Corpus, model_cfg: ModelConfig, train_cfg: TrainConfig, out_dir: Path) -> FitResult:
    """Train on the corpus's train split and keep the checkpoint with the best dev execution accuracy.

    Writes ``checkpoint.npz`` and ``metrics.jsonl`` (one record per step and
    one per epoch) into `out_dir`. New tensors use `train_cfg.precision` only
    for the duration of the call.
    """

    train_cfg.validate()
    if not corpus.split("train"):
        raise ConfigError("corpus has no training examples")
    with T.default_dtype(train_cfg.precision):
        return _fit(corpus, model_cfg, train_cfg, out_dir)


def _fit(corpus: Corpus, model_cfg: ModelConfig, train_cfg: TrainConfig, out_dir: Path) -> FitResult:
    train = corpus.split("train")
    model, vocab = build_model(corpus, model_cfg, train_cfg)
    _check_lengths(corpus, model.cfg)
    tasks = list(model.cfg.tasks)

    dev: List[Example] = corpus.split("dev")
    if train_cfg.dev_limit:
        dev = dev[: train_cfg.dev_limit]

    steps_per_epoch = math.ceil(len(train) / train_cfg.batch_size)
    schedule = LinearWarmupSchedule(train_cfg.lr, steps_per_epoch * train_cfg.epochs, train_cfg.warmup_proportion)
    optimizer = AdamW(
        model.parameters(),
        lr=train_cfg.lr,
        betas=(train_cfg.beta1, train_cfg.beta2),
        weight_decay=train_cfg.weight_decay,
    )
    order_rng = random.Random(train_cfg.seed)
    state = TaskWeightState()

    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "checkpoint.npz"
    metrics_path = out_dir / "metrics.jsonl"
    result = FitResult(checkpoint_path, metrics_path, vocab, model.cfg, None)
    logger.info(
        "training %s: %d parameters, vocab %d, %d steps",
        train_cfg.ablation,
        sum(p.data.size for p in model.parameters()),
        len(vocab),
        schedule.total_steps,
    )

    origin = {"corpus": str(corpus.root)} if corpus.root is not None else {}
    step = 0
    with metrics_path.open("w", encoding="utf-8") as metrics:
        for epoch in range(1, train_cfg.epochs + 1):
            model.train()
            state.start_epoch()
            order = list(range(len(train)))
            if train_cfg.shuffle:
                order_rng.shuffle(order)
            sums: Dict[str, float] = {"main": 0.0, **{t: 0.0 for t in tasks}}
            batches = range(steps_per_epoch)
            for j in tqdm(batches, desc=f"epoch {epoch}", disable=not train_cfg.show_progress, leave=False):
                step += 1
                chunk = [train[i] for i in order[j * train_cfg.batch_size : (j + 1) * train_cfg.batch_size]]
                batch = make_batch(chunk, vocab)
                trace = model.forward(batch.source, batch.decoder_input)
                main = task_loss(trace, batch, "main")
                losses = {t: task_loss(trace, batch, t) for t in tasks}
                values = {"main": main.item(), **{t: loss.item() for t, loss in losses.items()}}
                weights = {
                    t: update_task_weight(state, t, values[t], batch_index=j) if train_cfg.adaptive_weighting else 1.0
                    for t in tasks
                }
                loss = total_loss(main, losses, weights)
                if not all(math.isfinite(v) for v in values.values()) or not math.isfinite(loss.item()):
                    dump = _dump_batch(out_dir, batch, vocab, epoch, step, values)
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch} step {step}: {values}", dump_path=str(dump)
                    )

                optimizer.zero_grad()
                loss.backward()
                grad_norm = clip_grad_norm(optimizer.parameters, train_cfg.clip_norm)
                lr = schedule.lr_at(step)
                optimizer.lr = lr
                optimizer.step()

                record: Dict[str, Any] = {"kind": "step", "epoch": epoch, "step": step, "batch": j}
                record["loss_main"] = values["main"]
                for t in tasks:
                    record[f"loss_{t}"] = values[t]
                    record[WEIGHT_KEYS[t]] = weights[t]
                record.update(lr=lr, grad_norm=grad_norm, loss_total=loss.item())
                _write_metric(metrics, record)
                for name, value in values.items():
                    sums[name] += value

            summary: Dict[str, Any] = {"kind": "epoch", "epoch": epoch, "step": step}
            for name, total in sums.items():
                summary[f"loss_{name}"] = total / steps_per_epoch
            for t in tasks:
                summary[WEIGHT_KEYS[t]] = state.weights.get(t, 1.0)
            if model.cfg.hierarchical and tasks:
                summary["layer_weights"] = {
                    t: [float(p) for p in model.heads[t].layer_distribution()] for t in tasks
                }

            evaluate_now = bool(dev) and (epoch % train_cfg.eval_every == 0 or epoch == train_cfg.epochs)
            if evaluate_now:
                report, _ = evaluate(model, vocab, dev, corpus.schemas, split="dev")
                summary["dev_exec_acc"] = report.execution_accuracy
                if result.best_dev_exec_acc is None or report.execution_accuracy > result.best_dev_exec_acc:
                    result.best_dev_exec_acc = report.execution_accuracy
                    save_checkpoint(
                        model, vocab, checkpoint_path, ablation=train_cfg.ablation,
                        extra={"epoch": epoch, "dev_exec_acc": report.execution_accuracy, **origin},
                    )
            elif not dev and epoch == train_cfg.epochs:
                save_checkpoint(model, vocab, checkpoint_path, ablation=train_cfg.ablation, extra={"epoch": epoch, **origin})
            _write_metric(metrics, summary)
            result.epochs.append(summary)
            logger.info(
                "epoch %d: main %.4f%s%s",
                epoch,
                summary["loss_main"],
                "".join(f" {t} {summary[f'loss_{t}']:.4f}" for t in tasks),
                f" dev {summary['dev_exec_acc']:.4f}" if "dev_exec_acc" in summary else "",
            )
    return result

