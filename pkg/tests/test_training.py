import json
import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from anchorparse import tensor as T
from anchorparse import training
from anchorparse.corpus import load_corpus
from anchorparse.errors import ConfigError, TrainingDivergedError
from anchorparse.model import ModelConfig, load_checkpoint
from anchorparse.tensor import Tensor
from anchorparse.training import (
    TaskWeightState,
    TrainConfig,
    fit,
    task_loss,
    total_loss,
    update_task_weight,
)

MODEL = ModelConfig(d_model=8, n_heads=2, encoder_layers=1, decoder_layers=3, d_ff=16, dropout=0.0)
TRAIN = TrainConfig(epochs=2, batch_size=8, lr=3e-3, dev_limit=2, show_progress=False)


def _records(path, kind):
    lines = path.read_text(encoding="utf-8").splitlines()
    return [r for r in map(json.loads, lines) if r["kind"] == kind]


class TestTaskWeights:
    def test_square_root_of_ratio(self):
        state = TaskWeightState()
        assert update_task_weight(state, "sae", 4.0, batch_index=0) == 1.0
        assert update_task_weight(state, "sae", 1.0, batch_index=1) == pytest.approx(0.5)
        assert update_task_weight(state, "sae", 8.0, batch_index=2) == pytest.approx(math.sqrt(2))
        assert state.weights["sae"] == pytest.approx(math.sqrt(2))

    def test_zero_first_loss(self, caplog):
        state = TaskWeightState()
        update_task_weight(state, "saa", 0.0, batch_index=0)
        assert update_task_weight(state, "saa", 0.3, batch_index=1) == 0.0
        assert "zero loss" in caplog.text

    def test_epoch_reset(self):
        state = TaskWeightState()
        update_task_weight(state, "sae", 2.0, batch_index=0)
        state.start_epoch()
        with pytest.raises(ConfigError):
            update_task_weight(state, "sae", 1.0, batch_index=1)

    def test_total_loss(self):
        main = Tensor(1.0, requires_grad=True)
        sae, saa = Tensor(0.5, requires_grad=True), Tensor(1.0, requires_grad=True)
        total = total_loss(main, {"sae": sae, "saa": saa}, {"sae": 0.5, "saa": 0.5})
        assert total.item() == pytest.approx(1.75)
        total.backward()
        assert float(sae.grad) == pytest.approx(0.5)
        assert float(main.grad) == pytest.approx(1.0)


class TestTaskLoss:
    def _inputs(self, logits, targets, ignore):
        trace = SimpleNamespace(logits={"saa": Tensor(logits)})
        batch = SimpleNamespace(saa_target=np.asarray(targets), saa_ignore=np.asarray(ignore, dtype=bool))
        return trace, batch

    def test_uniform_logits(self):
        trace, batch = self._inputs(np.zeros((1, 3, 16)), [[7, 8, 9]], [[False, True, False]])
        assert task_loss(trace, batch, "saa").item() == pytest.approx(math.log(16))

    def test_ignored_positions_do_not_matter(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(2, 4, 10))
        targets = rng.integers(0, 10, (2, 4))
        ignore = np.array([[False, True, False, True], [True, False, False, True]])
        trace, batch = self._inputs(logits, targets, ignore)
        before = task_loss(trace, batch, "saa").item()
        changed_logits = np.where(ignore[..., None], rng.normal(size=logits.shape), logits)
        changed_targets = np.where(ignore, 0, targets)
        trace, batch = self._inputs(changed_logits, changed_targets, ignore)
        assert task_loss(trace, batch, "saa").item() == pytest.approx(before)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory, corpus_dir):
    out = tmp_path_factory.mktemp("full")
    return fit(load_corpus(corpus_dir), MODEL, TRAIN, out)


def test_fit_writes_checkpoint_and_metrics(full_run, corpus_dir):
    assert full_run.checkpoint.exists()
    steps = _records(full_run.metrics, "step")
    epochs = _records(full_run.metrics, "epoch")
    assert len(steps) == 2 * 3
    assert [e["epoch"] for e in epochs] == [1, 2]
    for key in ("loss_main", "loss_sae", "loss_saa", "w1", "w2", "lr", "grad_norm", "loss_total"):
        assert key in steps[0]
    assert set(epochs[-1]["layer_weights"]) == {"sae", "saa"}
    assert all(len(w) == 2 for w in epochs[-1]["layer_weights"].values())
    assert "dev_exec_acc" in epochs[-1]
    checkpoint = load_checkpoint(full_run.checkpoint)
    assert checkpoint.ablation == "full"
    assert checkpoint.extra["corpus"] == str(corpus_dir)


def test_logged_weights_follow_loss_ratio(full_run):
    steps = _records(full_run.metrics, "step")
    for epoch in (1, 2):
        rows = [s for s in steps if s["epoch"] == epoch]
        assert rows[0]["batch"] == 0
        assert rows[0]["w1"] == rows[0]["w2"] == 1.0
        for row in rows[1:]:
            assert row["w1"] == pytest.approx(math.sqrt(row["loss_sae"] / rows[0]["loss_sae"]))
            assert row["w2"] == pytest.approx(math.sqrt(row["loss_saa"] / rows[0]["loss_saa"]))
            expected = row["loss_main"] + row["w1"] * row["loss_sae"] + row["w2"] * row["loss_saa"]
            assert row["loss_total"] == pytest.approx(expected)


def test_same_seed_same_metrics(full_run, corpus_dir, tmp_path):
    again = fit(load_corpus(corpus_dir), MODEL, TRAIN, tmp_path)
    assert again.metrics.read_text() == full_run.metrics.read_text()


def test_baseline_logs_no_task_weights(corpus_dir, tmp_path):
    cfg = replace(TRAIN, epochs=1, ablation="baseline")
    result = fit(load_corpus(corpus_dir), MODEL, cfg, tmp_path)
    steps = _records(result.metrics, "step")
    assert all("w1" not in s and "w2" not in s and "loss_sae" not in s for s in steps)
    assert "layer_weights" not in _records(result.metrics, "epoch")[0]
    assert result.model_config.tasks == ()


def test_fixed_weighting(corpus_dir, tmp_path):
    cfg = replace(TRAIN, epochs=1, adaptive_weighting=False, ablation="no_hierarchy")
    steps = _records(fit(load_corpus(corpus_dir), MODEL, cfg, tmp_path).metrics, "step")
    assert all(s["w1"] == 1.0 and s["w2"] == 1.0 for s in steps)


def test_float32_run_leaves_default_precision_alone(corpus_dir, tmp_path):
    result = fit(load_corpus(corpus_dir), MODEL, replace(TRAIN, epochs=1, precision="float32"), tmp_path)
    assert T.get_default_dtype() is np.float64
    assert Tensor([1.0]).dtype == np.float64
    assert np.dtype(load_checkpoint(result.checkpoint).model.dtype) == np.float32


def test_nan_loss_raises_with_dump(corpus_dir, tmp_path, monkeypatch):
    real = training.task_loss

    def poisoned(trace, batch, task):
        loss = real(trace, batch, task)
        return T.scale(loss, float("nan")) if task == "sae" else loss

    monkeypatch.setattr(training, "task_loss", poisoned)
    with pytest.raises(TrainingDivergedError) as info:
        fit(load_corpus(corpus_dir), MODEL, replace(TRAIN, epochs=1, precision="float32"), tmp_path)
    assert T.get_default_dtype() is np.float64
    dump = json.loads(open(info.value.dump_path, encoding="utf-8").read())
    assert dump["epoch"] == 1 and dump["step"] == 1
    assert len(dump["batch"]["example_ids"]) == TRAIN.batch_size


def test_lengths_must_fit(corpus_dir, tmp_path):
    with pytest.raises(ConfigError):
        fit(load_corpus(corpus_dir), replace(MODEL, max_target_len=3), TRAIN, tmp_path)


@pytest.mark.parametrize(
    "changes", [{"epochs": 0}, {"ablation": "none"}, {"precision": "float16"}, {"warmup_proportion": 1.0}]
)
def test_invalid_train_config(changes):
    with pytest.raises(ConfigError):
        replace(TRAIN, **changes).validate()
