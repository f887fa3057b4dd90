"""Encoder-decoder transformer with hierarchical heads over the intermediate decoder layers."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Sequence, Tuple

import numpy as np

from . import tensor as T
from .errors import CheckpointError, ConfigError, ContractError
from .nn import Dropout, Embedding, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, Parameter, sinusoidal_positions
from .tensor import Tensor, get_default_dtype
from .vocab import PAD_ID, Vocabulary

logger = logging.getLogger(__name__)

Task = Literal["sae", "saa"]
TASKS: Tuple[Task, ...] = ("sae", "saa")
Ablation = Literal["full", "no_sae", "no_saa", "no_hierarchy", "baseline"]
ABLATIONS: Tuple[Ablation, ...] = ("full", "no_sae", "no_saa", "no_hierarchy", "baseline")
CHECKPOINT_FORMAT_VERSION = 1
_META_KEY = "__meta__"


@dataclass
class ModelConfig:
    vocab_size: int = 0
    d_model: int = 64
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 4
    d_ff: int = 128
    dropout: float = 0.1
    max_source_len: int = 64
    max_target_len: int = 64
    activation: Literal["gelu", "relu"] = "gelu"
    tasks: Tuple[Task, ...] = TASKS
    hierarchical: bool = True
    residual: bool = True
    tie_embeddings: bool = True
    init_std: float = 0.02

    def validate(self) -> None:
        if self.vocab_size <= 0:
            raise ConfigError("model.vocab_size must be positive")
        for name in ("d_model", "n_heads", "encoder_layers", "d_ff", "max_source_len", "max_target_len"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"model.{name} must be positive")
        if self.d_model % self.n_heads:
            raise ConfigError(f"model.d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if self.d_model % 2:
            raise ConfigError("model.d_model must be even for sinusoidal positions")
        if self.decoder_layers < 3:
            raise ConfigError("model.decoder_layers must be >= 3 so that intermediate layers exist")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("model.dropout must lie in [0, 1)")
        if self.activation not in ("gelu", "relu"):
            raise ConfigError(f"model.activation must be gelu or relu, got {self.activation!r}")
        unknown = set(self.tasks) - set(TASKS)
        if unknown or len(set(self.tasks)) != len(self.tasks):
            raise ConfigError(f"model.tasks must be distinct entries of {TASKS}, got {self.tasks}")
        if self.init_std <= 0:
            raise ConfigError("model.init_std must be positive")

    @property
    def intermediate_layers(self) -> int:
        return self.decoder_layers - 1

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["tasks"] = list(self.tasks)
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys {sorted(unknown)}")
        values = dict(data)
        if "tasks" in values:
            values["tasks"] = tuple(values["tasks"])
        return cls(**values)


def apply_ablation(cfg: ModelConfig, ablation: Ablation) -> ModelConfig:
    """The model configuration an ablation setting trains."""

    if ablation == "full":
        return replace(cfg, tasks=TASKS, hierarchical=True)
    if ablation == "no_sae":
        return replace(cfg, tasks=("saa",), hierarchical=True)
    if ablation == "no_saa":
        return replace(cfg, tasks=("sae",), hierarchical=True)
    if ablation == "no_hierarchy":
        return replace(cfg, tasks=TASKS, hierarchical=False)
    if ablation == "baseline":
        return replace(cfg, tasks=(), hierarchical=False)
    raise ConfigError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")


# === layers ===

class EncoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dropout_rng: np.random.Generator, dtype: Any):
        super().__init__()
        self.self_norm = LayerNorm(cfg.d_model, dtype=dtype)
        self.self_attn = MultiHeadAttention(
            cfg.d_model, cfg.n_heads, rng, dropout_rng, dropout=cfg.dropout, init_std=cfg.init_std, dtype=dtype
        )
        self.ff_norm = LayerNorm(cfg.d_model, dtype=dtype)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng, activation=cfg.activation, init_std=cfg.init_std, dtype=dtype)
        self.dropout = Dropout(cfg.dropout, dropout_rng)

    def forward(self, x: Tensor, source_blocked: np.ndarray) -> Tensor:
        h = self.self_norm(x)
        x = x + self.dropout(self.self_attn(h, h, source_blocked))
        return x + self.dropout(self.ff(self.ff_norm(x)))


class DecoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dropout_rng: np.random.Generator, dtype: Any):
        super().__init__()
        self.self_norm = LayerNorm(cfg.d_model, dtype=dtype)
        self.self_attn = MultiHeadAttention(
            cfg.d_model, cfg.n_heads, rng, dropout_rng, dropout=cfg.dropout, init_std=cfg.init_std, dtype=dtype
        )
        self.cross_norm = LayerNorm(cfg.d_model, dtype=dtype)
        self.cross_attn = MultiHeadAttention(
            cfg.d_model, cfg.n_heads, rng, dropout_rng, dropout=cfg.dropout, init_std=cfg.init_std, dtype=dtype
        )
        self.ff_norm = LayerNorm(cfg.d_model, dtype=dtype)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng, activation=cfg.activation, init_std=cfg.init_std, dtype=dtype)
        self.dropout = Dropout(cfg.dropout, dropout_rng)

    def forward(self, x: Tensor, memory: Tensor, causal: np.ndarray, source_blocked: np.ndarray) -> Tensor:
        h = self.self_norm(x)
        x = x + self.dropout(self.self_attn(h, h, causal))
        x = x + self.dropout(self.cross_attn(self.cross_norm(x), memory, source_blocked))
        return x + self.dropout(self.ff(self.ff_norm(x)))


class HierarchicalHead(Module):
    """Layer-weighting scalars over layers 1..N-1 plus an independent vocabulary head.

    Without hierarchy the head has no weighting scalars and reads the final
    decoder layer.
    """

    def __init__(self, task: Task, cfg: ModelConfig, rng: np.random.Generator, dtype: Any):
        super().__init__()
        self.task = task
        self.layer_weights = Parameter(np.zeros(cfg.intermediate_layers), dtype) if cfg.hierarchical else None
        self.norm = LayerNorm(cfg.d_model, dtype=dtype)
        self.proj = Linear(cfg.d_model, cfg.vocab_size, rng, init_std=cfg.init_std, dtype=dtype)

    @property
    def hierarchical(self) -> bool:
        return self.layer_weights is not None

    def layer_distribution(self) -> np.ndarray:
        if self.layer_weights is None:
            raise ContractError(f"{self.task} head has no layer weights")
        w = self.layer_weights.data.astype(np.float64)
        e = np.exp(w - w.max())
        return e / e.sum()


def aggregate_intermediate(
    intermediate: Sequence[Tensor], head: HierarchicalHead, *, residual: bool = True
) -> Tensor:
    """softmax(w)-weighted sum of the intermediate states plus their uniform mean.

    With the residual term the total coefficient mass is 2.
    """

    if head.layer_weights is None:
        raise ContractError(f"{head.task} head is not hierarchical")
    count = len(intermediate)
    if count != head.layer_weights.shape[0]:
        raise ContractError(f"expected {head.layer_weights.shape[0]} intermediate states, got {count}")
    stacked = T.stack(list(intermediate), axis=0)
    shape = (count,) + (1,) * (stacked.ndim - 1)
    probs = T.reshape(T.softmax(head.layer_weights, axis=-1), shape)
    out = T.tensor_sum(stacked * probs, axis=0)
    if residual:
        out = out + T.scale(T.tensor_sum(stacked, axis=0), 1.0 / count)
    return out


def head_logits(hidden: Tensor, head: HierarchicalHead) -> Tensor:
    return head.proj(head.norm(hidden))


@dataclass
class ForwardTrace:
    """Every hidden state of one teacher-forced pass plus each head's logits."""

    encoder_states: Tensor
    decoder_states: List[Tensor]
    aggregated: Dict[str, Tensor] = field(default_factory=dict)
    logits: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def intermediate(self) -> List[Tensor]:
        return self.decoder_states[:-1]


# === model ===

class Seq2SeqTransformer(Module):
    def __init__(self, cfg: ModelConfig, *, seed: int = 0, dtype: Any = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype or get_default_dtype()).type
        init_seq, dropout_seq = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(init_seq)
        dropout_rng = np.random.default_rng(dropout_seq)

        self.embedding = Embedding(cfg.vocab_size, cfg.d_model, rng, init_std=cfg.init_std, dtype=self.dtype)
        self.positions = sinusoidal_positions(max(cfg.max_source_len, cfg.max_target_len), cfg.d_model).astype(self.dtype)
        self.embed_dropout = Dropout(cfg.dropout, dropout_rng)
        self.encoder = [EncoderLayer(cfg, rng, dropout_rng, self.dtype) for _ in range(cfg.encoder_layers)]
        self.encoder_norm = LayerNorm(cfg.d_model, dtype=self.dtype)
        self.decoder = [DecoderLayer(cfg, rng, dropout_rng, self.dtype) for _ in range(cfg.decoder_layers)]
        self.final_norm = LayerNorm(cfg.d_model, dtype=self.dtype)
        self.main_proj = (
            None
            if cfg.tie_embeddings
            else Linear(cfg.d_model, cfg.vocab_size, rng, bias=False, init_std=cfg.init_std, dtype=self.dtype)
        )
        self.heads: Dict[str, HierarchicalHead] = {
            task: HierarchicalHead(task, cfg, rng, self.dtype) for task in cfg.tasks
        }

    # --- contracts ---

    def _check_ids(self, ids: np.ndarray, limit: int, what: str) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.ndim != 2:
            raise ContractError(f"{what} ids must be [batch, length], got shape {ids.shape}")
        if ids.shape[1] > limit:
            raise ContractError(f"{what} length {ids.shape[1]} exceeds maximum {limit}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise ContractError(f"{what} ids must lie in [0, {self.cfg.vocab_size})")
        return ids

    def _embed(self, ids: np.ndarray) -> Tensor:
        x = T.scale(self.embedding(ids), math.sqrt(self.cfg.d_model))
        return self.embed_dropout(x + Tensor(self.positions[: ids.shape[1]], dtype=self.dtype))

    # --- passes ---

    def encode(self, source: np.ndarray) -> Tuple[Tensor, np.ndarray]:
        """Final-normed encoder states and the [B, 1, 1, M] source padding mask."""

        source = self._check_ids(source, self.cfg.max_source_len, "source")
        blocked = (source == PAD_ID)[:, None, None, :]
        x = self._embed(source)
        for layer in self.encoder:
            x = layer(x, blocked)
        return self.encoder_norm(x), blocked

    def decode_states(self, decoder_input: np.ndarray, memory: Tensor, source_blocked: np.ndarray) -> List[Tensor]:
        decoder_input = self._check_ids(decoder_input, self.cfg.max_target_len, "decoder")
        length = decoder_input.shape[1]
        causal = np.triu(np.ones((length, length), dtype=bool), k=1)[None, None]
        x = self._embed(decoder_input)
        states = []
        for layer in self.decoder:
            x = layer(x, memory, causal, source_blocked)
            states.append(x)
        return states

    def main_logits(self, final_state: Tensor) -> Tensor:
        h = self.final_norm(final_state)
        if self.main_proj is not None:
            return self.main_proj(h)
        return T.matmul(h, T.transpose(self.embedding.weight, (1, 0)))

    def task_hidden(self, task: str, states: Sequence[Tensor]) -> Tensor:
        head = self.heads[task]
        if head.hierarchical:
            return aggregate_intermediate(states[:-1], head, residual=self.cfg.residual)
        return states[-1]

    def forward(self, source: np.ndarray, decoder_input: np.ndarray) -> ForwardTrace:
        memory, blocked = self.encode(source)
        states = self.decode_states(decoder_input, memory, blocked)
        trace = ForwardTrace(memory, states)
        trace.logits["main"] = self.main_logits(states[-1])
        for task, head in self.heads.items():
            hidden = self.task_hidden(task, states)
            trace.aggregated[task] = hidden
            trace.logits[task] = head_logits(hidden, head)
        return trace

    def main_head_parameters(self) -> List[Parameter]:
        """Parameters only the main head reads."""

        params = [self.final_norm.gamma, self.final_norm.beta]
        if self.main_proj is not None:
            params.append(self.main_proj.weight)
        return params


# === checkpoints ===

@dataclass
class Checkpoint:
    model: Seq2SeqTransformer
    vocab: Vocabulary
    ablation: str
    extra: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    model: Seq2SeqTransformer,
    vocab: Vocabulary,
    path: Path,
    *,
    ablation: str = "full",
    extra: Dict[str, Any] | None = None,
) -> None:
    """Write every named parameter plus a JSON metadata entry into one .npz file."""

    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "dtype": np.dtype(model.dtype).name,
        "ablation": ablation,
        "vocab": vocab.tokens,
        "extra": extra or {},
    }
    arrays = {name: p.data for name, p in model.named_parameters()}
    arrays[_META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as handle:
        np.savez(handle, **arrays)
    os.replace(tmp, path)
    logger.info("saved checkpoint %s (%d tensors)", path, len(arrays) - 1)


def load_checkpoint(path: Path) -> Checkpoint:
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} does not exist")
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from exc
    if _META_KEY not in arrays:
        raise CheckpointError(f"{path}: missing metadata")
    meta = json.loads(str(arrays.pop(_META_KEY)))
    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('format_version')!r}")
    try:
        cfg = ModelConfig.from_dict(meta["model_config"])
        vocab = Vocabulary(list(meta["vocab"]))
        model = Seq2SeqTransformer(cfg, dtype=np.dtype(meta["dtype"]))
    except (KeyError, ConfigError, ContractError) as exc:
        raise CheckpointError(f"{path}: invalid metadata ({exc})") from exc
    params = dict(model.named_parameters())
    if set(params) != set(arrays):
        missing = sorted(set(params) - set(arrays))
        unexpected = sorted(set(arrays) - set(params))
        raise CheckpointError(f"{path}: parameter mismatch, missing {missing}, unexpected {unexpected}")
    for name, param in params.items():
        if arrays[name].shape != param.shape:
            raise CheckpointError(f"{path}: {name} has shape {arrays[name].shape}, expected {param.shape}")
        param.data = np.array(arrays[name])
    model.eval()
    return Checkpoint(model, vocab, str(meta.get("ablation", "full")), dict(meta.get("extra", {})))
