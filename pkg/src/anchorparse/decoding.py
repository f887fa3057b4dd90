"""Autoregressive greedy and beam-search generation from the main head."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple

import numpy as np

from . import tensor as T
from .model import Seq2SeqTransformer
from .tensor import Tensor, no_grad
from .vocab import BOS_ID, EOS_ID, PAD_ID

logger = logging.getLogger(__name__)

DecodeMode = Literal["greedy", "beam"]


@dataclass
class Generation:
    """Generated ids without <BOS>/<EOS>, their summed log-probability, and whether max length cut them."""

    ids: List[int]
    log_prob: float
    truncated: bool = False


def _step_log_probs(
    model: Seq2SeqTransformer, memory: Tensor, blocked: np.ndarray, prefixes: np.ndarray
) -> np.ndarray:
    states = model.decode_states(prefixes, memory, blocked)
    logits = model.main_logits(T.getitem(states[-1], (slice(None), -1)))
    return T.log_softmax(logits, axis=-1).data.astype(np.float64)


def _repeat(memory: Tensor, blocked: np.ndarray, rows: Sequence[int]) -> Tuple[Tensor, np.ndarray]:
    index = np.asarray(rows)
    return Tensor(memory.data[index], dtype=memory.dtype), blocked[index]


def greedy_decode(model: Seq2SeqTransformer, source: np.ndarray, max_len: int | None = None) -> List[Generation]:
    """Batched greedy decoding; `source` is [B, M] padded ids."""

    source = np.atleast_2d(np.asarray(source))
    limit = min(max_len or model.cfg.max_target_len, model.cfg.max_target_len)
    model.eval()
    with no_grad():
        memory, blocked = model.encode(source)
        batch = source.shape[0]
        prefixes = np.full((batch, 1), BOS_ID, dtype=np.int64)
        outputs: List[List[int]] = [[] for _ in range(batch)]
        scores = np.zeros(batch)
        done = np.zeros(batch, dtype=bool)
        while not done.all() and prefixes.shape[1] <= limit:
            log_probs = _step_log_probs(model, memory, blocked, prefixes)
            choice = log_probs.argmax(axis=-1)
            for row in np.flatnonzero(~done):
                token = int(choice[row])
                scores[row] += log_probs[row, token]
                if token == EOS_ID:
                    done[row] = True
                else:
                    outputs[row].append(token)
            next_column = np.where(done, PAD_ID, choice)[:, None]
            prefixes = np.concatenate([prefixes, next_column], axis=1)
    results = [Generation(outputs[i], float(scores[i]), truncated=not done[i]) for i in range(batch)]
    truncated = sum(r.truncated for r in results)
    if truncated:
        logger.warning("%d of %d greedy decodes hit the maximum length %d", truncated, batch, limit)
    return results


def _rank(item: Tuple[List[int], float]) -> Tuple[float, List[int]]:
    ids, score = item
    return (-score, ids)


def beam_decode(
    model: Seq2SeqTransformer, source: Sequence[int], beam_size: int, max_len: int | None = None
) -> Generation:
    """Best completed hypothesis; equal scores go to the lexicographically lower id sequence."""

    if beam_size < 1:
        raise ValueError("beam size must be >= 1")
    limit = min(max_len or model.cfg.max_target_len, model.cfg.max_target_len)
    source_row = np.asarray(source, dtype=np.int64)[None, :]
    model.eval()
    with no_grad():
        memory, blocked = model.encode(source_row)
        alive: List[Tuple[List[int], float]] = [([], 0.0)]
        finished: List[Tuple[List[int], float]] = []
        for _ in range(limit):
            prefixes = np.array([[BOS_ID] + ids for ids, _ in alive], dtype=np.int64)
            beam_memory, beam_blocked = _repeat(memory, blocked, [0] * len(alive))
            log_probs = _step_log_probs(model, beam_memory, beam_blocked, prefixes)
            candidates: List[Tuple[List[int], float]] = []
            for (ids, score), row in zip(alive, log_probs):
                top = np.lexsort((np.arange(row.shape[0]), -row))[:beam_size]
                candidates.extend((ids + [int(t)], score + float(row[t])) for t in top)
            candidates.sort(key=_rank)
            alive = []
            for ids, score in candidates[:beam_size]:
                if ids[-1] == EOS_ID:
                    finished.append((ids[:-1], score))
                else:
                    alive.append((ids, score))
            if not alive:
                break
            if finished and max(s for _, s in finished) >= max(s for _, s in alive):
                break
    if finished:
        ids, score = min(finished, key=_rank)
        return Generation(ids, score)
    ids, score = min(alive, key=_rank)
    logger.warning("beam search hit the maximum length %d without a finished hypothesis", limit)
    return Generation(ids, score, truncated=True)


def generate(
    model: Seq2SeqTransformer,
    source: Sequence[int],
    *,
    mode: DecodeMode = "greedy",
    beam_size: int = 4,
    max_len: int | None = None,
) -> Generation:
    """Decode one source sequence.

    Beam search keeps the greedy completion as a candidate, so its result never
    scores below greedy.
    """

    greedy = greedy_decode(model, np.asarray(source, dtype=np.int64)[None, :], max_len)[0]
    if mode == "greedy":
        return greedy
    beam = beam_decode(model, source, beam_size, max_len)
    if beam.truncated and not greedy.truncated:
        return greedy
    if not greedy.truncated and _rank((greedy.ids, greedy.log_prob)) < _rank((beam.ids, beam.log_prob)):
        return greedy
    return beam
