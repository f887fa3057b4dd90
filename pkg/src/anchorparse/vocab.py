"""Token <-> id mapping shared by the encoder, decoder, and every head."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

from .errors import ContractError
from .logical_form import SPECIAL_TOKENS

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
SEP_ID = 3
MASK_ID = 4
UNK_ID = 5


@dataclass
class Vocabulary:
    """Special tokens first (fixed ids), then every other token in sorted order."""

    tokens: List[str]
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ContractError("vocabulary must start with the special tokens in order")
        if len(set(self.tokens)) != len(self.tokens):
            raise ContractError("vocabulary tokens must be unique")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]]) -> "Vocabulary":
        seen: set[str] = set()
        for sequence in sequences:
            seen.update(sequence)
        seen.difference_update(SPECIAL_TOKENS)
        return cls(list(SPECIAL_TOKENS) + sorted(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.index

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Iterable[int], *, stop_at_eos: bool = True) -> List[str]:
        out = []
        for i in ids:
            i = int(i)
            if stop_at_eos and i == EOS_ID:
                break
            if i in (PAD_ID, BOS_ID):
                continue
            out.append(self.tokens[i])
        return out

