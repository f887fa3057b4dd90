"""Semantic anchor extraction and the two intermediate supervision targets."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .logical_form import MASK, SEP, TokenSequence, identifier_positions, serialize, try_parse
from .schema import ElementKind, SchemaVocabulary

logger = logging.getLogger(__name__)

_SQL_SLOT_KINDS = frozenset({"table", "column"})


@dataclass(frozen=True)
class AnchorOccurrence:
    token: str
    position: int
    kind: ElementKind


@dataclass
class SupervisionTargets:
    """Main target plus its extraction (SAE) and alignment (SAA) views."""

    main: TokenSequence
    sae: TokenSequence
    saa: TokenSequence
    saa_mask: List[bool]

    def sae_loss_mask(self, length: int) -> List[bool]:
        """Prefix alignment: SAE loss applies at decoder positions 0..len(sae), the last one for <EOS>."""

        return [i <= len(self.sae) for i in range(length)]

    def check(self) -> List[str]:
        """Structural problems with these targets; empty when consistent."""

        problems = []
        if len(self.saa) != len(self.main) or len(self.saa_mask) != len(self.main):
            problems.append("saa / saa_mask length differs from main")
            return problems
        for i, (token, keep) in enumerate(zip(self.saa, self.saa_mask)):
            if keep and token != self.main[i]:
                problems.append(f"saa[{i}] = {token!r} differs from main[{i}] = {self.main[i]!r}")
            if not keep and token != MASK:
                problems.append(f"saa[{i}] = {token!r} should be {MASK}")
        sae_content = {t for t in self.sae if t != SEP}
        saa_content = {t for t, keep in zip(self.saa, self.saa_mask) if keep}
        if sae_content != saa_content:
            problems.append("sae and saa disagree on the anchor set")
        return problems


def identifier_slots(main: Sequence[str]) -> List[Tuple[int, str]] | None:
    """(position, role) of the schema identifier slots of a canonical query.

    None when `main` is not the serialization of a SQL or SPARQL query.
    """

    text = " ".join(main)
    for kind in ("sql", "sparql"):
        query, _ = try_parse(text, kind)  # type: ignore[arg-type]
        if query is not None and serialize(query) == list(main):
            return identifier_positions(query)
    return None


def extract_anchors(main: Sequence[str], vocab: SchemaVocabulary) -> List[AnchorOccurrence]:
    """Identifier slots whose token names a schema element, in sequence order.

    Keywords and literals never count, even when a schema element happens to
    share their spelling (a WikiSQL column called "count" or "2005"). A SQL
    slot reports its own kind, table or column; SPARQL slots report the kind
    the vocabulary gives. Token sequences that do not parse fall back to a
    plain vocabulary scan.
    """

    slots = identifier_slots(main)
    if slots is None:
        logger.debug("anchor extraction on a non-query sequence of %d tokens", len(main))
        slots = [(position, "") for position in range(len(main))]
    occurrences = []
    for position, role in slots:
        token = main[position]
        kind = vocab.kind_of(token)
        if kind is None:
            continue
        occurrences.append(AnchorOccurrence(token, position, role if role in _SQL_SLOT_KINDS else kind))  # type: ignore[arg-type]
    return occurrences


def build_sae_target(occurrences: Sequence[AnchorOccurrence]) -> TokenSequence:
    """Distinct anchors in first-occurrence order, separated by <SEP>."""

    seen: set[str] = set()
    target: TokenSequence = []
    for occurrence in occurrences:
        if occurrence.token in seen:
            continue
        seen.add(occurrence.token)
        if target:
            target.append(SEP)
        target.append(occurrence.token)
    if not target:
        logger.debug("empty extraction target")
    return target


def build_saa_target(
    main: Sequence[str], occurrences: Sequence[AnchorOccurrence]
) -> Tuple[TokenSequence, List[bool]]:
    """Anchors kept in place, every other position replaced by <MASK>."""

    mask = [False] * len(main)
    for occurrence in occurrences:
        mask[occurrence.position] = True
    target = [token if keep else MASK for token, keep in zip(main, mask)]
    return target, mask


def build_supervision_targets(main: Sequence[str], vocab: SchemaVocabulary) -> SupervisionTargets:
    occurrences = extract_anchors(main, vocab)
    saa, saa_mask = build_saa_target(main, occurrences)
    return SupervisionTargets(list(main), build_sae_target(occurrences), saa, saa_mask)
