"""Closed vocabulary over surface words, reserved tokens, and label phrases.

Ids are dense and assigned in a documented order so checkpoints are stable:
the four reserved tokens first ([PAD]=0, [CLS]=1, [SEP]=2, [MASK]=3), then
the schema's learnable tokens, then its label phrases (each multi-word phrase
is one atomic entry), then template literal words, then corpus tokens in
first-seen order, then any explicit extras.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .compiler import PromptSchema
from .errors import DataError

PAD, CLS, SEP, MASK = "[PAD]", "[CLS]", "[SEP]", "[MASK]"
RESERVED = (PAD, CLS, SEP, MASK)

PAD_ID, CLS_ID, SEP_ID, MASK_ID = 0, 1, 2, 3


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(compare=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if self.tokens[:4] != RESERVED:
            raise DataError("vocabulary must start with the reserved tokens")
        if not self.index:
            object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})
        if len(self.index) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise DataError(f"token {token!r} is not in the vocabulary") from None

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    @staticmethod
    def build(schema: PromptSchema, token_sources: Sequence[Iterable[str]] = (),
              extra_tokens: Iterable[str] = ()) -> "Vocab":
        """Assemble the vocabulary for a schema plus the corpora it will see."""
        ordered: dict[str, None] = {t: None for t in RESERVED}
        for i in range(schema.learnable_count):
            ordered.setdefault(f"[L{i}]")
        for vocab_j in schema.mask_vocabs:
            for phrase in vocab_j:
                ordered.setdefault(phrase)
        for el in schema.elements:
            if el.kind == "literal":
                ordered.setdefault(el.word)
            elif el.kind == "learnable":
                ordered.setdefault(f"[L{el.index}]")
        for source in token_sources:
            for tok in source:
                ordered.setdefault(tok)
        for tok in extra_tokens:
            ordered.setdefault(tok)
        return Vocab(tuple(ordered))
