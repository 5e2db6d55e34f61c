"""Closed-vocabulary tokenizer for the synthetic report grammar.

The corpus grammar is closed, so a lowercase whitespace/punctuation split is
enough; any token outside the table maps to [unk].  Sequences always start
with [cls] and are padded/truncated to a fixed length.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import InputError

CLS, PAD, UNK = "[cls]", "[pad]", "[unk]"

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\w\s]")


class Vocabulary:
    """Dense token -> id table with the three special tokens up front."""

    def __init__(self, tokens: list[str]):
        self.token_to_id: dict[str, int] = {}
        for tok in [CLS, PAD, UNK, *tokens]:
            if tok not in self.token_to_id:
                self.token_to_id[tok] = len(self.token_to_id)
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}

    def __len__(self) -> int:
        return len(self.token_to_id)

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS]

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)


def split_words(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation (marks kept as tokens)."""
    return _TOKEN_RE.findall(text.lower())


def tokenize(report: str, vocab: Vocabulary, max_len: int) -> np.ndarray:
    """Map a report to a fixed-length id sequence: [cls] + words, padded."""
    if not report or not report.strip():
        raise InputError("cannot tokenize an empty report")
    words = split_words(report)
    ids = [vocab.cls_id] + [vocab.lookup(w) for w in words]
    ids = ids[:max_len]
    ids += [vocab.pad_id] * (max_len - len(ids))
    return np.asarray(ids, dtype=np.int64)


def tokenize_batch(reports: list[str], vocab: Vocabulary, max_len: int) -> np.ndarray:
    return np.stack([tokenize(r, vocab, max_len) for r in reports])
