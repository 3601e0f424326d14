"""
Tokenization and vocabulary utilities.

SMILES strings are split one token per character (so "Cl" becomes "C", "l");
SELFIES strings are split one token per bracketed unit.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from molseq.storage import read_json, write_json

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
SPECIALS: Tuple[str, ...] = (PAD, UNK)
PAD_INDEX = 0
UNK_INDEX = 1


class TokenizeError(ValueError):
    def __init__(self, message: str, offset: int):
        self.message = message
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


@dataclass(frozen=True)
class Vocab:
    """Token -> index bijection with <pad>=0 and <unk>=1."""

    tokens: Tuple[str, ...]
    index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[:2]) != SPECIALS:
            raise ValueError("vocabulary must start with the reserved specials")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be distinct")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK_INDEX)

    def to_dict(self) -> Dict[str, int]:
        return dict(self.index)

    @classmethod
    def from_dict(cls, mapping: Mapping[str, int]) -> "Vocab":
        tokens = sorted(mapping, key=mapping.__getitem__)
        if [mapping[t] for t in tokens] != list(range(len(tokens))):
            raise ValueError("vocabulary indices must be dense from 0")
        return cls(tuple(tokens))

    def sha256(self) -> str:
        return vocab_sha256(self)


@dataclass(frozen=True)
class TokenSeq:
    indices: Tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


def tokenize_smiles(text: str) -> List[str]:
    """One token per character."""
    return list(text)


def tokenize_selfies(text: str) -> List[str]:
    """One token per bracketed unit.

    Raises:
        TokenizeError: on text outside brackets or an unclosed bracket.
    """
    tokens = []
    i = 0
    while i < len(text):
        if text[i] != "[":
            raise TokenizeError("expected '['", i)
        close = text.find("]", i + 1)
        nested = text.find("[", i + 1)
        if close < 0 or (0 <= nested < close):
            raise TokenizeError("unbalanced bracket", i)
        tokens.append(text[i:close + 1])
        i = close + 1
    return tokens


def build_vocab(corpus: Iterable[Sequence[str]]) -> Vocab:
    """Specials followed by the sorted distinct tokens of the (training) corpus."""
    seen = set()
    for tokens in corpus:
        seen.update(tokens)
    seen.difference_update(SPECIALS)
    return Vocab(SPECIALS + tuple(sorted(seen)))


def encode_indices(tokens: Sequence[str], vocab: Vocab) -> TokenSeq:
    return TokenSeq(tuple(vocab.lookup(t) for t in tokens))


def decode_indices(seq: TokenSeq, vocab: Vocab) -> List[str]:
    """Inverse of encode_indices; padding is dropped."""
    out = []
    for i in seq.indices:
        if i == PAD_INDEX:
            continue
        if not 0 <= i < vocab.size:
            raise IndexError(f"index {i} outside vocabulary of size {vocab.size}")
        out.append(vocab.tokens[i])
    return out


def pad_batch(seqs: Sequence[TokenSeq], pad: int = PAD_INDEX) -> Tuple[np.ndarray, np.ndarray]:
    """Right-pad to the longest sequence; returns (indices matrix, true lengths)."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    width = int(lengths.max()) if len(seqs) else 0
    batch = np.full((len(seqs), width), pad, dtype=np.int64)
    for row, seq in enumerate(seqs):
        batch[row, :len(seq)] = seq.indices
    return batch, lengths


def vocab_sha256(vocab: Vocab) -> str:
    payload = json.dumps(vocab.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def save_vocab(vocab: Vocab, path: str) -> str:
    return write_json(path, vocab.to_dict())


def load_vocab(path: str) -> Vocab:
    return Vocab.from_dict(read_json(path))
