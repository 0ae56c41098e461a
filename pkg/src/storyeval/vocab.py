"""Word-level vocabulary and tokenizer.

Reserved tokens come first so their ids are stable across builds:
[CLS], <sep>, <pad>, <bos>, <eos>, <unk>, then one name token per
aspect.  The file format is one token per line, line index = id.
"""

import re
from collections import Counter
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataError, EmptyTextError

CLS = "[CLS]"
SEP = "<sep>"
PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"

_WORD_RE = re.compile(r"\w+(?:'\w+)?|[^\w\s]")


def words(text: str) -> list[str]:
    """Lowercase and split into words and single punctuation marks."""
    return _WORD_RE.findall(text.lower())


def aspect_token(k: int) -> str:
    return f"<aspect_{k}>"


class Vocabulary:
    """Bijection between token strings and dense integer ids."""

    def __init__(self, tokens: list[str], n_aspects: int):
        reserved = [CLS, SEP, PAD, BOS, EOS, UNK] + [aspect_token(k) for k in range(n_aspects)]
        if tokens[: len(reserved)] != reserved:
            raise ContractViolation("reserved tokens missing or out of order")
        if len(set(tokens)) != len(tokens):
            raise ContractViolation("duplicate token in vocabulary")
        self.tokens = list(tokens)
        self.n_aspects = n_aspects
        self._ids = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def cls_id(self) -> int:
        return 0

    @property
    def sep_id(self) -> int:
        return 1

    @property
    def pad_id(self) -> int:
        return 2

    @property
    def bos_id(self) -> int:
        return 3

    @property
    def eos_id(self) -> int:
        return 4

    @property
    def unk_id(self) -> int:
        return 5

    def aspect_id(self, k: int) -> int:
        if not 0 <= k < self.n_aspects:
            raise ContractViolation(f"aspect id {k} outside [0, {self.n_aspects})")
        return 6 + k

    def id_of(self, token: str) -> int:
        return self._ids.get(token, self.unk_id)

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def decode(self, ids) -> str:
        """Ids back to a space-joined string, dropping control tokens."""
        skip = {self.cls_id, self.sep_id, self.pad_id, self.bos_id, self.eos_id}
        return " ".join(self.tokens[i] for i in ids if i not in skip)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, n_aspects: int | None = None) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise DataError(f"empty vocabulary file: {path}")
        if n_aspects is None:
            n_aspects = 0
            while aspect_token(n_aspects) in lines[6:]:
                n_aspects += 1
        return cls(lines, n_aspects)


def build_vocab(texts, size: int, n_aspects: int = 10) -> Vocabulary:
    """Most frequent words across ``texts``, capped at ``size`` total ids.

    Frequency ties break lexicographically so builds are reproducible.
    """
    reserved = [CLS, SEP, PAD, BOS, EOS, UNK] + [aspect_token(k) for k in range(n_aspects)]
    if size <= len(reserved):
        raise ContractViolation(f"vocab size {size} leaves no room for words")
    counts = Counter()
    for text in texts:
        counts.update(words(text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [w for w, _ in ranked[: size - len(reserved)] if w not in reserved]
    return Vocabulary(reserved + keep, n_aspects)


def tokenize(text: str, vocab: Vocabulary, max_len: int) -> np.ndarray:
    """[CLS]-prefixed id sequence, truncated to ``max_len``."""
    toks = words(text)
    if not toks:
        raise EmptyTextError("text is empty after normalization")
    ids = [vocab.cls_id] + [vocab.id_of(t) for t in toks]
    return np.asarray(ids[:max_len], dtype=np.int64)


def conditioned_ids(story_ids: np.ndarray, aspect_k: int, vocab: Vocabulary,
                    max_len: int) -> np.ndarray:
    """Prefix a tokenized story with its aspect condition.

    Layout is [CLS] <aspect_k> <sep> story-words; the three prefix tokens
    all get global attention in the encoder.
    """
    if story_ids[0] != vocab.cls_id:
        raise ContractViolation("story ids must start with [CLS]")
    prefix = [vocab.cls_id, vocab.aspect_id(aspect_k), vocab.sep_id]
    out = np.concatenate([np.asarray(prefix, dtype=np.int64), story_ids[1:]])
    return out[:max_len]


def pad_batch(seqs: list[np.ndarray], pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length id sequences into (batch, maxlen) plus lengths."""
    if not seqs:
        raise ContractViolation("empty batch")
    lengths = np.asarray([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), int(lengths.max())), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lengths
