"""Word-index vocabulary and fixed-length sequence encoding."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD_INDEX = 0
OOV_INDEX = 1
DEFAULT_MAX_SIZE = 50_002  # 50,000 content words + PAD + OOV
DEFAULT_SEQ_LEN = 300


class EmptyCorpus(ValueError):
    pass


class VocabularyFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Content words start at index 2; 0 is PAD and 1 is OOV."""

    index_to_word: tuple[str, ...]
    max_size: int
    seq_len: int = DEFAULT_SEQ_LEN
    word_to_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.index_to_word) > self.max_size:
            raise ValueError("vocabulary larger than max_size")
        object.__setattr__(self, "word_to_index", {w: i for i, w in enumerate(self.index_to_word) if i > OOV_INDEX})

    @property
    def pad_index(self) -> int:
        return PAD_INDEX

    @property
    def oov_index(self) -> int:
        return OOV_INDEX

    def __len__(self) -> int:
        return len(self.index_to_word)

    def to_text(self) -> str:
        lines = [f"max_size\t{self.max_size}", f"seq_len\t{self.seq_len}"]
        lines += [f"{w}\t{i}" for i, w in enumerate(self.index_to_word) if i > OOV_INDEX]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_text().encode("utf-8"))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        try:
            k1, max_size = lines[0].split("\t")
            k2, seq_len = lines[1].split("\t")
        except (IndexError, ValueError) as exc:
            raise VocabularyFormatError(f"{path}: bad header") from exc
        if (k1, k2) != ("max_size", "seq_len"):
            raise VocabularyFormatError(f"{path}: bad header keys {k1!r}, {k2!r}")
        words = ["<pad>", "<oov>"]
        for n, line in enumerate(lines[2:], start=3):
            word, _, idx = line.rpartition("\t")
            if not word or int(idx) != len(words):
                raise VocabularyFormatError(f"{path}:{n}: expected index {len(words)}")
            words.append(word)
        return cls(tuple(words), int(max_size), int(seq_len))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def build_vocabulary(train_docs, max_size: int = DEFAULT_MAX_SIZE, seq_len: int = DEFAULT_SEQ_LEN) -> Vocabulary:
    """Index the most frequent training words (ties broken alphabetically).

    Pass the training split only; anything else leaks test words into the index.
    """
    if max_size < 2:
        raise ValueError("max_size must leave room for PAD and OOV")
    counts: Counter[str] = Counter()
    for doc in train_docs:
        counts.update(getattr(doc, "tokens", doc))
    if not counts:
        raise EmptyCorpus("training documents contain no tokens")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: max_size - 2]
    return Vocabulary(("<pad>", "<oov>", *(w for w, _ in ranked)), max_size, seq_len)


def encode(tokens, vocab: Vocabulary) -> list[int]:
    lookup = vocab.word_to_index
    return [lookup.get(tok, OOV_INDEX) for tok in tokens]


def decode(indices, vocab: Vocabulary) -> list[str]:
    """Inverse of :func:`encode` for in-vocabulary words; PAD positions are dropped."""
    return [vocab.index_to_word[i] for i in indices if i != PAD_INDEX]


def pad_or_truncate(indices, length: int) -> list[int]:
    """Keep the first ``length`` indices and post-pad short sequences with PAD."""
    if length < 1:
        raise ValueError("sequence length must be positive")
    out = list(indices[:length])
    return out + [PAD_INDEX] * (length - len(out))


def encode_batch(docs, vocab: Vocabulary, length: int | None = None) -> np.ndarray:
    """``[N, length]`` int64 matrix of padded sequences for token lists or documents."""
    length = vocab.seq_len if length is None else length
    out = np.zeros((len(docs), length), dtype=np.int64)
    for n, doc in enumerate(docs):
        out[n] = pad_or_truncate(encode(getattr(doc, "tokens", doc), vocab), length)
    return out
