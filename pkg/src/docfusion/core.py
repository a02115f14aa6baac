"""Vocabulary, documents, corpus IO, BPE and log-space helpers shared by all modules."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BOS = "<s>"
EOS = "</s>"
SEP = "<sep>"
UNK = "<unk>"
RESERVED = (BOS, EOS, SEP, UNK)

EOW = "</w>"

Sentence = tuple[int, ...]


class FormatError(ValueError):
    """Malformed input file; carries the offending path and line when known."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class Vocabulary:
    """Closed token inventory with dense ids; reserved symbols take ids 0..3."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"vocabulary must start with reserved symbols {RESERVED}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._itos = tokens
        self._stoi = {tok: i for i, tok in enumerate(tokens)}

    bos = property(lambda self: 0)
    eos = property(lambda self: 1)
    sep = property(lambda self: 2)
    unk = property(lambda self: 3)

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def __hash__(self) -> int:
        return hash(tuple(self._itos))

    @property
    def tokens(self) -> list[str]:
        return list(self._itos)

    def lookup(self, token: str) -> int:
        return self._stoi.get(token, self.unk)

    def decode_id(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, text: str | Sequence[str]) -> Sentence:
        words = text.split() if isinstance(text, str) else text
        return tuple(self.lookup(w) for w in words)

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self._itos[i] for i in ids)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self._itos), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        for i, tok in enumerate(lines, 1):
            if not tok or any(c.isspace() for c in tok):
                raise FormatError(f"invalid token {tok!r}", path, i)
        try:
            return cls(lines)
        except ValueError as exc:
            raise FormatError(str(exc), path, 1) from None


def build_vocab(corpora: Iterable[Iterable[str]], max_size: int | None = None) -> Vocabulary:
    """Build a vocabulary from token streams (strings are whitespace-split).

    Slots after the reserved symbols go to the most frequent tokens; equal
    counts are ordered lexicographically.
    """
    counts: Counter[str] = Counter()
    for corpus in corpora:
        for item in corpus:
            counts.update(item.split() if isinstance(item, str) else item)
    for tok in RESERVED:
        counts.pop(tok, None)
    if not counts:
        raise ValueError("empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    if max_size is not None:
        ranked = ranked[: max(0, max_size - len(RESERVED))]
    return Vocabulary(list(RESERVED) + ranked)


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple[Sentence, ...]

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class ParallelDocument:
    """Sentence-aligned source/target document."""

    id: str
    source: tuple[Sentence, ...]
    target: tuple[Sentence, ...]

    def __post_init__(self):
        if len(self.source) != len(self.target):
            raise ValueError(f"document {self.id}: {len(self.source)} source vs {len(self.target)} target sentences")

    def __len__(self) -> int:
        return len(self.source)

    @property
    def pairs(self) -> list[tuple[Sentence, Sentence]]:
        return list(zip(self.source, self.target))

    def target_doc(self) -> Document:
        return Document(self.id, self.target)

    def source_doc(self) -> Document:
        return Document(self.id, self.source)


def context_window(doc: Document | Sequence[Sentence], index: int, k: int) -> list[Sentence]:
    """Up to ``k`` sentences preceding ``index``, in document order."""
    sentences = doc.sentences if isinstance(doc, Document) else doc
    if not 0 <= index < len(sentences):
        raise IndexError(f"sentence index {index} out of range for document of length {len(sentences)}")
    if k < 0:
        raise ValueError("k must be non-negative")
    return list(sentences[max(0, index - k) : index])


def truncate_context(context: Sequence[Sentence], k: int) -> list[Sentence]:
    return list(context[max(0, len(context) - k):]) if k > 0 else []


# -- corpus files -----------------------------------------------------------


def read_corpus(path: str | Path) -> list[list[list[str]]]:
    """Documents of tokenized sentences; a single blank line separates documents."""
    docs: list[list[list[str]]] = []
    current: list[list[str]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            if current:
                docs.append(current)
                current = []
            continue
        current.append(line.split())
    if current:
        docs.append(current)
    return docs


def write_corpus(path: str | Path, docs: Iterable[Iterable[Sequence[str]]]) -> None:
    blocks = ["".join(" ".join(s) + "\n" for s in doc) for doc in docs]
    Path(path).write_text("\n".join(blocks), encoding="utf-8")


def encode_docs(vocab: Vocabulary, docs: list[list[list[str]]], prefix: str = "doc") -> list[Document]:
    return [Document(f"{prefix}{i}", tuple(vocab.encode(s) for s in d)) for i, d in enumerate(docs)]


def decode_docs(vocab: Vocabulary, docs: Iterable[Document]) -> list[list[list[str]]]:
    return [[[vocab.decode_id(t) for t in s] for s in d.sentences] for d in docs]


def read_parallel(src_path: str | Path, tgt_path: str | Path, vocab: Vocabulary) -> list[ParallelDocument]:
    src = read_corpus(src_path)
    tgt = read_corpus(tgt_path)
    if len(src) != len(tgt):
        raise FormatError(f"{len(src)} source documents vs {len(tgt)} target documents", tgt_path)
    out = []
    for i, (s, t) in enumerate(zip(src, tgt)):
        if len(s) != len(t):
            raise FormatError(f"document {i}: sentence counts differ ({len(s)} vs {len(t)})", tgt_path)
        out.append(ParallelDocument(f"doc{i}", tuple(vocab.encode(x) for x in s), tuple(vocab.encode(x) for x in t)))
    return out


def write_parallel(src_path: str | Path, tgt_path: str | Path, vocab: Vocabulary, docs: Sequence[ParallelDocument]) -> None:
    write_corpus(src_path, decode_docs(vocab, (d.source_doc() for d in docs)))
    write_corpus(tgt_path, decode_docs(vocab, (d.target_doc() for d in docs)))


# -- log space ---------------------------------------------------------------


def logsumexp(x: np.ndarray) -> float:
    m = np.max(x)
    if not np.isfinite(m):
        return float(m)
    return float(m + math.log(np.sum(np.exp(x - m))))


def log_normalize(x: np.ndarray) -> np.ndarray:
    return x - logsumexp(x)


def check_logdist(logp: np.ndarray, tol: float = 1e-9) -> None:
    if np.any(np.isnan(logp)) or np.any(logp == np.inf):
        raise ValueError("log distribution contains NaN or +inf")
    total = logsumexp(logp)
    if abs(total) > tol:
        raise ValueError(f"log distribution not normalized: logsumexp = {total:.3e}")


# -- byte-pair encoding ------------------------------------------------------


@dataclass(frozen=True)
class MergeTable:
    merges: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def rank(self) -> dict[tuple[str, str], int]:
        return {pair: i for i, pair in enumerate(self.merges)}

    def __len__(self) -> int:
        return len(self.merges)


def _word_symbols(word: str) -> list[str]:
    if not word:
        return []
    chars = list(word)
    chars[-1] += EOW
    return chars


def _merge_pair(symbols: list[str], pair: tuple[str, str]) -> list[str]:
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(pair[0] + pair[1])
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def bpe_learn(corpus: Iterable[str], num_merges: int) -> MergeTable:
    """Greedy most-frequent-pair merges over whitespace-separated words.

    Ties go to the pair seen first when scanning the (current segmentation
    of the) corpus words in first-occurrence order.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    word_freq: Counter[str] = Counter()
    order: list[str] = []
    for item in corpus:
        for w in item.split():
            if w not in word_freq:
                order.append(w)
            word_freq[w] += 1
    segs = {w: _word_symbols(w) for w in order}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        counts: dict[tuple[str, str], int] = {}
        for w in order:
            s = segs[w]
            for pair in zip(s, s[1:]):
                counts[pair] = counts.get(pair, 0) + word_freq[w]
        if not counts:
            break
        best = max(counts.values())
        pair = next(p for p, c in counts.items() if c == best)
        merges.append(pair)
        for w in order:
            segs[w] = _merge_pair(segs[w], pair)
    return MergeTable(tuple(merges))


def bpe_apply(word: str, table: MergeTable) -> list[str]:
    symbols = _word_symbols(word)
    ranks = table.rank()
    while len(symbols) > 1:
        candidates = [ranks[p] for p in zip(symbols, symbols[1:]) if p in ranks]
        if not candidates:
            break
        symbols = _merge_pair(symbols, table.merges[min(candidates)])
    return symbols


def bpe_join(subwords: Sequence[str]) -> list[str]:
    """Inverse of segmentation: concatenate until an end-of-word marker."""
    words, buf = [], ""
    for sw in subwords:
        if sw.endswith(EOW):
            words.append(buf + sw[: -len(EOW)])
            buf = ""
        else:
            buf += sw
    if buf:
        words.append(buf)
    return words
