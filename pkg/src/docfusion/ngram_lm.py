"""Count-based n-gram language models with interpolated absolute discounting.

The model is stored in backoff form: explicit conditional probabilities for
seen (history, token) pairs plus one backoff weight per seen history.  For
interpolated absolute discounting the two forms coincide exactly, which makes
ARPA persistence lossless up to float formatting.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Document, FormatError, Sentence, Vocabulary, truncate_context

ARPA_HEADER = "ngram-arpa 1"

History = tuple[int, ...]


class NGramLM:
    """Backoff n-gram model over a closed vocabulary.

    ``tables[h]`` maps a non-empty history to ``(ids, probs)`` for tokens seen
    after it, ``backoff[h]`` is the (linear) weight applied to the next lower
    order.  ``unigram`` is a dense distribution over the whole vocabulary.
    """

    def __init__(self, vocab: Vocabulary, order: int, unigram: np.ndarray,
                 tables: dict[History, tuple[np.ndarray, np.ndarray]],
                 backoff: dict[History, float], discount: float | None = None,
                 context_k: int = 0):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.vocab = vocab
        self.order = order
        self.unigram = unigram
        self.tables = tables
        self.backoff = backoff
        self.discount = discount
        self.context_k = context_k
        self._cache: dict[History, np.ndarray] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @classmethod
    def uniform(cls, vocab: Vocabulary) -> "NGramLM":
        v = len(vocab)
        return cls(vocab, 1, np.full(v, 1.0 / v), {}, {})

    def _prob_vector(self, h: History) -> np.ndarray:
        if not h:
            return self.unigram
        vec = self._cache.get(h)
        if vec is not None:
            return vec
        lower = self._prob_vector(h[1:])
        entry = self.tables.get(h)
        if entry is None:
            vec = lower
        else:
            vec = lower * self.backoff.get(h, 1.0)
            ids, probs = entry
            vec[ids] = probs
        self._cache[h] = vec
        return vec

    def prob_vector(self, history: Sequence[int]) -> np.ndarray:
        h = tuple(history[max(0, len(history) - self.order + 1):]) if self.order > 1 else ()
        return self._prob_vector(h)

    def logprob(self, history: Sequence[int], token: int) -> float:
        return math.log(self.prob_vector(history)[token])

    def sequence_history(self, context: Sequence[Sentence]) -> list[int]:
        """Conditioning prefix for the first token of a sentence."""
        ctx = truncate_context(context, self.context_k)
        hist = [self.vocab.bos]
        for s in ctx:
            hist.extend(s)
            hist.append(self.vocab.sep)
        return hist


def cond_logdist(lm: NGramLM, history: Sequence[int]) -> np.ndarray:
    """Natural-log distribution over the vocabulary given ``history``."""
    with np.errstate(divide="ignore"):
        return np.log(lm.prob_vector(history))


def _training_sequences(corpus: Iterable, context_k: int, vocab: Vocabulary, eos: bool):
    """Yield (tokens, first_scored_index) per training sentence."""
    for item in corpus:
        if isinstance(item, Document):
            sentences = item.sentences
            for i, sent in enumerate(sentences):
                ctx = sentences[max(0, i - context_k): i] if context_k > 0 else ()
                yield _join(vocab, ctx, sent, eos)
        else:
            yield _join(vocab, (), tuple(item), eos)


def _join(vocab: Vocabulary, ctx: Sequence[Sentence], sent: Sentence, eos: bool):
    tokens = [vocab.bos]
    for s in ctx:
        tokens.extend(s)
        tokens.append(vocab.sep)
    start = len(tokens)
    tokens.extend(sent)
    if eos:
        tokens.append(vocab.eos)
    return tokens, start


def train_ngram(corpus: Iterable[Document | Sequence[int]], vocab: Vocabulary, order: int = 4,
                discount: float = 0.75, context_k: int = 0, eos: bool = True) -> NGramLM:
    """Train an interpolated absolute-discounting model.

    With ``context_k > 0`` each sentence of every Document is preceded by up to
    ``context_k`` previous sentences joined with SEP; context tokens are
    conditioned on but never counted as predictions.
    """
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    if order < 1:
        raise ValueError("order must be >= 1")
    if context_k > 0:
        corpus = list(corpus)
        if any(not isinstance(d, Document) for d in corpus):
            raise ValueError("document context requires Document inputs")
    v = len(vocab)
    # counts[m][history] -> {token: count}, m = history length
    counts: list[dict[History, dict[int, int]]] = [defaultdict(dict) for _ in range(order)]
    total = 0
    for tokens, start in _training_sequences(corpus, context_k, vocab, eos):
        for i in range(start, len(tokens)):
            w = tokens[i]
            total += 1
            for m in range(min(order - 1, i) + 1):
                h = tuple(tokens[i - m: i])
                row = counts[m][h]
                row[w] = row.get(w, 0) + 1
    if total == 0:
        raise ValueError("empty corpus")

    uni = counts[0][()]
    n_uni = sum(uni.values())
    unigram = np.full(v, (discount * len(uni) / n_uni) / v)
    for w in sorted(uni):
        unigram[w] += max(uni[w] - discount, 0.0) / n_uni

    lm = NGramLM(vocab, order, unigram, {}, {}, discount, context_k)
    for m in range(1, order):
        for h in sorted(counts[m]):
            row = counts[m][h]
            c_h = sum(row.values())
            gamma = discount * len(row) / c_h
            lower = lm.prob_vector(h[1:]) if m > 1 else unigram
            ids = np.array(sorted(row), dtype=np.int64)
            probs = np.array([(row[w] - discount) / c_h for w in ids]) + gamma * lower[ids]
            lm.tables[h] = (ids, probs)
            lm.backoff[h] = gamma
        lm._cache.clear()
    return lm


def score_sequence(lm: NGramLM, sentence: Sequence[int], context: Sequence[Sentence] = (),
                   eos: bool = False) -> float:
    """Total natural-log probability of ``sentence`` given SEP-joined context."""
    hist = lm.sequence_history(context)
    total = 0.0
    targets = list(sentence) + ([lm.vocab.eos] if eos else [])
    for w in targets:
        total += math.log(lm.prob_vector(hist)[w])
        hist.append(w)
    return total


def perplexity(lm: NGramLM, corpus: Iterable[Document | Sequence[int]]) -> float:
    """exp of the mean negative log-probability per token, EOS included."""
    logp, n = 0.0, 0
    for item in corpus:
        if isinstance(item, Document):
            for i, sent in enumerate(item.sentences):
                logp += score_sequence(lm, sent, item.sentences[:i], eos=True)
                n += len(sent) + 1
        else:
            logp += score_sequence(lm, item, (), eos=True)
            n += len(item) + 1
    if n == 0:
        raise ValueError("empty corpus")
    return math.exp(-logp / n)


# -- ARPA ---------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.10f}"


def save_arpa(lm: NGramLM, path: str | Path) -> None:
    vocab = lm.vocab
    by_order: list[dict[History, float]] = [dict() for _ in range(lm.order)]
    for w in range(len(vocab)):
        by_order[0][(w,)] = float(lm.unigram[w])
    for h, (ids, probs) in lm.tables.items():
        for w, p in zip(ids.tolist(), probs.tolist()):
            by_order[len(h)][h + (w,)] = p
    # every history carrying a backoff weight needs its own n-gram line
    for h in lm.backoff:
        if h not in by_order[len(h) - 1]:
            by_order[len(h) - 1][h] = float(lm.prob_vector(h[:-1])[h[-1]])

    lines = [ARPA_HEADER, f"# order={lm.order} discount={lm.discount} context_k={lm.context_k}", "",
             "\\data\\"]
    lines += [f"ngram {m + 1}={len(by_order[m])}" for m in range(lm.order)]
    for m in range(lm.order):
        lines += ["", f"\\{m + 1}-grams:"]
        keys = sorted(by_order[m]) if m else [(w,) for w in range(len(vocab))]
        for g in keys:
            row = f"{_fmt(math.log10(by_order[m][g]))}\t{vocab.decode(g)}"
            if g in lm.backoff:
                row += f"\t{_fmt(math.log10(lm.backoff[g]))}"
            lines.append(row)
    lines += ["", "\\end\\", ""]
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def load_arpa(path: str | Path, vocab: Vocabulary | None = None) -> NGramLM:
    """Parse a file written by :func:`save_arpa`.

    Without ``vocab`` the vocabulary is rebuilt from the unigram section, whose
    line order is the id order.
    """
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    if not raw or raw[0].strip() != ARPA_HEADER:
        raise FormatError(f"expected header {ARPA_HEADER!r}", path, 1)
    meta = {}
    lineno = 1
    for lineno, line in enumerate(raw[1:], 2):
        if line.strip() == "\\data\\":
            break
        if line.startswith("#"):
            for kv in line[1:].split():
                if "=" in kv:
                    k, val = kv.split("=", 1)
                    meta[k] = val
    else:
        raise FormatError("missing \\data\\ marker", path, lineno)

    declared: dict[int, int] = {}
    i = lineno
    while i < len(raw) and raw[i].startswith("ngram "):
        try:
            key, val = raw[i][6:].split("=")
            declared[int(key)] = int(val)
        except ValueError:
            raise FormatError(f"bad count line {raw[i]!r}", path, i + 1) from None
        i += 1
    if not declared or sorted(declared) != list(range(1, len(declared) + 1)):
        raise FormatError("missing or non-contiguous ngram counts", path, i + 1)
    order = len(declared)

    grams: list[list[tuple[list[str], float, float | None, int]]] = [[] for _ in range(order)]
    current = None
    seen_end = False
    for j in range(i, len(raw)):
        line = raw[j].strip()
        if not line:
            continue
        if line == "\\end\\":
            seen_end = True
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                current = int(line[1:-7])
            except ValueError:
                raise FormatError(f"bad section header {line!r}", path, j + 1) from None
            if current not in declared:
                raise FormatError(f"undeclared section {line!r}", path, j + 1)
            continue
        if current is None:
            raise FormatError(f"n-gram line outside a section: {line!r}", path, j + 1)
        fields = raw[j].split("\t")
        if len(fields) not in (2, 3):
            raise FormatError("expected 'log10prob<TAB>tokens[<TAB>log10backoff]'", path, j + 1)
        toks = fields[1].split()
        if len(toks) != current:
            raise FormatError(f"expected {current} tokens, got {len(toks)}", path, j + 1)
        try:
            lp = float(fields[0])
            bo = float(fields[2]) if len(fields) == 3 else None
        except ValueError:
            raise FormatError("non-numeric probability or backoff", path, j + 1) from None
        grams[current - 1].append((toks, lp, bo, j + 1))
    if not seen_end:
        raise FormatError("missing \\end\\ marker", path, len(raw))
    for m in range(order):
        if len(grams[m]) != declared[m + 1]:
            raise FormatError(f"header declares {declared[m + 1]} {m + 1}-grams, found {len(grams[m])}", path)

    if vocab is None:
        try:
            vocab = Vocabulary([g[0][0] for g in grams[0]])
        except ValueError as exc:
            raise FormatError(str(exc), path) from None
    unigram = np.zeros(len(vocab))
    backoff: dict[History, float] = {}
    rows: dict[History, dict[int, float]] = defaultdict(dict)
    for m in range(order):
        for toks, lp, bo, ln in grams[m]:
            if any(t not in vocab for t in toks):
                raise FormatError(f"token not in vocabulary: {toks}", path, ln)
            g = tuple(vocab.lookup(t) for t in toks)
            if m == 0:
                unigram[g[0]] = 10.0 ** lp
            else:
                rows[g[:-1]][g[-1]] = 10.0 ** lp
            if bo is not None:
                backoff[g] = 10.0 ** bo
    if len(grams[0]) != len(vocab):
        raise FormatError(f"unigram section has {len(grams[0])} entries for a vocabulary of {len(vocab)}", path)
    tables = {}
    for h in sorted(rows):
        ids = np.array(sorted(rows[h]), dtype=np.int64)
        tables[h] = (ids, np.array([rows[h][w] for w in ids]))
    discount = float(meta["discount"]) if meta.get("discount", "None") != "None" else None
    return NGramLM(vocab, order, unigram, tables, backoff, discount, int(meta.get("context_k", 0)))
