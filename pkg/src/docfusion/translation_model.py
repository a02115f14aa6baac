"""IBM-1 lexicon mixed with a target n-gram: a small translation model whose
internal LM is known exactly (it is the n-gram component)."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import FormatError, Sentence, Vocabulary
from .ngram_lm import NGramLM, load_arpa, save_arpa, train_ngram

logger = logging.getLogger(__name__)

LEXICON_HEADER = "lexicon 1"
TM_HEADER = "translation-model 1"
LEXICON_FLOOR = 1e-9


@dataclass
class Lexicon:
    """t(e|f) as nested dicts ``t[f][e]``."""

    vocab_size: int
    t: dict[int, dict[int, float]]
    log_likelihood: list[float] = field(default_factory=list)

    def __post_init__(self):
        self._rows: dict[int, np.ndarray] = {}

    def row(self, f: int) -> np.ndarray | None:
        r = self._rows.get(f)
        if r is None:
            entries = self.t.get(f)
            if entries is None:
                return None
            r = np.zeros(self.vocab_size)
            for e, p in entries.items():
                r[e] = p
            self._rows[f] = r
        return r

    def prob(self, e: int, f: int) -> float:
        return self.t.get(f, {}).get(e, 0.0)


def _corpus_loglik(pairs, t) -> float:
    total = 0.0
    for src, tgt in pairs:
        for e in tgt:
            total += math.log(sum(t[f].get(e, 0.0) for f in src) / len(src))
    return total


def train_ibm1(parallel: Iterable[tuple[Sentence, Sentence]], vocab_size: int, iterations: int = 20) -> Lexicon:
    """EM training of IBM Model 1 without a NULL source word.

    ``log_likelihood`` on the returned lexicon holds the training-set
    log-likelihood after each iteration (plus the initial value first).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    pairs = [(tuple(s), tuple(e)) for s, e in parallel if len(s) and len(e)]
    if not pairs:
        raise ValueError("empty parallel data")

    cooc: dict[int, set[int]] = defaultdict(set)
    for src, tgt in pairs:
        for f in src:
            cooc[f].update(tgt)
    t = {f: {e: 1.0 / len(es) for e in sorted(es)} for f, es in sorted(cooc.items())}
    trace = [_corpus_loglik(pairs, t)]
    for it in range(iterations):
        counts: dict[int, dict[int, float]] = defaultdict(lambda: defaultdict(float))
        for src, tgt in pairs:
            for e in tgt:
                z = sum(t[f].get(e, 0.0) for f in src)
                for f in src:
                    counts[f][e] += t[f].get(e, 0.0) / z
        t = {}
        for f in sorted(counts):
            row = counts[f]
            norm = sum(row.values())
            t[f] = {e: row[e] / norm for e in sorted(row)}
        trace.append(_corpus_loglik(pairs, t))
        logger.debug("ibm1 iteration %d: loglik %.4f", it + 1, trace[-1])
    return Lexicon(vocab_size, t, trace)


def save_lexicon(lex: Lexicon, vocab: Vocabulary, path: str | Path) -> None:
    """Write sorted by source token, then descending probability.

    Entries below 1e-9 are dropped and each row renormalized.
    """
    lines = [LEXICON_HEADER]
    for f in sorted(lex.t, key=vocab.decode_id):
        row = {e: p for e, p in lex.t[f].items() if p >= LEXICON_FLOOR}
        norm = sum(row.values())
        for e, p in sorted(row.items(), key=lambda kv: (-kv[1], vocab.decode_id(kv[0]))):
            lines.append(f"{vocab.decode_id(f)}\t{vocab.decode_id(e)}\t{p / norm:.12g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_lexicon(path: str | Path, vocab: Vocabulary) -> Lexicon:
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    if not raw or raw[0].strip() != LEXICON_HEADER:
        raise FormatError(f"expected header {LEXICON_HEADER!r}", path, 1)
    t: dict[int, dict[int, float]] = defaultdict(dict)
    for n, line in enumerate(raw[1:], 2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError("expected 'source<TAB>target<TAB>probability'", path, n)
        f, e, p = fields
        if f not in vocab or e not in vocab:
            raise FormatError(f"token not in vocabulary: {f if f not in vocab else e!r}", path, n)
        try:
            prob = float(p)
        except ValueError:
            raise FormatError(f"bad probability {p!r}", path, n) from None
        if not 0.0 <= prob <= 1.0:
            raise FormatError(f"probability out of range: {prob}", path, n)
        t[vocab.lookup(f)][vocab.lookup(e)] = prob
    for f, row in t.items():
        if abs(sum(row.values()) - 1.0) > 1e-6:
            raise FormatError(f"row for {vocab.decode_id(f)!r} does not sum to 1", path)
    return Lexicon(len(vocab), dict(t))


class TranslationModel:
    """p_TM(e | prefix, F) = mu * p_lex(e | F) + (1 - mu) * p_ngram(e | prefix).

    The lexical part carries no EOS mass; EOS comes only from the n-gram.  If
    ``target_ngram`` was trained with document context, the TM is
    context-aware as well (this is how document-level systems are built).
    """

    def __init__(self, lexicon: Lexicon, target_ngram: NGramLM, mu: float = 0.5):
        if not 0.0 <= mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if lexicon.vocab_size != target_ngram.vocab_size:
            raise ValueError("lexicon and target n-gram vocabularies differ")
        self.lexicon = lexicon
        self.target_ngram = target_ngram
        self.mu = mu
        v = target_ngram.vocab_size
        eos = target_ngram.vocab.eos
        self._uniform = np.full(v, 1.0 / (v - 1))
        self._uniform[eos] = 0.0
        self._lex_cache: dict[Sentence, np.ndarray] = {}

    @property
    def vocab(self) -> Vocabulary:
        return self.target_ngram.vocab

    @property
    def context_k(self) -> int:
        return self.target_ngram.context_k

    def lexical(self, source: Sentence) -> np.ndarray:
        source = tuple(source)
        vec = self._lex_cache.get(source)
        if vec is None:
            vec = np.zeros(self.target_ngram.vocab_size)
            for f in source:
                row = self.lexicon.row(f)
                vec += self._uniform if row is None else row
            vec /= len(source)
            self._lex_cache[source] = vec
        return vec

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "tm.cfg").write_text(f"{TM_HEADER}\nmu={self.mu!r}\n", encoding="utf-8")
        save_lexicon(self.lexicon, self.vocab, d / "lexicon.tsv")
        save_arpa(self.target_ngram, d / "target.arpa")

    @classmethod
    def load(cls, directory: str | Path, vocab: Vocabulary | None = None) -> "TranslationModel":
        d = Path(directory)
        cfg = (d / "tm.cfg").read_text(encoding="utf-8").splitlines()
        if not cfg or cfg[0].strip() != TM_HEADER:
            raise FormatError(f"expected header {TM_HEADER!r}", d / "tm.cfg", 1)
        kv = dict(line.split("=", 1) for line in cfg[1:] if "=" in line)
        ngram = load_arpa(d / "target.arpa", vocab)
        lex = load_lexicon(d / "lexicon.tsv", ngram.vocab)
        return cls(lex, ngram, float(kv.get("mu", 0.5)))


def train_tm(parallel: Sequence[tuple[Sentence, Sentence]] | None, vocab: Vocabulary, *, order: int = 4,
             discount: float = 0.75, mu: float = 0.5, iterations: int = 20,
             target_docs=None, context_k: int = 0) -> TranslationModel:
    """Train lexicon and target n-gram.

    ``target_docs`` (Documents) replaces the per-sentence target stream for
    the n-gram when document context is wanted.
    """
    lex = train_ibm1(parallel, len(vocab), iterations)
    ng_corpus = target_docs if target_docs is not None else [e for _, e in parallel]
    ngram = train_ngram(ng_corpus, vocab, order, discount, context_k=context_k)
    return TranslationModel(lex, ngram, mu)


def tm_step_dist(tm: TranslationModel, prefix: Sequence[int], source: Sentence,
                 context: Sequence[Sentence] = ()) -> np.ndarray:
    """Log distribution over the next target token.

    ``prefix`` is the generated target prefix without BOS; ``context`` is only
    used when the n-gram component was trained with document context.
    """
    v = tm.target_ngram.vocab_size
    if any(not 0 <= f < v for f in source) or any(not 0 <= e < v for e in prefix):
        raise ValueError("token id outside the model vocabulary")
    hist = tm.target_ngram.sequence_history(context) + list(prefix)
    p_ng = tm.target_ngram.prob_vector(hist)
    if len(source) == 0:
        logger.warning("empty source sentence: falling back to the target n-gram")
        p = p_ng
    else:
        p = tm.mu * tm.lexical(source) + (1.0 - tm.mu) * p_ng
    with np.errstate(divide="ignore"):
        return np.log(p / p.sum())


def exact_internal_lm(tm: TranslationModel) -> NGramLM:
    return tm.target_ngram


def estimate_ilm_separate(target_side: Iterable[Sentence], vocab: Vocabulary, order: int = 4,
                          discount: float = 0.75) -> NGramLM:
    """Sentence-level LM on the target side of the MT training data."""
    return train_ngram(list(target_side), vocab, order, discount, context_k=0)
