"""Corpus BLEU, targeted-word F1, contrastive accuracy and keyword accuracy."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Hashable, Iterable, Sequence

from .core import FormatError

Tokens = Sequence[Hashable]


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class BleuStats:
    matches: list[int]
    totals: list[int]
    hyp_len: int
    ref_len: int

    def precisions(self) -> list[float]:
        return [m / t if t else 0.0 for m, t in zip(self.matches, self.totals)]

    @property
    def brevity_penalty(self) -> float:
        if self.hyp_len == 0:
            return 0.0
        return min(1.0, math.exp(1.0 - self.ref_len / self.hyp_len))


def bleu_stats(hyps: Sequence[Tokens], refs: Sequence[Tokens], max_order: int = 4) -> BleuStats:
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise ValueError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    return BleuStats(matches, totals, hyp_len, ref_len)


def corpus_bleu(hyps: Sequence[Tokens], refs: Sequence[Tokens], max_order: int = 4,
                smooth_epsilon: float = 0.0) -> float:
    """Corpus BLEU in [0, 1] on pre-tokenized input.

    Without smoothing any zero n-gram precision makes the score 0; with
    ``smooth_epsilon`` > 0 zero match counts are replaced by epsilon.
    """
    st = bleu_stats(hyps, refs, max_order)
    log_sum = 0.0
    for m, t in zip(st.matches, st.totals):
        if m == 0:
            if smooth_epsilon <= 0 or t == 0:
                return 0.0
            m = smooth_epsilon
        log_sum += math.log(m / t)
    return st.brevity_penalty * math.exp(log_sum / max_order)


@dataclass
class F1Result:
    precision: float
    recall: float
    f1: float
    per_category: dict[str, float]
    no_targets: bool = False


def _prf(tp: int, n_hyp: int, n_ref: int) -> tuple[float, float, float]:
    p = tp / n_hyp if n_hyp else 0.0
    r = tp / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def targeted_f1(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[str]],
                categories: dict[str, Iterable[str]] | Sequence[Iterable[str]]) -> F1Result:
    """Pooled micro F1 over category tokens with per-line min-count matching."""
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not isinstance(categories, dict):
        categories = {str(i): c for i, c in enumerate(categories)}
    cats = {name: set(toks) for name, toks in categories.items()}
    names = list(cats)
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            if cats[names[a]] & cats[names[b]]:
                raise ValueError(f"categories {names[a]!r} and {names[b]!r} overlap")
    tp = {c: 0 for c in cats}
    nh = {c: 0 for c in cats}
    nr = {c: 0 for c in cats}
    for h, r in zip(hyps, refs):
        for c, toks in cats.items():
            ch = sum(1 for t in h if t in toks)
            cr = sum(1 for t in r if t in toks)
            tp[c] += min(ch, cr)
            nh[c] += ch
            nr[c] += cr
    p, r, f = _prf(sum(tp.values()), sum(nh.values()), sum(nr.values()))
    per = {c: _prf(tp[c], nh[c], nr[c])[2] for c in cats}
    return F1Result(p, r, f, per, no_targets=(sum(nh.values()) + sum(nr.values()) == 0))


@dataclass(frozen=True)
class ContrastiveExample:
    source: tuple
    context: tuple
    reference: tuple
    contrastive: tuple

    def __post_init__(self):
        if not self.contrastive:
            raise ValueError("contrastive example needs at least one variant")
        if any(tuple(c) == tuple(self.reference) for c in self.contrastive):
            raise ValueError("contrastive variant identical to the reference")


def contrastive_accuracy(scorer: Callable[[tuple, tuple, tuple], float],
                         examples: Sequence[ContrastiveExample]) -> float:
    """Fraction of examples whose reference strictly outscores every variant.

    ``scorer(sentence, context, source)`` returns a log score.
    """
    if not examples:
        raise ValueError("no contrastive examples")
    correct = 0
    for ex in examples:
        ref = scorer(ex.reference, ex.context, ex.source)
        if all(ref > scorer(alt, ex.context, ex.source) for alt in ex.contrastive):
            correct += 1
    return correct / len(examples)


@dataclass(frozen=True)
class KeywordExample:
    id: str
    correct_terms: frozenset[str]
    incorrect_terms: frozenset[str]

    def __post_init__(self):
        if not self.correct_terms:
            raise ValueError(f"keyword example {self.id}: empty correct set")
        if {t.lower() for t in self.correct_terms} & {t.lower() for t in self.incorrect_terms}:
            raise ValueError(f"keyword example {self.id}: correct and incorrect terms overlap")


def keyword_correct(hyp: Sequence[str], ex: KeywordExample) -> bool:
    toks = {t.lower() for t in hyp}
    good = {t.lower() for t in ex.correct_terms}
    bad = {t.lower() for t in ex.incorrect_terms}
    return bool(toks & good) and not (toks & bad)


def keyword_accuracy(hyps: Sequence[Sequence[str]], examples: Sequence[KeywordExample]) -> float:
    """Whole-token, case-insensitive: at least one correct term and no incorrect one."""
    if len(hyps) != len(examples):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(examples)} keyword examples")
    if not examples:
        raise ValueError("no keyword examples")
    return sum(keyword_correct(h, ex) for h, ex in zip(hyps, examples)) / len(examples)


# -- files ---------------------------------------------------------------------


def write_challenge_set(path: str | Path, examples: Sequence[ContrastiveExample]) -> None:
    """Blocks of SRC:, CTX: (repeatable), REF:, ALT: (repeatable) lines."""
    blocks = []
    for ex in examples:
        lines = [f"SRC: {' '.join(ex.source)}"]
        lines += [f"CTX: {' '.join(c)}" for c in ex.context]
        lines.append(f"REF: {' '.join(ex.reference)}")
        lines += [f"ALT: {' '.join(a)}" for a in ex.contrastive]
        blocks.append("\n".join(lines) + "\n")
    Path(path).write_text("\n".join(blocks), encoding="utf-8")


def read_challenge_set(path: str | Path) -> list[ContrastiveExample]:
    examples = []
    block: dict[str, list] = {}
    start = 1

    def flush(lineno):
        if not block:
            return
        for key in ("SRC", "REF", "ALT"):
            if key not in block:
                raise FormatError(f"block has no {key} line", path, start)
        if len(block["SRC"]) != 1 or len(block["REF"]) != 1:
            raise FormatError("block needs exactly one SRC and one REF line", path, start)
        try:
            examples.append(ContrastiveExample(block["SRC"][0], tuple(block.get("CTX", [])), block["REF"][0],
                                               tuple(block["ALT"])))
        except ValueError as exc:
            raise FormatError(str(exc), path, start) from None

    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            flush(n)
            block = {}
            continue
        if not block:
            start = n
        key, sep, rest = line.partition(":")
        if not sep or key not in ("SRC", "CTX", "REF", "ALT"):
            raise FormatError(f"unexpected line {line!r}", path, n)
        if key == "CTX" and ("REF" in block or "ALT" in block):
            raise FormatError("CTX after REF/ALT", path, n)
        block.setdefault(key, []).append(tuple(rest.split()))
    flush(None)
    return examples


def write_keywords(path: str | Path, examples: Sequence[KeywordExample]) -> None:
    lines = [f"{ex.id}\t{','.join(sorted(ex.correct_terms))}\t{','.join(sorted(ex.incorrect_terms))}"
             for ex in examples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_keywords(path: str | Path) -> list[KeywordExample]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise FormatError("expected 'id<TAB>correct,list<TAB>incorrect,list'", path, n)
        good = frozenset(t for t in fields[1].split(",") if t)
        bad = frozenset(t for t in fields[2].split(",") if t)
        try:
            out.append(KeywordExample(fields[0], good, bad))
        except ValueError as exc:
            raise FormatError(str(exc), path, n) from None
    return out


def format_report(rows: dict[str, float | str]) -> str:
    """Aligned key-value lines in insertion order."""
    width = max((len(k) for k in rows), default=0)
    out = []
    for k, v in rows.items():
        out.append(f"{k.ljust(width)}  {v:.6f}" if isinstance(v, float) else f"{k.ljust(width)}  {v}")
    return "\n".join(out) + "\n"
