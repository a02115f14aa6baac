"""Beam search over fused step scores, last-sentence document decoding and
pronoun re-ranking."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import Document, Sentence, truncate_context
from .fusion import (FusionScales, ScaleGrid, fuse_step, fuse_step_context_delta, fuse_step_subword,
                     on_the_fly_step, restricted_grid)
from .ngram_lm import NGramLM, cond_logdist, score_sequence
from .translation_model import TranslationModel, tm_step_dist

logger = logging.getLogger(__name__)

FUSION_MODES = ("none", "static", "context_delta", "on_the_fly", "learned")


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 12
    length_norm_alpha: float = 1.0
    max_len_a: float = 3.0
    max_len_b: int = 5
    fusion_mode: str = "none"
    scales: FusionScales = FusionScales()
    grid: ScaleGrid = field(default_factory=restricted_grid)
    scale_table: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.length_norm_alpha < 0:
            raise ValueError("length_norm_alpha must be >= 0")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.fusion_mode!r}; expected one of {FUSION_MODES}")
        if self.fusion_mode == "learned" and self.scale_table is None:
            raise ValueError("fusion mode 'learned' needs a scale table")

    def max_len(self, source_len: int) -> int:
        return int(self.max_len_a * source_len + self.max_len_b)

    def with_(self, **kw) -> "DecodeConfig":
        return replace(self, **kw)


@dataclass
class FusionModels:
    tm: TranslationModel
    lm: NGramLM | None = None
    ilm: NGramLM | None = None

    def check(self, mode: str) -> None:
        if mode == "none":
            return
        if self.lm is None:
            raise ValueError(f"fusion mode {mode!r} needs a document LM")
        if mode != "context_delta" and self.ilm is None:
            raise ValueError(f"fusion mode {mode!r} needs an internal LM")
        for m in (self.lm, self.ilm):
            if m is not None and m.vocab != self.tm.vocab:
                raise ValueError("models do not share a vocabulary")


@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    score: float
    finished: bool


@dataclass
class DecodeResult:
    tokens: Sentence
    score: float              # length-normalized
    raw_score: float
    finished: bool
    trace: list[tuple[int, int, tuple[float, float, float]]] = field(default_factory=list)


class StepScorer:
    """Per-step log-scores for one source sentence and its target context.

    BOS and SEP are never generated and get -inf.
    """

    def __init__(self, models: FusionModels, config: DecodeConfig, source: Sentence,
                 context: Sequence[Sentence] = ()):
        models.check(config.fusion_mode)
        self.models = models
        self.config = config
        self.source = tuple(source)
        self.context = list(context)
        vocab = models.tm.vocab
        self._mask = np.zeros(len(vocab))
        self._mask[[vocab.bos, vocab.sep]] = -np.inf
        self._lm_prefix = models.lm.sequence_history(self.context) if models.lm is not None else None
        self._bos = [vocab.bos]
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def components(self, prefix: Sequence[int]):
        m = self.models
        d_tm = tm_step_dist(m.tm, prefix, self.source, self.context)
        d_lm = cond_logdist(m.lm, self._lm_prefix + list(prefix)) if m.lm is not None else None
        d_ilm = cond_logdist(m.ilm, self._bos + list(prefix)) if m.ilm is not None else None
        return d_tm, d_lm, d_ilm

    def chosen_scales(self, prefix: Sequence[int]) -> np.ndarray:
        d_tm, d_lm, d_ilm = self.components(prefix)
        return on_the_fly_step(d_tm, d_lm, d_ilm, self.config.grid).scales

    def __call__(self, prefix: tuple[int, ...]) -> np.ndarray:
        out = self._cache.get(prefix)
        if out is not None:
            return out
        mode = self.config.fusion_mode
        if mode == "none":
            out = tm_step_dist(self.models.tm, prefix, self.source, self.context)
        elif mode == "context_delta":
            d_tm = tm_step_dist(self.models.tm, prefix, self.source, self.context)
            lm = self.models.lm
            d_ctx = cond_logdist(lm, self._lm_prefix + list(prefix))
            d_noctx = cond_logdist(lm, self._bos + list(prefix))
            out = fuse_step_context_delta(d_tm, d_ctx, d_noctx, self.config.scales)
        else:
            d_tm, d_lm, d_ilm = self.components(prefix)
            if mode == "static":
                out = fuse_step(d_tm, d_lm, d_ilm, self.config.scales)
            elif mode == "on_the_fly":
                out = on_the_fly_step(d_tm, d_lm, d_ilm, self.config.grid).scores
            else:
                out = fuse_step_subword(d_tm, d_lm, d_ilm, self.config.scale_table)
        out = out + self._mask
        self._cache[prefix] = out
        return out


def normalized(score: float, length: int, alpha: float) -> float:
    return score / (length ** alpha) if alpha else score


def beam_search(step_fn: Callable[[tuple[int, ...]], np.ndarray], eos: int, beam_size: int,
                max_len: int, alpha: float = 1.0) -> DecodeResult:
    """Beam search with pruning on running score and final ranking on
    score / length**alpha (length counts EOS).

    Ties are broken by the token sequence, lexicographically.
    """
    live = [Hypothesis((), 0.0, False)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        if not live:
            break
        rows = np.stack([h.score + step_fn(h.tokens) for h in live])
        flat = rows.ravel()
        n_finite = int(np.isfinite(flat).sum())
        if n_finite == 0:
            live = []
            break
        keep = min(beam_size, n_finite)
        threshold = np.partition(flat, len(flat) - keep)[len(flat) - keep]
        idx = np.nonzero(flat >= threshold)[0]
        v = rows.shape[1]
        cands = [(float(flat[i]), live[i // v].tokens + (int(i % v),)) for i in idx]
        cands.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for score, tokens in cands[:keep]:
            if tokens[-1] == eos:
                finished.append(Hypothesis(tokens, score, True))
            else:
                live.append(Hypothesis(tokens, score, False))
    pool = finished if finished else live
    if not pool:
        return DecodeResult((), float("-inf"), float("-inf"), False)
    best = min(pool, key=lambda h: (-normalized(h.score, len(h.tokens), alpha), h.tokens))
    tokens = best.tokens[:-1] if best.finished else best.tokens
    if not best.finished:
        logger.warning("no finished hypothesis within %d steps", max_len)
    return DecodeResult(tuple(tokens), normalized(best.score, len(best.tokens), alpha), best.score,
                        best.finished)


def beam_decode(models: FusionModels, config: DecodeConfig, source: Sentence,
                context: Sequence[Sentence] = (), trace: bool = False) -> DecodeResult:
    scorer = StepScorer(models, config, source, context)
    res = beam_search(scorer, models.tm.vocab.eos, config.beam_size, config.max_len(len(source)),
                      config.length_norm_alpha)
    if trace and config.fusion_mode == "on_the_fly":
        seq = list(res.tokens) + ([models.tm.vocab.eos] if res.finished else [])
        for i, tok in enumerate(seq):
            s = scorer.chosen_scales(tuple(seq[:i]))[tok]
            res.trace.append((i, tok, tuple(float(x) for x in s)))
    return res


def decode_document(models: FusionModels, config: DecodeConfig, doc: Document | Sequence[Sentence],
                    k: int = 2, trace: bool = False) -> list[DecodeResult]:
    """Decode sentences in order, conditioning on the 1-best outputs of the
    previous ``k`` sentences."""
    if k < 0:
        raise ValueError("k must be >= 0")
    sentences = doc.sentences if isinstance(doc, Document) else doc
    outputs: list[DecodeResult] = []
    for src in sentences:
        ctx = truncate_context([o.tokens for o in outputs], k)
        try:
            res = beam_decode(models, config, src, ctx, trace=trace)
        except ValueError as exc:
            logger.error("decoding failed: %s", exc)
            res = DecodeResult((), float("-inf"), float("-inf"), False)
        outputs.append(res)
    return outputs


def score_reference(models: FusionModels, config: DecodeConfig, source: Sentence,
                    context: Sequence[Sentence], target: Sentence) -> float:
    """Sum of step scores of ``target`` + EOS under the active fusion mode."""
    scorer = StepScorer(models, config, source, context)
    total = 0.0
    seq = list(target) + [models.tm.vocab.eos]
    for i, tok in enumerate(seq):
        total += float(scorer(tuple(seq[:i]))[tok])
    return total


def rerank_pronouns(hyp: Sentence, doc_lm: NGramLM, context: Sequence[Sentence],
                    pronouns: Sequence[int], cap: int = 81) -> Sentence:
    """Swap each pronoun for the alternative the document LM scores highest.

    Candidates are the Cartesian product of alternatives over all pronoun
    positions; beyond ``cap`` candidates positions are chosen greedily left
    to right.  Ties keep the original hypothesis.
    """
    if not pronouns:
        raise ValueError("empty pronoun set")
    eos = doc_lm.vocab.eos
    alts = [p for p in dict.fromkeys(pronouns) if p != eos]
    hyp = tuple(hyp)
    positions = [i for i, t in enumerate(hyp) if t in alts]
    if not positions:
        return hyp

    def score(seq):
        return score_sequence(doc_lm, seq, context)

    best, best_score = hyp, score(hyp)
    if len(alts) ** len(positions) <= cap:
        for choice in itertools.product(alts, repeat=len(positions)):
            cand = list(hyp)
            for pos, tok in zip(positions, choice):
                cand[pos] = tok
            cand = tuple(cand)
            if cand == hyp:
                continue
            s = score(cand)
            if s > best_score:
                best, best_score = cand, s
        return best
    current = list(hyp)
    for pos in positions:
        for tok in alts:
            if tok == current[pos]:
                continue
            cand = current.copy()
            cand[pos] = tok
            s = score(tuple(cand))
            if s > best_score:
                current, best_score = cand, s
    return tuple(current)
