"""End-to-end experiments on the synthetic corpus.

``Experiment`` builds every model lazily from one ``RunConfig`` and evaluates
named systems on the general test split (BLEU) and the pronoun challenge set
(pronoun F1, contrastive accuracy, keyword accuracy).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .backtranslation import back_translate_docs, combine_balanced, make_pseudo_documents, sentence_documents
from .config import RunConfig
from .core import Document, ParallelDocument, Vocabulary, build_vocab
from .decoder import DecodeConfig, FusionModels, beam_decode, decode_document, rerank_pronouns, score_reference
from .evaluation import contrastive_accuracy, corpus_bleu, keyword_accuracy, targeted_f1
from .fusion import FusionScales, ScaleGrid, restricted_grid, full_grid
from .ngram_lm import NGramLM, score_sequence, train_ngram
from .scale_tuning import (LearnResult, compute_features, examples_from_docs, grid_search_scales,
                           learn_subword_scales)
from .syncorpus import PRONOUNS, GrammarSpec, SynCorpus, generate
from .translation_model import TranslationModel, estimate_ilm_separate, train_tm

logger = logging.getLogger(__name__)

SYSTEMS = ("baseline", "static", "on_the_fly", "learned", "context_delta", "rerank",
           "doc_bt", "doc_bt+static", "sent_bt")
REPORT_COLUMNS = ("system", "BLEU", "pronF1", "contrAcc", "kwAcc")


@dataclass
class System:
    name: str
    models: FusionModels
    config: DecodeConfig
    rerank: bool = False


@dataclass
class SystemResult:
    name: str
    bleu: float
    pron_f1: float
    contr_acc: float
    kw_acc: float
    challenge_hyps: list[list[str]] = field(default_factory=list, repr=False)
    seconds: float = 0.0

    def row(self) -> str:
        return "\t".join([self.name] + [f"{100 * x:.2f}" for x in (self.bleu, self.pron_f1, self.contr_acc,
                                                                    self.kw_acc)])


def format_table(results: list[SystemResult]) -> str:
    return "\t".join(REPORT_COLUMNS) + "\n" + "".join(r.row() + "\n" for r in results)


def _encode_parallel(vocab: Vocabulary, docs, prefix: str) -> list[ParallelDocument]:
    return [ParallelDocument(f"{prefix}{i}", tuple(vocab.encode(s) for s in src), tuple(vocab.encode(t) for t in tgt))
            for i, (src, tgt) in enumerate(docs)]


def grammar_spec(cfg: RunConfig) -> GrammarSpec:
    return GrammarSpec(pronoun_rate=cfg.pronoun_rate, general_pronoun_rate=cfg.general_pronoun_rate,
                       domain=cfg.domain, seed=cfg.seed)


def make_corpus(cfg: RunConfig) -> SynCorpus:
    return generate(grammar_spec(cfg), n_parallel_docs=cfg.n_parallel_docs, n_mono_docs=cfg.n_mono_docs,
                    n_challenge=cfg.n_challenge, n_valid_docs=cfg.n_valid_docs, n_test_docs=cfg.n_test_docs,
                    k=cfg.k)


def corpus_vocab(corpus: SynCorpus) -> Vocabulary:
    """Vocabulary over the training data plus the closed grammar lexicon."""
    sents = [s for src, tgt in corpus.parallel for s in src + tgt]
    sents += [s for d in corpus.mono for s in d]
    sents.append(corpus.spec.all_words())
    return build_vocab(sents)


class Experiment:
    def __init__(self, cfg: RunConfig | None = None):
        self.cfg = cfg or RunConfig()
        self.timings: dict[str, float] = {}

    def _timed(self, name: str, fn: Callable):
        t = time.perf_counter()
        out = fn()
        self.timings[name] = time.perf_counter() - t
        logger.info("%s: %.2fs", name, self.timings[name])
        return out

    # -- data -------------------------------------------------------------

    @cached_property
    def corpus(self) -> SynCorpus:
        return make_corpus(self.cfg)

    @cached_property
    def vocab(self) -> Vocabulary:
        return corpus_vocab(self.corpus)

    @cached_property
    def parallel(self) -> list[ParallelDocument]:
        return _encode_parallel(self.vocab, self.corpus.parallel, "train")

    @cached_property
    def pairs(self):
        """Authentic data is treated as sentence-level parallel text."""
        return [p for d in self.parallel for p in d.pairs]

    @cached_property
    def valid(self) -> list[ParallelDocument]:
        return _encode_parallel(self.vocab, self.corpus.valid, "valid")

    @cached_property
    def test(self) -> list[ParallelDocument]:
        return _encode_parallel(self.vocab, self.corpus.test, "test")

    @cached_property
    def mono(self) -> list[Document]:
        v = self.vocab
        return [Document(f"mono{i}", tuple(v.encode(s) for s in d)) for i, d in enumerate(self.corpus.mono)]

    @cached_property
    def pronoun_ids(self) -> list[int]:
        return [self.vocab.lookup(p) for p in PRONOUNS.values()]

    # -- models -----------------------------------------------------------

    def decode_config(self, **kw) -> DecodeConfig:
        base = DecodeConfig(beam_size=self.cfg.beam, length_norm_alpha=self.cfg.alpha, grid=self.grid)
        return base.with_(**kw)

    @cached_property
    def grid(self) -> ScaleGrid:
        make = restricted_grid if self.cfg.restricted else full_grid
        return make(self.cfg.grid_step, self.cfg.grid_upper)

    def _tm(self, pairs, target_docs=None, context_k=0) -> TranslationModel:
        c = self.cfg
        return train_tm(pairs, self.vocab, order=c.order, discount=c.discount, mu=c.mu,
                        iterations=c.ibm_iterations, target_docs=target_docs, context_k=context_k)

    @cached_property
    def tm(self) -> TranslationModel:
        return self._timed("train_tm", lambda: self._tm(self.pairs))

    @cached_property
    def reverse_tm(self) -> TranslationModel:
        return self._timed("train_reverse_tm", lambda: self._tm([(e, f) for f, e in self.pairs]))

    @cached_property
    def doc_lm(self) -> NGramLM:
        c = self.cfg
        return self._timed("train_doc_lm", lambda: train_ngram(self.mono, self.vocab, c.order, c.discount,
                                                               context_k=c.k))

    @cached_property
    def fusion_models(self) -> FusionModels:
        return FusionModels(self.tm, self.doc_lm, self.tm.target_ngram)

    @cached_property
    def back_translated(self) -> list[ParallelDocument]:
        return self._timed("back_translate", lambda: back_translate_docs(
            self.reverse_tm, self.mono, beam=self.cfg.bt_beam, config=self.decode_config()))

    def bt_bundle(self, document_level: bool = True):
        if document_level:
            authentic = make_pseudo_documents(self.pairs, (self.cfg.pseudo_doc_min, self.cfg.pseudo_doc_max),
                                              seed=self.cfg.seed)
            synthetic = self.back_translated
        else:
            authentic = sentence_documents(self.pairs, "auth")
            synthetic = sentence_documents([p for d in self.back_translated for p in d.pairs], "bt")
        return combine_balanced(authentic, synthetic)

    def _bt_tm(self, document_level: bool) -> TranslationModel:
        bundle = self.bt_bundle(document_level)
        docs = [d.target_doc() for d in bundle.documents()]
        return self._tm(bundle.pairs(), target_docs=docs, context_k=self.cfg.k if document_level else 0)

    @cached_property
    def doc_bt_tm(self) -> TranslationModel:
        return self._timed("train_doc_bt_tm", lambda: self._bt_tm(True))

    @cached_property
    def sent_bt_tm(self) -> TranslationModel:
        return self._timed("train_sent_bt_tm", lambda: self._bt_tm(False))

    @cached_property
    def bt_ilm(self) -> NGramLM:
        """Separately estimated sentence-level ILM for the back-translation system."""
        target_side = [e for _, e in self.bt_bundle(True).pairs()]
        return estimate_ilm_separate(target_side, self.vocab, self.cfg.order, self.cfg.discount)

    # -- scale tuning -----------------------------------------------------

    def tune(self, models: FusionModels, mode: str = "static") -> FusionScales:
        c = self.cfg
        rep = grid_search_scales(models, self.valid, self.grid, objective=c.objective,
                                 config=self.decode_config(), k=c.k, mode=mode)
        logger.info("tuned %s scales: %s", mode, rep.best.as_tuple())
        return rep.best

    @cached_property
    def static_scales(self) -> FusionScales:
        return self._timed("tune_static", lambda: self.tune(self.fusion_models))

    @cached_property
    def context_delta_scales(self) -> FusionScales:
        return self._timed("tune_context_delta", lambda: self.tune(self.fusion_models, "context_delta"))

    @cached_property
    def bt_fusion_models(self) -> FusionModels:
        return FusionModels(self.doc_bt_tm, self.doc_lm, self.bt_ilm)

    @cached_property
    def bt_static_scales(self) -> FusionScales:
        return self._timed("tune_bt_static", lambda: self.tune(self.bt_fusion_models))

    @cached_property
    def tuning_docs(self) -> list[ParallelDocument]:
        """Back-translated monolingual documents used as scale-learning data."""
        return self.back_translated[: self.cfg.n_tune_docs]

    def learn_scales(self, docs, restricted: bool = True, tied: bool = False) -> LearnResult:
        c = self.cfg
        feats = compute_features(examples_from_docs(docs, c.k), self.fusion_models)
        return learn_subword_scales(feats, vocab_size=len(self.vocab), restricted=restricted, tied=tied,
                                    init_std=c.init_std, lr=c.lr, epochs=c.epochs, batch_size=c.batch_size,
                                    seed=c.seed)

    @cached_property
    def learned_scales(self) -> LearnResult:
        return self._timed("learn_scales", lambda: self.learn_scales(self.tuning_docs))

    # -- systems ----------------------------------------------------------

    def system(self, name: str) -> System:
        dc = self.decode_config
        if name == "baseline":
            return System(name, FusionModels(self.tm), dc())
        if name == "static":
            return System(name, self.fusion_models, dc(fusion_mode="static", scales=self.static_scales))
        if name == "on_the_fly":
            return System(name, self.fusion_models, dc(fusion_mode="on_the_fly"))
        if name == "learned":
            return System(name, self.fusion_models, dc(fusion_mode="learned", scale_table=self.learned_scales.table))
        if name == "context_delta":
            return System(name, FusionModels(self.tm, self.doc_lm),
                          dc(fusion_mode="context_delta", scales=self.context_delta_scales))
        if name == "rerank":
            return System(name, FusionModels(self.tm, self.doc_lm), dc(), rerank=True)
        if name == "doc_bt":
            return System(name, FusionModels(self.doc_bt_tm), dc())
        if name == "doc_bt+static":
            return System(name, self.bt_fusion_models, dc(fusion_mode="static", scales=self.bt_static_scales))
        if name == "sent_bt":
            return System(name, FusionModels(self.sent_bt_tm), dc())
        raise KeyError(f"unknown system {name!r}; expected one of {SYSTEMS}")

    # -- evaluation -------------------------------------------------------

    def _rerank(self, hyp, context):
        return rerank_pronouns(hyp, self.doc_lm, context, self.pronoun_ids)

    def decode_test(self, system: System) -> list[tuple[int, ...]]:
        out = []
        for d in self.test:
            results = decode_document(system.models, system.config, d.source_doc(), self.cfg.k)
            hyps: list[tuple[int, ...]] = []
            for r in results:
                h = r.tokens
                if system.rerank:
                    h = self._rerank(h, hyps[-self.cfg.k:] if self.cfg.k else [])
                hyps.append(h)
            out.extend(hyps)
        return out

    def decode_challenge(self, system: System) -> list[tuple[int, ...]]:
        v = self.vocab
        out = []
        for ex in self.corpus.challenge:
            ctx = [v.encode(c) for c in ex.context]
            h = beam_decode(system.models, system.config, v.encode(ex.source), ctx).tokens
            if system.rerank:
                h = self._rerank(h, ctx)
            out.append(h)
        return out

    def contrastive_scorer(self, system: System):
        v = self.vocab
        if system.rerank:
            return lambda sent, ctx, src: score_sequence(self.doc_lm, v.encode(sent), [v.encode(c) for c in ctx],
                                                         eos=True)
        return lambda sent, ctx, src: score_reference(system.models, system.config, v.encode(src),
                                                      [v.encode(c) for c in ctx], v.encode(sent))

    def evaluate(self, name: str) -> SystemResult:
        system = self.system(name)
        t = time.perf_counter()
        v = self.vocab
        test_hyps = self.decode_test(system)
        refs = [list(t) for d in self.test for t in d.target]
        bleu = corpus_bleu(test_hyps, refs)
        ch = [v.decode(h).split() for h in self.decode_challenge(system)]
        ch_refs = [list(ex.reference) for ex in self.corpus.challenge]
        cats = {g: [p] for g, p in PRONOUNS.items()}
        f1 = targeted_f1(ch, ch_refs, cats).f1
        contr = contrastive_accuracy(self.contrastive_scorer(system), self.corpus.challenge)
        kw = keyword_accuracy(ch, self.corpus.keywords)
        res = SystemResult(name, bleu, f1, contr, kw, ch, time.perf_counter() - t)
        logger.info("%s  (%.1fs)", res.row(), res.seconds)
        return res

    def pronoun_accuracy(self, system: System) -> float:
        ch = [self.vocab.decode(h).split() for h in self.decode_challenge(system)]
        return keyword_accuracy(ch, self.corpus.keywords)

    def run(self, systems=SYSTEMS) -> list[SystemResult]:
        return [self.evaluate(s) for s in systems]

    def manifest(self) -> dict[str, float | str]:
        return dict(self.corpus.manifest)


def learned_scale_summary(result: LearnResult, vocab: Vocabulary, words) -> dict[str, float]:
    return {w: float(result.table[vocab.lookup(w), 1]) for w in words}


def mean_lm_scale(result: LearnResult, ids) -> float:
    return float(np.mean(result.table[list(ids), 1]))
