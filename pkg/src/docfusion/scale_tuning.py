"""Fusion-scale tuning: grid search on a validation set and gradient-based
learning of per-subword scales with frozen models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Document, FormatError, ParallelDocument, Sentence, Vocabulary, context_window
from .decoder import DecodeConfig, FusionModels, decode_document
from .evaluation import corpus_bleu
from .fusion import FusionScales, ScaleGrid
from .ngram_lm import cond_logdist
from .translation_model import tm_step_dist

logger = logging.getLogger(__name__)

SCALE_TABLE_HEADER = "scale-table 1"


@dataclass(frozen=True)
class TuneExample:
    source: Sentence
    target: Sentence
    context: tuple[Sentence, ...] = ()


class ScaleDivergence(RuntimeError):
    pass


@dataclass
class Features:
    """Per-position log-probabilities of the three frozen models.

    Rows cover every reference token plus EOS; ``example`` maps rows back to
    their TuneExample.
    """

    tm: np.ndarray
    lm: np.ndarray
    ilm: np.ndarray
    target: np.ndarray
    example: np.ndarray

    def __len__(self) -> int:
        return len(self.target)

    def subset(self, rows: np.ndarray) -> "Features":
        return Features(self.tm[rows], self.lm[rows], self.ilm[rows], self.target[rows], self.example[rows])


def examples_from_docs(docs: Sequence[ParallelDocument], k: int = 2) -> list[TuneExample]:
    """(F, E, E_-k..-1) triples with reference target context."""
    out = []
    for d in docs:
        tgt = d.target_doc()
        for i, (src, ref) in enumerate(d.pairs):
            out.append(TuneExample(src, ref, tuple(context_window(tgt, i, k))))
    return out


def compute_features(examples: Sequence[TuneExample], models: FusionModels) -> Features:
    if models.lm is None or models.ilm is None:
        raise ValueError("feature extraction needs document LM and internal LM")
    eos = models.tm.vocab.eos
    tm_rows, lm_rows, ilm_rows, ys, ex = [], [], [], [], []
    bos = [models.tm.vocab.bos]
    for n, exm in enumerate(examples):
        lm_hist = models.lm.sequence_history(exm.context)
        seq = list(exm.target) + [eos]
        for i, tok in enumerate(seq):
            prefix = seq[:i]
            tm_rows.append(tm_step_dist(models.tm, prefix, exm.source, exm.context))
            lm_rows.append(cond_logdist(models.lm, lm_hist + prefix))
            ilm_rows.append(cond_logdist(models.ilm, bos + prefix))
            ys.append(tok)
            ex.append(n)
    feats = Features(np.array(tm_rows), np.array(lm_rows), np.array(ilm_rows), np.array(ys, dtype=np.int64),
                     np.array(ex, dtype=np.int64))
    if not (np.isfinite(feats.tm).all() and np.isfinite(feats.lm).all() and np.isfinite(feats.ilm).all()):
        raise ValueError("model assigns zero probability to some token; cannot learn scales")
    return feats


def _loss_grad_table(feats: Features, table: np.ndarray) -> tuple[float, np.ndarray]:
    scores = table[:, 0] * feats.tm + table[:, 1] * feats.lm - table[:, 2] * feats.ilm
    m = scores.max(axis=1, keepdims=True)
    logz = m[:, 0] + np.log(np.exp(scores - m).sum(axis=1))
    rows = np.arange(len(feats))
    loss = float(np.sum(logz - scores[rows, feats.target]))
    g = np.exp(scores - logz[:, None])
    g[rows, feats.target] -= 1.0
    grad = np.stack([(g * feats.tm).sum(axis=0), (g * feats.lm).sum(axis=0), -(g * feats.ilm).sum(axis=0)], axis=1)
    return loss, grad


def scale_loss_and_grad(batch: Sequence[TuneExample] | Features, table: np.ndarray,
                        models: FusionModels | None = None) -> tuple[float, np.ndarray]:
    """Summed cross-entropy of the references and its gradient w.r.t. the
    (|V|, 3) per-subword scale table."""
    feats = batch if isinstance(batch, Features) else compute_features(batch, models)
    return _loss_grad_table(feats, np.asarray(table, dtype=float))


class ScaleParameterization:
    """Maps a free parameter vector to a (|V|, 3) table.

    restricted: lambda0 = 1, lambda1 = lambda2 = theta(e).
    tied: one value shared by all subwords.
    """

    def __init__(self, vocab_size: int, restricted: bool = True, tied: bool = False):
        self.vocab_size = vocab_size
        self.restricted = restricted
        self.tied = tied

    @property
    def size(self) -> int:
        per = 1 if self.restricted else 3
        return per if self.tied else per * self.vocab_size

    def table(self, theta: np.ndarray) -> np.ndarray:
        v = self.vocab_size
        if self.restricted:
            lam = np.full(v, theta[0]) if self.tied else theta
            return np.stack([np.ones(v), lam, lam], axis=1)
        return np.tile(theta.reshape(1, 3), (v, 1)) if self.tied else theta.reshape(v, 3).copy()

    def pull_back(self, grad_table: np.ndarray) -> np.ndarray:
        if self.restricted:
            g = grad_table[:, 1] + grad_table[:, 2]
            return np.array([g.sum()]) if self.tied else g
        return grad_table.sum(axis=0) if self.tied else grad_table.reshape(-1)

    def init(self, rng: np.random.Generator, init_std: float) -> np.ndarray:
        return rng.normal(0.0, init_std, size=self.size)


@dataclass
class LearnResult:
    table: np.ndarray
    theta: np.ndarray
    trace: list[float] = field(default_factory=list)    # mean per-token loss, before epoch 1 then per epoch


def learn_subword_scales(train: Sequence[TuneExample] | Features, models: FusionModels | None = None, *,
                         vocab_size: int | None = None, restricted: bool = True, tied: bool = False,
                         init_std: float = 0.01, lr: float = 0.1, epochs: int = 20, batch_size: int = 32,
                         seed: int = 0) -> LearnResult:
    """Mini-batch gradient descent on the mean per-token cross-entropy.

    Examples are reshuffled every epoch with a generator seeded by ``seed``.
    Scales are not clamped, so learned values may go negative.
    """
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    feats = train if isinstance(train, Features) else compute_features(train, models)
    if vocab_size is None:
        vocab_size = feats.tm.shape[1]
    param = ScaleParameterization(vocab_size, restricted, tied)
    rng = np.random.default_rng(seed)
    theta = param.init(rng, init_std)
    n_tokens = len(feats)
    n_examples = int(feats.example.max()) + 1 if n_tokens else 0
    rows_of = [np.nonzero(feats.example == i)[0] for i in range(n_examples)]

    def full_loss(th):
        return _loss_grad_table(feats, param.table(th))[0] / n_tokens

    trace = [full_loss(theta)]
    for epoch in range(epochs):
        order = rng.permutation(n_examples)
        for start in range(0, n_examples, batch_size):
            rows = np.concatenate([rows_of[i] for i in order[start:start + batch_size]])
            sub = feats.subset(rows)
            _, gtab = _loss_grad_table(sub, param.table(theta))
            theta = theta - lr * param.pull_back(gtab) / len(rows)
        trace.append(full_loss(theta))
        logger.debug("epoch %d: loss %.6f", epoch + 1, trace[-1])
        if not np.isfinite(trace[-1]) or trace[-1] > 10 * trace[0]:
            raise ScaleDivergence(f"loss diverged at epoch {epoch + 1}: {trace[-1]:.4g} (initial {trace[0]:.4g}); "
                                  f"lower the learning rate")
    return LearnResult(param.table(theta), theta, trace)


@dataclass
class GridReport:
    best: FusionScales
    rows: list[tuple[FusionScales, float]]
    objective: str

    def format(self) -> str:
        name = "BLEU" if self.objective == "bleu" else "CE"
        lines = [f"lambda0\tlambda1\tlambda2\t{name}"]
        lines += [f"{s.tm:.2f}\t{s.lm:.2f}\t{s.ilm:.2f}\t{v:.6f}" for s, v in self.rows]
        return "\n".join(lines)


def grid_search_scales(models: FusionModels, valid: Sequence[ParallelDocument], grid: ScaleGrid,
                       objective: str = "bleu", config: DecodeConfig | None = None, k: int = 2,
                       mode: str = "static") -> GridReport:
    """Pick the grid triple maximizing validation BLEU (decoding every point)
    or minimizing reference cross-entropy.  Ties keep the smallest triple."""
    if not valid or sum(len(d) for d in valid) == 0:
        raise ValueError("empty validation set")
    objective = objective.lower()
    if objective not in ("bleu", "ce"):
        raise ValueError(f"unknown objective {objective!r}")
    config = config or DecodeConfig()
    rows: list[tuple[FusionScales, float]] = []
    best, best_val = None, None
    if objective == "ce":
        feats = compute_features(examples_from_docs(valid, k), models)
        for s in grid.triples():
            table = np.tile(np.array(s.as_tuple()), (feats.tm.shape[1], 1))
            val = _loss_grad_table(feats, table)[0]
            rows.append((s, val))
            if best_val is None or val < best_val:
                best, best_val = s, val
    else:
        refs = [t for d in valid for t in d.target]
        for s in grid.triples():
            cfg = config.with_(fusion_mode=mode, scales=s)
            hyps = [r.tokens for d in valid for r in decode_document(models, cfg, d.source_doc(), k)]
            val = corpus_bleu(hyps, refs)
            rows.append((s, val))
            logger.info("grid %s: BLEU %.4f", s.as_tuple(), val)
            if best_val is None or val > best_val:
                best, best_val = s, val
    return GridReport(best, rows, objective)


def make_tuning_data(mono_docs: Sequence[Document], reverse_tm, config: DecodeConfig | None = None,
                     k: int = 2) -> list[TuneExample]:
    """Back-translate monolingual documents; targets and contexts stay authentic."""
    from .backtranslation import back_translate_docs

    synthetic = back_translate_docs(reverse_tm, mono_docs, beam=(config.beam_size if config else 4))
    return examples_from_docs(synthetic, k)


# -- persistence ----------------------------------------------------------------


def save_scale_table(table: np.ndarray, vocab: Vocabulary, path: str | Path) -> None:
    lines = [SCALE_TABLE_HEADER]
    for i, tok in enumerate(vocab.tokens):
        lines.append("\t".join([tok] + [f"{x:.12g}" for x in table[i]]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_scale_table(path: str | Path, vocab: Vocabulary) -> np.ndarray:
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    if not raw or raw[0].strip() != SCALE_TABLE_HEADER:
        raise FormatError(f"expected header {SCALE_TABLE_HEADER!r}", path, 1)
    body = [ln for ln in raw[1:] if ln.strip()]
    if len(body) != len(vocab):
        raise FormatError(f"expected {len(vocab)} rows, found {len(body)}", path)
    table = np.zeros((len(vocab), 3))
    for i, line in enumerate(body):
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError("expected 'token<TAB>l0<TAB>l1<TAB>l2'", path, i + 2)
        if fields[0] != vocab.decode_id(i):
            raise FormatError(f"token {fields[0]!r} does not match vocabulary entry {vocab.decode_id(i)!r}", path, i + 2)
        try:
            table[i] = [float(x) for x in fields[1:]]
        except ValueError:
            raise FormatError("non-numeric scale", path, i + 2) from None
        if not np.isfinite(table[i]).all():
            raise FormatError("non-finite scale", path, i + 2)
    return table
