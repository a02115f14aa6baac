"""Synthetic parallel documents from monolingual text, pseudo-documents and
size balancing of authentic and synthetic data."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .core import Document, ParallelDocument, Sentence
from .decoder import DecodeConfig, FusionModels, beam_decode
from .translation_model import TranslationModel


def back_translate_docs(reverse_tm: TranslationModel, mono_docs: Sequence[Document], beam: int = 4,
                        config: DecodeConfig | None = None) -> list[ParallelDocument]:
    """Translate every target sentence independently with a sentence-level
    reverse model; the authentic text becomes the target side."""
    config = (config or DecodeConfig()).with_(beam_size=beam, fusion_mode="none")
    models = FusionModels(reverse_tm)
    out = []
    for doc in mono_docs:
        sources = tuple(beam_decode(models, config, s).tokens for s in doc.sentences)
        out.append(ParallelDocument(doc.id, sources, tuple(doc.sentences)))
    return out


def make_pseudo_documents(pairs: Sequence[tuple[Sentence, Sentence]], doc_len_range: tuple[int, int] = (2, 10),
                          seed: int = 0, prefix: str = "pseudo") -> list[ParallelDocument]:
    """Shuffle sentence pairs and cut them into documents of uniformly drawn
    length; the last document takes the remainder."""
    lo, hi = doc_len_range
    if not 1 <= lo <= hi:
        raise ValueError("doc_len_range must satisfy 1 <= lo <= hi")
    rng = random.Random(seed)
    order = list(range(len(pairs)))
    rng.shuffle(order)
    docs = []
    i = 0
    while i < len(order):
        n = rng.randint(lo, hi)
        chunk = [pairs[j] for j in order[i:i + n]]
        docs.append(ParallelDocument(f"{prefix}{len(docs)}", tuple(s for s, _ in chunk), tuple(t for _, t in chunk)))
        i += n
    return docs


def sentence_documents(pairs: Sequence[tuple[Sentence, Sentence]], prefix: str = "sent") -> list[ParallelDocument]:
    """One single-sentence document per pair: no context anywhere."""
    return [ParallelDocument(f"{prefix}{i}", (s,), (t,)) for i, (s, t) in enumerate(pairs)]


def n_sentences(docs: Sequence[ParallelDocument]) -> int:
    return sum(len(d) for d in docs)


@dataclass
class CorpusBundle:
    authentic: list[ParallelDocument]
    synthetic: list[ParallelDocument]
    combined: list[tuple[str, ParallelDocument]]
    repeats: dict[str, int] = field(default_factory=dict)

    def documents(self) -> list[ParallelDocument]:
        return [d for _, d in self.combined]

    def pairs(self) -> list[tuple[Sentence, Sentence]]:
        return [p for _, d in self.combined for p in d.pairs]

    def sentence_counts(self) -> dict[str, int]:
        counts = {"authentic": 0, "synthetic": 0}
        for tag, d in self.combined:
            counts[tag] += len(d)
        return counts

    def write_manifest(self, path: str | Path, paths: dict[str, str]) -> None:
        lines = [f"{part}\t{paths.get(part, '-')}\t{self.repeats[part]}" for part in ("authentic", "synthetic")]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _oversample(docs: list[ParallelDocument], target: int) -> tuple[list[ParallelDocument], int]:
    size = n_sentences(docs)
    reps = math.ceil(target / size)
    out = docs * reps
    total = size * reps
    while len(out) > 1 and total - len(out[-1]) >= target:
        total -= len(out[-1])
        out.pop()
    return out, reps


def combine_balanced(authentic: Sequence[ParallelDocument], synthetic: Sequence[ParallelDocument]) -> CorpusBundle:
    """Oversample the smaller part at document granularity so both parts
    differ by less than one document's worth of sentences.

    Order: authentic block, then synthetic block.
    """
    authentic, synthetic = list(authentic), list(synthetic)
    n_auth, n_syn = n_sentences(authentic), n_sentences(synthetic)
    if n_auth == 0 or n_syn == 0:
        raise ValueError("both authentic and synthetic parts must be nonempty")
    reps = {"authentic": 1, "synthetic": 1}
    auth_out, syn_out = authentic, synthetic
    if n_auth < n_syn:
        auth_out, reps["authentic"] = _oversample(authentic, n_syn)
    elif n_syn < n_auth:
        syn_out, reps["synthetic"] = _oversample(synthetic, n_auth)
    combined = [("authentic", d) for d in auth_out] + [("synthetic", d) for d in syn_out]
    return CorpusBundle(authentic, synthetic, combined, reps)
