import numpy as np
import pytest

from docfusion.core import RESERVED, Document, Vocabulary
from docfusion.ngram_lm import train_ngram
from docfusion.translation_model import train_tm


def make_vocab(words):
    return Vocabulary(list(RESERVED) + list(words))


def random_logdist(rng, n, zeros=0):
    p = rng.dirichlet(np.ones(n))
    logp = np.log(p)
    if zeros:
        logp[rng.choice(n, size=zeros, replace=False)] = -np.inf
        logp -= np.log(np.exp(logp).sum())
    return logp


@pytest.fixture(scope="session")
def toy():
    """A four-document toy language pair with one gendered pronoun chain each."""
    src_words = "the dog cat sleeps runs it".split()
    tgt_words = "der Hund Katze schläft läuft er sie".split()
    vocab = make_vocab(src_words + tgt_words)
    enc = vocab.encode
    docs_src = [["the dog sleeps", "it runs"], ["the cat runs", "it sleeps"],
                ["the dog runs", "it sleeps"], ["the cat sleeps", "it runs"]]
    docs_tgt = [["der Hund schläft", "er läuft"], ["der Katze läuft", "sie schläft"],
                ["der Hund läuft", "er schläft"], ["der Katze schläft", "sie läuft"]]
    pairs = [(enc(s), enc(t)) for ds, dt in zip(docs_src, docs_tgt) for s, t in zip(ds, dt)]
    tgt_docs = [Document(f"d{i}", tuple(enc(s) for s in d)) for i, d in enumerate(docs_tgt)]
    tm = train_tm(pairs, vocab, order=3, iterations=10)
    doc_lm = train_ngram(tgt_docs, vocab, order=4, context_k=2)
    return {"vocab": vocab, "pairs": pairs, "tgt_docs": tgt_docs, "tm": tm, "doc_lm": doc_lm,
            "ilm": tm.target_ngram}
