import math

import pytest
from hypothesis import given, settings, strategies as st

from docfusion.core import FormatError
from docfusion.evaluation import (ContrastiveExample, KeywordExample, bleu_stats, contrastive_accuracy, corpus_bleu,
                                  format_report, keyword_accuracy, read_challenge_set, read_keywords, targeted_f1,
                                  write_challenge_set, write_keywords)

PRONOUNS = {"masc": {"er"}, "fem": {"sie"}, "neut": {"es"}}


def oracle_bleu(hyps, refs):
    """Textbook corpus BLEU, written from the definition with plain lists."""
    log_p = 0.0
    for n in range(1, 5):
        match = total = 0
        for h, r in zip(hyps, refs):
            h_grams = [tuple(h[i:i + n]) for i in range(len(h) - n + 1)]
            r_grams = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
            total += len(h_grams)
            for g in set(h_grams):
                match += min(h_grams.count(g), r_grams.count(g))
        if match == 0:
            return 0.0
        log_p += math.log(match / total) / 4
    hl, rl = sum(map(len, hyps)), sum(map(len, refs))
    return min(1.0, math.exp(1 - rl / hl)) * math.exp(log_p)


def test_bleu_identity():
    refs = ["a b c d e".split(), "x y z w".split()]
    assert corpus_bleu(refs, refs) == 1.0


def test_bleu_brevity_worked_case():
    st_ = bleu_stats(["a b c d".split()], ["a b c d e".split()])
    assert st_.matches == [4, 3, 2, 1] and st_.totals == [4, 3, 2, 1]
    assert st_.brevity_penalty == pytest.approx(math.exp(1 - 5 / 4), abs=1e-12)
    assert corpus_bleu(["a b c d".split()], ["a b c d e".split()]) == pytest.approx(0.77880, abs=1e-5)


def test_bleu_zero_without_smoothing():
    hyp, ref = ["a b c x d".split()], ["a b c y d".split()]
    assert bleu_stats(hyp, ref).matches[3] == 0
    assert corpus_bleu(hyp, ref) == 0.0
    assert corpus_bleu(hyp, ref, smooth_epsilon=0.1) > 0.0


def test_bleu_errors():
    with pytest.raises(ValueError):
        corpus_bleu([["a"]], [["a"], ["b"]])
    with pytest.raises(ValueError):
        corpus_bleu([], [])


sentences = st.lists(st.lists(st.sampled_from("abcd"), min_size=0, max_size=8), min_size=1, max_size=6)


@settings(max_examples=200)
@given(st.data())
def test_bleu_matches_oracle(data):
    refs = data.draw(sentences)
    hyps = data.draw(st.lists(st.lists(st.sampled_from("abcd"), min_size=1, max_size=8),
                              min_size=len(refs), max_size=len(refs)))
    assert corpus_bleu(hyps, refs) == pytest.approx(oracle_bleu(hyps, refs), abs=1e-12)


@settings(max_examples=100)
@given(st.data(), st.randoms())
def test_bleu_permutation_invariant(data, rnd):
    refs = data.draw(sentences)
    hyps = data.draw(st.lists(st.lists(st.sampled_from("abcd"), max_size=8), min_size=len(refs),
                              max_size=len(refs)))
    pairs = list(zip(hyps, refs))
    rnd.shuffle(pairs)
    assert corpus_bleu([h for h, _ in pairs], [r for _, r in pairs]) == pytest.approx(corpus_bleu(hyps, refs),
                                                                                      abs=1e-12)


def test_f1_identity_and_no_targets():
    refs = [["er", "läuft"], ["da", "ist", "ein", "Hund"]]
    res = targeted_f1(refs, refs, PRONOUNS)
    assert res.f1 == 1.0 and not res.no_targets
    empty = targeted_f1([["da"]], [["da"]], PRONOUNS)
    assert empty.f1 == 0.0 and empty.no_targets


def test_f1_worked_case():
    res = targeted_f1([["er", "und", "es"]], [["er", "und", "sie"]], PRONOUNS)
    assert (res.precision, res.recall, res.f1) == (0.5, 0.5, 0.5)
    assert res.per_category == {"masc": 1.0, "fem": 0.0, "neut": 0.0}


def test_f1_hypothesis_without_targets():
    res = targeted_f1([["da"]], [["er", "sie", "es"]], PRONOUNS)
    assert (res.precision, res.recall, res.f1) == (0.0, 0.0, 0.0)


def test_f1_overlapping_categories_rejected():
    with pytest.raises(ValueError, match="overlap"):
        targeted_f1([["er"]], [["er"]], [{"er", "sie"}, {"sie"}])


pron_sents = st.lists(st.lists(st.sampled_from(["er", "sie", "es", "da", "läuft"]), max_size=6), min_size=1,
                      max_size=5)


@settings(max_examples=150)
@given(st.data())
def test_f1_symmetry(data):
    a = data.draw(pron_sents)
    b = data.draw(st.lists(st.lists(st.sampled_from(["er", "sie", "es", "da"]), max_size=6), min_size=len(a),
                           max_size=len(a)))
    x, y = targeted_f1(a, b, PRONOUNS), targeted_f1(b, a, PRONOUNS)
    assert (x.precision, x.recall) == (y.recall, y.precision)
    assert x.f1 == pytest.approx(y.f1, abs=1e-15)


def _ex(ref="er läuft", alts=("sie läuft", "es läuft"), ctx="der Hund"):
    return ContrastiveExample(("it", "runs"), (tuple(ctx.split()),), tuple(ref.split()),
                              tuple(tuple(a.split()) for a in alts))


def _gold(examples):
    """Scorer that knows each context's reference: +1 for it, 0 otherwise."""
    gold = {e.context: e.reference for e in examples}
    return lambda s, c, f: 1.0 if gold[c] == s else 0.0


def test_contrastive_oracle_scorers():
    examples = [_ex(), _ex("sie läuft", ("er läuft", "es läuft"), "die Katze")]
    assert contrastive_accuracy(_gold(examples), examples) == 1.0
    assert contrastive_accuracy(lambda s, c, f: 0.0, examples) == 0.0


def test_contrastive_ties_count_as_wrong():
    scores = {("er", "läuft"): -1.0, ("sie", "läuft"): -1.0, ("es", "läuft"): -5.0}
    assert contrastive_accuracy(lambda s, c, f: scores[s], [_ex()]) == 0.0


def test_contrastive_validation():
    with pytest.raises(ValueError):
        _ex(alts=())
    with pytest.raises(ValueError):
        _ex(alts=("er läuft",))
    with pytest.raises(ValueError):
        contrastive_accuracy(lambda s, c, f: 0.0, [])


@pytest.fixture(scope="module")
def synthetic():
    from docfusion.config import RunConfig
    from docfusion.experiments import Experiment

    return Experiment(RunConfig(n_mono_docs=400, n_parallel_docs=100, n_test_docs=0, n_valid_docs=1, n_challenge=150))


def test_document_lm_wins_contrastive_scoring(synthetic):
    from docfusion.ngram_lm import score_sequence, train_ngram

    e = synthetic
    sent_lm = train_ngram([s for d in e.mono for s in d.sentences], e.vocab, e.cfg.order)
    enc = e.vocab.encode

    def doc_scorer(s, c, f):
        return score_sequence(e.doc_lm, enc(list(s)), [enc(list(x)) for x in c])

    def sent_scorer(s, c, f):
        return score_sequence(sent_lm, enc(list(s)))

    doc_acc = contrastive_accuracy(doc_scorer, e.corpus.challenge)
    sent_acc = contrastive_accuracy(sent_scorer, e.corpus.challenge)
    assert doc_acc > sent_acc
    assert doc_acc > 0.9 and sent_acc < 0.5
    assert contrastive_accuracy(doc_scorer, e.corpus.challenge) == doc_acc


def test_scoring_and_generation_can_disagree():
    """A system can rank the reference first and still generate the wrong keyword."""
    examples = [_ex(), _ex("sie läuft", ("er läuft", "es läuft"), "die Katze")]
    keys = [KeywordExample("0", frozenset({"er"}), frozenset({"sie", "es"})),
            KeywordExample("1", frozenset({"sie"}), frozenset({"er", "es"}))]
    # system A: sentence-level prior, always scores and generates "er"
    a_score = lambda s, c, f: 0.0 if s[0] == "er" else -1.0
    a_hyps = [["er", "läuft"], ["er", "läuft"]]
    # system B: scores the references perfectly, but its search drops the pronoun
    b_score = _gold(examples)
    b_hyps = [["läuft"], ["läuft"]]
    assert contrastive_accuracy(b_score, examples) > contrastive_accuracy(a_score, examples)
    assert keyword_accuracy(b_hyps, keys) < keyword_accuracy(a_hyps, keys)


def test_keyword_rules():
    ex = KeywordExample("k", frozenset({"Lehrerin"}), frozenset({"Lehrer"}))
    assert keyword_accuracy([["die", "Lehrerin", "kam"]], [ex]) == 1.0
    assert keyword_accuracy([["die", "lehrerin", "kam"]], [ex]) == 1.0
    assert keyword_accuracy([["Lehrerin", "und", "Lehrer"]], [ex]) == 0.0
    assert keyword_accuracy([["niemand", "kam"]], [ex]) == 0.0
    with pytest.raises(ValueError):
        KeywordExample("k", frozenset({"a"}), frozenset({"A"}))
    with pytest.raises(ValueError):
        KeywordExample("k", frozenset(), frozenset())
    with pytest.raises(ValueError):
        keyword_accuracy([], [ex])


def test_challenge_file_roundtrip(tmp_path):
    examples = [_ex(), ContrastiveExample(("it", "runs"), (), ("es", "läuft"), (("er", "läuft"),))]
    write_challenge_set(tmp_path / "c.txt", examples)
    assert read_challenge_set(tmp_path / "c.txt") == examples
    text = (tmp_path / "c.txt").read_text()
    assert text.startswith("SRC: it runs\nCTX: der Hund\nREF: er läuft\nALT: sie läuft\n")


@pytest.mark.parametrize("body,line", [("SRC: a\nREF: b\n", 1), ("SRC: a\nREF: b\nALT: c\n\nFOO: x\n", 5),
                                       ("SRC: a\nREF: b\nALT: c\nCTX: d\n", 4), ("SRC: a\nREF: b\nALT: b\n", 1)])
def test_challenge_file_errors(tmp_path, body, line):
    (tmp_path / "bad.txt").write_text(body)
    with pytest.raises(FormatError, match=f":{line}:"):
        read_challenge_set(tmp_path / "bad.txt")


def test_keyword_file_roundtrip_and_errors(tmp_path):
    keys = [KeywordExample("c0", frozenset({"er"}), frozenset({"sie", "es"})),
            KeywordExample("c1", frozenset({"Lehrerin"}), frozenset())]
    write_keywords(tmp_path / "k.tsv", keys)
    assert (tmp_path / "k.tsv").read_text() == "c0\ter\tes,sie\nc1\tLehrerin\t\n"
    assert read_keywords(tmp_path / "k.tsv") == keys
    (tmp_path / "bad.tsv").write_text("c0\ter\tes\nc1 er\n")
    with pytest.raises(FormatError, match=":2:"):
        read_keywords(tmp_path / "bad.tsv")


def test_report_format_is_stable():
    text = format_report({"BLEU": 0.5, "system": "static", "pronF1": 1.0})
    assert text == "BLEU    0.500000\nsystem  static\npronF1  1.000000\n"
