import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from docfusion.core import Document, FormatError, ParallelDocument
from docfusion.decoder import DecodeConfig, FusionModels
from docfusion.fusion import FusionScales, fuse_step, restricted_grid
from docfusion.ngram_lm import cond_logdist
from docfusion.scale_tuning import (Features, ScaleDivergence, ScaleParameterization, TuneExample,
                                    compute_features, examples_from_docs, grid_search_scales,
                                    learn_subword_scales, load_scale_table, make_tuning_data, save_scale_table,
                                    scale_loss_and_grad)
from docfusion.translation_model import tm_step_dist, train_tm

from conftest import random_logdist


def random_features(seed, rows=6, n=5):
    rng = np.random.default_rng(seed)
    d = [np.stack([random_logdist(rng, n) for _ in range(rows)]) for _ in range(3)]
    return Features(*d, rng.integers(0, n, size=rows), np.zeros(rows, dtype=np.int64))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_gradient_matches_finite_differences(seed):
    feats = random_features(seed)
    table = np.random.default_rng(seed + 1).normal(0.5, 0.5, size=(5, 3))
    _, grad = scale_loss_and_grad(feats, table)
    h = 1e-5
    fd = np.zeros_like(table)
    for idx in np.ndindex(*table.shape):
        up, down = table.copy(), table.copy()
        up[idx] += h
        down[idx] -= h
        fd[idx] = (scale_loss_and_grad(feats, up)[0] - scale_loss_and_grad(feats, down)[0]) / (2 * h)
    assert np.max(np.abs(grad - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_gradient_cancels_when_lm_equals_ilm():
    feats = random_features(3)
    feats.ilm = feats.lm.copy()
    lam = np.random.default_rng(4).uniform(0, 1, size=5)
    table = np.stack([np.ones(5), lam, lam], axis=1)
    _, grad = scale_loss_and_grad(feats, table)
    np.testing.assert_allclose(grad[:, 1] + grad[:, 2], 0.0, atol=1e-12)


def test_zero_table_gives_uniform_cross_entropy():
    feats = random_features(5, rows=7, n=6)
    loss, _ = scale_loss_and_grad(feats, np.zeros((6, 3)))
    assert loss == pytest.approx(7 * np.log(6), abs=1e-12)


def _models(toy):
    return FusionModels(toy["tm"], toy["doc_lm"], toy["ilm"])


def _valid(toy):
    pairs = toy["pairs"]
    return [ParallelDocument(f"v{i}", *zip(pairs[2 * i], pairs[2 * i + 1])) for i in range(4)]


def test_cross_entropy_by_hand_on_three_tokens(toy):
    models, vocab = _models(toy), toy["vocab"]
    src, ref = toy["pairs"][0]             # "the dog sleeps" -> "der Hund schläft"
    assert len(ref) == 3
    s = FusionScales(1, 0.4, 0.4)
    # oracle: step-by-step fused log-probabilities of the reference and EOS
    seq = list(ref) + [vocab.eos]
    hand = 0.0
    for i, tok in enumerate(seq):
        d_tm = tm_step_dist(models.tm, seq[:i], src)
        d_lm = cond_logdist(models.lm, models.lm.sequence_history([]) + seq[:i])
        d_ilm = cond_logdist(models.ilm, [vocab.bos] + seq[:i])
        hand -= fuse_step(d_tm, d_lm, d_ilm, s)[tok]
    loss, _ = scale_loss_and_grad([TuneExample(src, ref)], np.tile(s.as_tuple(), (len(vocab), 1)), models)
    assert loss == pytest.approx(hand, abs=1e-9)
    doc = ParallelDocument("one", (src,), (ref,))
    report = grid_search_scales(models, [doc], restricted_grid(0.2), objective="ce")
    assert dict((r[0], r[1]) for r in report.rows)[FusionScales(1, 0.4, 0.4)] == pytest.approx(hand, abs=1e-9)


@pytest.mark.parametrize("objective", ["bleu", "ce"])
def test_grid_ties_return_identity(toy, objective):
    ilm = toy["ilm"]
    models = FusionModels(toy["tm"], ilm, ilm)
    report = grid_search_scales(models, _valid(toy)[:2], restricted_grid(0.25), objective=objective,
                                config=DecodeConfig(beam_size=2))
    assert report.best == FusionScales(1, 0, 0)
    assert len({round(v, 9) for _, v in report.rows}) == 1
    assert len(report.format().splitlines()) == 1 + 5


@pytest.fixture(scope="module")
def small_experiment():
    from docfusion.config import RunConfig
    from docfusion.experiments import Experiment

    return Experiment(RunConfig(n_mono_docs=300, n_parallel_docs=150, n_test_docs=0, n_valid_docs=15,
                                n_challenge=0))


def test_grid_search_prefers_document_context(small_experiment):
    e = small_experiment
    run = lambda: grid_search_scales(e.fusion_models, e.valid, restricted_grid(0.2),
                                     config=e.decode_config(beam_size=4))
    report = run()
    rows = dict(report.rows)
    assert report.best.lm == report.best.ilm > 0
    assert rows[report.best] > rows[FusionScales(1, 0, 0)]
    assert run().rows == report.rows


def test_grid_search_errors(toy):
    with pytest.raises(ValueError, match="empty validation set"):
        grid_search_scales(_models(toy), [], restricted_grid())
    with pytest.raises(ValueError, match="objective"):
        grid_search_scales(_models(toy), _valid(toy), restricted_grid(), objective="ter")


@pytest.fixture(scope="module")
def toy_features(toy):
    return compute_features(examples_from_docs(_valid(toy), k=2), _models(toy))


def test_learning_reduces_loss_and_raises_pronoun_scales(toy, toy_features):
    vocab = toy["vocab"]
    res = learn_subword_scales(toy_features, epochs=20, lr=0.5, batch_size=2, seed=0)
    assert all(b < a for a, b in zip(res.trace[:6], res.trace[1:6]))
    assert np.all(res.table[:, 0] == 1.0)
    np.testing.assert_array_equal(res.table[:, 1], res.table[:, 2])
    pron = np.mean([res.table[vocab.lookup(w), 1] for w in ("er", "sie")])
    noun = np.mean([res.table[vocab.lookup(w), 1] for w in ("Hund", "Katze")])
    assert pron > noun


def test_learning_is_deterministic(toy_features):
    a = learn_subword_scales(toy_features, epochs=3, seed=7)
    b = learn_subword_scales(toy_features, epochs=3, seed=7)
    c = learn_subword_scales(toy_features, epochs=3, seed=8)
    np.testing.assert_array_equal(a.table, b.table)
    assert not np.array_equal(a.table, c.table)


@pytest.mark.parametrize("restricted,tied", [(True, False), (False, False), (True, True), (False, True)])
def test_zero_epochs_returns_initialization(toy_features, restricted, tied):
    res = learn_subword_scales(toy_features, epochs=0, restricted=restricted, tied=tied, seed=3, init_std=0.01)
    param = ScaleParameterization(toy_features.tm.shape[1], restricted, tied)
    np.testing.assert_array_equal(res.table, param.table(param.init(np.random.default_rng(3), 0.01)))
    assert len(res.trace) == 1


def test_parameterization_pull_back_is_chain_rule():
    rng = np.random.default_rng(0)
    for restricted in (True, False):
        for tied in (True, False):
            p = ScaleParameterization(4, restricted, tied)
            theta, g = rng.normal(size=p.size), rng.normal(size=(4, 3))
            # the table is linear in theta, so <g, table(theta)> has gradient pull_back(g) up to a constant
            h = 1e-6
            fd = np.array([(np.sum(g * p.table(theta + h * e)) - np.sum(g * p.table(theta - h * e))) / (2 * h)
                           for e in np.eye(p.size)])
            np.testing.assert_allclose(p.pull_back(g), fd, atol=1e-6)


def test_divergence_is_reported(toy_features):
    with pytest.raises(ScaleDivergence, match="learning rate"):
        learn_subword_scales(toy_features, epochs=5, lr=1e4, restricted=False)
    with pytest.raises(ValueError):
        learn_subword_scales(toy_features, lr=0)


def test_make_tuning_data(toy):
    vocab = toy["vocab"]
    reverse = train_tm([(t, s) for s, t in toy["pairs"]], vocab, order=3, iterations=10)
    mono = [Document("m0", tuple(t for _, t in toy["pairs"][:4])), Document("m1", (toy["pairs"][5][1],))]
    examples = make_tuning_data(mono, reverse, DecodeConfig(beam_size=2), k=2)
    assert len(examples) == 5
    assert [len(e.context) for e in examples] == [0, 1, 2, 2, 0]
    assert [e.target for e in examples] == [s for d in mono for s in d.sentences]
    assert examples[3].context == mono[0].sentences[1:3]


def test_scale_table_roundtrip_and_errors(toy, tmp_path):
    vocab = toy["vocab"]
    table = np.random.default_rng(0).normal(size=(len(vocab), 3))
    save_scale_table(table, vocab, tmp_path / "t.tsv")
    np.testing.assert_allclose(load_scale_table(tmp_path / "t.tsv", vocab), table, rtol=1e-9)
    lines = (tmp_path / "t.tsv").read_text().splitlines()
    assert lines[1].split("\t")[0] == vocab.decode_id(0)
    bad = list(lines)
    bad[3] = bad[3].rsplit("\t", 1)[0] + "\tinf"
    (tmp_path / "bad.tsv").write_text("\n".join(bad) + "\n")
    with pytest.raises(FormatError, match=":4:"):
        load_scale_table(tmp_path / "bad.tsv", vocab)
    (tmp_path / "short.tsv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(FormatError, match="rows"):
        load_scale_table(tmp_path / "short.tsv", vocab)


def test_pronoun_scales_exceed_noun_scales_on_synthetic_corpus(small_experiment):
    from docfusion.syncorpus import PRONOUNS

    e = small_experiment
    feats = compute_features(examples_from_docs(e.valid, k=2), e.fusion_models)
    res = learn_subword_scales(feats, seed=0)
    assert all(b < a for a, b in zip(res.trace[:6], res.trace[1:6]))
    lam = res.table[:, 1]
    pron = np.mean([lam[e.vocab.lookup(p)] for p in PRONOUNS.values()])
    noun = np.mean([lam[e.vocab.lookup(n.target)] for n in e.corpus.spec.nouns])
    assert pron > noun
