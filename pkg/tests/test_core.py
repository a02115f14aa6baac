import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from docfusion.core import (EOW, RESERVED, Document, FormatError, Vocabulary, bpe_apply, bpe_join, bpe_learn,
                            build_vocab, check_logdist, context_window, log_normalize, read_corpus, read_parallel,
                            truncate_context, write_corpus)

from conftest import make_vocab

words = st.text(alphabet="abcde", min_size=1, max_size=8)


def test_build_vocab_frequency_order():
    v = build_vocab([["a b", "a"]], max_size=10)
    assert v.tokens == list(RESERVED) + ["a", "b"]


def test_build_vocab_tie_break_is_lexicographic():
    v = build_vocab([["x y", "y x"]], max_size=5)
    assert v.tokens == list(RESERVED) + ["x"]


def test_encode_maps_oov_to_unk():
    v = build_vocab([["a b", "a"]], max_size=10)
    assert v.encode("a z") == (v.lookup("a"), v.unk)


def test_build_vocab_empty_corpus():
    with pytest.raises(ValueError, match="empty corpus"):
        build_vocab([[]])


def test_reserved_ids_lowest_and_distinct():
    v = make_vocab(["a"])
    assert [v.bos, v.eos, v.sep, v.unk] == [0, 1, 2, 3]


@given(st.lists(words, min_size=1, max_size=30))
def test_vocab_lookup_decode_roundtrip(tokens):
    v = build_vocab([tokens])
    for i in range(len(v)):
        assert v.lookup(v.decode_id(i)) == i
    enc = v.encode(tokens)
    assert v.decode(enc).split() == tokens


def test_vocab_file_roundtrip_and_errors(tmp_path):
    v = make_vocab(["a", "b"])
    v.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == v
    (tmp_path / "bad.txt").write_text("<s>\n</s>\n<sep>\n<unk>\na b\n")
    with pytest.raises(FormatError, match=":5"):
        Vocabulary.load(tmp_path / "bad.txt")
    (tmp_path / "noreserved.txt").write_text("a\nb\n")
    with pytest.raises(FormatError):
        Vocabulary.load(tmp_path / "noreserved.txt")


def _doc(n):
    return Document("d", tuple((i,) for i in range(n)))


@pytest.mark.parametrize("index,k,expected", [(0, 2, []), (1, 2, [(0,)]), (5, 2, [(3,), (4,)])])
def test_context_window_examples(index, k, expected):
    assert context_window(_doc(6), index, k) == expected


@given(st.integers(0, 6), st.integers(0, 8))
def test_truncate_context_keeps_last_k(n, k):
    ctx = [(i,) for i in range(n)]
    assert truncate_context(ctx, k) == (ctx[n - min(n, k):] if k else [])


def test_context_window_out_of_range():
    with pytest.raises(IndexError):
        context_window(_doc(3), 3, 2)


@given(st.integers(1, 12), st.data(), st.integers(0, 5))
def test_context_window_length_and_order(n, data, k):
    i = data.draw(st.integers(0, n - 1))
    win = context_window(_doc(n), i, k)
    assert len(win) == min(k, i)
    assert win == [(j,) for j in range(i - len(win), i)]


def test_bpe_first_merge_counts_by_hand():
    # adjacent pairs in a a a b</w> (x2): (a,a) 2x2=4, (a,b</w>) 1x2=2
    table = bpe_learn(["aaab aaab"], 1)
    assert table.merges == (("a", "a"),)


def test_bpe_apply_golden():
    table = bpe_learn(["aaab aaab"], 1)
    # oracle: scan a a a b</w> left to right, merging the first (a,a) occurrence
    assert bpe_apply("aaab", table) == ["aa", "a", "b" + EOW]


def test_bpe_zero_merges_is_characters():
    assert bpe_apply("abc", bpe_learn(["abc"], 0)) == ["a", "b", "c" + EOW]


def test_bpe_unknown_chars_and_empty():
    table = bpe_learn(["aaab"], 2)
    assert bpe_apply("zq", table) == ["z", "q" + EOW]
    assert bpe_apply("", table) == []


@settings(max_examples=50)
@given(st.lists(words, min_size=1, max_size=20), st.integers(0, 30))
def test_bpe_roundtrip_on_training_words(corpus, merges):
    table = bpe_learn([" ".join(corpus)], merges)
    for w in corpus:
        assert bpe_join(bpe_apply(w, table)) == [w]


def test_bpe_negative_merges():
    with pytest.raises(ValueError):
        bpe_learn(["a"], -1)


@given(st.lists(st.floats(-30, 5), min_size=1, max_size=40))
def test_log_normalize_sums_to_one(xs):
    check_logdist(log_normalize(np.array(xs)))


def test_corpus_file_roundtrip(tmp_path):
    docs = [[["a", "b"], ["c"]], [["d"]]]
    write_corpus(tmp_path / "c.txt", docs)
    assert read_corpus(tmp_path / "c.txt") == docs
    assert (tmp_path / "c.txt").read_text() == "a b\nc\n\nd\n"


def test_read_parallel_mismatch(tmp_path):
    v = make_vocab(["a", "b"])
    write_corpus(tmp_path / "s", [[["a"], ["a"]]])
    write_corpus(tmp_path / "t", [[["b"]]])
    with pytest.raises(FormatError, match="sentence counts differ"):
        read_parallel(tmp_path / "s", tmp_path / "t", v)
