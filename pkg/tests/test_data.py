import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqtag.data import (RawSentence, Vocabulary, build_vocabularies, chunk_f1, chunk_report,
                         format_conll, load_embeddings, read_conll, read_features, split_corpus,
                         split_counts, subsample, token_accuracy, write_conll)
from seqtag.encoder import EmbeddingTable, UNK_INDEX
from seqtag.errors import ConfigError, DomainError, ParseError
from seqtag.numerics import Rng

from oracles import brute_chunk_f1


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_read_conll_examples(tmp_path):
    sents = read_conll(write(tmp_path, "a.conll", "Dog NN\nbarks VBZ\n\n"))
    assert len(sents) == 1
    assert sents[0].tokens == ["Dog", "barks"] and sents[0].tags == ["NN", "VBZ"]
    assert read_conll(write(tmp_path, "b.conll", "\n\n\n")) == []
    assert read_conll(write(tmp_path, "c.conll", "")) == []
    sents = read_conll(write(tmp_path, "d.conll", "-DOCSTART- -X- O\n\nEU B-ORG\n"))
    assert [s.tokens for s in sents] == [["EU"]]


def test_read_conll_ragged_line(tmp_path):
    path = write(tmp_path, "r.conll", "a DT B-NP\nb NN\n")
    with pytest.raises(ParseError, match=":2"):
        read_conll(path)


def test_read_conll_middle_column_and_tabs(tmp_path):
    sents = read_conll(write(tmp_path, "t.conll", "He\tPRP\tB-NP\nran\tVBD\tB-VP\n"), tag_col=1)
    assert sents[0].tags == ["PRP", "VBD"]
    assert read_conll(write(tmp_path, "u.conll", "x\ny\n"), tag_col=None)[0].tokens == ["x", "y"]


sep_strategy = st.sampled_from([" ", "\t"])
cell = st.text(alphabet="abcXYZ-.é0", min_size=1, max_size=5).filter(lambda s: s != "-DOCSTART-")


@settings(max_examples=60)
@given(sep_strategy, st.integers(1, 3), st.lists(st.integers(1, 4), min_size=0, max_size=4), st.data())
def test_round_trip_is_byte_identical(tmp_path_factory, sep, ncols, lengths, data):
    text = "".join(
        "".join(sep.join(data.draw(st.lists(cell, min_size=ncols, max_size=ncols))) + "\n"
                for _ in range(n)) + "\n"
        for n in lengths)
    path = tmp_path_factory.mktemp("rt") / "x.conll"
    path.write_text(text, encoding="utf-8")
    out = path.with_suffix(".out")
    write_conll(read_conll(str(path), tag_col=None), str(out))
    assert out.read_bytes() == path.read_bytes()


def test_vocabulary_order_and_freezing():
    v = Vocabulary.from_counts({"b": 2, "a": 2, "c": 5, "d": 1})
    assert v.itos == ["<pad>", "<unk>", "c", "a", "b", "d"]
    assert v.index("zzz") == UNK_INDEX
    assert len(v) == 6
    with pytest.raises(DomainError):
        v.add("zzz")
    labels = Vocabulary(["B", "A"], reserved=False)
    with pytest.raises(DomainError):
        labels.index("C")


def _raw(words, tags=None):
    return RawSentence([[w, t] for w, t in zip(words, tags or ["X"] * len(words))])


def test_build_vocabularies_schemes():
    a = [_raw(["cat", "cat", "sat"], ["N", "N", "V"])]
    b = [_raw(["gato", "cat"], ["n", "n"])]
    single = build_vocabularies({"target": a}, share_words=False, share_chars=False)
    assert single["target"].words.known() == ["cat", "sat"]
    assert single["target"].tags.itos == ["N", "V"]
    tb = build_vocabularies({"source": b, "target": a}, share_words=True)
    assert tb["source"].words is tb["target"].words
    assert tb["target"].words.known() == ["cat", "gato", "sat"]
    tc = build_vocabularies({"source": b, "target": a}, share_words=False)
    assert tc["source"].words is not tc["target"].words
    assert tc["source"].chars is tc["target"].chars
    assert "g" in tc["target"].chars


def test_subsample_examples():
    rng = Rng(3)
    items = list(range(4))
    assert subsample(items, 1.0, rng) == items
    half = subsample(items, 0.5, Rng(5))
    assert len(half) == 2 and half == sorted(half)
    assert half == subsample(items, 0.5, Rng(5))
    for bad in (0.0, 1.5):
        with pytest.raises(ConfigError):
            subsample(items, bad, rng)


@given(st.integers(0, 200), st.floats(0.01, 1.0), st.integers(0, 2 ** 32))
def test_subsample_count_is_exact(n, r, seed):
    kept = subsample(list(range(n)), r, Rng(seed))
    assert len(kept) == int(np.floor(r * n + 0.5))
    assert kept == sorted(set(kept))


def test_low_rate_token_budget():
    # a 912,344-token corpus at rate 0.001 keeps "around 900" tokens
    sents = [["w"] * 24 for _ in range(38014)] + [["w"] * 8]
    assert sum(map(len, sents)) == 912_344
    kept = subsample(sents, 0.001, Rng(0))
    assert 800 <= sum(map(len, kept)) <= 1000


def test_split_counts_and_reproducibility():
    assert split_counts(10) == (8, 1, 1)
    assert split_counts(9) == (7, 1, 1)
    items = list(range(23))
    parts = split_corpus(items, Rng(4))
    assert [len(p) for p in parts] == list(split_counts(23))
    assert sorted(sum(parts, [])) == items
    assert parts == split_corpus(items, Rng(4))


def _table(vocab, dim=3):
    return EmbeddingTable(Rng(1).uniform(-1, 1, (len(vocab), dim)))


def test_load_embeddings(tmp_path):
    vocab = Vocabulary(["cat", "dog"])
    table = _table(vocab)
    before = table.weights.value.copy()
    rep = load_embeddings(write(tmp_path, "e0.txt", ""), vocab, table)
    assert rep.coverage == 0 and np.array_equal(table.weights.value, before)

    rep = load_embeddings(write(tmp_path, "e1.txt", "cat 1 2 3\nemu 4 5 6\n"), vocab, table)
    assert rep.coverage == 0.5
    changed = np.nonzero((table.weights.value != before).any(axis=1))[0].tolist()
    assert changed == [vocab.index("cat")]

    load_embeddings(write(tmp_path, "e2.txt", "2 3\ncat 0 0 0\ndog 0 0 0\n"), vocab, table)
    assert not table.weights.value[2:].any()

    with pytest.raises(ParseError, match=":2"):
        load_embeddings(write(tmp_path, "e3.txt", "cat 1 2 3\ndog 1 2\n"), vocab, table)


def test_read_features(tmp_path):
    feats = read_features(write(tmp_path, "f", "1\t0\n0\t1\n\n1\t1\n"))
    assert [f.shape for f in feats] == [(2, 2), (1, 2)]
    with pytest.raises(ParseError):
        read_features(write(tmp_path, "g", "1 0\n1\n"))


def test_token_accuracy():
    assert token_accuracy([[0, 1], [2]], [[0, 1], [2]]) == 1.0
    assert token_accuracy([[0, 1], [2]], [[3, 3], [3]]) == 0.0


def test_chunk_f1_hand_cases():
    gold = ["B-PER", "I-PER", "O"]
    assert tuple(chunk_f1(gold, gold)) == (1.0, 1.0, 1.0)
    assert tuple(chunk_f1(gold, ["B-PER", "O", "O"])) == (0.0, 0.0, 0.0)
    rep = chunk_report(["O", "O"], ["O", "O"])
    assert tuple(rep.overall) == (0.0, 0.0, 0.0) and rep.no_chunks


def test_chunk_lenient_start():
    assert tuple(chunk_f1(["I-NP", "I-NP"], ["B-NP", "I-NP"])) == (1.0, 1.0, 1.0)


def test_malformed_tag_names_position():
    with pytest.raises(DomainError, match="sentence 1 at position 2"):
        chunk_f1([["O"], ["O", "O", "O"]], [["O"], ["O", "O", "Q-NP"]])


def random_bio(rng, n):
    tags = ["O", "B-A", "I-A", "B-B", "I-B"]
    return [tags[rng.randbelow(len(tags))] for _ in range(n)]


def test_chunk_f1_matches_span_oracle():
    rng = Rng(8)
    for _ in range(200):
        n = 1 + rng.randbelow(10)
        gold, pred = random_bio(rng, n), random_bio(rng, n)
        assert tuple(chunk_f1(gold, pred)) == pytest.approx(brute_chunk_f1([gold], [pred]), abs=1e-15)
