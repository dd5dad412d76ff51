import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binalign.corpus import (
    MARK_CLOSE,
    MARK_OPEN,
    SPECIAL_TOKENS,
    UNK,
    CorpusError,
    GoldAlignment,
    SubwordVocabulary,
    WordSequence,
    detokenize,
    format_pharaoh,
    parse_parallel_corpus,
    parse_pharaoh,
    tokenize,
    train_subword_vocab,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_parallel_corpus_basic(tmp_path):
    src = write(tmp_path, "a.src", "le canapé\n")
    tgt = write(tmp_path, "a.tgt", "the sofa\n")
    al = write(tmp_path, "a.align", "0-0 1-1\n")
    (pair,) = parse_parallel_corpus(src, tgt, al)
    assert pair.source.words == ("le", "canapé")
    assert pair.gold.sure == {(0, 0), (1, 1)}
    assert pair.gold.possible == pair.gold.sure


def test_parse_parallel_corpus_without_alignments(tmp_path):
    src = write(tmp_path, "a.src", "a b\nc\n")
    tgt = write(tmp_path, "a.tgt", "x\ny z\n")
    pairs = parse_parallel_corpus(src, tgt)
    assert [p.gold for p in pairs] == [None, None]


def test_empty_files_give_empty_corpus(tmp_path):
    assert parse_parallel_corpus(write(tmp_path, "s", ""), write(tmp_path, "t", "")) == []


def test_line_count_mismatch(tmp_path):
    src = write(tmp_path, "s", "a\nb\nc\n")
    tgt = write(tmp_path, "t", "a\nb\n")
    with pytest.raises(CorpusError, match="line count mismatch"):
        parse_parallel_corpus(src, tgt)


@pytest.mark.parametrize(
    "src,tgt,align,msg",
    [
        ("a\n\n", "x\ny\n", None, "line 2: empty line"),
        ("a\nb\n", "x\ny\n", "0-0\n0_0\n", "line 2"),
        ("a\nb\n", "x\ny\n", "0-0\n", "line count mismatch"),
        ("a\nb\n", "x\ny\n", "0-0\n0-3\n", "line 2: .*out of bounds"),
    ],
)
def test_parse_errors_name_the_line(tmp_path, src, tgt, align, msg):
    s, t = write(tmp_path, "s", src), write(tmp_path, "t", tgt)
    a = write(tmp_path, "a", align) if align is not None else None
    with pytest.raises(CorpusError, match=msg):
        parse_parallel_corpus(s, t, a)


def test_parse_pharaoh_sure_and_possible():
    g = parse_pharaoh("0-0 1-2 3p1")
    assert g.sure == {(0, 0), (1, 2)}
    assert g.possible == {(0, 0), (1, 2), (3, 1)}


def test_parse_pharaoh_empty_and_duplicates():
    assert parse_pharaoh("") == GoldAlignment()
    assert parse_pharaoh("0-0 0-0").sure == {(0, 0)}


@pytest.mark.parametrize("bad", ["a-1", "1-", "12", "1-2-3", "x"])
def test_parse_pharaoh_rejects_garbage(bad):
    with pytest.raises(CorpusError, match=bad.replace("-", r"\-")):
        parse_pharaoh(bad)


def test_format_pharaoh():
    assert format_pharaoh(GoldAlignment({(1, 2), (0, 0)})) == "0-0 1-2"
    assert format_pharaoh(GoldAlignment(frozenset(), {(0, 1)})) == "0p1"


def test_pharaoh_round_trip_random():
    rng = random.Random(0)
    for _ in range(1000):
        pairs = {(rng.randrange(8), rng.randrange(8)) for _ in range(rng.randrange(12))}
        sure = {p for p in pairs if rng.random() < 0.6}
        g = GoldAlignment(frozenset(sure), frozenset(pairs))
        assert g.sure <= g.possible
        assert parse_pharaoh(format_pharaoh(g)) == g


# --- vocabulary -----------------------------------------------------------


def test_bpe_single_merge():
    v = train_subword_vocab(["aa aa"], target_size=1 + 6 + 1)
    assert "a" in v and "aa" in v
    assert len(v) == 8


def test_bpe_target_size_too_small():
    with pytest.raises(CorpusError, match="too small"):
        train_subword_vocab(["hello world"], target_size=3)


def test_bpe_deterministic_and_tie_break():
    corpus = ["ab cd ab cd"]
    v1 = train_subword_vocab(corpus, 4 + 6 + 1, seed=1)
    v2 = train_subword_vocab(corpus, 4 + 6 + 1, seed=1)
    assert v1.entries == v2.entries
    # "ab" and "cd" tie on frequency; the lexicographically smaller wins
    assert "ab" in v1 and "cd" not in v1


def test_specials_occupy_first_ids():
    v = train_subword_vocab(["xyz"], 20)
    assert [v.token(k) for k in range(6)] == list(SPECIAL_TOKENS)
    assert sorted(v.entries.values()) == list(range(len(v)))


def test_vocab_serialization_round_trip(tmp_path):
    v = train_subword_vocab(["le canapé rouge", "the red sofa"], 40)
    path = tmp_path / "vocab.tsv"
    v.save(path)
    first = path.read_text(encoding="utf-8").splitlines()[0]
    assert first == "[PAD]\t0"
    assert SubwordVocabulary.load(path).entries == v.entries


# --- tokenization ---------------------------------------------------------


def test_tokenize_multi_token_word():
    v = SubwordVocabulary.from_pieces(["cana", "pé", *"canapé"])
    tok, wmap = tokenize(WordSequence.from_text("canapé"), v)
    assert tok.token_strings == ("cana", "##pé")
    assert wmap.spans == ((0, 2),)
    assert detokenize(tok) == WordSequence.from_text("canapé")


def test_tokenize_single_char_words_identity():
    v = SubwordVocabulary.from_pieces("abc")
    tok, wmap = tokenize(WordSequence.from_text("a b c a"), v)
    assert tok.token_strings == ("a", "b", "c", "a")
    assert all(e - s == 1 for s, e in wmap.spans)


def test_unknown_characters_become_unk():
    v = SubwordVocabulary.from_pieces("ab")
    tok, _ = tokenize(WordSequence.from_text("azb"), v)
    assert tok.token_ids[1] == UNK
    assert tok.unk_positions == (1,)
    with pytest.raises(CorpusError, match="UNK"):
        detokenize(tok)


def test_detokenize_empty():
    v = SubwordVocabulary.from_pieces("a")
    tok, wmap = tokenize(WordSequence.from_words([]), v)
    assert len(tok) == 0 and wmap.spans == ()
    assert detokenize(tok).words == ()


def test_special_strings_never_match_inside_words():
    v = SubwordVocabulary.from_pieces("[M]")
    tok, _ = tokenize(WordSequence.from_text("[M]"), v)
    assert MARK_OPEN not in tok.token_ids and MARK_CLOSE not in tok.token_ids


ALPHABET = "abcdeéfgh#"


def test_tokenizer_round_trip_1000_random_sentences():
    rng = random.Random(1)
    words = ["".join(rng.choice(ALPHABET) for _ in range(rng.randint(1, 9))) for _ in range(300)]
    v = train_subword_vocab([" ".join(words)], 60)
    for _ in range(1000):
        ws = WordSequence.from_words(rng.choice(words) for _ in range(rng.randint(0, 12)))
        tok, wmap = tokenize(ws, v)
        assert detokenize(tok) == ws
        assert sum(e - s for s, e in wmap.spans) == len(tok)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.text(alphabet=ALPHABET, min_size=1, max_size=8), max_size=10))
def test_word_map_partitions_tokens(words):
    v = SubwordVocabulary.from_pieces([*ALPHABET, "ab", "abc", "##", "é#"])
    tok, wmap = tokenize(WordSequence.from_words(words), v)
    assert list(tok.word_index) == sorted(tok.word_index)
    assert wmap.token_words() == list(tok.word_index)
    assert wmap.n_tokens == len(tok)
    assert detokenize(tok).words == tuple(words)
