import json
import os
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psatag.data import (
    ConllFormatError,
    Corpus,
    EmbeddingFormatError,
    EmptyCorpus,
    Sentence,
    Vocab,
    evaluate,
    iob1_to_bio,
    load_embeddings,
    prepare_tags,
    read_conll,
    spans,
    to_bioes,
    write_conll,
)


def write(tmp_path, text, name="x.conll"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_blank_lines_delimit_sentences(tmp_path):
    c = read_conll(write(tmp_path, "a O\nb B-PER\n\nc O\n"))
    assert len(c) == 2 and c.n_tokens == 3
    assert c.sentences[0].tags == ["O", "B-PER"]


def test_docstart_dropped_and_columns(tmp_path):
    c = read_conll(write(tmp_path, "-DOCSTART- -X- O O\n\nEU NNP B-NP B-ORG\nrejects VBZ B-VP O\n"), 0, 3)
    assert c.sentences[0].words == ["EU", "rejects"]
    assert c.sentences[0].tags == ["B-ORG", "O"]


def test_only_blank_lines_is_empty(tmp_path):
    with pytest.raises(EmptyCorpus):
        read_conll(write(tmp_path, "\n\n   \n"))


def test_malformed_line_reports_line_number(tmp_path):
    with pytest.raises(ConllFormatError, match=":3:"):
        read_conll(write(tmp_path, "a X O\nb X O\nc\n"), 0, 2)


def test_round_trip(tmp_path):
    src = read_conll("tests/fixtures/overfit20.conll")
    out = tmp_path / "back.conll"
    write_conll(out, src.sentences)
    back = read_conll(out)
    assert [s.tokens for s in back] == [s.tokens for s in src]


CONLL03_TRAIN = os.environ.get("CONLL03_TRAIN")


@pytest.mark.skipif(not CONLL03_TRAIN, reason="set CONLL03_TRAIN to the CoNLL03 eng.train file")
def test_conll03_train_statistics():
    c = read_conll(CONLL03_TRAIN, 0, 3)
    assert (len(c), c.n_tokens) == (14987, 204567)


# ------------------------------------------------------------------- BIOES

def test_to_bioes_examples():
    assert to_bioes(["B-PER", "I-PER", "O"]) == ["B-PER", "E-PER", "O"]
    assert to_bioes(["B-LOC"]) == ["S-LOC"]
    assert to_bioes(["O", "O"]) == ["O", "O"]
    assert to_bioes(["B-ORG", "I-ORG", "I-ORG", "B-ORG"]) == ["B-ORG", "I-ORG", "E-ORG", "S-ORG"]


def test_to_bioes_repairs_type_switch():
    counter = Counter()
    assert to_bioes(["B-PER", "I-LOC", "O"], counter) == ["S-PER", "S-LOC", "O"]
    assert counter["repairs"] == 1


def test_iob1_normalisation():
    assert iob1_to_bio(["I-PER", "I-PER", "O", "I-LOC", "B-LOC"]) == ["B-PER", "I-PER", "O", "B-LOC", "B-LOC"]


TYPES = ["PER", "LOC", "ORG"]


@st.composite
def bio_sequences(draw):
    tags = []
    for _ in range(draw(st.integers(0, 8))):
        if draw(st.booleans()):
            tags.append("O")
        else:
            t = draw(st.sampled_from(TYPES))
            tags += ["B-" + t] + ["I-" + t] * draw(st.integers(0, 3))
    return tags


@given(bio_sequences())
def test_bioes_preserves_spans(tags):
    out = to_bioes(tags)
    assert len(out) == len(tags)
    assert spans(out) == spans(tags)
    assert all(t == "O" or t[0] in "BIES" for t in out)


@given(bio_sequences())
def test_span_decoding_reads_iob1(tags):
    # IOB1 starts a span with I- unless it directly follows one of the same type
    iob1 = []
    prev = None
    for k, t in enumerate(tags):
        if t.startswith("B-") and prev != t[2:]:
            t = "I-" + t[2:]
        iob1.append(t)
        prev = t[2:] if t != "O" else None
    assert spans(iob1) == spans(tags)


# --------------------------------------------------------------- vocabulary

def test_vocab_reserved_ids_and_tags():
    tr = Corpus([Sentence.from_pairs(["The", "Cat"], ["O", "S-X"])])
    dev = Corpus([Sentence.from_pairs(["dog"], ["S-Y"])])
    v = Vocab.build(tr, tag_corpora=[dev])
    assert v.words["<pad>"] == 0 and v.words["<unk>"] == 1
    assert set(v.tags) == {"O", "S-X", "S-Y"}
    assert v.word_ids(["the", "CAT", "dog"]) == [v.words["the"], v.words["cat"], Vocab.UNK_ID]
    assert v.char_ids("C")[0] != Vocab.UNK_ID
    assert sorted(v.words.values()) == list(range(len(v.words)))
    again = Vocab.from_json(json.loads(json.dumps(v.to_json())))
    assert again == v


# --------------------------------------------------------------- embeddings

def _vocab(words):
    return Vocab.build(Corpus([Sentence.from_pairs(words, ["O"] * len(words))]))


def test_embedding_rows_copied_verbatim(tmp_path):
    v = _vocab(["paris", "london"])
    p = write(tmp_path, "Paris 0.1 -0.25 3e-2\nrome 1 2 3\n", "emb.txt")
    table = load_embeddings(p, 3, v, 0)
    assert table[v.words["paris"]].tolist() == [0.1, -0.25, 0.03]
    assert np.all(table[Vocab.PAD_ID] == 0)


def test_oov_rows_within_bound(tmp_path):
    words = [f"w{i}" for i in range(50)]
    v = _vocab(words)
    p = write(tmp_path, "other " + " ".join(["0.5"] * 100) + "\n", "emb.txt")
    bound = np.sqrt(3 / 100)
    for seed in range(20):
        table = load_embeddings(p, 100, v, seed)
        assert np.abs(table).max() <= bound


def test_embedding_dimension_mismatch(tmp_path):
    p = write(tmp_path, "a " + " ".join(["0.1"] * 100) + "\nb " + " ".join(["0.1"] * 50) + "\n", "emb.txt")
    with pytest.raises(EmbeddingFormatError, match=":2:"):
        load_embeddings(p, 100, _vocab(["a"]), 0)


# ------------------------------------------------------------------ metrics

def test_perfect_match():
    m = evaluate([["S-PER", "O"]], [["S-PER", "O"]], "ner")
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_half_overlap():
    gold = [["S-PER", "O", "B-LOC", "E-LOC"]]
    pred = [["S-PER", "S-ORG", "O", "O"]]
    m = evaluate(gold, pred, "ner")
    assert (m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5)


def test_boundary_mismatch_is_wrong():
    m = evaluate([["B-LOC", "E-LOC"]], [["S-LOC", "O"]], "chunk")
    assert m.f1 == 0.0 and m.precision == 0.0


def test_pos_accuracy():
    gold = [["NN"] * 10]
    pred = [["NN"] * 9 + ["VB"]]
    assert evaluate(gold, pred, "pos").token_accuracy == pytest.approx(0.9)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        evaluate([["O", "O"]], [["O"]], "ner")


def test_length_buckets_and_outputs():
    gold = [["O"] * 3, ["S-X"] * 7, ["O"] * 45]
    m = evaluate(gold, gold, "ner")
    assert set(m.by_length) == {"1-5", "5-10", "40+"}
    assert m.by_length["5-10"].f1 == 1.0
    assert "f1=1.000000" in m.to_text()
    assert json.loads(m.to_json())["by_length"]["40+"]["n_sentences"] == 1


tag_lists = st.lists(st.sampled_from(["O", "S-A", "B-A", "E-A", "S-B", "I-A"]), min_size=1, max_size=6)


@given(st.lists(st.tuples(tag_lists, st.data()), min_size=1, max_size=5), st.randoms())
def test_evaluate_permutation_and_relabel_invariance(pairs, rnd):
    gold, pred = [], []
    for g, data in pairs:
        gold.append(g)
        pred.append(data.draw(st.lists(st.sampled_from(["O", "S-A", "B-A", "E-A", "S-B"]), min_size=len(g), max_size=len(g))))
    base = evaluate(gold, pred, "ner")
    order = list(range(len(gold)))
    rnd.shuffle(order)
    shuffled = evaluate([gold[i] for i in order], [pred[i] for i in order], "ner")
    assert (shuffled.precision, shuffled.recall, shuffled.f1) == (base.precision, base.recall, base.f1)
    swap = lambda seq: [t.replace("-A", "-Z").replace("-B", "-A").replace("-Z", "-B") for t in seq]  # noqa: E731
    relabeled = evaluate([swap(g) for g in gold], [swap(p) for p in pred], "ner")
    assert (relabeled.precision, relabeled.recall, relabeled.f1) == (base.precision, base.recall, base.f1)
    if base.precision + base.recall > 0:
        assert base.f1 == pytest.approx(2 * base.precision * base.recall / (base.precision + base.recall))


def test_prepare_tags_pos_untouched_ner_converted():
    c = Corpus([Sentence.from_pairs(["a", "b"], ["I-PER", "I-PER"])])
    assert prepare_tags(c, "ner").sentences[0].tags == ["B-PER", "E-PER"]
    assert prepare_tags(c, "pos").sentences[0].tags == ["I-PER", "I-PER"]


@given(bio_sequences())
def test_bioes_conversion_idempotent(tags):
    once = to_bioes(tags)
    assert to_bioes(once) == once
    if once:
        corpus = Corpus([Sentence.from_pairs(["w"] * len(once), once)])
        assert prepare_tags(corpus, "ner").sentences[0].tags == once
