import numpy as np
import pytest

from psatag import encoder
from psatag import tensor as T
from psatag.config import TrainConfig
from psatag.encoder import LstmParams, bilstm, bilstm_batch, char_encode, lstm_step
from psatag.gradcheck import check_gradients, tiny_corpus
from psatag.data import Vocab
from psatag.model import Tagger, make_batch
from psatag.tensor import Tensor


def random_params(rng, n_in, h, scale=0.5):
    return LstmParams(
        Tensor(rng.normal(scale=scale, size=(4 * h, n_in)), requires_grad=True),
        Tensor(rng.normal(scale=scale, size=(4 * h, h)), requires_grad=True),
        Tensor(rng.normal(scale=scale, size=4 * h), requires_grad=True),
    )


def zero_params(n_in, h):
    return LstmParams(Tensor(np.zeros((4 * h, n_in))), Tensor(np.zeros((4 * h, h))), Tensor(np.zeros(4 * h)))


def test_init_forget_bias_and_shapes():
    p = LstmParams.init(5, 3, np.random.default_rng(0))
    assert p.Wx.shape == (12, 5) and p.Wh.shape == (12, 3) and p.b.shape == (12,)
    np.testing.assert_array_equal(p.b.data, [0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0])


def test_zero_step():
    h, c = lstm_step(np.zeros(4), np.zeros(3), np.zeros(3), zero_params(4, 3))
    np.testing.assert_array_equal(h.data, 0.0)
    np.testing.assert_array_equal(c.data, 0.0)


def test_saturated_gates():
    p = zero_params(2, 3)
    big = 50.0
    p.b.data[:] = np.concatenate([np.full(3, -big), np.full(3, big), np.zeros(3), np.full(3, big)])
    h, c = lstm_step(np.zeros(2), np.zeros(3), np.ones(3), p)
    np.testing.assert_allclose(h.data, np.tanh(1.0), atol=1e-12)
    assert np.tanh(1.0) == pytest.approx(0.7616, abs=1e-4)
    np.testing.assert_allclose(c.data, 1.0, atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        lstm_step(np.zeros(5), np.zeros(3), np.zeros(3), zero_params(4, 3))


def test_step_gradients():
    rng = np.random.default_rng(1)
    p = random_params(rng, 4, 3)
    x = Tensor(rng.normal(size=4), requires_grad=True)
    h0 = Tensor(rng.normal(size=3), requires_grad=True)
    c0 = Tensor(rng.normal(size=3), requires_grad=True)

    def loss():
        h, c = lstm_step(x, h0, c0, p)
        return h.sum() + (c * c).sum()

    params = {"Wx": p.Wx, "Wh": p.Wh, "b": p.b, "x": x, "h": h0, "c": c0}
    for g in check_gradients(loss, params, rng, samples=12):
        assert g.worst <= 1e-4, g


def unidirectional_oracle(seq, p):
    h, c = np.zeros(p.hidden), np.zeros(p.hidden)
    out = []
    for x in seq:
        ht, ct = lstm_step(x, h, c, p)
        h, c = ht.data, ct.data
        out.append(h)
    return np.array(out)


def test_bilstm_is_two_unidirectional_runs():
    rng = np.random.default_rng(2)
    fwd, bwd = random_params(rng, 4, 3), random_params(rng, 4, 3)
    seq = rng.normal(size=(6, 4))
    out = bilstm(seq, fwd, bwd).data
    np.testing.assert_allclose(out[:, :3], unidirectional_oracle(seq, fwd), atol=1e-13)
    np.testing.assert_allclose(out[:, 3:], unidirectional_oracle(seq[::-1], bwd)[::-1], atol=1e-13)


def test_bilstm_single_position_and_zero():
    rng = np.random.default_rng(3)
    out = bilstm(rng.normal(size=(1, 4)), random_params(rng, 4, 3), random_params(rng, 4, 3))
    assert out.shape == (1, 6)
    np.testing.assert_array_equal(bilstm(np.zeros((5, 4)), zero_params(4, 3), zero_params(4, 3)).data, 0.0)


def test_bilstm_palindrome_symmetry():
    rng = np.random.default_rng(4)
    p = random_params(rng, 3, 2)
    half = rng.normal(size=(3, 3))
    seq = np.concatenate([half, half[::-1]])
    out = bilstm(seq, p, p).data
    n = len(seq)
    for t in range(n):
        np.testing.assert_allclose(out[t], np.concatenate([out[n - 1 - t, 2:], out[n - 1 - t, :2]]), atol=1e-13)


def test_padded_batch_matches_single_sequences():
    rng = np.random.default_rng(5)
    fwd, bwd = random_params(rng, 4, 3), random_params(rng, 4, 3)
    seqs = [rng.normal(size=(n, 4)) for n in (5, 2, 3)]
    X = np.zeros((3, 5, 4))
    mask = np.zeros((3, 5))
    for b, s in enumerate(seqs):
        X[b, : len(s)] = s
        mask[b, : len(s)] = 1
    out = bilstm_batch(Tensor(X), mask, fwd, bwd).data
    for b, s in enumerate(seqs):
        np.testing.assert_allclose(out[b, : len(s)], bilstm(s, fwd, bwd).data, atol=1e-13)


# ------------------------------------------------------------------- chars

def test_single_char_word_symmetric_under_shared_params():
    rng = np.random.default_rng(6)
    emb = Tensor(rng.normal(size=(5, 4)))
    p = random_params(rng, 4, 3)
    rep = char_encode([2], emb, p, p).data
    np.testing.assert_array_equal(rep[:3], rep[3:])


def test_default_char_width():
    c = TrainConfig()
    rng = np.random.default_rng(0)
    emb = Tensor(rng.normal(size=(5, c.char_emb)))
    fwd = LstmParams.init(c.char_emb, c.char_hidden, rng)
    bwd = LstmParams.init(c.char_emb, c.char_hidden, rng)
    assert char_encode([1, 2, 3], emb, fwd, bwd).shape == (200,)


def test_reversed_word_swaps_halves():
    rng = np.random.default_rng(7)
    emb = Tensor(rng.normal(size=(6, 4)))
    a, b = random_params(rng, 4, 3), random_params(rng, 4, 3)
    word = [1, 4, 2, 5]
    x = char_encode(word, emb, a, b).data
    y = char_encode(word[::-1], emb, b, a).data
    np.testing.assert_allclose(y, np.concatenate([x[3:], x[:3]]), atol=1e-13)


def test_empty_word_rejected():
    rng = np.random.default_rng(8)
    p = random_params(rng, 4, 3)
    with pytest.raises(ValueError):
        char_encode([], Tensor(np.zeros((3, 4))), p, p)


def test_batched_chars_match_single_words():
    rng = np.random.default_rng(9)
    emb = Tensor(rng.normal(size=(8, 4)))
    a, b = random_params(rng, 4, 3), random_params(rng, 4, 3)
    words = [[1, 2, 3, 4, 5], [6], [7, 2]]
    out = encoder.char_encode_batch(words, emb, a, b).data
    for k, w in enumerate(words):
        np.testing.assert_allclose(out[k], char_encode(w, emb, a, b).data, atol=1e-13)


# ----------------------------------------------------------- encoder stack

def _shrunk_model():
    corpus = tiny_corpus()
    vocab = Vocab.build(corpus)
    cfg = TrainConfig(word_emb=8, char_emb=4, char_hidden=6, word_hidden=10, k=3,
                      disable_fusion1=True, disable_fusion2=True)
    return Tagger(cfg, vocab, 11), make_batch(corpus.sentences, vocab)


def test_stage_widths():
    model, batch = _shrunk_model()
    assert model.represent(batch).shape[-1] == 8 + 2 * 6
    Z, _ = model.encode(batch)
    assert Z.shape[-1] == 2 * 10


def test_encoder_stack_gradients():
    model, batch = _shrunk_model()
    rng = np.random.default_rng(12)
    probe = rng.normal(size=(batch.size, batch.word_ids.shape[1], 20))
    mask = (np.arange(probe.shape[1])[None, :] < np.array(batch.lengths)[:, None])[..., None]
    probe = Tensor(probe * mask)

    def loss():
        Z, _ = model.encode(batch)
        return (T.tanh(Z) * probe).sum()

    params = {k: v for k, v in model.parameters().items() if not k.startswith("crf")}
    used = sorted(set(batch.word_ids.ravel().tolist()) - {0})
    chars = sorted({c for w in batch.unique_chars for c in w})
    results = check_gradients(loss, params, rng, samples=15, rows={"word_emb": used, "char_emb": chars})
    for g in results:
        assert g.worst <= 1e-4, g
