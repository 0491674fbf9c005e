"""Full tagger: char Bi-LSTM + word embedding -> fusion layer 1 -> word Bi-LSTM
-> fusion layer 2 -> CRF.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import crf, encoder, psa
from . import tensor as T
from .config import TrainConfig
from .data import Vocab
from .tensor import Tensor


@dataclass
class Batch:
    sentences: list
    word_ids: np.ndarray  # (B, n)
    tag_ids: np.ndarray  # (B, n), zero-padded
    lengths: list
    unique_chars: list  # char ids per distinct surface form in the batch
    surface_index: np.ndarray  # (B, n) row into unique_chars, padding -> len(unique_chars)

    @property
    def size(self):
        return len(self.lengths)


def make_batch(sentences, vocab, with_tags=True):
    B = len(sentences)
    n = max(len(s) for s in sentences)
    word_ids = np.zeros((B, n), dtype=np.int64)
    tag_ids = np.zeros((B, n), dtype=np.int64)
    uniq = {}
    for b, s in enumerate(sentences):
        for w in s.words:
            uniq.setdefault(w, len(uniq))
    surf = np.full((B, n), len(uniq), dtype=np.int64)
    for b, s in enumerate(sentences):
        word_ids[b, : len(s)] = vocab.word_ids(s.words)
        if with_tags:
            tag_ids[b, : len(s)] = vocab.tag_ids(s.tags)
        surf[b, : len(s)] = [uniq[w] for w in s.words]
    chars = [vocab.char_ids(w) for w in uniq]
    return Batch(list(sentences), word_ids, tag_ids, [len(s) for s in sentences], chars, surf)


class Tagger:
    """Holds all parameters and runs the forward pipeline on padded batches."""

    def __init__(self, config: TrainConfig, vocab: Vocab, rng, embeddings=None):
        c = config
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.config = c
        self.vocab = vocab
        if embeddings is None:
            bound = np.sqrt(3.0 / c.word_emb)
            embeddings = rng.uniform(-bound, bound, size=(len(vocab.words), c.word_emb))
            embeddings[Vocab.PAD_ID] = 0.0
        if embeddings.shape != (len(vocab.words), c.word_emb):
            raise ValueError(f"embedding table shape {embeddings.shape} does not match vocabulary/word_emb")
        self.word_emb = Tensor(np.array(embeddings, dtype=np.float64), requires_grad=c.fine_tune_embeddings)
        cb = np.sqrt(3.0 / c.char_emb)
        self.char_emb = Tensor(rng.uniform(-cb, cb, size=(len(vocab.chars), c.char_emb)), requires_grad=True)
        self.char_fwd = encoder.LstmParams.init(c.char_emb, c.char_hidden, rng, c.forget_bias)
        self.char_bwd = encoder.LstmParams.init(c.char_emb, c.char_hidden, rng, c.forget_bias)
        d1 = c.word_emb + 2 * c.char_hidden
        d2 = 2 * c.word_hidden
        flags = dict(use_mask=not c.disable_mask, use_gauss=not c.disable_gauss, use_tokenpos=not c.disable_tokenpos)
        self.psa1 = self.fusion1 = self.psa2 = self.fusion2 = None
        if not c.disable_fusion1:
            self.psa1 = psa.PsaParams.init(d1, rng, k=c.k, alphas=c.alphas, learn_alphas=c.learn_alphas, **flags)
            self.fusion1 = psa.FusionParams.init(d1, rng)
        self.word_fwd = encoder.LstmParams.init(d1, c.word_hidden, rng, c.forget_bias)
        self.word_bwd = encoder.LstmParams.init(d1, c.word_hidden, rng, c.forget_bias)
        if not c.disable_fusion2:
            self.psa2 = psa.PsaParams.init(d2, rng, k=c.k, alphas=c.alphas, learn_alphas=c.learn_alphas, **flags)
            self.fusion2 = psa.FusionParams.init(d2, rng)
        self.crf = crf.CrfParams.init(len(vocab.tags), d2, rng, factorized=c.factorized_crf)

    @property
    def id2tag(self):
        return self.vocab.id2tag

    def parameters(self):
        """Ordered ``{name: Tensor}`` of every trainable tensor."""
        out = {"word_emb": self.word_emb, "char_emb": self.char_emb}
        out.update(self.char_fwd.named("char_fwd"))
        out.update(self.char_bwd.named("char_bwd"))
        if self.psa1 is not None:
            out.update(self.psa1.named("psa1"))
            out.update(self.fusion1.named("fusion1"))
        out.update(self.word_fwd.named("word_fwd"))
        out.update(self.word_bwd.named("word_bwd"))
        if self.psa2 is not None:
            out.update(self.psa2.named("psa2"))
            out.update(self.fusion2.named("fusion2"))
        out.update(self.crf.named("crf"))
        return {k: v for k, v in out.items() if v.requires_grad}

    def state_dict(self):
        return {k: v.data for k, v in self.parameters().items()} | {"word_emb": self.word_emb.data}

    def load_state_dict(self, state):
        params = self.parameters() | {"word_emb": self.word_emb}
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, t in params.items():
            if t.data.shape != state[k].shape:
                raise ValueError(f"shape mismatch for {k}: {t.data.shape} vs {state[k].shape}")
            t.data = np.array(state[k], dtype=np.float64)

    # ------------------------------------------------------------- forward

    def represent(self, batch):
        """(B, n, word_emb + 2 * char_hidden) distributed representations."""
        words = T.take_rows(self.word_emb, batch.word_ids)
        chars = encoder.char_encode_batch(batch.unique_chars, self.char_emb, self.char_fwd, self.char_bwd)
        chars = T.concat([chars, Tensor(np.zeros((1, chars.shape[1])))], axis=0)
        return T.concat([words, chars[batch.surface_index]], axis=-1)

    def encode(self, batch, training=False, rng=None):
        """Encoder output Z (B, n, 2 * word_hidden) and per-layer attention weights."""
        c = self.config
        mask = (np.arange(batch.word_ids.shape[1])[None, :] < np.asarray(batch.lengths)[:, None])
        attn = {}
        x = self.represent(batch)
        x = T.dropout(x, c.dropout_lstm, rng, training)
        if self.psa1 is not None:
            x, attn[1] = psa.psa_layer_batch(x, batch.lengths, self.psa1, self.fusion1, c.dropout_attn, training, rng)
        h = encoder.bilstm_batch(x, mask, self.word_fwd, self.word_bwd)
        h = T.dropout(h, c.dropout_lstm, rng, training)
        if self.psa2 is not None:
            h, attn[2] = psa.psa_layer_batch(h, batch.lengths, self.psa2, self.fusion2, c.dropout_attn, training, rng)
        return h, attn

    def loss(self, batch, training=False, rng=None):
        Z, _ = self.encode(batch, training, rng)
        return crf.nll_batch(Z, batch.lengths, batch.tag_ids, self.crf)

    def decode(self, batch):
        Z, _ = self.encode(batch, training=False)
        return crf.decode_batch(Z, batch.lengths, self.crf)

    def predict(self, sentences, batch_size=32):
        """Predicted tag strings for each sentence (inference mode)."""
        id2tag = self.id2tag
        out = []
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            batch = make_batch(chunk, self.vocab, with_tags=False)
            out.extend([id2tag[i] for i in path] for path in self.decode(batch))
        return out

    def attention_traces(self, sentences, layer):
        """``AttentionTrace`` per sentence for fusion layer ``layer`` (1 or 2)."""
        if layer not in (1, 2):
            raise ValueError("layer must be 1 or 2")
        params = self.psa1 if layer == 1 else self.psa2
        if params is None:
            raise ValueError(f"fusion layer {layer} is disabled in this model")
        traces = []
        for s in sentences:
            batch = make_batch([s], self.vocab, with_tags=False)
            _, attn = self.encode(batch, training=False)
            n = len(s)
            traces.append(psa.AttentionTrace(attn[layer].data[0, :n, :n].copy(), s.words, layer,
                                             bypass=bool(params.use_mask and n == 1)))
        return traces
