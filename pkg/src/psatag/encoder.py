"""Character- and word-level Bi-LSTM encoders.

Batched routines take right-padded inputs of shape (B, T, ...) with a 0/1
``mask`` of shape (B, T). Past the end of a sequence the LSTM state is carried
unchanged, so the state after the last step is the state at the last real
token. The backward direction runs on per-row reversed copies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class LstmParams:
    Wx: Tensor  # (4h, in)
    Wh: Tensor  # (4h, h)
    b: Tensor  # (4h,)

    @property
    def hidden(self):
        return self.Wh.shape[1]

    @property
    def input_size(self):
        return self.Wx.shape[1]

    @classmethod
    def init(cls, input_size, hidden, rng, forget_bias=1.0):
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = forget_bias
        return cls(
            T.glorot_init(4 * hidden, input_size, rng),
            T.glorot_init(4 * hidden, hidden, rng),
            Tensor(b, requires_grad=True),
        )

    def named(self, prefix):
        return {f"{prefix}.Wx": self.Wx, f"{prefix}.Wh": self.Wh, f"{prefix}.b": self.b}


def lstm_step(x, h, c, params):
    """One LSTM step on 1-D (or batched 2-D) tensors; returns ``(h', c')``."""
    x, h, c = T.as_tensor(x), T.as_tensor(h), T.as_tensor(c)
    if x.shape[-1] != params.input_size or h.shape[-1] != params.hidden or c.shape != h.shape:
        raise ValueError("lstm_step: dimension mismatch with parameters")
    squeeze = x.ndim == 1
    if squeeze:
        x, h, c = x.reshape(1, -1), h.reshape(1, -1), c.reshape(1, -1)
    gates = x @ params.Wx.T + h @ params.Wh.T + params.b
    hc = T.lstm_pointwise(gates, c)
    H = params.hidden
    h_new, c_new = hc[:, :H], hc[:, H:]
    if squeeze:
        h_new, c_new = h_new.reshape(H), c_new.reshape(H)
    return h_new, c_new


def lstm_sequence(xs, mask, params):
    """Left-to-right LSTM over (B, T, in); returns per-step outputs (B, T, h)."""
    B, steps, _ = xs.shape
    H = params.hidden
    mask = np.asarray(mask, dtype=np.float64)
    xg = xs @ params.Wx.T + params.b
    h = Tensor(np.zeros((B, H)))
    c = Tensor(np.zeros((B, H)))
    outs = []
    for t in range(steps):
        gates = xg[:, t] + h @ params.Wh.T
        hc = T.lstm_pointwise(gates, c)
        m = mask[:, t : t + 1]
        if m.all():
            h, c = hc[:, :H], hc[:, H:]
        else:
            h = T.blend(m, hc[:, :H], h)
            c = T.blend(m, hc[:, H:], c)
        outs.append(h)
    return T.stack(outs, axis=1)


def reverse_index(lengths, steps):
    """Per-row index that reverses the first ``lengths[b]`` positions and fixes the rest."""
    idx = np.tile(np.arange(steps), (len(lengths), 1))
    for b, n in enumerate(lengths):
        idx[b, :n] = np.arange(n - 1, -1, -1)
    return idx


def reverse_padded(x, lengths):
    B, steps = x.shape[0], x.shape[1]
    idx = reverse_index(lengths, steps)
    return x[np.arange(B)[:, None], idx]


def bilstm_batch(xs, mask, fwd, bwd):
    """Bi-LSTM over (B, T, in) -> (B, T, 2h): forward and backward hidden at each t."""
    mask = np.asarray(mask)
    lengths = mask.sum(axis=1).astype(int)
    if np.any(lengths < 1):
        raise ValueError("bilstm: every sequence needs at least one position")
    out_f = lstm_sequence(xs, mask, fwd)
    out_b = reverse_padded(lstm_sequence(reverse_padded(xs, lengths), mask, bwd), lengths)
    return T.concat([out_f, out_b], axis=-1)


def bilstm(seq, fwd, bwd):
    """Bi-LSTM over one sequence (n, in) -> (n, 2h)."""
    seq = T.as_tensor(seq)
    n = seq.shape[0]
    if n < 1:
        raise ValueError("bilstm needs n >= 1")
    out = bilstm_batch(seq.reshape(1, n, seq.shape[1]), np.ones((1, n)), fwd, bwd)
    return out.reshape(n, -1)


def char_encode_batch(char_ids, char_emb, fwd, bwd):
    """Final forward and backward states for a list of words (lists of char ids)."""
    if any(len(w) == 0 for w in char_ids):
        raise ValueError("char_encode: empty word")
    W = len(char_ids)
    steps = max(len(w) for w in char_ids)
    ids = np.zeros((W, steps), dtype=np.int64)
    mask = np.zeros((W, steps))
    for k, w in enumerate(char_ids):
        ids[k, : len(w)] = w
        mask[k, : len(w)] = 1.0
    lengths = [len(w) for w in char_ids]
    emb = T.take_rows(char_emb, ids)
    last_f = lstm_sequence(emb, mask, fwd)[:, steps - 1]
    last_b = lstm_sequence(reverse_padded(emb, lengths), mask, bwd)[:, steps - 1]
    return T.concat([last_f, last_b], axis=-1)


def char_encode(char_ids, char_emb, fwd, bwd):
    """Character representation of one word: ``[fwd final ; bwd final]`` (2h,)."""
    return char_encode_batch([list(char_ids)], char_emb, fwd, bwd).reshape(-1)
