"""Position-aware self-attention and the self-attentional context fusion layer.

Compatibility between tokens i and j is additive attention plus a positional
bias built from three factors: a hard self-disabled mask, a distance-aware
Gaussian penalty and a token-specific relative-position inner product. The
fusion layer transforms the attended context with two tanh layers and gates it
against the layer input.

Batched functions take (B, n, d) inputs and per-sentence ``lengths``; padded
positions neither give nor receive attention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor, sigmoid, tanh


@dataclass
class PsaParams:
    W1: Tensor
    W2: Tensor
    w: Tensor
    b: Tensor
    W3: Tensor
    k: int = 10
    alphas: tuple = (1 / 3, 1 / 3, 1 / 3)
    alpha_logits: Tensor | None = None  # learned mode when set
    use_mask: bool = True
    use_gauss: bool = True
    use_tokenpos: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("window size k must be >= 1")
        if abs(sum(self.alphas) - 1.0) > 1e-9 or min(self.alphas) < 0:
            raise ValueError(f"alphas must be nonnegative and sum to 1, got {self.alphas}")
        if self.W3.shape[0] != 2 * self.r + 1:
            raise ValueError(f"W3 needs {2 * self.r + 1} rows, has {self.W3.shape[0]}")

    @property
    def dim(self):
        return self.W1.shape[0]

    @property
    def epsilon(self):
        return self.k / 2.0

    @property
    def r(self):
        return self.k

    @classmethod
    def init(cls, d, rng, k=10, alphas=(1 / 3, 1 / 3, 1 / 3), learn_alphas=False, **flags):
        r = k
        return cls(
            W1=T.glorot_init(d, d, rng),
            W2=T.glorot_init(d, d, rng),
            w=Tensor(T.glorot_init(d, 1, rng).data.reshape(d), requires_grad=True),
            b=Tensor(np.zeros(d), requires_grad=True),
            W3=T.glorot_init(2 * r + 1, d, rng),
            k=k,
            alphas=tuple(alphas),
            alpha_logits=Tensor(np.log(np.asarray(alphas)), requires_grad=True) if learn_alphas else None,
            **flags,
        )

    def named(self, prefix):
        out = {f"{prefix}.W1": self.W1, f"{prefix}.W2": self.W2, f"{prefix}.w": self.w,
               f"{prefix}.b": self.b, f"{prefix}.W3": self.W3}
        if self.alpha_logits is not None:
            out[f"{prefix}.alpha_logits"] = self.alpha_logits
        return out

    def alpha(self):
        """Current (alpha1, alpha2, alpha3) as a (3,) tensor."""
        if self.alpha_logits is None:
            return Tensor(np.asarray(self.alphas))
        return T.masked_softmax(self.alpha_logits, np.ones(3, dtype=bool))


@dataclass
class FusionParams:
    Wz1: Tensor
    bz1: Tensor
    Wz2: Tensor
    bz2: Tensor
    Wf1: Tensor
    Wf2: Tensor
    Wf3: Tensor

    @property
    def dim(self):
        return self.Wz1.shape[0]

    @classmethod
    def init(cls, d, rng):
        zeros = lambda: Tensor(np.zeros(d), requires_grad=True)  # noqa: E731
        return cls(
            Wz1=T.glorot_init(d, d, rng), bz1=zeros(),
            Wz2=T.glorot_init(d, d, rng), bz2=zeros(),
            Wf1=T.glorot_init(d, d, rng), Wf2=T.glorot_init(d, d, rng), Wf3=T.glorot_init(d, d, rng),
        )

    def named(self, prefix):
        return {f"{prefix}.{k}": getattr(self, k) for k in ("Wz1", "bz1", "Wz2", "bz2", "Wf1", "Wf2", "Wf3")}


@dataclass
class AttentionTrace:
    matrix: np.ndarray
    tokens: list
    layer: int
    bypass: bool = field(default=False)

    def to_json(self):
        return {
            "layer": self.layer,
            "tokens": list(self.tokens),
            "bypass": self.bypass,
            "matrix": self.matrix.tolist(),
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")


# ------------------------------------------------------------ scalar factors

def gaussian_bias(i, j, epsilon):
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return -((i - j) ** 2) / (2.0 * epsilon**2)


def rel_index(i, j, r):
    """Row of the relative-position table for offset ``i - j`` clipped to [-r, r]."""
    return int(min(max(i - j, -r), r) + r)


def token_position_bias(x_i, i, j, params):
    x_i = T.as_tensor(x_i)
    return (x_i * params.W3[rel_index(i, j, params.r)]).sum()


def compatibility(x_i, x_j, i, j, params):
    """Additive score plus the Gaussian and token-position terms for one pair.

    The self-disabled mask is not a score term; it is applied as an exclusion
    in :func:`attention_weights`.
    """
    x_i, x_j = T.as_tensor(x_i), T.as_tensor(x_j)
    hidden = tanh(params.W1 @ x_i.reshape(-1, 1) + params.W2 @ x_j.reshape(-1, 1) + params.b.reshape(-1, 1))
    score = (params.w * hidden.reshape(-1)).sum()
    a = params.alpha()
    if params.use_tokenpos:
        score = score + a[1] * token_position_bias(x_i, i, j, params)
    if params.use_gauss:
        score = score + a[2] * gaussian_bias(i, j, params.epsilon)
    return score


# ------------------------------------------------------------------ batched

def _rel_table(n, r):
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return np.clip(i - j, -r, r) + r


def _gauss_table(n, epsilon):
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    return -((i - j) ** 2) / (2.0 * epsilon**2)


def enabled_mask(lengths, n, use_mask=True):
    """(B, n, n) support of each attention row: real tokens, minus the diagonal."""
    lengths = np.asarray(lengths)
    real = np.arange(n)[None, :] < lengths[:, None]
    on = real[:, :, None] & real[:, None, :]
    if use_mask:
        on = on & ~np.eye(n, dtype=bool)[None]
    return on


def score_terms(X, params):
    """Score components for (B, n, d) input: ``additive``, ``tokenpos``, ``gauss``.

    ``tokenpos`` and ``gauss`` are already weighted by their alpha; a disabled
    factor is returned as ``None``.
    """
    X = T.as_tensor(X)
    B, n, d = X.shape
    left = (X @ params.W1.T).reshape(B, n, 1, d)
    right = (X @ params.W2.T).reshape(B, 1, n, d)
    hidden = tanh(left + right + params.b)
    additive = (hidden @ params.w.reshape(d, 1)).reshape(B, n, n)
    a = params.alpha()
    terms = {"additive": additive, "tokenpos": None, "gauss": None}
    if params.use_tokenpos:
        proj = X @ params.W3.T  # (B, n, 2r+1)
        rel = _rel_table(n, params.r)
        picked = proj[np.arange(B)[:, None, None], np.arange(n)[None, :, None], rel[None]]
        terms["tokenpos"] = picked * a[1]
    if params.use_gauss:
        terms["gauss"] = a[2] * Tensor(_gauss_table(n, params.epsilon))
    return terms


def attention_scores(X, params):
    terms = score_terms(X, params)
    score = terms["additive"]
    for key in ("tokenpos", "gauss"):
        if terms[key] is not None:
            score = score + terms[key]
    return score


def attention_weights_batch(X, lengths, params):
    """(B, n, n) alignment matrices; rows without support (n == 1, padding) are zero."""
    n = X.shape[1]
    scores = attention_scores(X, params)
    return T.masked_softmax(scores, enabled_mask(lengths, n, params.use_mask), empty="zero")


def attention_weights(X, params):
    """(n, n) alignment matrix for one sentence; ``[[0]]`` for n == 1."""
    X = T.as_tensor(X)
    n, d = X.shape
    return attention_weights_batch(X.reshape(1, n, d), [n], params).reshape(n, n)


def attend(X, A):
    """Context vectors: row i is sum_j A[i, j] X[j]."""
    return T.as_tensor(A) @ T.as_tensor(X)


def transform(s, fusion):
    s = T.as_tensor(s)
    inner = tanh(s @ fusion.Wz1.T + fusion.bz1)
    return tanh(inner @ fusion.Wz2.T + fusion.bz2)


def fusion_gate(x, s_t, fusion):
    return sigmoid(tanh(x @ fusion.Wf1.T + s_t @ fusion.Wf2.T) @ fusion.Wf3.T)


def fuse(x, s_t, fusion):
    """Gated convex combination ``lam * x + (1 - lam) * s_t``."""
    x, s_t = T.as_tensor(x), T.as_tensor(s_t)
    lam = fusion_gate(x, s_t, fusion)
    return s_t + lam * (x - s_t)


def psa_layer_batch(X, lengths, psa, fusion, dropout_p=0.0, training=False, rng=None):
    """Fusion layer over (B, n, d); returns the output and the (B, n, n) weights."""
    A = attention_weights_batch(X, lengths, psa)
    S = attend(X, A)
    S = T.dropout(S, dropout_p, rng, training)
    return fuse(X, transform(S, fusion), fusion), A


def psa_layer(X, psa, fusion, dropout_p=0.0, training=False, rng=None, tokens=None, layer=1):
    """Fusion layer over one sentence (n, d); returns ``(output, AttentionTrace)``."""
    X = T.as_tensor(X)
    n, d = X.shape
    out, A = psa_layer_batch(X.reshape(1, n, d), [n], psa, fusion, dropout_p, training, rng)
    trace = AttentionTrace(
        A.data[0].copy(),
        list(tokens) if tokens is not None else [str(i) for i in range(n)],
        layer,
        bypass=bool(psa.use_mask and n == 1),
    )
    return out.reshape(n, d), trace
