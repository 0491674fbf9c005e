"""Linear-chain CRF with label-pair dependent potentials.

The log-potential of moving from label ``y'`` to ``y`` at position j is
``W[y', y] . z_j + b[y', y]``. Two virtual labels are appended to the ``L``
real ones: START (id ``L``) is the source at the first position, STOP (id
``L + 1``) the destination after the last one, scored against the final
``z_n``. START is never a destination and STOP never a source; those entries
exist in the tables but are never read.

With ``factorized=True`` the potential splits into a per-label emission
``E[y] . z_j + e[y]`` plus a transition ``T[y', y]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class CrfParams:
    num_labels: int
    W: Tensor | None = None  # (L+2, L+2, D)
    b: Tensor | None = None  # (L+2, L+2)
    E: Tensor | None = None  # (L, D), factorized only
    e: Tensor | None = None  # (L,), factorized only
    trans: Tensor | None = None  # (L+2, L+2), factorized only

    @property
    def factorized(self):
        return self.E is not None

    @property
    def start(self):
        return self.num_labels

    @property
    def stop(self):
        return self.num_labels + 1

    @classmethod
    def init(cls, num_labels, dim, rng, factorized=False):
        K = num_labels + 2
        if factorized:
            return cls(
                num_labels,
                E=T.glorot_init(num_labels, dim, rng),
                e=Tensor(np.zeros(num_labels), requires_grad=True),
                trans=Tensor(np.zeros((K, K)), requires_grad=True),
            )
        W = T.glorot_init(K * K, dim, rng).data.reshape(K, K, dim)
        return cls(num_labels, W=Tensor(W, requires_grad=True), b=Tensor(np.zeros((K, K)), requires_grad=True))

    def named(self, prefix="crf"):
        if self.factorized:
            return {f"{prefix}.E": self.E, f"{prefix}.e": self.e, f"{prefix}.trans": self.trans}
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b}


def pair_potential(z, y_prev, y, params):
    """Log-potential of the transition ``y_prev -> y`` given encoder output ``z``."""
    z = T.as_tensor(z)
    if params.factorized:
        out = params.trans[y_prev, y]
        if y < params.num_labels:
            out = out + (params.E[y] * z).sum() + params.e[y]
        return out
    return (params.W[y_prev, y] * z).sum() + params.b[y_prev, y]


def potentials(Z, lengths, params):
    """Position and stop log-potentials for a padded batch Z (B, n, D).

    Returns ``pot`` (B, n, L+1, L), indexed ``[b, j, source, dest]`` where
    source ``L`` is START, and ``stop`` (B, L) for ending on each label.
    """
    Z = T.as_tensor(Z)
    B, n, D = Z.shape
    L = params.num_labels
    src = np.arange(L + 1)
    src[L] = params.start
    last = Z[np.arange(B), np.asarray(lengths) - 1]  # (B, D)
    if params.factorized:
        emit = (Z @ params.E.T + params.e).reshape(B, n, 1, L)
        pot = emit + params.trans[src[:, None], np.arange(L)[None, :]]
        stop = params.trans[np.arange(L), params.stop].reshape(1, L) + Tensor(np.zeros((B, 1)))
        return pot, stop
    Wsub = params.W[src[:, None], np.arange(L)[None, :]]  # (L+1, L, D)
    pot = (Z @ Wsub.reshape((L + 1) * L, D).T).reshape(B, n, L + 1, L)
    pot = pot + params.b[src[:, None], np.arange(L)[None, :]]
    stop = last @ params.W[np.arange(L), params.stop].T + params.b[np.arange(L), params.stop]
    return pot, stop


def _mask(lengths, n):
    return (np.arange(n)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)


def gold_score(pot, stop, lengths, tags):
    """(B,) scores of padded gold label arrays ``tags`` (B, n)."""
    tags = np.asarray(tags, dtype=np.int64)
    L = stop.shape[1]
    bi, ji, si, di = [], [], [], []
    for b, n in enumerate(lengths):
        prev = L
        for j in range(n):
            bi.append(b)
            ji.append(j)
            si.append(prev)
            di.append(tags[b, j])
            prev = tags[b, j]
    B = len(lengths)
    picked = pot[np.array(bi), np.array(ji), np.array(si), np.array(di)]
    # scatter per-position terms back to sentences with a constant 0/1 matrix
    owner = np.zeros((B, len(bi)))
    owner[np.array(bi), np.arange(len(bi))] = 1.0
    path = (Tensor(owner) @ picked.reshape(-1, 1)).reshape(B)
    last_tags = np.array([tags[b, n - 1] for b, n in enumerate(lengths)])
    return path + stop[np.arange(B), last_tags]


def log_partition_batch(pot, stop, lengths):
    """(B,) log normalisers by the forward recursion in log space."""
    B, n, _, L = pot.shape
    mask = _mask(lengths, n)
    alpha = pot[:, 0, L, :]  # from START
    for j in range(1, n):
        step = T.logsumexp(alpha.reshape(B, L, 1) + pot[:, j, :L, :], axis=1)
        m = mask[:, j : j + 1]
        alpha = step if m.all() else T.blend(m, step, alpha)
    return T.logsumexp(alpha + stop, axis=1)


def nll_batch(Z, lengths, tags, params):
    """Summed negative log-likelihood of gold ``tags`` over a padded batch."""
    pot, stop = potentials(Z, lengths, params)
    return (log_partition_batch(pot, stop, lengths) - gold_score(pot, stop, lengths, tags)).sum()


def viterbi_from_potentials(pot, stop):
    """Best path for one sentence from numpy ``pot`` (n, L+1, L) and ``stop`` (L,).

    Ties go to the lowest label id, both for the final label and at every
    backpointer.
    """
    n, _, L = pot.shape
    delta = pot[0, L, :].copy()
    back = np.zeros((n, L), dtype=np.int64)
    for j in range(1, n):
        cand = delta[:, None] + pot[j, :L, :]
        back[j] = np.argmax(cand, axis=0)
        delta = cand[back[j], np.arange(L)]
    best = int(np.argmax(delta + stop))
    path = [best]
    for j in range(n - 1, 0, -1):
        best = int(back[j, best])
        path.append(best)
    return path[::-1]


def decode_batch(Z, lengths, params):
    pot, stop = potentials(Z, lengths, params)
    return [viterbi_from_potentials(pot.data[b, :n], stop.data[b]) for b, n in enumerate(lengths)]


# --------------------------------------------------------- single sentence

def _single(Z):
    Z = T.as_tensor(Z)
    n, D = Z.shape
    return Z.reshape(1, n, D), [n]


def sequence_score(Z, y, params):
    Zb, lengths = _single(Z)
    if len(y) != lengths[0]:
        raise ValueError(f"tag sequence length {len(y)} != {lengths[0]} positions")
    pot, stop = potentials(Zb, lengths, params)
    return gold_score(pot, stop, lengths, np.asarray(y)[None]).reshape(())


def log_partition(Z, params):
    Zb, lengths = _single(Z)
    pot, stop = potentials(Zb, lengths, params)
    return log_partition_batch(pot, stop, lengths).reshape(())


def nll_loss(Zs, golds, params):
    """Sum over sentences of ``log_partition - sequence_score``."""
    if not Zs:
        raise ValueError("nll_loss needs a non-empty batch")
    total = None
    for Z, y in zip(Zs, golds, strict=True):
        term = log_partition(Z, params) - sequence_score(Z, y, params)
        total = term if total is None else total + term
    return total


def viterbi_decode(Z, params):
    """Returns ``(labels, score)``; the score is ``sequence_score`` of the labels."""
    Zb, lengths = _single(Z)
    path = decode_batch(Zb, lengths, params)[0]
    return path, sequence_score(Z, path, params).item()
