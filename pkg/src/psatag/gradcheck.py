"""Central finite-difference checks of backprop gradients on a tiny pipeline."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .data import Corpus, Sentence, Vocab
from .model import Tagger, make_batch

DEFAULT_STEP = 1e-3
DEFAULT_TOL = 1e-4
# gradients below this magnitude are compared on an absolute scale
REL_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=REL_FLOOR):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(loss_fn, array, coord, h=DEFAULT_STEP):
    """``(f(x + h e) - f(x - h e)) / 2h`` at one coordinate, restoring the value."""
    old = array[coord]
    array[coord] = old + h
    up = loss_fn().item()
    array[coord] = old - h
    down = loss_fn().item()
    array[coord] = old
    return (up - down) / (2 * h)


@dataclass
class GroupResult:
    name: str
    worst: float
    n_checked: int
    n_passed: int


@dataclass
class Report:
    groups: list = field(default_factory=list)
    tol: float = DEFAULT_TOL
    seconds: float = 0.0

    @property
    def n_checked(self):
        return sum(g.n_checked for g in self.groups)

    @property
    def pass_fraction(self):
        return sum(g.n_passed for g in self.groups) / max(1, self.n_checked)

    @property
    def offenders(self):
        return [g for g in self.groups if g.worst > self.tol]

    def ok(self, min_fraction=1.0):
        return self.pass_fraction >= min_fraction

    def lines(self):
        out = [f"{g.name:<28} worst_rel_err={g.worst:.3e} passed={g.n_passed}/{g.n_checked}" for g in self.groups]
        out.append(f"coordinates={self.n_checked} pass_fraction={self.pass_fraction:.4f} seconds={self.seconds:.1f}")
        return out


def check_gradients(loss_fn, params, rng, samples=20, h=DEFAULT_STEP, tol=DEFAULT_TOL, rows=None, prefix=""):
    """Compare backprop against finite differences on sampled coordinates.

    ``params`` maps names to leaf tensors; ``rows`` optionally restricts the
    sampled rows of a named table (e.g. embedding rows used by the batch).
    """
    rows = rows or {}
    for t in params.values():
        t.grad = None
    T.backward(loss_fn())
    results = []
    for name, t in params.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat_size = t.data.size
        if name in rows:
            cols = t.data.shape[1]
            pool = np.array([r * cols + c for r in rows[name] for c in range(cols)])
        else:
            pool = np.arange(flat_size)
        picks = rng.choice(pool, size=min(samples, len(pool)), replace=False)
        errs = []
        for flat in picks:
            coord = np.unravel_index(flat, t.data.shape)
            num = numeric_gradient(loss_fn, t.data, coord, h)
            errs.append(float(relative_error(analytic[coord], num)))
        errs = np.asarray(errs)
        results.append(GroupResult(prefix + name, float(errs.max()), len(errs), int((errs <= tol).sum())))
    return results


def tiny_corpus():
    """Two sentences of length <= 6 over four labels."""
    return Corpus([
        Sentence.from_pairs(["Anna", "met", "Bob", "in", "New", "York"], ["S-PER", "O", "S-PER", "O", "B-LOC", "E-LOC"]),
        Sentence.from_pairs(["New", "York", "is"], ["B-LOC", "E-LOC", "O"]),
    ])


def tiny_config(width_scale=1, **overrides):
    s = width_scale
    base = dict(word_emb=8 * s, char_emb=4 * s, char_hidden=6 * s, word_hidden=10 * s, k=3)
    base.update(overrides)
    return TrainConfig(**base)


def check_model(model, corpus, rng, samples, h=DEFAULT_STEP, tol=DEFAULT_TOL, prefix="", dropout_seed=7):
    batch = make_batch(corpus.sentences, model.vocab)

    def loss_fn():
        # identical dropout masks on every evaluation
        return model.loss(batch, training=True, rng=np.random.default_rng(dropout_seed))

    used_words = sorted(set(batch.word_ids.ravel().tolist()) - {Vocab.PAD_ID})
    used_chars = sorted({c for w in batch.unique_chars for c in w})
    return check_gradients(loss_fn, model.parameters(), rng, samples, h, tol,
                           rows={"word_emb": used_words, "char_emb": used_chars}, prefix=prefix)


def run_gradcheck(seed=0, width_scale=1, samples=24, h=DEFAULT_STEP, tol=DEFAULT_TOL):
    """Full-pipeline check for the default architecture and a variant that
    exercises learned alphas and the factorized CRF."""
    started = time.perf_counter()
    corpus = tiny_corpus()
    vocab = Vocab.build(corpus)
    assert len(vocab.tags) == 4
    rng = np.random.default_rng(seed)
    report = Report(tol=tol)
    variants = [("", {}), ("variant:", dict(learn_alphas=True, factorized_crf=True, alphas=(0.2, 0.5, 0.3)))]
    for prefix, overrides in variants:
        model = Tagger(tiny_config(width_scale, **overrides), vocab, np.random.default_rng([seed, len(prefix)]))
        report.groups.extend(check_model(model, corpus, rng, samples, h, tol, prefix=prefix))
    report.seconds = time.perf_counter() - started
    return report
