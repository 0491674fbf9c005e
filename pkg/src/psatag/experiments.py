"""Experiment drivers shared by the acceptance tests and ``scripts/``."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data import evaluate, prepare_tags, read_conll
from .synthetic import make_corpus, marker_accuracy
from .trainer import evaluate_model, train

OVERFIT_FIXTURE = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "overfit20.conll"


def overfit_config(**overrides):
    """Default hyperparameters at a quarter of the default widths, one sentence per update.

    With ten-sentence batches the fixture yields two clipped updates per epoch,
    too few to memorise it inside 200 epochs at the default learning rate.
    """
    cfg = TrainConfig(task="ner").shrunk(4).replace(batch_size=1, max_epochs=200, patience=200)
    return cfg.replace(**overrides)


@dataclass
class OverfitResult:
    accuracy: float
    epochs: int
    seconds: float
    curve: list = field(default_factory=list)


def run_overfit(path=OVERFIT_FIXTURE, config=None, target=0.99, progress=None):
    """Train on ``path`` and score token accuracy on the same sentences each epoch."""
    config = config or overfit_config()
    corpus = prepare_tags(read_conll(path), config.task)

    def train_accuracy(model, epoch):
        pred = model.predict(corpus.sentences)
        return evaluate([s.tags for s in corpus], pred, config.task).token_accuracy

    started = time.perf_counter()
    best, logs = train(config, corpus, corpus, dev_metric_fn=train_accuracy, stop_at=target, progress=progress)
    return OverfitResult(best.best_metric, best.epoch, time.perf_counter() - started,
                         [e.dev_metric for e in logs])


# ---------------------------------------------------------------- synthetic

def synthetic_config(**overrides):
    """Small widths and the default optimiser; the synthetic task has no entity spans,
    so it trains as a plain per-token labelling task (accuracy metric)."""
    cfg = TrainConfig(task="pos", word_emb=16, char_emb=8, char_hidden=8, word_hidden=32,
                      max_epochs=10, patience=100)
    return cfg.replace(**overrides)


@dataclass
class SyntheticResult:
    name: str
    test_accuracy: float
    dev_accuracy: float
    epochs: int
    seconds: float


def synthetic_corpora(n_train=2000, n_test=500, n_dev=200, distance=8):
    return (make_corpus(n_train, np.random.default_rng(1), distance=distance),
            make_corpus(n_dev, np.random.default_rng(3), distance=distance),
            make_corpus(n_test, np.random.default_rng(2), distance=distance))


def run_synthetic(name="psa", config=None, corpora=None, stop_at=1.0, progress=None):
    """Train on the marker task; model selection and early exit use dev marker accuracy."""
    config = config or synthetic_config()
    tr, dev, te = corpora or synthetic_corpora()
    started = time.perf_counter()
    best, logs = train(config, tr, dev,
                       dev_metric_fn=lambda m, e: marker_accuracy(dev, m.predict(dev.sentences)),
                       stop_at=stop_at, progress=progress)
    model = best.build_model()
    acc = marker_accuracy(te, model.predict(te.sentences))
    return SyntheticResult(name, acc, best.best_metric, len(logs), time.perf_counter() - started)


def run_synthetic_comparison(config=None, progress=None):
    """Full model against the same run with both fusion layers disabled."""
    config = config or synthetic_config()
    corpora = synthetic_corpora()
    full = run_synthetic("psa", config, corpora, progress=progress)
    plain = run_synthetic("no_fusion", config.replace(disable_fusion1=True, disable_fusion2=True), corpora,
                          progress=progress)
    return full, plain


# --------------------------------------------------------------- NER smoke

@dataclass
class SmokeResult:
    psa_scores: list
    baseline_scores: list

    @property
    def psa_mean(self):
        return statistics.fmean(self.psa_scores)

    @property
    def baseline_mean(self):
        return statistics.fmean(self.baseline_scores)

    @property
    def passed(self):
        return self.psa_mean > self.baseline_mean


def smoke_protocol(train_path, dev_path, embeddings_path, seeds=(1, 2, 3), epochs=10, min_sentences=1000,
                   progress=None, **overrides):
    """Dev F1 of the full model vs. both fusion layers disabled, each after ``epochs`` epochs.

    Both arms train for exactly ``epochs`` epochs and report the final dev F1.
    """
    base = TrainConfig(task="ner", max_epochs=epochs, patience=epochs + 1, **overrides)
    tr = read_conll(train_path, base.token_col, base.tag_col)
    dev = read_conll(dev_path, base.token_col, base.tag_col)
    if len(tr) < min_sentences:
        raise ValueError(f"smoke protocol needs >= {min_sentences} training sentences, got {len(tr)}")
    dev_bioes = prepare_tags(dev, "ner")
    scores = {"psa": [], "baseline": []}
    for seed in seeds:
        for arm, changes in (("psa", {}), ("baseline", {"disable_fusion1": True, "disable_fusion2": True})):
            cfg = base.replace(seed=seed, **changes)
            final = {}

            def last_epoch_f1(model, epoch, final=final):
                f1 = evaluate_model(model, dev_bioes, "ner").f1
                final["f1"] = f1
                return f1

            train(cfg, tr, dev, embeddings_path=embeddings_path, dev_metric_fn=last_epoch_f1)
            scores[arm].append(final["f1"])
            if progress is not None:
                progress(arm, seed, final["f1"])
    return SmokeResult(scores["psa"], scores["baseline"])
