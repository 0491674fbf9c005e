"""Mini-batch SGD with momentum, decayed learning rate, clipping, early stopping
and a binary checkpoint format.
"""
from __future__ import annotations

import io
import json
import logging
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .data import Vocab, embedding_vocabulary, evaluate, load_embeddings, prepare_tags
from .model import Tagger, make_batch

log = logging.getLogger(__name__)

MAGIC = b"PSATAG\x00\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


def lr_at_epoch(eta0, rho, t):
    """Learning rate after ``t`` completed epochs: ``eta0 / (1 + rho * t)``."""
    if t < 0:
        raise ValueError("epoch index must be >= 0")
    return eta0 / (1.0 + rho * t)


def sgd_momentum_step(params, grads, velocity, lr, momentum):
    """In-place ``v <- m v - lr g; p <- p + v`` over dicts of arrays.

    Missing velocity entries start at zero. Returns ``(params, velocity)``.
    """
    for k, g in grads.items():
        v = velocity.get(k)
        v = -lr * g if v is None else momentum * v - lr * g
        velocity[k] = v
        params[k] += v
    return params, velocity


class EarlyStopping:
    def __init__(self, patience):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = None
        self.bad_epochs = 0

    def update(self, metric, epoch):
        """Record the dev metric; True if this epoch is a new best."""
        if metric > self.best:
            self.best, self.best_epoch, self.bad_epochs = metric, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self):
        return self.bad_epochs >= self.patience


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    dev_metric: float
    learning_rate: float
    wall_time: float

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class Checkpoint:
    params: dict
    vocab: Vocab
    config: TrainConfig
    best_metric: float = float("nan")
    epoch: int = 0
    version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def build_model(self):
        model = Tagger(self.config, self.vocab, rng=0)
        model.load_state_dict(self.params)
        return model

    @classmethod
    def from_model(cls, model, best_metric=float("nan"), epoch=0):
        return cls({k: v.copy() for k, v in model.state_dict().items()}, model.vocab, model.config,
                   best_metric, epoch)


def checkpoint_bytes(ckpt):
    names = sorted(ckpt.params)
    meta = {
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab.to_json(),
        "best_metric": ckpt.best_metric,
        "epoch": ckpt.epoch,
        "extra": ckpt.extra,
        "tensors": [{"name": k, "shape": list(ckpt.params[k].shape)} for k in names],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", ckpt.version, len(blob)))
    buf.write(blob)
    for k in names:
        buf.write(np.ascontiguousarray(ckpt.params[k], dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(path, ckpt):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(ckpt))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    head = len(MAGIC) + 12
    if len(raw) < head or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic or truncated header)")
    version, meta_len = struct.unpack("<IQ", raw[len(MAGIC) : head])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: checkpoint format version {version}, this build reads {FORMAT_VERSION}")
    if len(raw) < head + meta_len:
        raise CheckpointError(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[head : head + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt metadata ({exc})") from None
    offset = head + meta_len
    params = {}
    for entry in meta["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated tensor data at {entry['name']}")
        params[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    cfg = dict(meta["config"])
    cfg["alphas"] = tuple(cfg["alphas"])
    return Checkpoint(params, Vocab.from_json(meta["vocab"]), TrainConfig.from_dict(cfg),
                      meta["best_metric"], meta["epoch"], version, meta.get("extra", {}))


# -------------------------------------------------------------------- train

def build_vocab(config, train, dev=(), test=(), embeddings_path=None):
    extra = []
    if embeddings_path is not None:
        # keep dev/test words that have a pretrained vector
        emb_words = {w.lower() for w in embedding_vocabulary(embeddings_path)}
        extra = [w for corpus in (dev, test) for s in corpus for w in s.words if w.lower() in emb_words]
    return Vocab.build(train, tag_corpora=[c for c in (dev, test) if c], extra_words=extra)


def evaluate_model(model, corpus, task, batch_size=32):
    pred = model.predict(corpus.sentences, batch_size)
    return evaluate([s.tags for s in corpus], pred, task)


def train(config, train_corpus, dev_corpus, embeddings_path=None, log_path=None, test_corpus=None,
          vocab=None, dev_metric_fn=None, progress=None, stop_at=None):
    """Train a tagger; returns ``(best Checkpoint, [EpochLog])``.

    Tags are converted to BIOES for ner/chunk before building the vocabulary.
    ``dev_metric_fn(model, epoch)`` overrides the dev evaluation (tests use it).
    ``stop_at`` ends training once the dev metric reaches that value.
    """
    config.validate()
    train_corpus = prepare_tags(train_corpus, config.task)
    dev_corpus = prepare_tags(dev_corpus, config.task)
    test_corpus = prepare_tags(test_corpus, config.task) if test_corpus is not None else None
    if len(train_corpus) == 0 or len(dev_corpus) == 0:
        raise ValueError("training and dev corpora must be non-empty")
    if vocab is None:
        vocab = build_vocab(config, train_corpus, dev_corpus, test_corpus or (), embeddings_path)
    init_rng = np.random.default_rng([config.seed, 0])
    emb = None
    if embeddings_path is not None:
        emb = load_embeddings(embeddings_path, config.word_emb, vocab, init_rng)
    model = Tagger(config, vocab, init_rng, emb)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    params = model.parameters()
    names = {id(t): k for k, t in params.items()}
    data = {k: t.data for k, t in params.items()}
    velocity = {}
    stopper = EarlyStopping(config.patience)
    logs = []
    best = Checkpoint.from_model(model, epoch=0)
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        if log_fh:
            log_fh.write(json.dumps({"config": config.to_dict()}, sort_keys=True) + "\n")
        for epoch in range(config.max_epochs):
            started = time.perf_counter()
            lr = lr_at_epoch(config.lr0, config.rho, epoch)
            order = shuffle_rng.permutation(len(train_corpus))
            total = 0.0
            for start in range(0, len(order), config.batch_size):
                ids = order[start : start + config.batch_size]
                batch = make_batch([train_corpus.sentences[i] for i in ids], vocab)
                try:
                    loss = model.loss(batch, training=True, rng=dropout_rng)
                except FloatingPointError as exc:
                    norm = float(np.sqrt(sum(float(np.sum(v * v)) for v in data.values())))
                    raise TrainingDiverged(
                        f"non-finite value in epoch {epoch + 1}, batch sentences {ids.tolist()}, "
                        f"parameter norm {norm:.4g}: {exc}"
                    ) from exc
                grads = {names[id(t)]: g for t, g in T.backward(loss).items() if id(t) in names}
                grads = T.clip_gradients(grads, config.clip)
                sgd_momentum_step(data, grads, velocity, lr, config.momentum)
                total += loss.item()
            if dev_metric_fn is not None:
                metric = dev_metric_fn(model, epoch + 1)
            else:
                metric = evaluate_model(model, dev_corpus, config.task).main(config.task)
            entry = EpochLog(epoch + 1, total, metric, lr, time.perf_counter() - started)
            logs.append(entry)
            if log_fh:
                log_fh.write(entry.to_json() + "\n")
                log_fh.flush()
            if progress is not None:
                progress(entry)
            log.info("epoch %d loss=%.4f dev=%.4f lr=%.5f", entry.epoch, entry.train_loss, metric, lr)
            if stopper.update(metric, epoch + 1):
                best = Checkpoint.from_model(model, best_metric=metric, epoch=epoch + 1)
            if stopper.should_stop or (stop_at is not None and metric >= stop_at):
                break
    finally:
        if log_fh:
            log_fh.close()
    return best, logs
