"""Synthetic corpus where a marker's label is set by the token a fixed distance before it.

Each sentence holds one ``MARK`` token. Its tag is ``K<c>`` where ``c`` is the
class of the cue word exactly ``distance`` positions to its left. Other cue
words are scattered around as distractors (never at the decisive offset), so
only the exact relative position identifies the answer. Every other token is
tagged ``O``.
"""
from __future__ import annotations

import numpy as np

from .data import Corpus, Sentence

MARKER = "MARK"


def cue_words(n_classes):
    return [f"cue{c}" for c in range(n_classes)]


def make_corpus(n_sentences, rng, distance=8, n_classes=4, min_len=12, max_len=20, n_fillers=30,
                distractor_rate=0.35):
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if min_len <= distance:
        raise ValueError("sentences must be longer than the dependency distance")
    cues = cue_words(n_classes)
    fillers = [f"w{i}" for i in range(n_fillers)]
    sentences = []
    for _ in range(n_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        pos = int(rng.integers(distance, n))
        source = pos - distance
        label = int(rng.integers(n_classes))
        words, tags = [], []
        for t in range(n):
            if t == pos:
                words.append(MARKER)
                tags.append(f"K{label}")
                continue
            if t == source:
                words.append(cues[label])
            elif rng.random() < distractor_rate:
                words.append(cues[int(rng.integers(n_classes))])
            else:
                words.append(fillers[int(rng.integers(n_fillers))])
            tags.append("O")
        sentences.append(Sentence.from_pairs(words, tags))
    return Corpus(sentences)


def marker_accuracy(corpus, predictions):
    """Fraction of ``MARK`` tokens whose predicted tag matches gold."""
    hits = total = 0
    for sent, pred in zip(corpus, predictions):
        for tok, p in zip(sent.tokens, pred):
            if tok.surface == MARKER:
                total += 1
                hits += tok.tag == p
    return hits / total if total else 0.0
