"""CoNLL ingestion, BIOES conversion, vocabularies, embeddings and metrics."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
LENGTH_BUCKETS = ((1, 5), (5, 10), (10, 20), (20, 40), (40, None))
NO_TAG = "_"


class TagSchemeError(ValueError):
    pass


class ConllFormatError(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


class EmbeddingFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Token:
    surface: str
    tag: str

    def __post_init__(self):
        if not self.surface or not self.tag:
            raise ValueError("token surface and tag must be non-empty")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ValueError("sentence must have at least one token")

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self):
        return [t.surface for t in self.tokens]

    @property
    def tags(self):
        return [t.tag for t in self.tokens]

    @classmethod
    def from_pairs(cls, words, tags):
        return cls(tuple(Token(w, t) for w, t in zip(words, tags, strict=True)))


@dataclass
class Corpus:
    sentences: list
    # raw field rows per sentence, kept so tagged output can echo input columns
    rows: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def n_tokens(self):
        return sum(len(s) for s in self.sentences)


def read_conll(path, token_col=0, tag_col=-1, max_len_warn=200, allow_empty=False):
    """Read a whitespace-separated column file; blank lines end sentences.

    ``tag_col=None`` reads unlabeled text: every token gets the placeholder tag
    ``"_"``. ``-DOCSTART-`` lines are dropped.
    """
    sentences, rows, cur, cur_rows = [], [], [], []
    need = max(token_col, tag_col if tag_col is not None else 0)

    def flush():
        if cur:
            sentences.append(Sentence(tuple(cur)))
            rows.append(list(cur_rows))
            if len(cur) > max_len_warn:
                log.warning("sentence %d has %d tokens (cap %d)", len(sentences), len(cur), max_len_warn)
            cur.clear()
            cur_rows.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                flush()
                continue
            if fields[0] == "-DOCSTART-":
                continue
            if need >= len(fields) or (tag_col is not None and tag_col < -len(fields)):
                raise ConllFormatError(f"{path}:{lineno}: expected at least {need + 1} fields, got {len(fields)}")
            tag = NO_TAG if tag_col is None else fields[tag_col]
            cur.append(Token(fields[token_col], tag))
            cur_rows.append(fields)
    flush()
    if not sentences and not allow_empty:
        raise EmptyCorpus(f"{path}: no sentences")
    corpus = Corpus(sentences, rows)
    log.info("read %s: %d sentences, %d tokens", path, len(corpus), corpus.n_tokens)
    return corpus


def write_conll(path, sentences, extra_columns=None):
    """Write ``token tag [extra...]`` lines; ``extra_columns[s][t]`` is a list of strings."""
    with open(path, "w", encoding="utf-8") as fh:
        for si, sent in enumerate(sentences):
            for ti, tok in enumerate(sent.tokens):
                cols = [tok.surface, tok.tag]
                if extra_columns is not None:
                    cols.extend(extra_columns[si][ti])
                fh.write(" ".join(cols) + "\n")
            fh.write("\n")


# ------------------------------------------------------------------ tagging

def _split(tag):
    if tag == "O" or "-" not in tag:
        return tag, None
    prefix, typ = tag.split("-", 1)
    return prefix, typ


def iob1_to_bio(tags):
    """Turn IOB1 span starts (``I-X`` after non-``X``) into ``B-X``."""
    out, prev_type = [], None
    for tag in tags:
        prefix, typ = _split(tag)
        if prefix == "I" and typ != prev_type:
            tag = "B-" + typ
        out.append(tag)
        prev_type = typ if prefix in ("B", "I") else None
    return out


def to_bioes(tags, counter=None):
    """Convert a BIO (or IOB1) tag sequence to BIOES.

    ``I-X`` that cannot continue the open span (after ``O`` or ``B-Y``/``I-Y``
    with Y != X) is repaired to ``B-X``; each repair bumps ``counter["repairs"]``
    when a counter is given. Input already in BIOES passes through unchanged.
    """
    bio = []
    prev_type = None
    for tag in tags:
        prefix, typ = _split(tag)
        if prefix not in ("B", "I", "O", "E", "S"):
            raise TagSchemeError(f"not a BIO/BIOES tag: {tag!r}")
        closes = prefix in ("E", "S")
        prefix = {"E": "I", "S": "B"}.get(prefix, prefix)
        if prefix == "I" and typ != prev_type:
            if counter is not None:
                counter["repairs"] += 1
            prefix = "B"
        bio.append((prefix, typ))
        prev_type = typ if prefix in ("B", "I") and not closes else None
    out = []
    for k, (prefix, typ) in enumerate(bio):
        if prefix == "O":
            out.append("O")
            continue
        continues = k + 1 < len(bio) and bio[k + 1] == ("I", typ)
        if prefix == "B":
            out.append(("B-" if continues else "S-") + typ)
        else:
            out.append(("I-" if continues else "E-") + typ)
    return out


def spans(tags):
    """Decode labeled spans ``(start, end_exclusive, type)`` from BIOES/BIO/IOB1 tags.

    A span opens on B/S, or on I/E that cannot continue the current span; it
    closes on E/S, or when the next tag does not continue it.
    """
    result = []
    start, typ = None, None
    for k, tag in enumerate(tags):
        prefix, t = _split(tag)
        if start is not None and not (prefix in ("I", "E") and t == typ):
            result.append((start, k, typ))
            start, typ = None, None
        if prefix in ("B", "S") or (prefix in ("I", "E") and start is None):
            start, typ = k, t
        if prefix in ("E", "S") and start is not None:
            result.append((start, k + 1, typ))
            start, typ = None, None
    if start is not None:
        result.append((start, len(tags), typ))
    return result


def prepare_tags(corpus, task):
    """Return a corpus whose tags use the training scheme for ``task``."""
    if task == "pos":
        return corpus
    counter = Counter()
    sents = [Sentence.from_pairs(s.words, to_bioes(iob1_to_bio(s.tags), counter)) for s in corpus]
    if counter["repairs"]:
        log.warning("repaired %d inconsistent I- tags", counter["repairs"])
    return Corpus(sents, corpus.rows)


# -------------------------------------------------------------------- vocab

def normalize_word(word):
    return word.lower()


@dataclass
class Vocab:
    words: dict
    chars: dict
    tags: dict

    PAD_ID = 0
    UNK_ID = 1

    @classmethod
    def build(cls, train, tag_corpora=(), extra_words=(), min_count=1):
        """Words and chars come from ``train`` (plus ``extra_words``); tags from all corpora."""
        wc = Counter(normalize_word(w) for s in train for w in s.words)
        words = {PAD: 0, UNK: 1}
        for w, n in sorted(wc.items(), key=lambda kv: (-kv[1], kv[0])):
            if n >= min_count:
                words.setdefault(w, len(words))
        for w in sorted(set(normalize_word(w) for w in extra_words)):
            words.setdefault(w, len(words))
        chars = {PAD: 0, UNK: 1}
        for ch in sorted({ch for s in train for w in s.words for ch in w}):
            chars[ch] = len(chars)
        tag_set = set()
        for corpus in (train, *tag_corpora):
            for s in corpus:
                tag_set.update(s.tags)
        tag_set.discard(NO_TAG)
        tags = {t: i for i, t in enumerate(sorted(tag_set))}
        return cls(words, chars, tags)

    def word_ids(self, words):
        return [self.words.get(normalize_word(w), self.UNK_ID) for w in words]

    def char_ids(self, word):
        return [self.chars.get(ch, self.UNK_ID) for ch in word]

    def tag_ids(self, tags):
        try:
            return [self.tags[t] for t in tags]
        except KeyError as exc:
            raise KeyError(f"tag {exc.args[0]!r} not in tag vocabulary") from None

    @property
    def id2tag(self):
        return {i: t for t, i in self.tags.items()}

    def to_json(self):
        return {"words": self.words, "chars": self.chars, "tags": self.tags}

    @classmethod
    def from_json(cls, obj):
        return cls(dict(obj["words"]), dict(obj["chars"]), dict(obj["tags"]))


# --------------------------------------------------------------- embeddings

def embedding_vocabulary(path):
    with open(path, encoding="utf-8") as fh:
        return [line.split(" ", 1)[0] for line in fh if line.strip()]


def load_embeddings(path, dim, vocab, rng):
    """Build a ``len(vocab.words) x dim`` matrix from a GloVe-style text file.

    Rows for vocabulary words found in the file (exact match, then lowercased)
    are copied; the rest are uniform in ``[-sqrt(3/dim), sqrt(3/dim)]``. The
    padding row is zero.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    bound = np.sqrt(3.0 / dim)
    table = rng.uniform(-bound, bound, size=(len(vocab.words), dim))
    table[Vocab.PAD_ID] = 0.0
    exact, lowered = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) <= 1:
                continue
            if len(parts) - 1 != dim:
                raise EmbeddingFormatError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            word = parts[0]
            if word in vocab.words:
                exact[word] = parts[1:]
            elif word.lower() in vocab.words:
                lowered.setdefault(word.lower(), parts[1:])
    hits = 0
    for word, idx in vocab.words.items():
        vals = exact.get(word) or lowered.get(word)
        if vals is not None:
            table[idx] = [float(v) for v in vals]
            hits += 1
    log.info("embeddings: %d / %d vocabulary words found in %s", hits, len(vocab.words), path)
    return table


# ------------------------------------------------------------------ metrics

@dataclass
class Metrics:
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    token_accuracy: float = 0.0
    n_tokens: int = 0
    n_sentences: int = 0
    by_length: dict = field(default_factory=dict)

    def main(self, task):
        return self.token_accuracy if task == "pos" else self.f1

    def to_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "token_accuracy": self.token_accuracy,
            "n_tokens": self.n_tokens,
            "n_sentences": self.n_sentences,
            "by_length": {k: v.to_dict() for k, v in self.by_length.items()},
        }

    def to_text(self):
        lines = [
            f"precision={self.precision:.6f}",
            f"recall={self.recall:.6f}",
            f"f1={self.f1:.6f}",
            f"token_accuracy={self.token_accuracy:.6f}",
            f"n_sentences={self.n_sentences}",
            f"n_tokens={self.n_tokens}",
        ]
        for key, m in self.by_length.items():
            lines.append(
                f"length[{key}].f1={m.f1:.6f} length[{key}].token_accuracy={m.token_accuracy:.6f}"
                f" length[{key}].n_sentences={m.n_sentences}"
            )
        return "\n".join(lines)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _score(gold, pred, task):
    n_tok = sum(len(g) for g in gold)
    correct_tok = sum(a == b for g, p in zip(gold, pred) for a, b in zip(g, p))
    m = Metrics(n_tokens=n_tok, n_sentences=len(gold))
    m.token_accuracy = correct_tok / n_tok if n_tok else 0.0
    if task != "pos":
        n_gold = n_pred = n_ok = 0
        for g, p in zip(gold, pred):
            gs, ps = set(spans(g)), set(spans(p))
            n_gold += len(gs)
            n_pred += len(ps)
            n_ok += len(gs & ps)
        m.precision = n_ok / n_pred if n_pred else 0.0
        m.recall = n_ok / n_gold if n_gold else 0.0
        m.f1 = _f1(m.precision, m.recall)
    return m


def _bucket(n):
    for lo, hi in LENGTH_BUCKETS:
        if n >= lo and (hi is None or n < hi):
            return f"{lo}-{hi}" if hi is not None else f"{lo}+"
    raise ValueError(n)


def evaluate(gold, pred, task="ner"):
    """Span P/R/F1 (ner, chunk) and token accuracy over parallel tag sequences."""
    if task not in ("ner", "chunk", "pos"):
        raise ValueError(f"unknown task {task!r}")
    gold, pred = [list(g) for g in gold], [list(p) for p in pred]
    if len(gold) != len(pred) or any(len(g) != len(p) for g, p in zip(gold, pred)):
        raise ValueError("gold and predicted tag sequences differ in shape")
    m = _score(gold, pred, task)
    groups = {}
    for g, p in zip(gold, pred):
        groups.setdefault(_bucket(len(g)), ([], []))
        groups[_bucket(len(g))][0].append(g)
        groups[_bucket(len(g))][1].append(p)
    for lo, hi in LENGTH_BUCKETS:
        key = f"{lo}-{hi}" if hi is not None else f"{lo}+"
        if key in groups:
            m.by_length[key] = _score(*groups[key], task)
    return m
