"""Training configuration with the published hyperparameters as defaults."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

TASKS = ("ner", "chunk", "pos")
DEFAULT_ETA0 = {"ner": 0.015, "chunk": 0.015, "pos": 0.01}


@dataclass
class TrainConfig:
    task: str = "ner"
    eta0: float | None = None  # None -> per-task default
    rho: float = 0.05
    momentum: float = 0.9
    batch_size: int = 10
    clip: float = 5.0
    dropout_lstm: float = 0.55
    dropout_attn: float = 0.2
    k: int = 10
    patience: int = 10
    max_epochs: int = 100
    seed: int = 1
    # ablations
    disable_mask: bool = False
    disable_gauss: bool = False
    disable_tokenpos: bool = False
    disable_fusion1: bool = False
    disable_fusion2: bool = False
    # widths
    word_emb: int = 100
    char_emb: int = 30
    char_hidden: int = 100
    word_hidden: int = 300
    alphas: tuple = (1 / 3, 1 / 3, 1 / 3)
    learn_alphas: bool = False
    factorized_crf: bool = False
    forget_bias: float = 1.0
    # corpus columns
    token_col: int = 0
    tag_col: int = -1
    fine_tune_embeddings: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alphas = tuple(float(a) for a in self.alphas)
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        checks = [
            (self.lr0 > 0, "eta0 must be positive"),
            (self.rho >= 0, "rho must be >= 0"),
            (0 <= self.momentum < 1, "momentum must be in [0, 1)"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (0 <= self.dropout_lstm < 1, "dropout_lstm must be in [0, 1)"),
            (0 <= self.dropout_attn < 1, "dropout_attn must be in [0, 1)"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.max_epochs >= 1, "max_epochs must be >= 1"),
            (self.clip > 0, "clip must be positive"),
            (self.k >= 1, "k must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @property
    def lr0(self):
        return DEFAULT_ETA0[self.task] if self.eta0 is None else self.eta0

    @property
    def epsilon(self):
        return self.k / 2.0

    @property
    def r(self):
        return self.k

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def shrunk(self, factor):
        """Same config with every width divided by ``factor`` (rounded, at least 1)."""
        f = lambda v: max(1, round(v / factor))  # noqa: E731
        return self.replace(
            word_emb=f(self.word_emb), char_emb=f(self.char_emb),
            char_hidden=f(self.char_hidden), word_hidden=f(self.word_hidden),
        )

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["alphas"] = list(self.alphas)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _coerce(value, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float) or default is None:
        return float(value)
    if isinstance(default, tuple):
        return tuple(float(v) for v in value.split(","))
    return value


def load_config_file(path):
    """Read a JSON object or ``key=value`` lines into a dict of config overrides."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return json.loads(text)
    defaults = {f.name: f.default for f in dataclasses.fields(TrainConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(value, defaults[key])
    return out
