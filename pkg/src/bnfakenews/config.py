"""Flat ``key = value`` training configuration."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .textprep import DEFAULT_MIN_WORDS
from .tokenizer import DEFAULT_MAX_SIZE, DEFAULT_SEQ_LEN

CONFIG_ENV = "BNFAKENEWS_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0  # <= 0 disables clipping
    dropout: float = 0.3
    seq_len: int = DEFAULT_SEQ_LEN
    vocab_max_size: int = DEFAULT_MAX_SIZE
    min_words: int = DEFAULT_MIN_WORDS
    count_before_stopwords: bool = True
    balance: bool = False
    threshold: float = 0.5
    seed: int = 0
    embed_dim: int = 128
    hidden: int = 64
    conv_filters: int = 128
    kernel_size: int = 5
    pool_window: int = 2
    dense1: int = 64
    dense2: int = 32
    masked_pooling: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.seq_len < 1 or self.min_words < 0:
            raise ConfigError("seq_len must be positive and min_words non-negative")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(key: str, typ, raw: str):
    if typ is bool or typ == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return int(raw) if typ in (int, "int") else float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    values = asdict(base or TrainConfig())
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        values[key] = _coerce(key, types[key], raw)
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
