"""Run configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .walks import WalkConfig

# tuning grids used for hyperparameter search on the validation split
TUNING_GRIDS = {
    "window": [3, 5, 7, 9, 11],
    "neg_strength": [1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
    "attr_weight": [1e3, 1e4, 1e5, 1e6, 1e7],
}


@dataclass
class TrainConfig:
    # context generation
    walks_per_node: int = 1
    walk_length: int = 80
    window: int = 5
    subsample_t: float = 1e-5
    subsample_sense: str = "keep"
    # model
    embedding_dim: int = 128
    hidden1: int = 0            # 0 -> embedding_dim
    hidden2: int = 0            # 0 -> embedding_dim
    target_variant: str = "dn+d1"
    # objective
    pos_weight: float = 1.0
    neg_strength: float = 1e-3
    attr_weight: float = 1e5
    negatives: int = 20
    sampling_mode: str = "auto"  # auto | pre | batch
    pool_factor: int = 10
    # optimisation
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 0.0       # 0 disables clipping
    max_epochs: int = 30
    batch_size: int = 256
    patience: int = 10
    min_delta: float = 1e-4
    checkpoint_every: int = 0
    seed: int = 0

    @property
    def h1(self) -> int:
        return self.hidden1 or self.embedding_dim

    @property
    def h2(self) -> int:
        return self.hidden2 or self.embedding_dim

    def walk_config(self) -> WalkConfig:
        return WalkConfig(self.walks_per_node, self.walk_length, self.window,
                          self.subsample_t, self.subsample_sense, self.seed)

    def validate(self) -> None:
        self.walk_config().validate()
        if self.embedding_dim < 2 or self.embedding_dim % 2:
            raise ValueError("embedding_dim must be a positive even number")
        if self.neg_strength < 0 or self.attr_weight < 0 or self.pos_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.negatives < 1:
            raise ValueError("negatives must be at least 1")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")
        if self.sampling_mode not in ("auto", "pre", "batch"):
            raise ValueError("sampling_mode must be auto, pre or batch")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n".replace("'", "")
                       for f in fields(self))


def _coerce(name: str, typ: Any, raw: str):
    raw = raw.strip()
    typ = typ if isinstance(typ, type) else {"int": int, "float": float, "str": str, "bool": bool}[typ]
    if typ is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    if typ is int:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if typ is float:
        return float(raw)
    return raw.strip("\"'")


def config_types() -> dict[str, Any]:
    return {f.name: f.type for f in fields(TrainConfig)}


def parse_config_text(text: str, base: TrainConfig | None = None, source: str = "<config>") -> TrainConfig:
    types = config_types()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _coerce(key, types[key], val)
        except ValueError:
            raise ValueError(f"{source}:{lineno}: bad value for {key}: {val!r}") from None
    return dataclasses.replace(base or TrainConfig(), **values)


def load_config(path) -> TrainConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), source=str(path))
