"""Runtime configuration with JSON-file loading and CLI overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class Config:
    # paths
    catalog: str = "catalog.csv"
    store: str = "store"
    # clustering
    fuzzifier: float = 2.0
    epsilon: float = 1e-6
    max_iter: int = 300
    seed: int = 1
    # policy
    x: int = 8
    n: int | None = 8  # manual leaf threshold; None defers to auto-n
    tau: float = 0.5
    strategy: str = "grc"
    auto_n: bool = False
    # server
    host: str = "127.0.0.1"
    port: int = 8000
    session_ttl: float = 1800.0

    def validate(self) -> "Config":
        if self.n is not None and not 1 <= self.n <= self.x:
            raise ConfigError(f"manual N {self.n} outside [1, {self.x}]")
        if self.strategy not in ("grc", "kmeans"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        return self


def load_config(path=None, **overrides) -> Config:
    values: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(Config)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Config(**values).validate()
