from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class EmptyDataset(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by every trainer.

    ``None`` for ``n_estimators``/``max_depth`` means the per-model default:
    500 trees of unlimited depth for forests, 1000 rounds of depth 6 for
    boosting.
    """

    seed: int = 0
    n_estimators: Optional[int] = None
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    feature_bag_size: Optional[int] = None  # default ceil(sqrt(n_features))
    bag_per: str = "split"  # "split" or "tree"
    bootstrap: bool = True
    criterion: str = "entropy"  # or "gini"
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    svm_C: float = 1.0
    svm_epochs: int = 50
    svm_tol: float = 1e-6
    svm_bias_scale: float = 1.0
    tie_label: int = 0

    def __post_init__(self):
        if self.n_estimators is not None and self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.svm_C <= 0:
            raise ValueError("svm_C must be > 0")
        if self.criterion not in ("entropy", "gini"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.bag_per not in ("split", "tree"):
            raise ValueError(f"unknown bag_per {self.bag_per!r}")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def bag_size(self, n_features: int) -> int:
        if self.feature_bag_size is None:
            return max(1, math.ceil(math.sqrt(n_features)))
        return max(1, min(self.feature_bag_size, n_features))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def derive_seed(seed: int, tag: str) -> int:
    """Child seed for one named purpose, stable across runs and platforms."""
    h = hashlib.sha256(f"{seed}:{tag}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def make_rng(seed: int, tag: str = "") -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, tag) if tag else seed)


def check_xy(X, y=None, n_features: Optional[int] = None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatch("expected a 2-D feature matrix")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(f"expected {n_features} features, got {X.shape[1]}")
    if y is None:
        return X
    y = np.asarray(y)
    if len(y) != len(X):
        raise DimensionMismatch("X and y lengths differ")
    if len(X) == 0:
        raise EmptyDataset("no training rows")
    return X, y
