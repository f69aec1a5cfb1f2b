from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import TrainConfig, check_xy, derive_seed
from .tree import TreeModel, train_decision_tree

DEFAULT_TREES = 500


@dataclass
class ForestModel:
    trees: list
    n_classes: int
    n_features: int
    config: TrainConfig = field(default_factory=TrainConfig)
    oob_accuracy: Optional[float] = None

    kind = "forest"

    def predict_proba(self, X) -> np.ndarray:
        X = check_xy(X, n_features=self.n_features)
        total = np.zeros((len(X), self.n_classes))
        for tree in self.trees:
            total += tree.predict_value(X)
        return total / len(self.trees)

    def decision_function(self, X) -> np.ndarray:
        """Probability of class 1 (binary forests only)."""
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        if self.n_classes == 2:
            p = proba[:, 1]
            return np.where(p > 0.5, 1, np.where(p < 0.5, 0, self.config.tie_label))
        return proba.argmax(axis=1)

    def feature_importance(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        for tree in self.trees:
            imp += tree.raw_importance()
        total = imp.sum()
        if total <= 0:
            return np.full(self.n_features, 1.0 / self.n_features)
        return imp / total

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "oob_accuracy": self.oob_accuracy,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict, config: TrainConfig) -> "ForestModel":
        return cls([TreeModel.from_dict(t) for t in d["trees"]], d["n_classes"],
                   d["n_features"], config, d.get("oob_accuracy"))


def train_random_forest(X, y, config: Optional[TrainConfig] = None,
                        n_classes: Optional[int] = None) -> ForestModel:
    """Bagged entropy trees with per-split (or per-tree) feature sampling.

    Tree i draws from its own generator seeded by (config.seed, i), so a
    forest is reproducible regardless of how trees are scheduled.
    """
    config = config or TrainConfig()
    X, y = check_xy(X, y)
    y = y.astype(np.int64)
    n_classes = n_classes or max(2, int(y.max()) + 1)
    n, d = X.shape
    t = config.n_estimators or DEFAULT_TREES
    bag = config.bag_size(d)
    trees = []
    oob_votes = np.zeros((n, n_classes))
    for i in range(t):
        rng = np.random.default_rng(derive_seed(config.seed, f"forest-tree-{i}"))
        sample = rng.integers(0, n, n) if config.bootstrap else np.arange(n)
        tree = train_decision_tree(X, y, config, rng, n_classes=n_classes,
                                   sample_idx=sample, bag_size=bag)
        trees.append(tree)
        if config.bootstrap:
            out = np.ones(n, dtype=bool)
            out[sample] = False
            if out.any():
                oob_votes[out] += tree.predict_value(X[out])
    oob = None
    seen = oob_votes.sum(axis=1) > 0
    if config.bootstrap and seen.any():
        oob = float((oob_votes[seen].argmax(axis=1) == y[seen]).mean())
    return ForestModel(trees, n_classes, d, config, oob)
