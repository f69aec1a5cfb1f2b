"""Second-order gradient boosting of regression trees under logistic loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import TrainConfig, check_xy, make_rng
from .tree import TreeModel, train_regression_tree

DEFAULT_ROUNDS = 1000
DEFAULT_DEPTH = 6
PROB_CLIP = 1e-6


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_loss(y, score) -> float:
    """Mean negative log-likelihood of labels in {0,1} given log-odds."""
    y = np.asarray(y, dtype=np.float64)
    score = np.asarray(score, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


@dataclass
class BoostedModel:
    trees: list
    learning_rate: float
    base_score: float
    n_features: int
    config: TrainConfig = field(default_factory=TrainConfig)
    loss_trace: list = field(default_factory=list)

    kind = "boosting"

    def raw_score(self, X) -> np.ndarray:
        X = check_xy(X, n_features=self.n_features)
        s = np.full(len(X), self.base_score)
        for tree in self.trees:
            s += self.learning_rate * tree.predict_value(X)[:, 0]
        return s

    def decision_function(self, X) -> np.ndarray:
        return sigmoid(self.raw_score(X))

    def predict(self, X) -> np.ndarray:
        p = self.decision_function(X)
        return np.where(p > 0.5, 1, np.where(p < 0.5, 0, self.config.tie_label))

    def feature_importance(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        for tree in self.trees:
            internal = tree.feature >= 0
            np.add.at(imp, tree.feature[internal], tree.gain[internal])
        total = imp.sum()
        if total <= 0:
            return np.full(self.n_features, 1.0 / self.n_features)
        return imp / total

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict, config: TrainConfig) -> "BoostedModel":
        return cls([TreeModel.from_dict(t) for t in d["trees"]], d["learning_rate"],
                   d["base_score"], d["n_features"], config)


def train_gradient_boosting(X, y, config: Optional[TrainConfig] = None) -> BoostedModel:
    """Stagewise Newton boosting.

    Each round fits a tree to the gradient p - y and hessian p(1 - p) of the
    logistic loss; leaf values are -G/(H + lambda), shrunk by the learning
    rate. ``loss_trace[k]`` is the training loss after k rounds.
    """
    config = config or TrainConfig()
    X, y = check_xy(X, y)
    y = y.astype(np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("boosting labels must be 0/1")
    rounds = config.n_estimators or DEFAULT_ROUNDS
    depth = config.max_depth if config.max_depth is not None else DEFAULT_DEPTH
    p0 = float(np.clip(y.mean(), PROB_CLIP, 1 - PROB_CLIP))
    base = float(np.log(p0 / (1 - p0)))
    rng = make_rng(config.seed, "boosting")
    bag = config.feature_bag_size  # None: every feature at every split

    score = np.full(len(y), base)
    trace = [logistic_loss(y, score)]
    trees = []
    for _ in range(rounds):
        p = sigmoid(score)
        g = p - y
        h = p * (1 - p)
        tree = train_regression_tree(X, g, h, config, depth, rng, bag)
        if tree.n_nodes == 1 and abs(tree.value[0, 0]) < 1e-15:
            break
        trees.append(tree)
        score = score + config.learning_rate * tree.predict_value(X)[:, 0]
        trace.append(logistic_loss(y, score))
    return BoostedModel(trees, config.learning_rate, base, X.shape[1], config, trace)
