"""AdaBoost over a fixed pool of barely-better-than-random classifiers.

Each pool member is represented only by which samples it gets right; the
ensemble is correct on a sample when the alpha-weighted vote of members
that are right on it outweighs the vote of members that are wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateError(ValueError):
    pass


@dataclass(frozen=True)
class WeakClassifierPool:
    correct: np.ndarray  # (n_classifiers, n_samples) bool

    def __post_init__(self):
        object.__setattr__(self, "correct", np.asarray(self.correct, dtype=bool))

    @property
    def n_classifiers(self) -> int:
        return self.correct.shape[0]

    @property
    def n_samples(self) -> int:
        return self.correct.shape[1]

    def accuracies(self) -> np.ndarray:
        return self.correct.mean(axis=1)


def make_pool(n_classifiers=1000, n_samples=200, low=0.51, high=0.52, rng=None):
    """Random pool whose members each label between ``low`` and ``high`` of the
    samples correctly (exact counts drawn uniformly from the admissible range)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    k_lo = math.ceil(low * n_samples - 1e-9)
    k_hi = math.floor(high * n_samples + 1e-9)
    if k_lo > k_hi:
        raise ValueError(f"no integer accuracy in [{low}, {high}] for {n_samples} samples")
    correct = np.zeros((n_classifiers, n_samples), dtype=bool)
    for j in range(n_classifiers):
        k = rng.integers(k_lo, k_hi + 1)
        correct[j, rng.choice(n_samples, k, replace=False)] = True
    return WeakClassifierPool(correct)


def adaboost_demo(pool: WeakClassifierPool, L: int, iterations: int = 200) -> np.ndarray:
    """Ensemble training accuracy after each of ``iterations`` rounds using
    only the first ``L`` pool members.

    A member may be chosen more than once; its weight then accumulates.
    """
    if not 1 <= L <= pool.n_classifiers:
        raise ValueError(f"L must be in [1, {pool.n_classifiers}]")
    correct = pool.correct[:L]
    signed = np.where(correct, 1.0, -1.0)  # y * h(x)
    wrong = (~correct).astype(np.float64)
    n = pool.n_samples
    w = np.full(n, 1.0 / n)
    margin = np.zeros(n)
    curve = np.empty(iterations)
    for t in range(iterations):
        err = wrong @ w
        j = int(np.argmin(err))
        eps = float(err[j])
        if eps <= 0.0:
            # a perfect member gets unbounded weight and decides every sample
            curve[t:] = 1.0
            return curve
        if eps >= 1.0:
            raise DegenerateError(f"selected classifier has weighted error {eps}")
        alpha = 0.5 * math.log((1.0 - eps) / eps)
        margin += alpha * signed[j]
        w = w * np.exp(-alpha * signed[j])
        w /= w.sum()
        curve[t] = float((margin > 0).mean())
    return curve
