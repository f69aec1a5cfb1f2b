"""Cross-validation, metrics, ROC/AUC, recursive feature elimination,
correlation analysis and malware-family experiments."""

from __future__ import annotations

import hashlib
import itertools
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .features import LabeledDataset
from .ml import TRAINERS, TrainConfig, derive_seed, feature_importance

log = logging.getLogger(__name__)


class EmptyCounts(ValueError):
    pass


class SingleClassError(ValueError):
    pass


class TooFewRows(ValueError):
    pass


class MissingFamilyLabels(ValueError):
    pass


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int = 0
    TN: int = 0
    FP: int = 0
    FN: int = 0

    @property
    def total(self) -> int:
        return self.TP + self.TN + self.FP + self.FN

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionCounts":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        return cls(int((t & p).sum()), int((~t & ~p).sum()),
                   int((~t & p).sum()), int((t & ~p).sum()))

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.TP + other.TP, self.TN + other.TN,
                               self.FP + other.FP, self.FN + other.FN)


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise EmptyCounts("no scored rows")
    return (c.TP + c.TN) / c.total


def precision(c: ConfusionCounts) -> float:
    """TP/(TP+FP); 0 when nothing was predicted positive."""
    if c.total == 0:
        raise EmptyCounts("no scored rows")
    return c.TP / (c.TP + c.FP) if c.TP + c.FP else 0.0


def recall(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise EmptyCounts("no scored rows")
    return c.TP / (c.TP + c.FN) if c.TP + c.FN else 0.0


def f1(c: ConfusionCounts) -> float:
    p, r = precision(c), recall(c)
    return 2 * p * r / (p + r) if p + r else 0.0


def metric_summary(c: ConfusionCounts) -> dict:
    return {
        **asdict(c),
        "accuracy": accuracy(c),
        "precision": precision(c),
        "recall": recall(c),
        "f1": f1(c),
        "precision_undefined": c.TP + c.FP == 0,
        "recall_undefined": c.TP + c.FN == 0,
    }


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[k] produced point k+1; point 0 is (0, 0)
    auc: float

    @property
    def points(self) -> list:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_and_auc(scores, labels) -> RocCurve:
    """ROC by sweeping a threshold down through the distinct scores.

    Rows with equal scores enter together, which makes the trapezoidal area
    equal the probability that a random positive outscores a random
    negative with ties counted as one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(fpr, tpr, s[last_of_group], auc)


# ---------------------------------------------------------------------------
# folds


def k_fold_split(labels, n: int, seed: int, stratified: bool = True) -> np.ndarray:
    """Fold id (0..n-1) for each row.

    Rows are shuffled within each label and dealt round-robin, class after
    class, so fold sizes differ by at most one overall and per label.
    """
    labels = np.asarray(labels)
    if n < 2:
        raise ValueError("need at least 2 folds")
    if len(labels) < n:
        raise TooFewRows(f"{len(labels)} rows cannot fill {n} folds")
    rng = np.random.default_rng(derive_seed(seed, "folds"))
    if stratified:
        order = np.concatenate([
            rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)
        ])
    else:
        order = rng.permutation(len(labels))
    folds = np.empty(len(labels), dtype=np.int64)
    folds[order] = np.arange(len(labels)) % n
    return folds


def fold_digest(folds) -> str:
    return hashlib.sha256(np.asarray(folds, dtype=np.int64).tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# cross-validation

Trainer = Callable  # (X, y) -> fitted model


def make_trainer(kind: str, config: Optional[TrainConfig] = None) -> Trainer:
    if kind not in TRAINERS:
        raise ValueError(f"unknown model kind {kind!r}")
    fn = TRAINERS[kind]
    config = config or TrainConfig()

    def trainer(X, y):
        return fn(X, y, config)

    trainer.kind = kind
    trainer.config = config
    return trainer


@dataclass
class CvReport:
    fold_accuracy: list
    mean_accuracy: float
    confusion: ConfusionCounts
    precision: float
    recall: float
    f1: float
    roc: Optional[RocCurve]
    seed: int
    n_folds: int
    fold_digest: str
    model: str = ""
    n_rows: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "n_rows": self.n_rows,
            "n_folds": self.n_folds,
            "seed": self.seed,
            "fold_digest": self.fold_digest,
            "fold_accuracy": self.fold_accuracy,
            "mean_accuracy": self.mean_accuracy,
            "confusion": asdict(self.confusion),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": None if self.roc is None else self.roc.auc,
            **self.extra,
        }


def cross_validate(trainer: Trainer, X, y, n_folds: int = 10, seed: int = 0,
                   stratified: bool = True) -> CvReport:
    """n-fold CV of a binary trainer, pooling test-fold scores into one ROC."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    folds = k_fold_split(y, n_folds, seed, stratified)
    scores = np.empty(len(y))
    preds = np.empty(len(y), dtype=np.int64)
    accs = []
    for k in range(n_folds):
        test = folds == k
        model = trainer(X[~test], y[~test])
        preds[test] = model.predict(X[test])
        scores[test] = model.decision_function(X[test])
        accs.append(float((preds[test] == y[test]).mean()))
    cm = ConfusionCounts.from_labels(y, preds)
    try:
        roc = roc_and_auc(scores, y)
    except SingleClassError:
        roc = None
    return CvReport(
        fold_accuracy=accs,
        mean_accuracy=float(np.mean(accs)),
        confusion=cm,
        precision=precision(cm),
        recall=recall(cm),
        f1=f1(cm),
        roc=roc,
        seed=seed,
        n_folds=n_folds,
        fold_digest=fold_digest(folds),
        model=getattr(trainer, "kind", ""),
        n_rows=len(y),
    )


def cv_accuracy(trainer: Trainer, X, y, n_folds: int, seed: int) -> float:
    """Mean test-fold accuracy; works for any number of classes."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    folds = k_fold_split(y, n_folds, seed)
    accs = []
    for k in range(n_folds):
        test = folds == k
        model = trainer(X[~test], y[~test])
        accs.append(float((model.predict(X[test]) == y[test]).mean()))
    return float(np.mean(accs))


# ---------------------------------------------------------------------------
# recursive feature elimination


@dataclass
class RfeResult:
    elimination_order: list  # worst first; the last entry survived every round
    ranking: list  # best first
    accuracy_by_k: dict  # number of features -> CV accuracy
    feature_names: tuple = ()

    def to_dict(self) -> dict:
        names = self.feature_names
        def name(i):
            return names[i] if names else i
        return {
            "elimination_order": [name(i) for i in self.elimination_order],
            "ranking": [name(i) for i in self.ranking],
            "accuracy_by_k": {str(k): v for k, v in sorted(self.accuracy_by_k.items())},
        }


def rfe(trainer: Trainer, X, y, n_folds: int = 10, seed: int = 0, step: int = 1,
        feature_names: Sequence[str] = ()) -> RfeResult:
    """Recursive feature elimination.

    Each round measures n-fold CV accuracy on the surviving features, then
    fits one model on all rows and drops the ``step`` least important
    features (ties drop the higher original index first).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if step < 1:
        raise ValueError("step must be >= 1")
    alive = list(range(X.shape[1]))
    eliminated = []
    acc_by_k = {}
    while alive:
        cols = np.array(alive)
        acc_by_k[len(alive)] = cv_accuracy(trainer, X[:, cols], y, n_folds, seed)
        log.info("rfe: %d features, accuracy %.4f", len(alive), acc_by_k[len(alive)])
        if len(alive) == 1:
            eliminated.append(alive.pop())
            break
        model = trainer(X[:, cols], y)
        imp = np.asarray(model.feature_importance(), dtype=np.float64)
        # ascending importance, higher original index first among ties
        order = sorted(range(len(alive)), key=lambda j: (imp[j], -alive[j]))
        drop = {alive[j] for j in order[: min(step, len(alive) - 1)]}
        for j in order:
            if alive[j] in drop:
                eliminated.append(alive[j])
        alive = [f for f in alive if f not in drop]
    # steps > 1 skip some k; carry the accuracy of the next larger set down
    for k in range(1, X.shape[1] + 1):
        if k not in acc_by_k:
            acc_by_k[k] = acc_by_k[min(j for j in acc_by_k if j > k)]
    return RfeResult(eliminated, eliminated[::-1], acc_by_k, tuple(feature_names))


# ---------------------------------------------------------------------------
# correlation


def pearson_matrix(X) -> tuple:
    """Pairwise Pearson correlation of columns.

    Returns ``(matrix, constant)``; constant columns correlate 0 with
    everything else and 1 with themselves.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise TooFewRows("correlation needs at least 2 rows")
    centered = X - X.mean(axis=0)
    ss = np.sqrt((centered ** 2).sum(axis=0))
    constant = ss <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0)) * np.sqrt(len(X))
    safe = np.where(constant, 1.0, ss)
    z = centered / safe
    z[:, constant] = 0.0
    r = np.clip(z.T @ z, -1.0, 1.0)
    r = (r + r.T) / 2
    np.fill_diagonal(r, 1.0)
    return r, constant


# ---------------------------------------------------------------------------
# multiclass


class OneVsRestModel:
    def __init__(self, models):
        self.models = models

    def decision_matrix(self, X) -> np.ndarray:
        return np.column_stack([m.decision_function(X) for m in self.models])

    def predict(self, X) -> np.ndarray:
        return self.decision_matrix(X).argmax(axis=1)


def one_vs_rest(trainer: Trainer) -> Trainer:
    def fit(X, y):
        classes = int(np.max(y)) + 1
        return OneVsRestModel([trainer(X, (y == c).astype(np.int64)) for c in range(classes)])
    return fit


def _folds_for(y, n_folds, what):
    smallest = int(np.bincount(y).min())
    if smallest < n_folds:
        k = max(2, smallest)
        warnings.warn(f"{what}: smallest class has {smallest} rows, using {k} folds")
        return k
    return n_folds


def multiclass_experiment(dataset: LabeledDataset, kind: str,
                          config: Optional[TrainConfig] = None,
                          n_folds: int = 10, seed: int = 0) -> dict:
    """Pairwise family-vs-family experiments plus one all-family model.

    Only rows with a family label take part. The all-family model is native
    multiclass for forests and one-vs-rest for SVM and boosting.
    """
    config = config or TrainConfig()
    rows = [i for i, f in enumerate(dataset.families) if f]
    families = sorted({dataset.families[i] for i in rows})
    if len(families) < 2:
        raise MissingFamilyLabels("need at least two labelled families")
    X = dataset.X[rows]
    fam = np.array([families.index(dataset.families[i]) for i in rows])
    base = make_trainer(kind, config)

    pairwise = []
    for a, b in itertools.combinations(range(len(families)), 2):
        mask = (fam == a) | (fam == b)
        yb = (fam[mask] == b).astype(np.int64)
        k = _folds_for(yb, n_folds, f"{families[a]} vs {families[b]}")
        rep = cross_validate(base, X[mask], yb, k, seed)
        pairwise.append({
            "families": [families[a], families[b]],
            "n_rows": int(mask.sum()),
            "n_folds": k,
            "accuracy": rep.mean_accuracy,
            "auc": None if rep.roc is None else rep.roc.auc,
        })

    multi = base if kind == "forest" else one_vs_rest(base)
    k = _folds_for(fam, n_folds, "all families")
    overall = {
        "families": families,
        "n_rows": len(rows),
        "n_folds": k,
        "accuracy": cv_accuracy(multi, X, fam, k, seed),
        "reduction": "native" if kind == "forest" else "one-vs-rest",
    }
    return {"model": kind, "pairwise": pairwise, "all_families": overall}


def importance_table(model, names) -> list:
    return [{"feature": n, "weight": w} for n, w in feature_importance(model, names)]
