"""Linear soft-margin SVM trained by dual coordinate descent."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numba import njit

from ..features import ScalerParams, apply_scaler, fit_scaler
from .config import TrainConfig, check_xy, make_rng


class NotStandardized(UserWarning):
    pass


@njit(cache=True)
def _dcd(Xa, ys, C, orders, tol):
    """Coordinate descent on the box-constrained dual of the hinge-loss SVM.

    Xa carries the bias as a trailing constant column. Returns the primal
    weight vector and the number of epochs run.
    """
    n, d = Xa.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qdiag = np.empty(n)
    for i in range(n):
        qdiag[i] = Xa[i] @ Xa[i]
    epochs = 0
    for e in range(orders.shape[0]):
        epochs = e + 1
        pg_max = -np.inf
        pg_min = np.inf
        for i in orders[e]:
            if qdiag[i] <= 0.0:
                continue
            grad = ys[i] * (w @ Xa[i]) - 1.0
            a = alpha[i]
            if a <= 0.0:
                pg = min(grad, 0.0)
            elif a >= C:
                pg = max(grad, 0.0)
            else:
                pg = grad
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                new = min(max(a - grad / qdiag[i], 0.0), C)
                alpha[i] = new
                w += (new - a) * ys[i] * Xa[i]
        if pg_max - pg_min < tol:
            break
    return w, epochs


@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    scaler: Optional[ScalerParams] = None
    config: TrainConfig = field(default_factory=TrainConfig)
    epochs_run: int = 0

    kind = "svm"

    @property
    def trained_on_scaled(self) -> bool:
        return self.scaler is not None

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def _prep(self, X):
        X = check_xy(X, n_features=self.n_features)
        return apply_scaler(self.scaler, X) if self.scaler is not None else X

    def decision_function(self, X) -> np.ndarray:
        """Signed distance-like score w.x + b (in scaled space)."""
        return self._prep(X) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        s = self.decision_function(X)
        return np.where(s > 0, 1, np.where(s < 0, 0, self.config.tie_label))

    def objective(self, X, y) -> float:
        """Primal objective 0.5*|w|^2 + C * sum of hinge losses."""
        ys = np.where(np.asarray(y) > 0, 1.0, -1.0)
        margins = ys * self.decision_function(X)
        hinge = np.maximum(0.0, 1.0 - margins).sum()
        return float(0.5 * self.weights @ self.weights + self.config.svm_C * hinge)

    def feature_importance(self) -> np.ndarray:
        return np.abs(self.weights)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, config: TrainConfig) -> "LinearSvmModel":
        scaler = None if d.get("scaler") is None else ScalerParams.from_dict(d["scaler"])
        return cls(np.asarray(d["weights"], dtype=np.float64), float(d["bias"]), scaler, config)


def train_linear_svm(X, y, config: Optional[TrainConfig] = None,
                     scaler: Union[ScalerParams, bool, None] = True) -> LinearSvmModel:
    """Minimise 0.5*|w|^2 + C*sum(hinge) over standardised features.

    ``scaler=True`` fits a scaler on X, a ScalerParams is applied as given,
    and ``False``/``None`` trains on X unchanged (emitting NotStandardized).
    The bias is learned as the weight of a constant column of value
    ``config.svm_bias_scale``; epochs visit rows in seeded random order.
    """
    config = config or TrainConfig()
    X, y = check_xy(X, y)
    ys = np.where(np.asarray(y) > 0, 1.0, -1.0)
    if scaler is True:
        scaler = fit_scaler(X)
    if isinstance(scaler, ScalerParams):
        Xs = apply_scaler(scaler, X)
    else:
        warnings.warn("training a linear SVM on unstandardised features", NotStandardized,
                      stacklevel=2)
        scaler = None
        Xs = X
    B = config.svm_bias_scale
    Xa = np.hstack([Xs, np.full((len(Xs), 1), B)])
    rng = make_rng(config.seed, "svm")
    orders = np.array([rng.permutation(len(Xa)) for _ in range(config.svm_epochs)],
                      dtype=np.int64).reshape(config.svm_epochs, len(Xa))
    w, epochs = _dcd(np.ascontiguousarray(Xa), ys, float(config.svm_C), orders,
                     float(config.svm_tol))
    return LinearSvmModel(w[:-1].copy(), float(w[-1] * B), scaler, config, int(epochs))
