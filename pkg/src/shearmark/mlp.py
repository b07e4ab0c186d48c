"""Small dense network (8 -> 64 tanh -> 32 relu -> 2 softmax) trained with SGD on MSE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TrainConfig:
    hidden: tuple = (64, 32)
    lr: float = 0.1
    max_epochs: int = 1000
    patience: int = 20
    batch_size: int = 32
    folds: int = 5
    val_fraction: float = 0.15
    # smallest validation-loss drop that resets the patience counter
    min_delta: float = 1e-4


@dataclass
class MlpModel:
    weights: list
    biases: list
    history: dict = field(default_factory=dict)

    @classmethod
    def init(cls, n_in: int, hidden=(64, 32), n_out: int = 2, seed: int = 0) -> "MlpModel":
        rng = np.random.default_rng(seed)
        sizes = [n_in, *hidden, n_out]
        W, b = [], []
        for i, (a, c) in enumerate(zip(sizes[:-1], sizes[1:])):
            # Glorot for the tanh layer, He for the rest
            lim = np.sqrt(6.0 / (a + c)) if i == 0 else np.sqrt(6.0 / a)
            W.append(rng.uniform(-lim, lim, (a, c)))
            b.append(np.zeros(c))
        return cls(W, b)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    def _forward(self, X):
        W1, W2, W3 = self.weights
        b1, b2, b3 = self.biases
        h1 = np.tanh(X @ W1 + b1)
        z2 = h1 @ W2 + b2
        h2 = np.maximum(z2, 0.0)
        z3 = h2 @ W3 + b3
        z3 -= z3.max(axis=1, keepdims=True)
        p = np.exp(z3)
        p /= p.sum(axis=1, keepdims=True)
        return h1, z2, h2, p

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ValueError(f"expected (n, {self.n_inputs}) features, got {X.shape}")
        return self._forward(X)[-1]

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)
        # ties go to class 0
        return (p[:, 1] > p[:, 0]).astype(np.uint8)

    def loss(self, X, Y) -> float:
        p = self.predict_proba(X)
        return _mse(p, Y)

    def step(self, X, Y, lr):
        W1, W2, W3 = self.weights
        b1, b2, b3 = self.biases
        h1, z2, h2, p = self._forward(X)
        g = (2.0 / len(X)) * (p - Y)
        # softmax Jacobian-vector product
        dz3 = p * (g - (g * p).sum(axis=1, keepdims=True))
        dz2 = (dz3 @ W3.T) * (z2 > 0)
        dz1 = (dz2 @ W2.T) * (1.0 - h1 * h1)
        W3 -= lr * (h2.T @ dz3)
        b3 -= lr * dz3.sum(axis=0)
        W2 -= lr * (h1.T @ dz2)
        b2 -= lr * dz2.sum(axis=0)
        W1 -= lr * (X.T @ dz1)
        b1 -= lr * dz1.sum(axis=0)


def _mse(p, Y) -> float:
    d = p - Y
    return float((d * d).sum() / len(d))


def one_hot(bits) -> np.ndarray:
    b = np.asarray(bits).astype(np.int64).ravel()
    Y = np.zeros((b.size, 2))
    Y[np.arange(b.size), b] = 1.0
    return Y


def _snapshot(model):
    return [w.copy() for w in model.weights], [b.copy() for b in model.biases]


def fit(model: MlpModel, X, y, Xval, yval, cfg: TrainConfig, seed: int = 0, max_epochs=None) -> MlpModel:
    """Mini-batch SGD with early stopping on validation loss; keeps the best weights."""
    rng = np.random.default_rng(seed)
    Y, Yval = one_hot(y), one_hot(yval)
    best = _snapshot(model)
    X, Xval = np.asarray(X, dtype=np.float64), np.asarray(Xval, dtype=np.float64)
    best_loss = model.loss(Xval, Yval) if len(Xval) else np.inf
    ref_loss = best_loss
    wait = 0
    epochs = cfg.max_epochs if max_epochs is None else max_epochs
    ran = 0
    for ep in range(epochs):
        order = rng.permutation(len(X))
        for s in range(0, len(X), cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            model.step(X[idx], Y[idx], cfg.lr)
        ran = ep + 1
        if not len(Xval):
            continue
        vl = _mse(model._forward(Xval)[-1], Yval)
        if vl < best_loss:
            best = _snapshot(model)
            best_loss = vl
        if vl < ref_loss - cfg.min_delta:
            ref_loss, wait = vl, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    if len(Xval):
        model.weights, model.biases = [w.copy() for w in best[0]], [b.copy() for b in best[1]]
    model.history = {"epochs": ran, "val_loss": float(best_loss)}
    return model


def kfold_train(X, y, cfg: TrainConfig | None = None, seed: int = 0):
    """k-fold training; returns (best model by test error, per-fold test errors)."""
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.uint8).ravel()
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(X))
    folds = np.array_split(order, cfg.folds)
    best, best_err, errors = None, np.inf, []
    for f in range(cfg.folds):
        test = folds[f]
        train = np.concatenate([folds[g] for g in range(cfg.folds) if g != f])
        train = rng.permutation(train)
        n_val = int(round(cfg.val_fraction * len(train)))
        val, fit_idx = train[:n_val], train[n_val:]
        model = MlpModel.init(X.shape[1], cfg.hidden, 2, seed=seed + 1000 * (f + 1))
        fit(model, X[fit_idx], y[fit_idx], X[val], y[val], cfg, seed=seed + f)
        err = float(np.mean(model.predict(X[test]) != y[test]))
        errors.append(err)
        if err < best_err:
            best, best_err = model, err
    best.history["fold_errors"] = errors
    best.history["test_error"] = best_err
    return best, errors
