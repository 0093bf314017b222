"""Binary linear probe: L2-regularized logistic regression, mini-batch SGD.

The probe is the ensemble member of the cleaning workflow.  It consumes
fixed embedding features and produces probabilities / hard labels; training
is deterministic under (seed, data order).  Hard label is TRUE at
probability exactly 0.5 (documented tie-break, needed for reproducible bin
assignment).
"""

from __future__ import annotations

import ast
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import errors
from .duplicates import EmbeddingStore
from .errors import LabelForgeError


class SingleClassWarning(UserWarning):
    """All training labels equal; a constant predictor was returned."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-2
    batch_size: int = 128
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")


@dataclass
class ProbeModel:
    weights: np.ndarray
    bias: float
    train_meta: dict
    loss_history: Optional[list[float]] = None

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])

    def to_file(self, path: str | Path) -> None:
        meta = self.train_meta
        with Path(path).open("w") as fh:
            fh.write(f"#dim={self.dim}\n")
            fh.write(f"#bias={self.bias!r}\n")
            for key in ("epochs", "learning_rate", "batch_size", "seed", "final_train_loss"):
                fh.write(f"#{key}={meta.get(key)!r}\n")
            for w in self.weights:
                fh.write(f"{float(w)!r}\n")

    @classmethod
    def from_file(cls, path: str | Path) -> "ProbeModel":
        header: dict[str, str] = {}
        weights: list[float] = []
        for ln in Path(path).read_text().splitlines():
            if ln.startswith("#"):
                key, _, val = ln[1:].partition("=")
                header[key] = val
            elif ln.strip():
                weights.append(float(ln))
        meta = {k: ast.literal_eval(header[k])
                for k in ("epochs", "learning_rate", "batch_size", "seed", "final_train_loss")
                if k in header and header[k] != "None"}
        model = cls(np.array(weights, dtype=np.float64), float(header["bias"]), meta)
        if model.dim != int(header["dim"]):
            raise LabelForgeError(errors.DIM_MISMATCH,
                                  f"model file declares dim={header['dim']}, "
                                  f"found {model.dim} weights")
        return model


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(weights: np.ndarray, bias: float, features: np.ndarray,
                  labels: np.ndarray, l2: float = 0.0) -> float:
    """Mean cross-entropy plus (l2/2)*||w||^2; bias is not regularized.

    Computed via logaddexp so saturated logits do not overflow:
        loss_i = logaddexp(0, z_i) - y_i * z_i
    """
    z = features @ weights + bias
    per_sample = np.logaddexp(0.0, z) - labels * z
    return float(np.mean(per_sample) + 0.5 * l2 * np.dot(weights, weights))


def logistic_gradient(weights: np.ndarray, bias: float, features: np.ndarray,
                      labels: np.ndarray, l2: float = 0.0) -> tuple[np.ndarray, float]:
    """Analytic gradient of logistic_loss wrt (weights, bias)."""
    residual = sigmoid(features @ weights + bias) - labels
    grad_w = features.T @ residual / len(labels) + l2 * weights
    grad_b = float(np.mean(residual))
    return grad_w, grad_b


def train(store: EmbeddingStore, labels: dict[str, bool],
          config: TrainConfig = TrainConfig()) -> ProbeModel:
    """Fit the probe on the labelled subset of an embedding store.

    Mini-batch SGD from a zero initialization.  Batches are drawn by a
    per-epoch permutation from PCG64(seed), so the run is reproducible
    bit-for-bit given (seed, data order).
    """
    if not labels:
        raise LabelForgeError(errors.EMPTY_TRAINING_SET, "no labelled examples")
    ids = list(labels)
    X = store.matrix(ids)
    y = np.array([1.0 if labels[i] else 0.0 for i in ids])

    meta = {"epochs": config.epochs, "learning_rate": config.learning_rate,
            "batch_size": config.batch_size, "seed": config.seed}
    if len(set(labels.values())) == 1:
        constant = next(iter(labels.values()))
        warnings.warn("all training labels are "
                      f"{constant}; returning a constant predictor", SingleClassWarning)
        w = np.zeros(store.dim)
        b = 25.0 if constant else -25.0
        meta["final_train_loss"] = logistic_loss(w, b, X, y, config.l2)
        return ProbeModel(w, b, meta, loss_history=[])

    w = np.zeros(store.dim, dtype=np.float64)
    b = 0.0
    rng = np.random.Generator(np.random.PCG64(config.seed))
    full_batch = config.batch_size >= len(ids)
    # full-batch mode records loss per step (the monotone-descent contract);
    # mini-batch mode records once per epoch to keep training O(n) per epoch
    history: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(ids))
        for start in range(0, len(ids), config.batch_size):
            batch = order[start:start + config.batch_size]
            grad_w, grad_b = logistic_gradient(w, b, X[batch], y[batch], config.l2)
            w -= config.learning_rate * grad_w
            b -= config.learning_rate * grad_b
            if full_batch:
                history.append(logistic_loss(w, b, X, y, config.l2))
        if not full_batch:
            history.append(logistic_loss(w, b, X, y, config.l2))
    meta["final_train_loss"] = history[-1]
    return ProbeModel(w, b, meta, loss_history=history)


def predict(model: ProbeModel, store: EmbeddingStore,
            ids: list[str]) -> dict[str, tuple[float, bool]]:
    """id -> (probability, hard label); hard label is TRUE iff p >= 0.5."""
    if store.dim != model.dim:
        raise LabelForgeError(
            errors.DIM_MISMATCH,
            f"model dim {model.dim} != embedding dim {store.dim}",
        )
    X = store.matrix(ids)
    probs = sigmoid(X @ model.weights + model.bias)
    return {i: (float(p), bool(p >= 0.5)) for i, p in zip(ids, probs)}


def evaluate(model: ProbeModel, store: EmbeddingStore, labels: dict[str, bool]) -> float:
    """Fraction of hard labels matching ``labels``."""
    if not labels:
        raise LabelForgeError(errors.EMPTY_EVAL_SET, "no labelled examples to evaluate")
    ids = list(labels)
    preds = predict(model, store, ids)
    hits = sum(1 for i in ids if preds[i][1] == labels[i])
    return hits / len(ids)
