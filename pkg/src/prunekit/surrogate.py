"""Attention-feature surrogate for first-stage post-deletion scores.

Features: for each reasoning token, the average attention it receives
from all later positions, one column per (layer, head) — layer-major, so
column l * H + h holds layer l, head h. A two-layer perceptron is trained
by full-batch gradient ascent on the Pearson correlation between its
predictions and the recorded post-deletion scores; correlation cares
about relative importance only, so target scale is irrelevant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .backends.base import AttentionTensor, Span
from .errors import (
    DegenerateTargets,
    LengthMismatch,
    SpanOutOfBounds,
    ValidationError,
    ZeroVariance,
)


def extract_features(attn: AttentionTensor, reasoning_span: Span) -> np.ndarray:
    """Mean attention received from strictly-later positions, per layer-head.

    The last sequence position has no future positions; its row is zero by
    convention rather than NaN.
    """
    T = attn.length
    if reasoning_span.stop > T:
        raise SpanOutOfBounds(
            f"span [{reasoning_span.start}, {reasoning_span.stop}] exceeds sequence length {T}"
        )
    values = attn.values  # [L, H, T, T]
    L, H = attn.layers, attn.heads
    future_sums = np.tril(values, -1).sum(axis=2)  # [L, H, T]: column sums below diagonal
    future_counts = (T - 1) - np.arange(T)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(future_counts > 0, future_sums / future_counts, 0.0)
    cols = means[:, :, reasoning_span.start - 1 : reasoning_span.stop]
    return cols.reshape(L * H, len(reasoning_span)).T.copy()


def pearson(x: Sequence[float], y: Sequence[float], *, strict: bool = False) -> float:
    """Sample Pearson correlation; zero-variance input gives 0 (or raises in strict mode)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"pearson needs equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise LengthMismatch("pearson needs at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0 or sy == 0.0:
        if strict:
            raise ZeroVariance("constant input has no defined correlation")
        return 0.0
    return float((xc @ yc) / (sx * sy))


@dataclass
class SurrogateModel:
    """relu((X @ w1) + b1) @ w2 + b2, deterministic given its weights."""

    w1: np.ndarray  # [features, hidden]
    b1: np.ndarray  # [hidden]
    w2: np.ndarray  # [hidden]
    b2: float
    seed: int

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        hidden = np.maximum(features @ self.w1 + self.b1, 0.0)
        return hidden @ self.w2 + self.b2

    @classmethod
    def init(cls, n_features: int, hidden: int, seed: int) -> "SurrogateModel":
        rng = np.random.Generator(np.random.PCG64(seed))
        return cls(
            w1=rng.standard_normal((n_features, hidden)) * n_features ** -0.5,
            b1=np.full(hidden, 0.01),
            w2=rng.standard_normal(hidden) * hidden ** -0.5,
            b2=0.0,
            seed=seed,
        )


def model_to_json(model: SurrogateModel) -> dict:
    """Flat weight layout: w1 row-major, then b1, then w2, then b2."""
    flat = np.concatenate([model.w1.ravel(), model.b1, model.w2, [model.b2]])
    return {
        "n_features": model.n_features,
        "hidden": model.hidden,
        "seed": model.seed,
        "weights": flat.tolist(),
    }


def model_from_json(obj: Dict) -> SurrogateModel:
    d, h = int(obj["n_features"]), int(obj["hidden"])
    flat = np.asarray(obj["weights"], dtype=np.float64)
    expected = d * h + h + h + 1
    if flat.shape[0] != expected:
        raise ValidationError(f"weight vector has {flat.shape[0]} entries, expected {expected}")
    w1 = flat[: d * h].reshape(d, h)
    b1 = flat[d * h : d * h + h]
    w2 = flat[d * h + h : d * h + 2 * h]
    b2 = float(flat[-1])
    return SurrogateModel(w1=w1, b1=b1, w2=w2, b2=b2, seed=int(obj.get("seed", 0)))


def pearson_gradient(predictions: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Correlation and its analytic gradient with respect to the predictions."""
    x = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    xc = x - x.mean()
    tc = t - t.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(tc @ tc))
    if sy == 0.0:
        raise DegenerateTargets("targets are constant")
    if sx == 0.0:
        return 0.0, np.zeros_like(x)
    r = float((xc @ tc) / (sx * sy))
    grad = (tc / (sx * sy)) - (r / (sx * sx)) * xc
    # d mean / d x distributes uniformly; both terms are centered, so the
    # projection through the centering is the identity here.
    return r, grad


def correlation_and_gradients(
    model: SurrogateModel, features: np.ndarray, targets: np.ndarray
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Objective value and analytic parameter gradients (for ascent and checking)."""
    X = np.asarray(features, dtype=np.float64)
    pre = X @ model.w1 + model.b1
    hidden = np.maximum(pre, 0.0)
    yhat = hidden @ model.w2 + model.b2
    r, dy = pearson_gradient(yhat, targets)
    d_w2 = hidden.T @ dy
    d_b2 = float(dy.sum())
    d_hidden = np.outer(dy, model.w2)
    d_pre = d_hidden * (pre > 0)
    d_w1 = X.T @ d_pre
    d_b1 = d_pre.sum(axis=0)
    return r, {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": np.asarray(d_b2)}


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 8
    lr: float = 0.1
    epochs: int = 500
    seed: int = 0


@dataclass(frozen=True)
class TrainResult:
    model: SurrogateModel
    curve: Tuple[float, ...]  # training correlation per epoch

    @property
    def final_r(self) -> float:
        return self.curve[-1]


def train_surrogate(
    features: np.ndarray, targets: Sequence[float], config: TrainConfig = TrainConfig()
) -> TrainResult:
    """Full-batch gradient ascent on the Pearson objective."""
    X = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != t.shape[0]:
        raise LengthMismatch(f"features {X.shape} incompatible with {t.shape[0]} targets")
    if X.shape[0] < 2:
        raise LengthMismatch("training needs at least two rows")
    if not np.all(np.isfinite(t)):
        raise ValidationError("targets must be finite")
    if np.ptp(t) == 0.0:
        raise DegenerateTargets("all targets are equal")

    model = SurrogateModel.init(X.shape[1], config.hidden, config.seed)
    curve: List[float] = []
    for _ in range(config.epochs):
        r, grads = correlation_and_gradients(model, X, t)
        curve.append(r)
        model.w1 = model.w1 + config.lr * grads["w1"]
        model.b1 = model.b1 + config.lr * grads["b1"]
        model.w2 = model.w2 + config.lr * grads["w2"]
        model.b2 = model.b2 + config.lr * float(grads["b2"])
    return TrainResult(model=model, curve=tuple(curve))


def eval_surrogate(
    model: SurrogateModel, features: np.ndarray, targets: Sequence[float]
) -> float:
    """Correlation between model predictions and held-out targets."""
    return pearson(model.predict(features), np.asarray(targets, dtype=np.float64))


def save_model(model: SurrogateModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path]) -> SurrogateModel:
    return model_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
