"""Per-phoneme emotion strength predictor.

A two-layer feed-forward regressor ``W2 @ relu(W1 @ x + b1) + b2`` trained by
mini-batch gradient descent on the mean absolute error against extracted
strengths. Inputs come from :class:`PhonemeFeaturizer`, which one-hot encodes
each phoneme together with its neighbours.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core_data import EmotionCategory, StrengthCurve

FORMAT_VERSION = 1
FEATURIZER_VERSION = 1

PARAM_NAMES = ("W1", "b1", "W2", "b2")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PredictorConfig:
    input_dim: int
    hidden_dim: int = 32
    learning_rate: float = 0.05
    epochs: int = 2000
    batch_size: int = 16
    seed: int = 0
    alpha: float = 1.0
    # geometric decay: lr_epoch = learning_rate * lr_decay ** epoch
    lr_decay: float = 0.996

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.alpha >= 0:
            raise ValueError("alpha must be nonnegative")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")


@dataclass(frozen=True)
class PhonemeFeaturizer:
    """One-hot phoneme identity concatenated with one-hots of the ``context``
    neighbours on each side (zeros past the utterance edge or for unknown labels).

    Block order is ``[current, prev_1, next_1, prev_2, next_2, ...]``.
    """

    inventory: tuple[str, ...]
    context: int = 1

    def __post_init__(self):
        if len(set(self.inventory)) != len(self.inventory):
            raise ValueError("phoneme inventory has duplicates")
        if self.context < 0:
            raise ValueError("context must be nonnegative")

    @classmethod
    def from_sequences(cls, sequences: Sequence[Sequence[str]], context: int = 1) -> PhonemeFeaturizer:
        return cls(tuple(sorted({p for seq in sequences for p in seq})), context)

    @property
    def input_dim(self) -> int:
        return (2 * self.context + 1) * len(self.inventory)

    def transform(self, labels: Sequence[str]) -> np.ndarray:
        V = len(self.inventory)
        index = {p: k for k, p in enumerate(self.inventory)}
        ids = [index.get(p, -1) for p in labels]
        n = len(ids)
        out = np.zeros((n, self.input_dim))
        offsets = [0] + [s * d for d in range(1, self.context + 1) for s in (-1, 1)]
        for block, off in enumerate(offsets):
            for t in range(n):
                u = t + off
                if 0 <= u < n and ids[u] >= 0:
                    out[t, block * V + ids[u]] = 1.0
        return out

    def to_dict(self) -> dict:
        return {"version": FEATURIZER_VERSION, "inventory": list(self.inventory), "context": self.context}

    @classmethod
    def from_dict(cls, obj: dict) -> PhonemeFeaturizer:
        if obj.get("version", FEATURIZER_VERSION) != FEATURIZER_VERSION:
            raise ValueError(f"unsupported featurizer version {obj.get('version')!r}")
        return cls(tuple(obj["inventory"]), int(obj.get("context", 1)))


@dataclass(frozen=True, eq=False)
class PredictorModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float
    config: PredictorConfig
    category: EmotionCategory = EmotionCategory.NEUTRAL
    featurizer: PhonemeFeaturizer | None = None
    loss_trace: tuple[float, ...] = field(default=())

    def __post_init__(self):
        H, D = self.config.hidden_dim, self.config.input_dim
        shapes = {"W1": (H, D), "b1": (H,), "W2": (1, H)}
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if not math.isfinite(self.b2):
            raise ValueError("b2 is non-finite")

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def replace_params(self, **params) -> PredictorModel:
        p = self.params()
        p.update(params)
        return PredictorModel(
            np.asarray(p["W1"], dtype=np.float64),
            np.asarray(p["b1"], dtype=np.float64),
            np.asarray(p["W2"], dtype=np.float64),
            float(p["b2"]),
            self.config,
            self.category,
            self.featurizer,
            self.loss_trace,
        )


def _as_inputs(model: PredictorModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.config.input_dim:
        raise ValueError(f"dimension mismatch: input dim {X.shape[1]}, model expects {model.config.input_dim}")
    return X


def _forward_batch(model: PredictorModel, X: np.ndarray):
    z = X @ model.W1.T + model.b1
    h = np.maximum(z, 0.0)
    return z, h, h @ model.W2[0] + model.b2


def forward(model: PredictorModel, x) -> float:
    """Raw (unclamped) predicted strength for one phoneme input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single input vector, got shape {x.shape}")
    return float(_forward_batch(model, _as_inputs(model, x))[2][0])


def l1_strength_loss(pred: Sequence[float], target: Sequence[float]) -> float:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} targets")
    if p.size == 0:
        raise ValueError("empty loss input")
    return float(np.mean(np.abs(p - t)))


def composite_loss(mel_loss: float, strength_loss: float, alpha: float) -> float:
    """Acoustic loss plus ``alpha``-weighted strength loss."""
    for name, v in (("mel_loss", mel_loss), ("strength_loss", strength_loss), ("alpha", alpha)):
        if v < 0:
            raise ValueError(f"{name} must be nonnegative, got {v}")
    return mel_loss + alpha * strength_loss


def grad(model: PredictorModel, batch) -> dict:
    """Analytic gradient of the batch-mean L1 loss.

    ``batch`` is a sequence of ``(input_vector, target)`` pairs. Subgradients
    are 0 at both the |.| and ReLU kinks.
    """
    X, y = _split_batch(model, batch)
    return _grad_arrays(model, X, y)


def _split_batch(model, batch):
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    X = _as_inputs(model, [b[0] for b in batch])
    y = np.asarray([b[1] for b in batch], dtype=np.float64)
    return X, y


def _grad_arrays(model: PredictorModel, X: np.ndarray, y: np.ndarray) -> dict:
    return _grad_params(model.W1, model.b1, model.W2, model.b2, X, y)


def _grad_params(W1, b1, W2, b2, X, y) -> dict:
    z = X @ W1.T + b1
    h = np.maximum(z, 0.0)
    g = np.sign(h @ W2[0] + b2 - y) / X.shape[0]
    dz = np.outer(g, W2[0]) * (z > 0)
    return {
        "W1": dz.T @ X,
        "b1": dz.sum(axis=0),
        "W2": (g @ h).reshape(1, -1),
        "b2": float(g.sum()),
    }


def init_model(config: PredictorConfig, rng: np.random.Generator, **kwargs) -> PredictorModel:
    """Uniform init in +/- 1/sqrt(fan_in) for every layer."""
    a1 = 1.0 / math.sqrt(config.input_dim)
    a2 = 1.0 / math.sqrt(config.hidden_dim)
    W1 = rng.uniform(-a1, a1, size=(config.hidden_dim, config.input_dim))
    b1 = rng.uniform(-a1, a1, size=config.hidden_dim)
    W2 = rng.uniform(-a2, a2, size=(1, config.hidden_dim))
    b2 = float(rng.uniform(-a2, a2))
    return PredictorModel(W1, b1, W2, b2, config, **kwargs)


def train(data, config: PredictorConfig, **model_kwargs) -> PredictorModel:
    """Fit a predictor on a sequence of ``(input_vector, target)`` pairs."""
    data = list(data)
    if not data:
        raise ValueError("no training data")
    return train_arrays([d[0] for d in data], [d[1] for d in data], config, **model_kwargs)


def train_arrays(X, y, config: PredictorConfig, **model_kwargs) -> PredictorModel:
    """Mini-batch gradient descent on the L1 strength loss.

    Deterministic given ``config.seed``: one generator drives the
    initialization and the per-epoch shuffles. The returned model carries the
    full-data L1 loss after each epoch in ``loss_trace``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("no training data")
    rng = np.random.default_rng(config.seed)
    model = init_model(config, rng, **model_kwargs)
    X = _as_inputs(model, X)
    if y.shape != (X.shape[0],):
        raise ValueError("one target per input is required")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("training targets must lie in [0, 1]")

    W1, b1, W2 = model.W1.copy(), model.b1.copy(), model.W2.copy()
    b2 = model.b2
    n = X.shape[0]
    trace = []
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.lr_decay ** epoch
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            g = _grad_params(W1, b1, W2, b2, X[idx], y[idx])
            # a short tail batch takes a proportionally short step
            step = lr * len(idx) / config.batch_size
            W1 = W1 - step * g["W1"]
            b1 = b1 - step * g["b1"]
            W2 = W2 - step * g["W2"]
            b2 = b2 - step * g["b2"]
        pred = np.maximum(X @ W1.T + b1, 0.0) @ W2[0] + b2
        loss = float(np.mean(np.abs(pred - y)))
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        trace.append(loss)

    out = model.replace_params(W1=W1, b1=b1, W2=W2, b2=b2)
    return PredictorModel(out.W1, out.b1, out.W2, out.b2, out.config, out.category, out.featurizer, tuple(trace))


def predict_raw(model: PredictorModel, inputs) -> np.ndarray:
    if len(inputs) == 0:
        return np.zeros(0)
    return _forward_batch(model, _as_inputs(model, inputs))[2]


def predict_curve(
    model: PredictorModel,
    inputs,
    phoneme_labels: Sequence[str] | None = None,
    utterance_id: str = "predicted",
) -> StrengthCurve:
    """Predicted strengths for an utterance, clamped to [0, 1]."""
    raw = predict_raw(model, inputs)
    if phoneme_labels is None:
        phoneme_labels = [f"ph{k}" for k in range(len(raw))]
    if len(phoneme_labels) != len(raw):
        raise ValueError(f"{len(phoneme_labels)} labels for {len(raw)} inputs")
    return StrengthCurve(utterance_id, model.category, tuple(phoneme_labels), tuple(np.clip(raw, 0.0, 1.0).tolist()))


def predict_phonemes(model: PredictorModel, labels: Sequence[str], utterance_id: str = "predicted") -> StrengthCurve:
    if model.featurizer is None:
        raise ValueError("model has no featurizer; pass feature vectors to predict_curve instead")
    return predict_curve(model, model.featurizer.transform(labels), labels, utterance_id)


def training_pairs(curves: Sequence[StrengthCurve], featurizer: PhonemeFeaturizer):
    """Featurize curves into ``(X, y)`` arrays for :func:`train_arrays`."""
    X = [featurizer.transform(c.phoneme_labels) for c in curves]
    y = [np.asarray(c.strengths, dtype=np.float64) for c in curves]
    if not X:
        return np.zeros((0, featurizer.input_dim)), np.zeros(0)
    return np.vstack(X), np.concatenate(y)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def model_to_dict(model: PredictorModel) -> dict:
    cfg = model.config
    return {
        "format_version": FORMAT_VERSION,
        "category": model.category.value,
        "input_dim": cfg.input_dim,
        "hidden_dim": cfg.hidden_dim,
        "W1": model.W1.tolist(),
        "b1": model.b1.tolist(),
        "W2": model.W2.tolist(),
        "b2": model.b2,
        "featurizer": model.featurizer.to_dict() if model.featurizer else None,
        "training": {
            "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "alpha": cfg.alpha,
            "lr_decay": cfg.lr_decay,
        },
    }


def model_from_dict(obj: dict) -> PredictorModel:
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported predictor format_version {obj.get('format_version')!r}")
    config = PredictorConfig(input_dim=int(obj["input_dim"]), hidden_dim=int(obj["hidden_dim"]), **obj.get("training", {}))
    feat = PhonemeFeaturizer.from_dict(obj["featurizer"]) if obj.get("featurizer") else None
    if feat is not None and feat.input_dim != config.input_dim:
        raise ValueError(f"featurizer produces dim {feat.input_dim}, model expects {config.input_dim}")
    return PredictorModel(
        np.asarray(obj["W1"], dtype=np.float64),
        np.asarray(obj["b1"], dtype=np.float64),
        np.asarray(obj["W2"], dtype=np.float64),
        float(obj["b2"]),
        config,
        EmotionCategory.parse(obj["category"]),
        feat,
    )


def save_model(model: PredictorModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_model(path: str | Path) -> PredictorModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def write_loss_trace(path: str | Path, trace: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(trace):
            writer.writerow([epoch, repr(float(loss))])
