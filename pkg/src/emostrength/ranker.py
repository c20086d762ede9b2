"""Relative-attribute ranking function trained with a primal Newton method.

The ranking function is linear, ``r(x) = w @ x``. Given ordered pairs O
(i should outrank j) and similar pairs S (i and j should score alike), w
minimizes the unconstrained primal

    f(w) = 1/2 ||w||^2 + C * sum_O max(0, 1 - w @ d)^2 + C * sum_S (w @ d)^2,

with ``d = x_i - x_j``. The squared hinge has a generalized Hessian, so
Newton's method with a backtracking line search converges in a handful of
iterations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core_data import EmotionCategory, NormalizationStats, PairConstraintSet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class RankerError(RuntimeError):
    """Raised when the Newton solve cannot proceed."""


@dataclass(frozen=True)
class RankerConfig:
    C: float = 1.0
    max_newton_iters: int = 50
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    ridge_eps: float = 1e-8
    standardize: bool = False

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be a positive integer")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError("armijo_shrink must lie in (0, 1)")
        if not self.ridge_eps > 0:
            raise ValueError("ridge_eps must be positive")


@dataclass(frozen=True, eq=False)
class RankingModel:
    """A fitted ranking function for one emotion category (trained against neutral).

    When the config asks for standardization, ``feature_mean``/``feature_scale``
    hold the per-dimension statistics and ``w`` lives in standardized space.
    """

    w: np.ndarray
    category: EmotionCategory
    config: RankerConfig
    final_objective: float
    final_grad_norm: float
    converged: bool = True
    n_iter: int = 0
    objective_trace: tuple[float, ...] = ()
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None
    normalization: NormalizationStats | None = None

    @property
    def dim(self) -> int:
        return int(self.w.shape[0])

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: model dim {self.dim}, feature dim {X.shape[-1]}")
        if self.feature_mean is not None:
            X = (X - self.feature_mean) / self.feature_scale
        return X

    def with_normalization(self, stats: NormalizationStats) -> RankingModel:
        return RankingModel(
            w=self.w,
            category=self.category,
            config=self.config,
            final_objective=self.final_objective,
            final_grad_norm=self.final_grad_norm,
            converged=self.converged,
            n_iter=self.n_iter,
            objective_trace=self.objective_trace,
            feature_mean=self.feature_mean,
            feature_scale=self.feature_scale,
            normalization=stats,
        )


# ---------------------------------------------------------------------------
# Objective, gradient, generalized Hessian
# ---------------------------------------------------------------------------


def _pair_differences(X: np.ndarray, pairs) -> np.ndarray:
    if len(pairs) == 0:
        return np.zeros((0, X.shape[1]))
    idx = np.asarray(pairs, dtype=np.intp)
    return X[idx[:, 0]] - X[idx[:, 1]]


def _as_matrix(data) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a list of feature vectors, got array of shape {X.shape}")
    return X


class _Problem:
    """Pair-difference matrices for one (data, constraints) instance."""

    def __init__(self, X: np.ndarray, cons: PairConstraintSet, C: float):
        self.dim = X.shape[1]
        self.D_o = _pair_differences(X, cons.ordered)
        self.D_s = _pair_differences(X, cons.similar)
        self.C = C

    def _check(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: w has shape {w.shape}, features have dim {self.dim}")
        return w

    def objective(self, w) -> float:
        w = self._check(w)
        hinge = np.maximum(0.0, 1.0 - self.D_o @ w)
        sim = self.D_s @ w
        return float(0.5 * w @ w + self.C * (hinge @ hinge) + self.C * (sim @ sim))

    def gradient(self, w) -> np.ndarray:
        w = self._check(w)
        margin = 1.0 - self.D_o @ w
        active = margin > 0
        g = w - 2.0 * self.C * (self.D_o[active].T @ margin[active])
        g += 2.0 * self.C * (self.D_s.T @ (self.D_s @ w))
        return g

    def hessian(self, w) -> np.ndarray:
        # margin exactly 0 counts as inactive
        w = self._check(w)
        active = (1.0 - self.D_o @ w) > 0
        Da = self.D_o[active]
        H = np.eye(self.dim) + 2.0 * self.C * (Da.T @ Da) + 2.0 * self.C * (self.D_s.T @ self.D_s)
        return H


def objective(w, data: Sequence, cons: PairConstraintSet, C: float) -> float:
    """Primal ranking objective at ``w``."""
    return _Problem(_as_matrix(data), cons, C).objective(w)


def gradient(w, data: Sequence, cons: PairConstraintSet, C: float) -> np.ndarray:
    return _Problem(_as_matrix(data), cons, C).gradient(w)


def hessian(w, data: Sequence, cons: PairConstraintSet, C: float) -> np.ndarray:
    """Generalized Hessian (active ordered pairs only), without the ridge term."""
    return _Problem(_as_matrix(data), cons, C).hessian(w)


# ---------------------------------------------------------------------------
# Newton solver
# ---------------------------------------------------------------------------


def fit(
    data: Sequence,
    cons: PairConstraintSet,
    config: RankerConfig = RankerConfig(),
    category: EmotionCategory | str = EmotionCategory.HAPPY,
) -> RankingModel:
    """Minimize the ranking objective by Newton's method with Armijo backtracking.

    Returns a model with ``converged=False`` (and a warning logged) if the
    gradient norm is still above ``config.grad_tol`` after
    ``config.max_newton_iters`` iterations.
    """
    category = EmotionCategory.parse(category)
    X = _as_matrix(data)
    if X.shape[1] < 1:
        raise ValueError("feature dim must be at least 1")
    if len(cons) == 0:
        raise ValueError("empty constraint set")
    for i, j in list(cons.ordered) + list(cons.similar):
        if not (0 <= i < X.shape[0] and 0 <= j < X.shape[0]):
            raise ValueError(f"pair ({i}, {j}) out of range for {X.shape[0]} feature vectors")

    mean = scale = None
    if config.standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        X = (X - mean) / scale
        mean.setflags(write=False)
        scale.setflags(write=False)

    prob = _Problem(X, cons, config.C)
    ridge = config.ridge_eps * np.eye(prob.dim)
    w = np.zeros(prob.dim)
    f = prob.objective(w)
    g = prob.gradient(w)
    trace = [f]
    for it in range(1, config.max_newton_iters + 1):
        if np.linalg.norm(g) <= config.grad_tol:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            H = prob.hessian(w) + ridge
        if not np.all(np.isfinite(H)):
            raise RankerError(f"Hessian is non-finite at iteration {it}; check feature scale")
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError as exc:
            raise RankerError(f"Newton system is singular at iteration {it}: {exc}") from None
        if not np.all(np.isfinite(step)):
            raise RankerError(f"Newton step is non-finite at iteration {it}")
        slope = float(g @ step)
        if slope >= 0:
            raise RankerError(f"Newton step is not a descent direction at iteration {it}")
        t = 1.0
        while True:
            w_new = w + t * step
            f_new = prob.objective(w_new)
            if f_new <= f + config.armijo_c * t * slope:
                break
            t *= config.armijo_shrink
            if t < 1e-16:
                raise RankerError(f"line search failed at iteration {it}")
        w, f = w_new, f_new
        g = prob.gradient(w)
        trace.append(f)

    grad_norm = float(np.linalg.norm(g))
    converged = grad_norm <= config.grad_tol
    if not converged:
        logger.warning(
            "ranker did not converge after %d Newton iterations (grad norm %.3g > %.3g)",
            config.max_newton_iters, grad_norm, config.grad_tol,
        )
    w.setflags(write=False)
    return RankingModel(
        w=w,
        category=category,
        config=config,
        final_objective=f,
        final_grad_norm=grad_norm,
        converged=converged,
        n_iter=len(trace) - 1,
        objective_trace=tuple(trace),
        feature_mean=mean,
        feature_scale=scale,
    )


def score(model: RankingModel, x) -> float:
    """Raw ranking score ``w @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single feature vector, got shape {x.shape}")
    return float(model.w @ model.transform(x))


def score_many(model: RankingModel, X) -> np.ndarray:
    X = _as_matrix(X) if len(X) else np.zeros((0, model.dim))
    return model.transform(X) @ model.w


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def model_to_dict(model: RankingModel) -> dict:
    out = {
        "format_version": FORMAT_VERSION,
        "category": model.category.value,
        "w": model.w.tolist(),
        "config": asdict(model.config),
        "final_objective": model.final_objective,
        "final_grad_norm": model.final_grad_norm,
        "converged": model.converged,
        "n_iter": model.n_iter,
    }
    if model.feature_mean is not None:
        out["standardization"] = {"mean": model.feature_mean.tolist(), "scale": model.feature_scale.tolist()}
    if model.normalization is not None:
        out["normalization"] = {"min_raw": model.normalization.min_raw, "max_raw": model.normalization.max_raw}
    return out


def model_from_dict(obj: dict) -> RankingModel:
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported ranking model format_version {version!r}")
    category = EmotionCategory.parse(obj["category"])
    w = np.asarray(obj["w"], dtype=np.float64)
    if w.ndim != 1 or not np.all(np.isfinite(w)):
        raise ValueError("ranking model 'w' must be a finite vector")
    w.setflags(write=False)
    mean = scale = None
    if "standardization" in obj:
        mean = np.asarray(obj["standardization"]["mean"], dtype=np.float64)
        scale = np.asarray(obj["standardization"]["scale"], dtype=np.float64)
    stats = None
    if "normalization" in obj:
        stats = NormalizationStats(category, float(obj["normalization"]["min_raw"]), float(obj["normalization"]["max_raw"]))
    return RankingModel(
        w=w,
        category=category,
        config=RankerConfig(**obj.get("config", {})),
        final_objective=float(obj["final_objective"]),
        final_grad_norm=float(obj["final_grad_norm"]),
        converged=bool(obj.get("converged", True)),
        n_iter=int(obj.get("n_iter", 0)),
        feature_mean=mean,
        feature_scale=scale,
        normalization=stats,
    )


def save_model(model: RankingModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, allow_nan=False)
        fh.write("\n")


def load_model(path: str | Path) -> RankingModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
