"""Phoneme-level emotion strengths: extraction, [0, 1] normalization, transfer and control."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .core_data import DatasetError, EmotionCategory, NormalizationStats, StrengthCurve, UtteranceRecord
from .ranker import RankingModel, score_many

__all__ = [
    "NormalizationStats",
    "extract_raw_strengths",
    "fit_normalization",
    "normalize",
    "resample_curve",
    "transfer_strengths",
    "validate_control",
]

logger = logging.getLogger(__name__)


def extract_raw_strengths(model: RankingModel, record: UtteranceRecord) -> list[float]:
    """Score every phoneme fragment of ``record``, in alignment order."""
    if record.fragment_features.shape[0] == 0:
        return []
    if record.dim != model.dim:
        raise ValueError(f"dimension mismatch: model dim {model.dim}, record {record.utterance_id!r} dim {record.dim}")
    return score_many(model, record.fragment_features).tolist()


def fit_normalization(raw: Sequence[float], category: EmotionCategory | str) -> NormalizationStats:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot fit normalization on an empty score list")
    if not np.all(np.isfinite(arr)):
        raise ValueError("raw scores must be finite")
    return NormalizationStats(EmotionCategory.parse(category), float(arr.min()), float(arr.max()))


def normalize(raw: Sequence[float], stats: NormalizationStats) -> list[float]:
    """Min-max map onto [0, 1] with clamping; a degenerate range maps everything to 0.5."""
    arr = np.asarray(raw, dtype=np.float64)
    span = stats.max_raw - stats.min_raw
    if span == 0:
        logger.warning("degenerate normalization range for %s; using 0.5", stats.category.value)
        return [0.5] * arr.size
    return np.clip((arr - stats.min_raw) / span, 0.0, 1.0).tolist()


def resample_curve(source: Sequence[float], target_len: int) -> list[float]:
    """Piecewise-linear resampling of a strength curve to ``target_len`` points.

    The M source values are knots at m / (M - 1) on [0, 1]; output k is the
    interpolant at k / (N - 1), so both endpoints are kept and N == M is an
    exact copy. A single knot is constant; a single output sits at 0.5.
    """
    src = [float(v) for v in source]
    M, N = len(src), int(target_len)
    if M < 1:
        raise ValueError("source curve must have at least one value")
    if N < 1:
        raise ValueError("target_len must be a positive integer")
    if M == 1:
        return [src[0]] * N
    if N == 1:
        return [_interp_at(src, M - 1, 2)]
    return [_interp_at(src, k * (M - 1), N - 1) for k in range(N)]


def _interp_at(src: list[float], num: int, den: int) -> float:
    # position num/den in knot-index units, kept rational so aligned knots are exact
    lo, rem = divmod(num, den)
    if rem == 0:
        return src[lo]
    a, b = src[lo], src[lo + 1]
    v = a + (rem / den) * (b - a)
    return min(max(v, min(a, b)), max(a, b))


def transfer_strengths(
    model: RankingModel,
    stats: NormalizationStats,
    reference: UtteranceRecord,
    target_phonemes: Sequence[str],
    utterance_id: str | None = None,
) -> StrengthCurve:
    """Carry a reference utterance's strength curve onto a target phoneme sequence."""
    if len(reference.alignment) < 1:
        raise ValueError(f"reference {reference.utterance_id!r} has no phonemes")
    if len(target_phonemes) < 1:
        raise ValueError("target phoneme sequence is empty")
    norm = normalize(extract_raw_strengths(model, reference), stats)
    strengths = resample_curve(norm, len(target_phonemes))
    return StrengthCurve(
        utterance_id=utterance_id or reference.utterance_id,
        category=reference.category,
        phoneme_labels=tuple(target_phonemes),
        strengths=tuple(strengths),
    )


def validate_control(
    curve: Sequence[float],
    n_phonemes: int,
    phoneme_labels: Sequence[str] | None = None,
    category: EmotionCategory | str = EmotionCategory.NEUTRAL,
    utterance_id: str = "control",
) -> StrengthCurve:
    """Accept a manually designed strength curve iff it has one value in [0, 1] per phoneme."""
    if n_phonemes < 1:
        raise DatasetError("n_phonemes must be a positive integer")
    values = [float(v) for v in curve]
    if len(values) != n_phonemes:
        raise DatasetError(f"length mismatch: {len(values)} strengths for {n_phonemes} phonemes")
    for k, v in enumerate(values):
        if not (0.0 <= v <= 1.0):
            raise DatasetError(f"strength out of range at index {k}: {v}")
    if phoneme_labels is None:
        phoneme_labels = [f"ph{k}" for k in range(n_phonemes)]
    elif len(phoneme_labels) != n_phonemes:
        raise DatasetError(f"length mismatch: {len(phoneme_labels)} phoneme labels for {n_phonemes} phonemes")
    return StrengthCurve(utterance_id, EmotionCategory.parse(category), tuple(phoneme_labels), tuple(values))
