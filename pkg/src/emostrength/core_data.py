"""Domain types and file I/O for utterance features, alignments and strength curves.

File formats
------------
features (JSON Lines), one object per utterance::

    {"utterance_id": str, "category": str,
     "utterance_features": [f64, ...], "fragment_features": [[f64, ...], ...]}

alignments (CSV), header ``utterance_id,phoneme,start_s,end_s``.

strength curves (CSV), header ``utterance_id,index,phoneme,strength``.
"""

from __future__ import annotations

import csv
import enum
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ALIGNMENT_HEADER = ("utterance_id", "phoneme", "start_s", "end_s")
STRENGTH_HEADER = ("utterance_id", "index", "phoneme", "strength")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent input data."""


class EmotionCategory(str, enum.Enum):
    NEUTRAL = "neutral"
    HAPPY = "happy"
    ANGRY = "angry"
    DISGUST = "disgust"
    FEAR = "fear"
    SURPRISE = "surprise"
    SAD = "sad"

    @classmethod
    def parse(cls, name: str | EmotionCategory) -> EmotionCategory:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            valid = ", ".join(c.value for c in cls)
            raise DatasetError(f"unknown emotion category {name!r} (expected one of: {valid})") from None

    @property
    def is_emotional(self) -> bool:
        return self is not EmotionCategory.NEUTRAL

    def __str__(self) -> str:
        return self.value


def as_feature_vector(values, where: str = "feature") -> np.ndarray:
    """Validate ``values`` as a finite 1-D float vector and return a read-only copy."""
    try:
        arr = np.array(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"{where}: not a numeric vector ({exc})") from None
    if arr.ndim != 1 or arr.size == 0:
        raise DatasetError(f"{where}: expected a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"{where}: non-finite feature")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Phoneme:
    label: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class PhonemeAlignment:
    utterance_id: str
    phonemes: tuple[Phoneme, ...]

    def __post_init__(self):
        prev_end = -math.inf
        for k, ph in enumerate(self.phonemes):
            if not (0.0 <= ph.start_s < ph.end_s):
                raise DatasetError(
                    f"alignment {self.utterance_id!r} phoneme {k}: need 0 <= start_s < end_s, "
                    f"got ({ph.start_s}, {ph.end_s})"
                )
            if ph.start_s < prev_end:
                raise DatasetError(
                    f"alignment {self.utterance_id!r} phoneme {k}: overlapping or unsorted boundaries"
                )
            prev_end = ph.end_s

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(ph.label for ph in self.phonemes)

    def __len__(self) -> int:
        return len(self.phonemes)


@dataclass(frozen=True, eq=False)
class UtteranceRecord:
    """One utterance: pooled features, per-phoneme fragment features and alignment.

    ``fragment_features`` is an (n_phonemes, dim) array aligned row-for-row with
    ``alignment.phonemes``.
    """

    utterance_id: str
    category: EmotionCategory
    utterance_features: np.ndarray
    fragment_features: np.ndarray
    alignment: PhonemeAlignment

    def __post_init__(self):
        dim = self.utterance_features.shape[0]
        if self.fragment_features.shape[0] != len(self.alignment):
            raise DatasetError(
                f"utterance {self.utterance_id!r}: fragment count mismatch "
                f"({self.fragment_features.shape[0]} fragment vectors, "
                f"{len(self.alignment)} aligned phonemes)"
            )
        if self.fragment_features.ndim != 2 or (
            self.fragment_features.shape[0] and self.fragment_features.shape[1] != dim
        ):
            raise DatasetError(
                f"utterance {self.utterance_id!r}: fragment dim does not match utterance dim {dim}"
            )

    @property
    def dim(self) -> int:
        return int(self.utterance_features.shape[0])

    @property
    def phoneme_labels(self) -> tuple[str, ...]:
        return self.alignment.labels


@dataclass(frozen=True)
class StrengthCurve:
    utterance_id: str
    category: EmotionCategory
    phoneme_labels: tuple[str, ...]
    strengths: tuple[float, ...]

    def __post_init__(self):
        if len(self.strengths) != len(self.phoneme_labels):
            raise DatasetError(
                f"curve {self.utterance_id!r}: {len(self.strengths)} strengths for "
                f"{len(self.phoneme_labels)} phonemes"
            )
        for k, s in enumerate(self.strengths):
            if not (0.0 <= s <= 1.0):
                raise DatasetError(f"curve {self.utterance_id!r}: strength out of range at index {k}")


@dataclass(frozen=True)
class PairConstraintSet:
    """Ordered pairs ``(i, j)`` (i should rank above j) and similar pairs (equal rank)."""

    ordered: tuple[tuple[int, int], ...]
    similar: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.ordered) + len(self.similar)

    def validate(self, categories: Sequence[EmotionCategory]) -> None:
        n = len(categories)
        for i, j in itertools.chain(self.ordered, self.similar):
            if not (0 <= i < n and 0 <= j < n):
                raise DatasetError(f"pair ({i}, {j}) out of range for {n} records")
        if set(self.ordered) & set(self.similar):
            raise DatasetError("a pair appears in both the ordered and similar sets")
        for i, j in self.ordered:
            if not categories[i].is_emotional or categories[j].is_emotional:
                raise DatasetError(f"ordered pair ({i}, {j}) must be (emotional, neutral)")
        for i, j in self.similar:
            if categories[i] is not categories[j]:
                raise DatasetError(f"similar pair ({i}, {j}) mixes categories")


@dataclass(frozen=True)
class NormalizationStats:
    """Per-category min/max of raw fragment scores, used to map strengths onto [0, 1]."""

    category: EmotionCategory
    min_raw: float
    max_raw: float

    def __post_init__(self):
        if not (math.isfinite(self.min_raw) and math.isfinite(self.max_raw)):
            raise ValueError("normalization bounds must be finite")
        if self.min_raw > self.max_raw:
            raise ValueError(f"min_raw {self.min_raw} exceeds max_raw {self.max_raw}")


def _sample_pairs(pairs: list[tuple[int, int]], cap: int, rng: np.random.Generator):
    if len(pairs) <= cap:
        return tuple(pairs)
    keep = np.sort(rng.choice(len(pairs), size=cap, replace=False))
    return tuple(pairs[k] for k in keep)


def build_constraints(
    records: Sequence[UtteranceRecord],
    target: EmotionCategory | str,
    max_pairs: int,
    seed: int,
) -> PairConstraintSet:
    """Enumerate (target, neutral) ordered pairs and same-category similar pairs.

    Each set is capped at ``max_pairs`` by seeded sampling without replacement;
    sampled pairs keep their enumeration order.
    """
    target = EmotionCategory.parse(target)
    if not target.is_emotional:
        raise DatasetError("target category must be emotional")
    if max_pairs < 1:
        raise DatasetError("max_pairs must be a positive integer")
    emo = [k for k, r in enumerate(records) if r.category is target]
    neu = [k for k, r in enumerate(records) if r.category is EmotionCategory.NEUTRAL]
    if not emo:
        raise DatasetError(f"missing target category {target.value!r}")
    if not neu:
        raise DatasetError("missing neutral category")

    ordered = [(i, j) for i in emo for j in neu]
    similar = list(itertools.combinations(emo, 2)) + list(itertools.combinations(neu, 2))
    rng = np.random.default_rng(seed)
    return PairConstraintSet(_sample_pairs(ordered, max_pairs, rng), _sample_pairs(similar, max_pairs, rng))


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise DatasetError(f"{where}: not a number: {text!r}") from None


def load_alignments(path: str | Path) -> dict[str, PhonemeAlignment]:
    rows: dict[str, list[Phoneme]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ALIGNMENT_HEADER:
            raise DatasetError(f"{path}:1: expected header {','.join(ALIGNMENT_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            uid, label, start, end = row
            where = f"{path}:{lineno}"
            if not uid or not label:
                raise DatasetError(f"{where}: empty utterance_id or phoneme")
            rows.setdefault(uid, []).append(
                Phoneme(label, _parse_float(start, f"{where} start_s"), _parse_float(end, f"{where} end_s"))
            )
    return {uid: PhonemeAlignment(uid, tuple(phs)) for uid, phs in rows.items()}


def _record_from_json(obj, lineno: int, path, alignments) -> UtteranceRecord:
    where = f"{path}:{lineno}"
    if not isinstance(obj, dict):
        raise DatasetError(f"{where}: expected a JSON object")
    for key in ("utterance_id", "category", "utterance_features", "fragment_features"):
        if key not in obj:
            raise DatasetError(f"{where}: missing field {key!r}")
    uid = obj["utterance_id"]
    if not isinstance(uid, str) or not uid:
        raise DatasetError(f"{where}: field 'utterance_id' must be a non-empty string")
    try:
        category = EmotionCategory.parse(obj["category"])
    except DatasetError as exc:
        raise DatasetError(f"{where}: field 'category': {exc}") from None
    utt = as_feature_vector(obj["utterance_features"], f"{where}: field 'utterance_features'")
    frags_raw = obj["fragment_features"]
    if not isinstance(frags_raw, list):
        raise DatasetError(f"{where}: field 'fragment_features' must be a list")
    frags = [as_feature_vector(f, f"{where}: field 'fragment_features'[{k}]") for k, f in enumerate(frags_raw)]
    for k, f in enumerate(frags):
        if f.shape[0] != utt.shape[0]:
            raise DatasetError(
                f"{where}: field 'fragment_features'[{k}]: dim {f.shape[0]} != utterance dim {utt.shape[0]}"
            )
    frag_arr = np.array(frags, dtype=np.float64).reshape(len(frags), utt.shape[0])
    frag_arr.setflags(write=False)
    if uid not in alignments:
        raise DatasetError(f"{where}: utterance {uid!r} missing from alignments")
    try:
        return UtteranceRecord(uid, category, utt, frag_arr, alignments[uid])
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def load_dataset(features_path: str | Path, alignments_path: str | Path) -> list[UtteranceRecord]:
    """Read and validate a features JSONL file against an alignment CSV."""
    alignments = load_alignments(alignments_path)
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    with open(features_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{features_path}:{lineno}: invalid JSON ({exc.msg})") from None
            rec = _record_from_json(obj, lineno, features_path, alignments)
            if rec.utterance_id in seen:
                raise DatasetError(f"{features_path}:{lineno}: duplicate utterance_id {rec.utterance_id!r}")
            if records and rec.dim != records[0].dim:
                raise DatasetError(
                    f"{features_path}:{lineno}: dim mismatch ({rec.dim} vs {records[0].dim} in earlier records)"
                )
            seen.add(rec.utterance_id)
            records.append(rec)
    return records


def save_dataset(records: Iterable[UtteranceRecord], features_path: str | Path, alignments_path: str | Path) -> None:
    records = list(records)
    with open(features_path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "utterance_id": r.utterance_id,
                "category": r.category.value,
                "utterance_features": r.utterance_features.tolist(),
                "fragment_features": r.fragment_features.tolist(),
            }
            fh.write(json.dumps(obj, allow_nan=False) + "\n")
    with open(alignments_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ALIGNMENT_HEADER)
        for r in sorted(records, key=lambda r: r.utterance_id):
            for ph in r.alignment.phonemes:
                writer.writerow([r.utterance_id, ph.label, repr(ph.start_s), repr(ph.end_s)])


def write_strength_curves(path: str | Path, curves: Iterable[StrengthCurve]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STRENGTH_HEADER)
        for c in curves:
            for k, (label, s) in enumerate(zip(c.phoneme_labels, c.strengths)):
                writer.writerow([c.utterance_id, k, label, repr(float(s))])


def read_strength_curves(path: str | Path, category: EmotionCategory | str) -> list[StrengthCurve]:
    """Read a strength CSV; the file carries no category, so the caller supplies it."""
    category = EmotionCategory.parse(category)
    rows: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != STRENGTH_HEADER:
            raise DatasetError(f"{path}:1: expected header {','.join(STRENGTH_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            uid, index, label, strength = row
            try:
                idx = int(index)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: index is not an integer: {index!r}") from None
            rows.setdefault(uid, []).append((idx, label, _parse_float(strength, f"{path}:{lineno} strength")))
    curves = []
    for uid, items in rows.items():
        if [it[0] for it in items] != list(range(len(items))):
            raise DatasetError(f"{path}: curve {uid!r} indices are not 0..{len(items) - 1} in order")
        curves.append(
            StrengthCurve(uid, category, tuple(it[1] for it in items), tuple(it[2] for it in items))
        )
    return curves
