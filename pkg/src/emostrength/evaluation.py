"""Objective evaluation: DTW alignment and mel-cepstral distortion (MCD).

Frame sequences are (n_frames, n_coeffs) arrays of mel-cepstral
coefficients. ``evaluate_mcd`` aligns prediction and target with DTW over the
coefficients that enter the distortion, then averages the per-frame MCD
along the path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

# 10 * sqrt(2) / ln(10): converts a cepstral Euclidean distance to dB
MCD_CONST = 10.0 * math.sqrt(2.0) / math.log(10.0)

LOCAL_COSTS = ("euclidean", "sqeuclidean", "cityblock")


@dataclass(frozen=True)
class AlignmentPath:
    pairs: tuple[tuple[int, int], ...]

    def validate(self, n_a: int, n_b: int) -> None:
        if not self.pairs:
            raise ValueError("empty alignment path")
        if self.pairs[0] != (0, 0) or self.pairs[-1] != (n_a - 1, n_b - 1):
            raise ValueError(f"path must run from (0, 0) to ({n_a - 1}, {n_b - 1})")
        for (i0, j0), (i1, j1) in zip(self.pairs, self.pairs[1:]):
            if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
                raise ValueError(f"invalid path step ({i0}, {j0}) -> ({i1}, {j1})")

    def __len__(self) -> int:
        return len(self.pairs)


def as_frames(frames, name: str = "sequence") -> np.ndarray:
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name}: expected a non-empty (n_frames, dim) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite frame values")
    return arr


def dtw(a, b, local_cost: str = "euclidean", band: int | None = None) -> tuple[AlignmentPath, float]:
    """Minimum-cost monotonic alignment with steps (1,0), (0,1), (1,1).

    ``band`` restricts cells to ``|i - j| <= band``. Backtracking ties prefer
    the diagonal, then (1,0), then (0,1).
    """
    a = as_frames(a, "a")
    b = as_frames(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dim mismatch: {a.shape[1]} vs {b.shape[1]}")
    if local_cost not in LOCAL_COSTS:
        raise ValueError(f"unknown local cost {local_cost!r} (expected one of {LOCAL_COSTS})")
    n, m = a.shape[0], b.shape[0]
    if band is not None and band < abs(n - m):
        raise ValueError(f"band {band} is narrower than the length difference {abs(n - m)}")

    cost = cdist(a, b, metric=local_cost)
    if band is not None:
        ii, jj = np.indices((n, m))
        cost[np.abs(ii - jj) > band] = np.inf

    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row, prev = acc[i], acc[i - 1]
        c = cost[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if row[j - 1] < best:
                best = row[j - 1]
            row[j] = c[j - 1] + best

    i, j = n, m
    path = [(n - 1, m - 1)]
    while (i, j) != (1, 1):
        diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
        if diag <= up and diag <= left:
            i, j = i - 1, j - 1
        elif up <= left:
            i -= 1
        else:
            j -= 1
        path.append((i - 1, j - 1))
    path.reverse()
    total = float(sum(cost[p] for p in path))
    return AlignmentPath(tuple(path)), total


def mcd(a, b, path: AlignmentPath, skip_c0: bool = True, const: float = MCD_CONST) -> float:
    """Mean per-frame mel-cepstral distortion (dB) along an alignment path."""
    a = as_frames(a, "a")
    b = as_frames(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dim mismatch: {a.shape[1]} vs {b.shape[1]}")
    path.validate(a.shape[0], b.shape[0])
    d0 = 1 if skip_c0 else 0
    idx = np.asarray(path.pairs)
    diff = a[idx[:, 0], d0:] - b[idx[:, 1], d0:]
    return float(const * np.mean(np.sqrt(np.sum(diff * diff, axis=1))))


def evaluate_mcd(pred, target, skip_c0: bool = True, band: int | None = None) -> float:
    """DTW-align ``pred`` to ``target`` (Euclidean, same coefficients as the MCD), then MCD."""
    pred = as_frames(pred, "pred")
    target = as_frames(target, "target")
    d0 = 1 if skip_c0 else 0
    if pred.shape[1] <= d0:
        raise ValueError("need at least one cepstral coefficient beyond c0")
    path, _ = dtw(pred[:, d0:], target[:, d0:], band=band)
    return mcd(pred, target, path, skip_c0=skip_c0)


def read_frames(path: str | Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{path}: empty file")
        expected = [f"c{k}" for k in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise ValueError(f"{path}:1: expected header {','.join(expected)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    return as_frames(rows, str(path)) if rows else as_frames(np.zeros((0, len(header))), str(path))


def write_frames(path: str | Path, frames) -> None:
    frames = as_frames(frames)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"c{k}" for k in range(frames.shape[1])])
        for row in frames:
            writer.writerow([repr(float(v)) for v in row])
