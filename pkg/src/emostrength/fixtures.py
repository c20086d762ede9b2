"""Synthetic datasets with a known emotion direction, for tests and demos.

Neutral features are noise confined to the subspace orthogonal to a unit
direction ``u``. Emotional utterances add ``delta * u``; an emotional
phoneme fragment adds ``delta * (0.5 + s_p) * u`` where ``s_p`` is a fixed
per-phoneme intrinsic strength. A ranker recovering ``u`` therefore yields
fragment strengths that are an affine function of phoneme identity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core_data import EmotionCategory, Phoneme, PhonemeAlignment, UtteranceRecord, save_dataset
from .evaluation import write_frames

PHONEME_INVENTORY = ("a", "e", "i", "o", "u", "m", "n", "s", "t", "k")


@dataclass(frozen=True)
class FixtureSpec:
    category: EmotionCategory = EmotionCategory.HAPPY
    n_neutral: int = 16
    n_emotional: int = 16
    n_heldout: int = 6
    dim: int = 12
    delta: float = 2.0
    noise: float = 0.5
    min_phonemes: int = 5
    max_phonemes: int = 12
    n_frames: int = 40
    n_ceps: int = 13


def _orthogonal_noise(rng, u, scale, n):
    z = rng.normal(scale=scale, size=(n, u.shape[0]))
    return z - np.outer(z @ u, u)


def _alignment(uid, labels, rng):
    durations = rng.uniform(0.05, 0.2, size=len(labels))
    ends = np.round(np.cumsum(durations), 4)
    starts = np.concatenate([[0.0], ends[:-1]])
    return PhonemeAlignment(uid, tuple(Phoneme(p, float(s), float(e)) for p, s, e in zip(labels, starts, ends)))


def _record(uid, category, emotional, rng, u, phoneme_strength, spec):
    n = int(rng.integers(spec.min_phonemes, spec.max_phonemes + 1))
    labels = [PHONEME_INVENTORY[k] for k in rng.integers(0, len(PHONEME_INVENTORY), size=n)]
    frags = _orthogonal_noise(rng, u, spec.noise, n)
    utt = _orthogonal_noise(rng, u, spec.noise, 1)[0]
    if emotional:
        frags = frags + spec.delta * np.outer([0.5 + phoneme_strength[p] for p in labels], u)
        utt = utt + spec.delta * u
    frags.setflags(write=False)
    utt.setflags(write=False)
    return UtteranceRecord(uid, category, utt, frags, _alignment(uid, labels, rng))


def generate(spec: FixtureSpec, seed: int):
    """Return ``(train_records, heldout_records, truth, (pred_frames, target_frames))``."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=spec.dim)
    u /= np.linalg.norm(u)
    strengths = dict(zip(PHONEME_INVENTORY, rng.uniform(0.0, 1.0, size=len(PHONEME_INVENTORY)).tolist()))
    cat = spec.category
    train = [_record(f"neu_{k:03d}", EmotionCategory.NEUTRAL, False, rng, u, strengths, spec) for k in range(spec.n_neutral)]
    train += [_record(f"{cat.value}_{k:03d}", cat, True, rng, u, strengths, spec) for k in range(spec.n_emotional)]
    heldout = [_record(f"{cat.value}_heldout_{k:03d}", cat, True, rng, u, strengths, spec) for k in range(spec.n_heldout)]

    # target cepstra: smooth random walk; prediction: one duplicated frame plus small noise
    target = np.cumsum(rng.normal(scale=0.3, size=(spec.n_frames, spec.n_ceps)), axis=0)
    dup = int(rng.integers(0, spec.n_frames))
    pred = np.insert(target, dup, target[dup], axis=0) + rng.normal(scale=0.05, size=(spec.n_frames + 1, spec.n_ceps))

    truth = {
        "category": cat.value,
        "direction": u.tolist(),
        "phoneme_strengths": strengths,
        "delta": spec.delta,
        "seed": seed,
    }
    return train, heldout, truth, (pred, target)


def write_fixtures(out_dir: str | Path, spec: FixtureSpec = FixtureSpec(), seed: int = 0) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, heldout, truth, (pred, target) = generate(spec, seed)
    paths = {
        "features": out / "features.jsonl",
        "alignments": out / "alignments.csv",
        "heldout_features": out / "heldout_features.jsonl",
        "heldout_alignments": out / "heldout_alignments.csv",
        "truth": out / "truth.json",
        "mcep_pred": out / "mcep_pred.csv",
        "mcep_target": out / "mcep_target.csv",
    }
    save_dataset(train, paths["features"], paths["alignments"])
    save_dataset(heldout, paths["heldout_features"], paths["heldout_alignments"])
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2)
        fh.write("\n")
    write_frames(paths["mcep_pred"], pred)
    write_frames(paths["mcep_target"], target)
    return paths
