"""Acceptance suite: one test per headline criterion, each within its time budget.

Run ``pytest tests/test_acceptance.py`` to get a PASS/FAIL line per criterion
in the terminal summary.
"""

import time

import numpy as np
import pytest

from emostrength import predictor as P
from emostrength import ranker
from emostrength.cli import main
from emostrength.core_data import EmotionCategory, PairConstraintSet, build_constraints, read_strength_curves
from emostrength.evaluation import AlignmentPath, dtw, evaluate_mcd, mcd
from emostrength.fixtures import FixtureSpec, generate
from emostrength.strength import fit_normalization, normalize, resample_curve

from oracles import (
    brute_force_dtw,
    central_difference,
    rank_minimize_agd,
    rank_minimize_grid,
    rank_objective,
)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def random_rank_instance(rng):
    dim = int(rng.integers(1, 6))
    n = int(rng.integers(3, 8))
    X = rng.normal(size=(n, dim))
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    rng.shuffle(pairs)
    k = int(rng.integers(1, 11))
    n_ord = int(rng.integers(1, k + 1))
    cons = PairConstraintSet(tuple(map(tuple, pairs[:n_ord])), tuple(map(tuple, pairs[n_ord:k])))
    return X, cons, float(10 ** rng.uniform(-1, 1))


@pytest.mark.criterion("ranker closed form: 2C/(1+2C) and 2C/(1+4C) within 1e-6, < 1 s")
def test_ranker_closed_form():
    with Timer() as t:
        for C in (0.1, 1.0, 10.0):
            single = ranker.fit([[1.0], [0.0]], PairConstraintSet(((0, 1),), ()), ranker.RankerConfig(C=C))
            assert abs(single.w[0] - 2 * C / (1 + 2 * C)) <= 1e-6
            mixed = ranker.fit([[1.0], [0.0], [1.0], [0.0]], PairConstraintSet(((0, 1),), ((2, 3),)),
                               ranker.RankerConfig(C=C))
            assert abs(mixed.w[0] - 2 * C / (1 + 4 * C)) <= 1e-6
    assert t.elapsed < 1.0


@pytest.mark.criterion("ranker oracle: 50 instances within rel 1e-4, gradient to 1e-5, < 30 s")
def test_ranker_oracle():
    rng = np.random.default_rng(2024)
    with Timer() as t:
        for _ in range(50):
            X, cons, C = random_rank_instance(rng)
            model = ranker.fit(X, cons, ranker.RankerConfig(C=C))
            f_newton = rank_objective(model.w, X.tolist(), cons.ordered, cons.similar, C)
            if X.shape[1] <= 2:
                _, f_ref = rank_minimize_grid(X.tolist(), cons.ordered, cons.similar, C)
            else:
                w_ref = rank_minimize_agd(X, cons.ordered, cons.similar, C)
                f_ref = rank_objective(w_ref, X.tolist(), cons.ordered, cons.similar, C)
            assert abs(f_newton - f_ref) <= 1e-4 * abs(f_ref)

            w = rng.normal(size=X.shape[1])
            g = ranker.gradient(w, X, cons, C)
            fd = central_difference(lambda v: rank_objective(v, X.tolist(), cons.ordered, cons.similar, C), w, 1e-6)
            assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1.0)
    assert t.elapsed < 30.0


@pytest.mark.criterion("separable recovery: cosine >= 0.99, margins >= 1 - 1e-2 at C = 1e3, < 10 s")
def test_separable_recovery():
    with Timer() as t:
        train, _, truth, _ = generate(FixtureSpec(), seed=11)
        u = np.asarray(truth["direction"])
        cons = build_constraints(train, EmotionCategory.HAPPY, max_pairs=5000, seed=0)
        X = np.vstack([r.utterance_features for r in train])
        model = ranker.fit(X, cons, ranker.RankerConfig(C=1e3))
        cosine = model.w @ u / np.linalg.norm(model.w)
        margins = np.array([model.w @ (X[i] - X[j]) for i, j in cons.ordered])
    assert model.converged
    assert cosine >= 0.99
    assert margins.min() >= 1 - 1e-2
    assert t.elapsed < 10.0


@pytest.mark.criterion("strength pipeline: normalization hits 0 and 1, resample examples exact")
def test_strength_pipeline():
    rng = np.random.default_rng(5)
    raw = rng.normal(size=40).tolist()
    out = normalize(raw, fit_normalization(raw, "happy"))
    assert min(out) == 0.0 and max(out) == 1.0
    assert all(0.0 <= v <= 1.0 for v in out)
    assert resample_curve([0.0, 1.0, 0.0], 5) == [0.0, 0.5, 1.0, 0.5, 0.0]
    for m in range(1, 12):
        src = rng.uniform(size=m).tolist()
        assert resample_curve(src, m) == src


@pytest.mark.criterion("predictor: gradient check < 1e-4 on 20 instances, toy overfit L1 < 0.01 in < 60 s, clamped")
def test_predictor():
    rng = np.random.default_rng(6)
    checked = 0
    while checked < 20:
        D, H, B = (int(v) for v in rng.integers(1, 7, size=3))
        model = P.init_model(P.PredictorConfig(input_dim=D, hidden_dim=H), rng)
        X, y = rng.normal(size=(B, D)), rng.uniform(size=B)
        z = X @ model.W1.T + model.b1
        resid = np.maximum(z, 0) @ model.W2[0] + model.b2 - y
        if np.abs(z).min() < 1e-6 or np.abs(resid).min() < 1e-6:
            continue
        g = P.grad(model, list(zip(X, y)))
        for name, value in model.params().items():
            def loss(v, name=name):
                return np.mean(np.abs(P.predict_raw(model.replace_params(**{name: v}), X) - y))
            fd = central_difference(loss, value, 1e-5)
            err = np.linalg.norm(np.asarray(g[name]) - fd) / max(np.linalg.norm(fd), 1e-6)
            assert err < 1e-4, name
        checked += 1

    labels = np.random.default_rng(7).integers(0, 10, size=50)
    X = np.eye(10)[labels]
    y = np.linspace(0.05, 0.95, 10)[labels]
    with Timer() as t:
        toy = P.train_arrays(X, y, P.PredictorConfig(input_dim=10, hidden_dim=32, epochs=2000))
    assert np.mean(np.abs(P.predict_raw(toy, X) - y)) < 0.01
    assert t.elapsed < 60.0

    wild = toy.replace_params(W2=toy.W2 * 50, b2=toy.b2 - 20)
    curve = P.predict_curve(wild, np.vstack([X, -X, 3 * X]))
    assert all(0.0 <= s <= 1.0 for s in curve.strengths)


@pytest.mark.criterion("eval oracle: DTW exhaustive on 100 trials, MCD constant 6.14185 +- 1e-4, duplicated frame -> 0")
def test_eval_oracle():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n, m, d = (int(v) for v in rng.integers(1, 6, size=3))
        a, b = rng.normal(size=(n, d)), rng.normal(size=(m, d))
        best, _ = brute_force_dtw(a.tolist(), b.tolist())
        assert dtw(a, b)[1] == pytest.approx(best, rel=1e-12, abs=1e-12)
    assert abs(mcd([[0.0, 0.0]], [[0.0, 1.0]], AlignmentPath(((0, 0),))) - 6.14185) <= 1e-4
    x = rng.normal(size=(8, 13))
    assert evaluate_mcd(np.insert(x, 3, x[3], axis=0), x) == 0.0


def _pipeline(work):
    fx = work / "fixtures"
    steps = [
        ["--seed", "7", "gen-fixtures", "--out", fx],
        ["--seed", "7", "train-ranker", "--features", fx / "features.jsonl", "--alignments", fx / "alignments.csv",
         "--category", "happy", "--out", work / "ranker.json"],
        ["extract", "--model", work / "ranker.json", "--features", fx / "features.jsonl",
         "--alignments", fx / "alignments.csv", "--out", work / "train_strengths.csv"],
        ["extract", "--model", work / "ranker.json", "--features", fx / "heldout_features.jsonl",
         "--alignments", fx / "heldout_alignments.csv", "--out", work / "heldout_truth.csv"],
        ["transfer", "--model", work / "ranker.json", "--reference-features", fx / "heldout_features.jsonl",
         "--reference-alignments", fx / "heldout_alignments.csv", "--reference-id", "happy_heldout_000",
         "--target-phonemes", "a e i o u", "--out", work / "transfer.csv"],
        ["--seed", "7", "train-predictor", "--strengths", work / "train_strengths.csv", "--category", "happy",
         "--out", work / "predictor.json", "--loss-trace", work / "loss.csv"],
        ["predict", "--model", work / "predictor.json", "--alignments", fx / "heldout_alignments.csv",
         "--out", work / "heldout_pred.csv"],
        ["evaluate", "--pred", fx / "mcep_pred.csv", "--target", fx / "mcep_target.csv"],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv


@pytest.mark.criterion("end to end: deterministic across two runs, < 2 min, held-out L1 <= 0.1")
def test_end_to_end(tmp_path, capsys):
    with Timer() as t:
        for run in ("a", "b"):
            _pipeline(tmp_path / run)
    printed = capsys.readouterr().out
    assert t.elapsed < 120.0

    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b and len(files_a) == 14
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel

    truth = {c.utterance_id: c for c in read_strength_curves(tmp_path / "a" / "heldout_truth.csv", "happy")}
    pred = {c.utterance_id: c for c in read_strength_curves(tmp_path / "a" / "heldout_pred.csv", "happy")}
    assert truth.keys() == pred.keys() and len(truth) == FixtureSpec.n_heldout
    errors = np.concatenate([np.subtract(pred[k].strengths, truth[k].strengths) for k in truth])
    assert np.mean(np.abs(errors)) <= 0.1
    mcd_lines = [line for line in printed.splitlines() if line.replace(".", "", 1).isdigit()]
    assert len(mcd_lines) == 2 and mcd_lines[0] == mcd_lines[1] and len(mcd_lines[0].split(".")[1]) == 3
