import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emostrength.core_data import (
    DatasetError,
    EmotionCategory,
    NormalizationStats,
    Phoneme,
    PhonemeAlignment,
    UtteranceRecord,
)
from emostrength.ranker import RankerConfig, RankingModel
from emostrength.strength import (
    extract_raw_strengths,
    fit_normalization,
    normalize,
    resample_curve,
    transfer_strengths,
    validate_control,
)

HAPPY = EmotionCategory.HAPPY
unit = st.floats(0.0, 1.0, allow_nan=False)
finite = st.floats(-1e6, 1e6, allow_nan=False)


def model(w):
    return RankingModel(np.asarray(w, dtype=float), HAPPY, RankerConfig(), 0.0, 0.0)


def record(frags, labels=None, category=HAPPY, uid="ref"):
    frags = np.asarray(frags, dtype=float).reshape(len(frags), -1) if len(frags) else np.zeros((0, 2))
    labels = labels or [f"p{k}" for k in range(len(frags))]
    al = PhonemeAlignment(uid, tuple(Phoneme(p, 0.1 * k, 0.1 * k + 0.1) for k, p in enumerate(labels)))
    dim = frags.shape[1]
    return UtteranceRecord(uid, category, np.zeros(dim), frags, al)


def stats(lo, hi):
    return NormalizationStats(HAPPY, lo, hi)


class TestExtract:
    def test_dot_products(self):
        assert extract_raw_strengths(model([1.0, 0.0]), record([[2, 9], [3, 9]])) == [2.0, 3.0]

    def test_zero_weights(self):
        assert extract_raw_strengths(model([0.0, 0.0]), record([[2, 9], [3, 9], [1, 1]])) == [0.0, 0.0, 0.0]

    def test_empty(self):
        assert extract_raw_strengths(model([1.0, 0.0]), record([])) == []

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            extract_raw_strengths(model([1.0, 0.0, 0.0]), record([[1, 2]]))


class TestNormalization:
    @pytest.mark.parametrize("raw, lo, hi", [([2, 5, 8], 2, 8), ([4, 4, 4], 4, 4), ([-1, 3], -1, 3)])
    def test_fit(self, raw, lo, hi):
        s = fit_normalization(raw, "happy")
        assert (s.min_raw, s.max_raw) == (lo, hi)
        assert s.category is HAPPY

    def test_fit_empty(self):
        with pytest.raises(ValueError):
            fit_normalization([], "happy")

    def test_min_max(self):
        assert normalize([2, 5, 8], stats(2, 8)) == [0.0, 0.5, 1.0]

    def test_clamp(self):
        assert normalize([10], stats(2, 8)) == [1.0]
        assert normalize([-10], stats(2, 8)) == [0.0]

    def test_degenerate(self):
        assert normalize([4], stats(4, 4)) == [0.5]

    def test_invalid_stats(self):
        with pytest.raises(ValueError):
            stats(3, 1)

    @settings(max_examples=200, deadline=None)
    @given(raw=st.lists(finite, min_size=1, max_size=30), extra=st.lists(finite, max_size=10))
    def test_bounded_and_hits_endpoints(self, raw, extra):
        s = fit_normalization(raw, "happy")
        out = normalize(raw + extra, s)
        assert all(0.0 <= v <= 1.0 for v in out)
        if s.max_raw > s.min_raw:
            assert min(out[: len(raw)]) == 0.0 and max(out[: len(raw)]) == 1.0

    @settings(max_examples=200, deadline=None)
    @given(vals=st.lists(unit, min_size=1, max_size=30))
    def test_idempotent_unit_stats(self, vals):
        once = normalize(vals, stats(0.0, 1.0))
        assert normalize(once, stats(0.0, 1.0)) == once
        assert once == vals

    @settings(max_examples=200, deadline=None)
    @given(a=finite, b=finite, lo=finite, span=st.floats(1e-3, 1e6))
    def test_monotone(self, a, b, lo, span):
        na, nb = normalize([a, b], stats(lo, lo + span))
        if a <= b:
            assert na <= nb
        else:
            assert na >= nb


class TestResample:
    def test_hand_interpolation(self):
        assert resample_curve([0.0, 1.0, 0.0], 5) == [0.0, 0.5, 1.0, 0.5, 0.0]

    @settings(max_examples=100, deadline=None)
    @given(src=st.lists(unit, min_size=1, max_size=20))
    def test_identity(self, src):
        assert resample_curve(src, len(src)) == src

    def test_single_knot(self):
        assert resample_curve([0.7], 3) == [0.7, 0.7, 0.7]

    def test_single_output_is_midpoint(self):
        assert resample_curve([0.2, 0.6], 1) == [pytest.approx(0.4)]

    def test_two_onto_three(self):
        assert resample_curve([0.2, 0.8], 3) == [0.2, pytest.approx(0.5), 0.8]

    @pytest.mark.parametrize("src, n", [([], 3), ([0.5], 0)])
    def test_errors(self, src, n):
        with pytest.raises(ValueError):
            resample_curve(src, n)

    @settings(max_examples=200, deadline=None)
    @given(src=st.lists(unit, min_size=2, max_size=15), n=st.integers(2, 40))
    def test_matches_np_interp(self, src, n):
        knots = np.linspace(0.0, 1.0, len(src))
        expected = np.interp(np.linspace(0.0, 1.0, n), knots, src)
        np.testing.assert_allclose(resample_curve(src, n), expected, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(src=st.lists(unit, min_size=1, max_size=15), n=st.integers(1, 40))
    def test_bounded(self, src, n):
        out = resample_curve(src, n)
        assert len(out) == n
        assert all(min(src) <= v <= max(src) for v in out)

    @settings(max_examples=200, deadline=None)
    @given(src=st.lists(unit, min_size=1, max_size=15), n=st.integers(1, 40))
    def test_monotone_preserved(self, src, n):
        src = sorted(src)
        out = resample_curve(src, n)
        assert all(a <= b for a, b in zip(out, out[1:]))

    @settings(max_examples=200, deadline=None)
    @given(src=st.lists(unit, min_size=2, max_size=10), factor=st.integers(1, 6))
    def test_round_trip_aligned_knots(self, src, factor):
        n = (len(src) - 1) * factor + 1
        back = resample_curve(resample_curve(src, n), len(src))
        np.testing.assert_allclose(back, src, atol=1e-12, rtol=0)


class TestTransfer:
    def test_composition(self):
        curve = transfer_strengths(model([1.0]), stats(2, 8), record([[2], [8]]), ["a", "b", "c"])
        assert curve.strengths == (0.0, 0.5, 1.0)
        assert curve.phoneme_labels == ("a", "b", "c")
        assert curve.category is HAPPY

    def test_equal_length_is_normalized_reference(self):
        ref = record([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5], [4.0, 4.0]])
        m = model([0.7, -0.2])
        st_ = stats(-1.0, 3.0)
        curve = transfer_strengths(m, st_, ref, ["w", "x", "y", "z"])
        assert list(curve.strengths) == normalize(extract_raw_strengths(m, ref), st_)

    def test_zero_model(self):
        curve = transfer_strengths(model([0.0]), stats(-1, 1), record([[3], [4]]), ["a", "b", "c", "d"])
        assert curve.strengths == (0.5, 0.5, 0.5, 0.5)

    def test_two_onto_three_is_midpoint(self):
        ref = record([[0.9], [0.3]])
        curve = transfer_strengths(model([1.0]), stats(0, 1), ref, ["a", "b", "c"])
        s1, s2 = 0.9, 0.3
        assert curve.strengths == pytest.approx((s1, (s1 + s2) / 2, s2))

    def test_empty_targets(self):
        with pytest.raises(ValueError):
            transfer_strengths(model([1.0]), stats(0, 1), record([[1]]), [])


class TestControl:
    def test_valid(self):
        curve = validate_control([0, 1, 0.5], 3)
        assert curve.strengths == (0.0, 1.0, 0.5)
        assert len(curve.phoneme_labels) == 3

    def test_out_of_range(self):
        with pytest.raises(DatasetError, match="strength out of range at index 0"):
            validate_control([1.2], 1)

    def test_length_mismatch(self):
        with pytest.raises(DatasetError, match="length mismatch"):
            validate_control([0.5, 0.5], 3)

    def test_nan_rejected(self):
        with pytest.raises(DatasetError, match="index 1"):
            validate_control([0.5, float("nan")], 2)

    @settings(max_examples=100, deadline=None)
    @given(vals=st.lists(st.floats(-2, 3, allow_nan=False), min_size=1, max_size=10))
    def test_accepts_iff_in_unit_interval(self, vals):
        ok = all(0.0 <= v <= 1.0 for v in vals)
        if ok:
            assert validate_control(vals, len(vals)).strengths == tuple(vals)
        else:
            with pytest.raises(DatasetError):
                validate_control(vals, len(vals))
