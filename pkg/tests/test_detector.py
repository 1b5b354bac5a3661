import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shm_edge.detector import (
    DetectorProfile,
    IntervalScore,
    ScorePoint,
    Verdict,
    auc_trapezoid,
    average_scores,
    calibrate_threshold,
    classify,
    evaluate,
    roc_curve,
    score_windows,
)
from shm_edge.errors import DimensionError, InsufficientDataError, ParameterError
from shm_edge.reconstruct import PcaModel, fit_pca_batch
from shm_edge.signal import Window


def mann_whitney(scores, labels):
    """Exhaustive pair count: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def _windows(X, dur=5.0):
    return [Window(r, i * X.shape[1], dur) for i, r in enumerate(X)]


def _points(values, step=5.0):
    return [ScorePoint(i * step, float(v), True) for i, v in enumerate(values)]


# -- scoring -------------------------------------------------------------------


def test_full_basis_scores_zero(rng):
    X = rng.normal(size=(60, 20))
    m = fit_pca_batch(X, 20)
    sc = score_windows(m, _windows(X, 0.2))
    assert max(s.mse for s in sc) <= 1e-10


class _Shift:
    """Reconstructor returning x + c."""

    M = 10

    def __init__(self, c):
        self.c = c

    def reconstruct(self, X):
        return X + self.c


def test_constant_offset_gives_c_squared(rng):
    sc = score_windows(_Shift(0.3), _windows(rng.normal(size=(5, 10)), 0.1))
    assert all(s.mse == pytest.approx(0.09) for s in sc)


def test_batch_equals_scalar_loop(rng):
    X = rng.normal(size=(1000, 25))
    m = fit_pca_batch(X[:500], 4)
    sc = score_windows(m, _windows(X, 0.25))
    for s, x in zip(sc, X):
        r = x - (m.mean + m.components @ (m.components.T @ (x - m.mean)))
        assert s.mse == pytest.approx(sum(v * v for v in r) / 25, rel=1e-10)


def test_dropped_windows_have_no_mse(rng):
    X = rng.normal(size=(10, 20)) * np.r_[np.zeros(3), np.ones(7)][:, None]
    m = fit_pca_batch(rng.normal(size=(30, 20)), 3)
    sc = score_windows(m, _windows(X), energy=1e-3)
    assert [s.kept for s in sc] == [False] * 3 + [True] * 7
    assert all(s.mse is None for s in sc[:3])


def test_score_dimension_mismatch(rng):
    m = fit_pca_batch(rng.normal(size=(30, 20)), 3)
    with pytest.raises(DimensionError):
        score_windows(m, _windows(rng.normal(size=(3, 21))))


# -- threshold -----------------------------------------------------------------


def test_threshold_degenerate_spread():
    p = calibrate_threshold(_points([0.1] * 40))
    assert (p.mu, p.sigma) == pytest.approx((0.1, 0.0))
    assert p.mse_threshold == pytest.approx(0.1)


def test_threshold_uses_sample_sigma():
    p = calibrate_threshold(_points([0.1, 0.2, 0.3]), min_scores=3)
    assert p.mu == pytest.approx(0.2)
    assert p.sigma == pytest.approx(0.1)
    assert p.mse_threshold == pytest.approx(0.5)
    assert p.mse_threshold == p.mu + 3 * p.sigma


def test_threshold_needs_thirty_scores():
    with pytest.raises(InsufficientDataError):
        calibrate_threshold(_points(np.linspace(0, 1, 29)))
    dropped = _points(np.linspace(0, 1, 29)) + [ScorePoint(1e9, None, False)] * 10
    with pytest.raises(InsufficientDataError):
        calibrate_threshold(dropped)


def test_threshold_provenance_tracks_data():
    a = calibrate_threshold(_points(np.linspace(0, 1, 40)))
    b = calibrate_threshold(_points(np.linspace(0, 1, 40)))
    c = calibrate_threshold(_points(np.linspace(0, 1.1, 40)))
    assert a.provenance == b.provenance != c.provenance


def test_gaussian_exceedance():
    x = np.random.default_rng(2024).normal(size=10**6)
    p = calibrate_threshold(x)
    rate = np.mean(x > p.mse_threshold)
    assert 0.0005 <= rate <= 0.003


# -- averaging -----------------------------------------------------------------


def test_constant_score_intervals():
    iv = average_scores(_points([0.25] * 720 * 3), 60)
    assert len(iv) == 3
    assert all(i.mean_mse == pytest.approx(0.25) and i.window_count == 720 for i in iv)


def test_interval_window_budget():
    iv = average_scores(_points(np.ones(2000)), 60)
    assert max(i.window_count for i in iv) <= 3600 / 5


def test_fully_filtered_interval_flagged():
    pts = _points([1.0] * 720) + [ScorePoint(3600 + 5 * i, None, False) for i in range(720)] + \
          [ScorePoint(7200.0, 2.0, True)]
    iv = average_scores(pts, 60)
    assert iv[1].no_verdict and math.isnan(iv[1].mean_mse) and iv[1].total_windows == 720
    assert classify(iv, 1.5) == [Verdict.NORMAL, Verdict.NO_VERDICT, Verdict.ANOMALY]


@given(st.lists(st.floats(0, 10), min_size=1, max_size=300), st.sampled_from([1, 5, 15, 60]))
def test_interval_means_match_loop(values, horizon):
    pts = _points(values, 30.0)
    iv = average_scores(pts, horizon)
    per = horizon * 60 // 30
    for i, interval in enumerate(iv):
        chunk = values[i * per:(i + 1) * per]
        assert interval.mean_mse == pytest.approx(sum(chunk) / len(chunk), rel=1e-12, abs=1e-12)


# -- classification ------------------------------------------------------------


def _iv(mean, count=10):
    return IntervalScore(0, 0.0, 3600.0, mean, count, count)


def test_classify_examples():
    prof = DetectorProfile(0.4, 0.25, 0.05)
    assert classify([_iv(0.31), _iv(0.70)], prof) == [Verdict.NORMAL, Verdict.ANOMALY]
    assert classify([_iv(0.4)], prof) == [Verdict.NORMAL]
    assert classify([_iv(math.nan, 0)], prof) == [Verdict.NO_VERDICT]


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=30), st.integers(0, 1000))
def test_verdicts_invariant_under_monotone_transform(means, th):
    # integer scores keep the cubic transform exact in floating point
    ivs = [_iv(float(m)) for m in means]
    f = lambda v: float(v) ** 3 + 5.0 * v - 2.0
    assert classify(ivs, th) == classify([_iv(f(m)) for m in means], f(th))


def test_horizon_shorter_than_window_rejected():
    with pytest.raises(ParameterError):
        DetectorProfile(1.0, 0.5, 0.1, output_dim_minutes=0.01, input_dim_s=5.0)


# -- evaluation ----------------------------------------------------------------


def test_perfect_and_uninformative():
    labels = [False] * 5 + [True] * 5
    scores = list(range(10))
    verdicts = [Verdict.ANOMALY if y else Verdict.NORMAL for y in labels]
    r = evaluate(verdicts, labels, scores)
    assert (r.accuracy, r.sensitivity, r.specificity, r.auc) == (1.0, 1.0, 1.0, 1.0)
    r = evaluate(verdicts, labels, [0.5] * 10)
    assert r.auc == 0.5


def test_hand_made_auc_matches_pairs():
    scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.9, 0.05, 0.6, 0.4, 0.7]
    labels = [0, 1, 0, 1, 0, 1, 0, 0, 1, 1]
    r = evaluate([Verdict.NORMAL] * 10, labels, scores)
    assert abs(r.auc - mann_whitney(scores, labels)) <= 1e-12


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auc_equals_mann_whitney(pairs):
    scores = [s / 3 for s, _ in pairs]
    labels = [y for _, y in pairs]
    if all(labels) or not any(labels):
        return
    assert abs(auc_trapezoid(roc_curve(scores, labels)) - mann_whitney(scores, labels)) <= 1e-12


@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=2, max_size=40))
def test_roc_monotone(pairs):
    scores = [s for s, _ in pairs]
    labels = [y for _, y in pairs]
    pts = roc_curve(scores, labels)
    if not pts:
        return
    fpr = [p[0] for p in pts]
    tpr = [p[1] for p in pts]
    # lowering the threshold: sensitivity up, specificity (1 - fpr) down
    assert all(b >= a for a, b in zip(tpr, tpr[1:]))
    assert all(b >= a for a, b in zip(fpr, fpr[1:]))
    assert pts[0] == (0.0, 0.0) and pts[-1] == (1.0, 1.0)


def test_undefined_rates_flagged():
    r = evaluate([Verdict.NORMAL, Verdict.NORMAL], [False, False])
    assert math.isnan(r.sensitivity) and "sensitivity" in r.undefined
    assert r.specificity == 1.0
    with pytest.raises(ParameterError):
        evaluate([Verdict.NORMAL], [False, True])


def test_no_verdict_excluded():
    r = evaluate([Verdict.NO_VERDICT, Verdict.ANOMALY, Verdict.NORMAL], [True, True, False], [math.nan, 2.0, 1.0])
    assert (r.tp, r.tn, r.fp, r.fn, r.no_verdict) == (1, 1, 0, 0, 1)
    assert r.auc == 1.0
    assert r.roc_csv().startswith("fpr,tpr\n")
