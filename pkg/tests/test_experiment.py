import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegconn.connectivity import build_ordering
from eegconn.eegio import EegRecording
from eegconn.experiment import (accuracy, binarize_valence, confusion_matrix,
                                extract_corpus, extract_features, make_folds, run_cv, segment,
                                segment_starts, shuffle_trial_labels, standardize, trial_id,
                                window_samples)
from eegconn.ftns import FeatureSet
from eegconn.montage import DEAP_CHANNELS
from eegconn.nn import TrainConfig, cnn2
from oracles import segment_count_loop


def _rec(seconds=10, valence=7.0, video=1, seed=0):
    n = int(seconds * 128)
    x = np.random.default_rng(seed).normal(size=(32, n))
    return EegRecording(DEAP_CHANNELS, x, subject_id=2, video_id=video, valence_score=valence)


def test_115_segments_per_minute():
    win, hop = window_samples(128, 3.0, 0.5)
    assert (win, hop) == (384, 64)
    assert len(segment_starts(7680, win, hop)) == 115


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 400), st.integers(1, 50), st.integers(0, 3000))
def test_segment_count_formula(win, hop, extra):
    n = win + extra
    starts = segment_starts(n, win, hop)
    assert len(starts) == segment_count_loop(n, win, hop) == (n - win) // hop + 1
    assert starts[-1] + win <= n


def test_segments_are_ordered_views():
    rec = _rec(5)
    segs = segment(rec)
    assert [s.window for s in segs] == list(range(len(segs)))
    assert all(s.samples.base is not None for s in segs)
    assert np.array_equal(segs[1].samples, rec.samples[:, 64:448])
    assert segs[0].trial == (2, 1) and segs[0].label == 1


def test_short_recording_rejected():
    with pytest.raises(ValueError):
        segment_starts(383, 384, 64)


@pytest.mark.parametrize("score, label", [(1, 0), (5.0, 0), (5.01, 1), (9, 1)])
def test_binarize_valence(score, label):
    assert binarize_valence(score) == label


@pytest.mark.parametrize("score", [0.99, 9.01, float("nan")])
def test_binarize_out_of_range(score):
    with pytest.raises(ValueError):
        binarize_valence(score)


def test_accuracy_examples():
    assert accuracy([1, 0, 1, 0], [1, 0, 1, 0]) == 1.0
    assert accuracy([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
    assert accuracy([0, 1], [1, 0]) == 0.0
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([1], [1, 0])


def test_majority_predictor_accuracy():
    labels = np.r_[np.ones(553), np.zeros(447)].astype(int)
    assert accuracy(np.ones(1000, int), labels) == 0.553


def test_trial_id():
    assert trial_id(3, 17) == 3017


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10**6), min_size=5, max_size=200, unique=True),
       st.integers(0, 2**32), st.integers(2, 5))
def test_fold_plan_is_partition(units, seed, k):
    plan = make_folds(units, seed, k)
    flat = sorted(u for c in plan.clusters for u in c)
    assert flat == sorted(units)
    sizes = [len(c) for c in plan.clusters]
    assert max(sizes) - min(sizes) <= 1
    assert make_folds(units, seed, k) == plan


def test_too_few_trials_for_folds():
    with pytest.raises(ValueError):
        make_folds([1, 2, 3], 0, 5)


def test_standardize_uses_train_statistics():
    rng = np.random.default_rng(0)
    tr = rng.normal(3, 2, size=(50, 4, 4, 2))
    te = rng.normal(0, 1, size=(10, 4, 4, 2))
    a, b = standardize(tr, te)
    assert np.allclose(a.mean(axis=(0, 1, 2)), 0, atol=1e-12)
    assert np.allclose(a.std(axis=(0, 1, 2)), 1)
    mean = tr.mean(axis=(0, 1, 2))
    std = tr.std(axis=(0, 1, 2))
    assert np.allclose(b, (te - mean) / std)
    c, _ = standardize(np.ones((3, 2, 2, 1)), np.ones((1, 2, 2, 1)))
    assert np.all(c == 0)


def test_confusion_matrix():
    assert confusion_matrix([0, 1, 1, 0], [0, 1, 0, 1]) == [[1, 1], [1, 1]]
    assert confusion_matrix([1, 1], [1, 1]) == [[0, 0], [0, 2]]


# ---------------------------------------------------------------------------
# feature extraction

def test_psd_features_shape_and_provenance():
    fs = extract_features(_rec(5, video=4), "psd")
    assert fs.values.shape == (5, 32, 32, 10) and fs.values.dtype == np.float32
    assert np.all(fs.trials == 2004) and fs.windows.tolist() == list(range(5))
    assert np.all(fs.labels == 1) and np.all(fs.ordering == 0)


def test_connectivity_features_pass_invariants():
    from eegconn.connectivity import ConnectivityMatrix
    from eegconn import dsp
    order = build_ordering("dist2")
    fs = extract_features(_rec(8), "plv", order, bands=["theta", "alpha"])
    assert fs.values.shape == (11, 32, 32, 2)
    for i in (0, 5, 10):
        for b, band in enumerate(["theta", "alpha"]):
            ConnectivityMatrix("plv", dsp.get_band(band), order,
                               fs.values[i, :, :, b].astype(float)).check()


def test_connectivity_needs_ordering_and_32_channels():
    with pytest.raises(ValueError):
        extract_features(_rec(8), "pli")
    small = EegRecording(("a", "b"), np.zeros((2, 1000)))
    with pytest.raises(ValueError):
        extract_features(small, "psd")
    with pytest.raises(ValueError):
        extract_features(_rec(8), "coherence")


def test_feature_ordering_equivariance():
    rec = _rec(8)
    d2 = build_ordering("dist2")
    rnd = build_ordering("random", seed=5)
    a = extract_features(rec, "pcc", d2, bands=["beta"]).values[3, :, :, 0]
    b = extract_features(rec, "pcc", rnd, bands=["beta"]).values[3, :, :, 0]
    pos = [d2.permutation.index(n) for n in rnd.permutation]
    assert np.array_equal(b, a[np.ix_(pos, pos)])


def test_shuffle_keeps_trial_labels_constant():
    recs = [_rec(4, valence=2.0 + 6 * (i % 2), video=i, seed=i) for i in range(6)]
    fs = extract_corpus(recs, "psd")
    sh = shuffle_trial_labels(fs, 3)
    assert sorted(sh.labels.tolist()) == sorted(fs.labels.tolist())
    for t in np.unique(fs.trials):
        assert len(set(sh.labels[fs.trials == t].tolist())) == 1


# ---------------------------------------------------------------------------
# cross-validation

def _toy_features(n_trials=10, per_trial=6, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_trials) % 2, per_trial)
    x = rng.normal(size=(len(labels), 8, 8, 2)) + (labels * 2 - 1)[:, None, None, None]
    n = len(labels)
    return FeatureSet(x, labels, np.repeat(np.arange(n_trials) + 1000, per_trial),
                      np.tile(np.arange(per_trial), n_trials), np.zeros(n), np.zeros(n))


def test_cv_trial_folds_are_disjoint():
    fs = _toy_features()
    cfg = TrainConfig(batch_size=16, epochs=3, learning_rate=1e-2, dtype="float64")
    rep = run_cv(fs, cnn2((8, 8, 2), 4, 8), cfg, fold_seed=1)
    assert len(rep.folds) == 5
    seen = [u for f in rep.folds for u in f.test_units]
    assert sorted(seen) == list(range(1000, 1010))
    assert sum(f.n_test for f in rep.folds) == len(fs)
    assert rep.mean_accuracy > 0.9
    assert np.sum(rep.confusion) == len(fs)
    d = rep.to_dict()
    assert d["fold_accuracies"] == [f.accuracy for f in rep.folds]
    assert d["granularity"] == "trial"


def test_cv_deterministic():
    fs = _toy_features(seed=1)
    cfg = TrainConfig(batch_size=16, epochs=2, dtype="float64")
    a = run_cv(fs, cnn2((8, 8, 2), 4, 8), cfg, keep_models=True)
    b = run_cv(fs, cnn2((8, 8, 2), 4, 8), cfg, keep_models=True)
    assert a.to_dict() == b.to_dict()
    from eegconn.nn import checkpoint_bytes
    assert [checkpoint_bytes(m) for m in a.models] == [checkpoint_bytes(m) for m in b.models]


def test_cv_segment_granularity_mixes_trials():
    fs = _toy_features()
    rep = run_cv(fs, cnn2((8, 8, 2), 4, 8), TrainConfig(batch_size=16, epochs=1), granularity="segment")
    assert sorted(u for f in rep.folds for u in f.test_units) == list(range(len(fs)))
    with pytest.raises(ValueError):
        run_cv(fs, cnn2((8, 8, 2), 4, 8), granularity="subject")
