"""Segmentation, labels, fold plans, feature extraction and cross-validation."""
from __future__ import annotations

import dataclasses
import logging
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import dsp
from .connectivity import ElectrodeOrdering, pairwise
from .eegio import EegRecording
from .ftns import FEATURE_CODES, FeatureSet, ordering_code
from .montage import ElectrodeLayout
from .nn.model import ModelSpec
from .nn.train import TrainConfig, train
from .topomap import psd_tensor

log = logging.getLogger(__name__)

WINDOW_S = 3.0
HOP_S = 0.5
N_FOLDS = 5
LOW, HIGH = 0, 1


class EmptyFoldError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Segments and labels

def window_samples(rate_hz: float, win_s: float = WINDOW_S, hop_s: float = HOP_S) -> Tuple[int, int]:
    win = int(round(win_s * rate_hz))
    hop = int(round(hop_s * rate_hz))
    if win < 1 or hop < 1:
        raise ValueError(f"window ({win}) and hop ({hop}) must be at least one sample")
    return win, hop


def segment_starts(n: int, win: int, hop: int) -> np.ndarray:
    if n < win:
        raise ValueError(f"recording of {n} samples is shorter than one {win}-sample window")
    return np.arange((n - win) // hop + 1) * hop


def trial_id(subject_id: int, video_id: int) -> int:
    """Integer trial key used in feature files: ``subject * 1000 + video``."""
    return int(subject_id) * 1000 + int(video_id)


def binarize_valence(score: float) -> int:
    """1..5 is low valence (0); above 5 is high (1)."""
    score = float(score)
    if not 1.0 <= score <= 9.0:
        raise ValueError(f"valence score {score} outside [1, 9]")
    return LOW if score <= 5.0 else HIGH


@dataclass(frozen=True, eq=False)
class Segment:
    trial: Tuple[int, int]  # (subject, video)
    window: int
    start: int
    samples: np.ndarray = field(repr=False)
    label: int


def segment(recording: EegRecording, win_s: float = WINDOW_S, hop_s: float = HOP_S) -> List[Segment]:
    """Overlapping windows of a recording in temporal order (views, not copies)."""
    win, hop = window_samples(recording.sample_rate_hz, win_s, hop_s)
    label = binarize_valence(recording.valence_score)
    key = (recording.subject_id, recording.video_id)
    return [Segment(key, i, int(s), recording.samples[:, s:s + win], label)
            for i, s in enumerate(segment_starts(recording.n_samples, win, hop))]


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    if p.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(p == y))


# ---------------------------------------------------------------------------
# Feature extraction

def extract_features(recording: EegRecording, feature: str,
                     ordering: Optional[ElectrodeOrdering] = None, *,
                     label: Optional[int] = None, trial: Optional[int] = None,
                     win_s: float = WINDOW_S, hop_s: float = HOP_S,
                     layout: Optional[ElectrodeLayout] = None,
                     bands: Sequence = dsp.BANDS) -> FeatureSet:
    """One (32, 32, n_bands) tensor per segment of ``recording``.

    PSD tensors come from each raw segment.  For connectivity every band is
    filtered (and, for PLV/PLI, phase-extracted) over the whole recording and
    then cut into segments, which keeps filter and Hilbert edge effects out of
    the interior windows.  Matrices are computed in channel order and permuted
    into ``ordering``.  ``bands`` selects and orders the tensor channels.
    """
    if feature not in FEATURE_CODES:
        raise ValueError(f"unknown feature {feature!r}")
    recording.require_pipeline_ready()
    rate = recording.sample_rate_hz
    win, hop = window_samples(rate, win_s, hop_s)
    starts = segment_starts(recording.n_samples, win, hop)
    label = binarize_valence(recording.valence_score) if label is None else int(label)
    trial = trial_id(recording.subject_id, recording.video_id) if trial is None else int(trial)
    x = np.asarray(recording.samples, dtype=float)
    names = recording.channel_names
    bands = [dsp.get_band(b) for b in bands]
    if not bands:
        raise ValueError("no bands selected")
    out = np.empty((len(starts), 32, 32, len(bands)), dtype=np.float32)

    if feature == "psd":
        pick = [dsp.BANDS.index(b) for b in bands]
        for i, s in enumerate(starts):
            out[i] = psd_tensor(x[:, s:s + win], rate, layout, names)[:, :, pick]
        order_label = "none"
    else:
        if ordering is None:
            raise ValueError(f"{feature} features need an electrode ordering")
        idx = ordering.indices(names)
        grid = np.ix_(idx, idx)
        for b, band in enumerate(bands):
            data = dsp.bandpass(x, rate, band)
            if feature != "pcc":
                data = dsp.instantaneous_phase(data)
            for i, s in enumerate(starts):
                out[i, :, :, b] = pairwise(feature, data[:, s:s + win])[grid]
        order_label = ordering.label
    n = len(starts)
    return FeatureSet(out, np.full(n, label), np.full(n, trial), np.arange(n),
                      np.full(n, FEATURE_CODES[feature]),
                      np.full(n, ordering_code(order_label)))


def extract_corpus(recordings: Sequence[EegRecording], feature: str,
                   ordering: Optional[ElectrodeOrdering] = None, **kw) -> FeatureSet:
    return FeatureSet.concat([extract_features(r, feature, ordering, **kw) for r in recordings])


def shuffle_trial_labels(features: FeatureSet, seed: int) -> FeatureSet:
    """Permute labels across trials; every segment keeps its trial's new label."""
    trials, first = np.unique(features.trials, return_index=True)
    labels = features.labels[first]
    new = dict(zip(trials.tolist(), np.random.default_rng(seed).permutation(labels).tolist()))
    return features.with_labels(np.array([new[t] for t in features.trials.tolist()]))


# ---------------------------------------------------------------------------
# Fold plans

@dataclass(frozen=True)
class FoldPlan:
    clusters: Tuple[Tuple[int, ...], ...]
    seed: int

    def __post_init__(self):
        seen = [u for c in self.clusters for u in c]
        if len(seen) != len(set(seen)):
            raise ValueError("fold clusters overlap")

    @property
    def assignment(self) -> Dict[int, int]:
        return {u: k for k, c in enumerate(self.clusters) for u in c}

    def to_dict(self):
        return {"seed": self.seed, "clusters": [list(c) for c in self.clusters]}


def make_folds(units: Sequence[int], seed: int, n_folds: int = N_FOLDS) -> FoldPlan:
    """Seeded random split of unit ids (trials, normally) into ``n_folds`` clusters.

    Cluster sizes differ by at most one.
    """
    units = np.unique(np.asarray(units, dtype=np.int64))
    if len(units) < n_folds:
        raise ValueError(f"{len(units)} trials cannot fill {n_folds} folds")
    perm = np.random.default_rng(seed).permutation(units)
    clusters = tuple(tuple(sorted(int(u) for u in perm[k::n_folds])) for k in range(n_folds))
    return FoldPlan(clusters, int(seed))


def standardize(train_x, test_x):
    """Per-channel (last axis) z-scoring with training statistics."""
    axes = tuple(range(train_x.ndim - 1))
    mean = train_x.mean(axis=axes, dtype=np.float64)
    std = train_x.std(axis=axes, dtype=np.float64)
    std = np.where(std > 0, std, 1.0)
    return (train_x - mean) / std, (test_x - mean) / std


# ---------------------------------------------------------------------------
# Cross-validation

@dataclass
class FoldResult:
    fold: int
    test_units: List[int]
    n_train: int
    n_test: int
    accuracy: float
    confusion: List[List[int]]  # rows true class, columns predicted
    test_class_balance: List[int]
    train_class_balance: List[int]
    final_train_loss: Optional[float] = None


@dataclass
class CVReport:
    folds: List[FoldResult]
    mean_accuracy: float
    confusion: List[List[int]]
    class_balance: List[int]
    plan: FoldPlan
    granularity: str
    config: dict
    models: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"mean_accuracy": self.mean_accuracy,
                "fold_accuracies": [f.accuracy for f in self.folds],
                "folds": [dataclasses.asdict(f) for f in self.folds],
                "confusion": self.confusion, "class_balance": self.class_balance,
                "granularity": self.granularity, "plan": self.plan.to_dict(),
                "config": self.config}


def confusion_matrix(predictions, labels) -> List[List[int]]:
    m = np.zeros((2, 2), dtype=int)
    np.add.at(m, (np.asarray(labels, dtype=int), np.asarray(predictions, dtype=int)), 1)
    return m.tolist()


def run_cv(features: FeatureSet, spec: ModelSpec, config: TrainConfig = TrainConfig(), *,
           fold_seed: int = 0, n_folds: int = N_FOLDS, granularity: str = "trial",
           keep_models: bool = False) -> CVReport:
    """Leave-one-cluster-out cross-validation.

    ``granularity="trial"`` keeps every segment of a trial in one cluster.
    ``"segment"`` clusters segments independently, which lets overlapping
    windows of one trial land on both sides of the split; it exists only to
    measure that leak.  Fold ``k`` trains with seed ``config.seed + k``.
    """
    if granularity == "trial":
        units = features.trials.astype(np.int64)
    elif granularity == "segment":
        units = np.arange(len(features), dtype=np.int64)
    else:
        raise ValueError(f"granularity must be 'trial' or 'segment', got {granularity!r}")
    plan = make_folds(units, fold_seed, n_folds)
    assign = plan.assignment
    fold_of = np.array([assign[int(u)] for u in units])
    x_all = features.values
    y_all = features.labels.astype(int)
    results, models = [], []
    all_pred, all_true = [], []
    for k in range(n_folds):
        test = fold_of == k
        if not test.any() or test.all():
            raise EmptyFoldError(f"fold {k} has an empty train or test set")
        x_tr, x_te = standardize(x_all[~test], x_all[test])
        y_tr, y_te = y_all[~test], y_all[test]
        cfg = dataclasses.replace(config, seed=config.seed + k)
        res = train(spec, x_tr, y_tr, cfg)
        pred = res.model.predict(x_te.astype(cfg.dtype))
        acc = accuracy(pred, y_te)
        log.info("fold %d: accuracy %.4f on %d segments", k, acc, len(y_te))
        results.append(FoldResult(
            k, list(plan.clusters[k]), int(len(y_tr)), int(len(y_te)), acc,
            confusion_matrix(pred, y_te), np.bincount(y_te, minlength=2).tolist(),
            np.bincount(y_tr, minlength=2).tolist(),
            res.history[-1].train_loss if res.history else None))
        all_pred.append(pred)
        all_true.append(y_te)
        if keep_models:
            models.append(res.model)
    echo = {"model": spec.name, "model_spec": spec.to_json(), "train": config.to_dict(),
            "fold_seed": fold_seed, "n_folds": n_folds, "granularity": granularity,
            "n_segments": len(features)}
    return CVReport(results, float(np.mean([r.accuracy for r in results])),
                    confusion_matrix(np.concatenate(all_pred), np.concatenate(all_true)),
                    np.bincount(y_all, minlength=2).tolist(), plan, granularity, echo, models)


def git_describe(path=None) -> str:
    """``git describe --always --dirty`` of the source tree, or ``"unknown"``."""
    where = Path(path) if path else Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=where,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"
