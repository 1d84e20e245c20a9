"""Synthetic corpora with planted, class-dependent alpha-band coupling.

Class 1 (high valence) trials couple neighbouring electrodes inside the left
hemisphere; class 0 trials couple homologous left/right electrodes.  Mixing in
:func:`eegio.synthesize` is power preserving, so per-channel spectra do not
depend on the class.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .eegio import Coupling, CouplingSpec, EegRecording, synthesize

LEFT_PAIRS = (("Fp1", "AF3"), ("F3", "F7"), ("FC5", "FC1"), ("C3", "T7"),
              ("CP5", "CP1"), ("P3", "P7"), ("PO3", "O1"))
BETWEEN_PAIRS = (("Fp1", "Fp2"), ("F3", "F4"), ("F7", "F8"), ("FC5", "FC6"),
                 ("C3", "C4"), ("P3", "P4"), ("O1", "O2"))


@dataclass(frozen=True)
class PlantedDesign:
    n_trials: int = 40
    duration_s: float = 60.0
    band: str = "alpha"
    pairs_per_trial: int = 6
    strength: Tuple[float, float] = (0.9, 1.0)
    lag: Tuple[float, float] = (0.2, 1.0)  # |phase lag| range, radians
    noise: float = 0.5
    seed: int = 0
    high_fraction: float = 0.5

    def __post_init__(self):
        if self.n_trials < 2:
            raise ValueError("need at least two trials")
        if not 0 < self.high_fraction < 1:
            raise ValueError("high_fraction must lie strictly between 0 and 1")
        if not 1 <= self.pairs_per_trial <= min(len(LEFT_PAIRS), len(BETWEEN_PAIRS)):
            raise ValueError("pairs_per_trial out of range")


def trial_specs(design: PlantedDesign) -> List[Tuple[CouplingSpec, float]]:
    """(coupling spec, valence score) per trial, derived from ``design.seed``."""
    rng = np.random.default_rng(design.seed)
    n_high = int(round(design.high_fraction * design.n_trials))
    labels = rng.permutation(np.r_[np.ones(n_high, int), np.zeros(design.n_trials - n_high, int)])
    out = []
    for t, label in enumerate(labels):
        pool = LEFT_PAIRS if label else BETWEEN_PAIRS
        chosen = rng.choice(len(pool), design.pairs_per_trial, replace=False)
        couplings = []
        for k in sorted(chosen):
            a, b = pool[k]
            lag = rng.uniform(*design.lag) * rng.choice((-1.0, 1.0))
            couplings.append(Coupling(a, b, design.band, float(rng.uniform(*design.strength)), float(lag)))
        score = float(rng.uniform(6.0, 9.0) if label else rng.uniform(1.0, 5.0))
        seed = int(rng.integers(2**31))
        out.append((CouplingSpec(tuple(couplings), design.noise, seed), round(score, 2)))
    return out


def planted_corpus(design: PlantedDesign = PlantedDesign(), subject_id: int = 1) -> List[EegRecording]:
    return [synthesize(spec, design.duration_s, subject_id=subject_id, video_id=t + 1,
                       valence_score=score)
            for t, (spec, score) in enumerate(trial_specs(design))]
