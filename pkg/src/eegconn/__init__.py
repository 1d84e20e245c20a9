"""EEG emotion recognition from connectivity images with small CNNs.

Subpackages and modules: ``eegio`` (recordings, EEGB files, synthesis),
``dsp`` (bands, filtering, Welch PSD, phase), ``connectivity`` (PCC/PLV/PLI,
electrode orderings), ``topomap`` (PSD topographies), ``nn`` (CNNs from
scratch), ``experiment`` (segments, folds, cross-validation) and ``cli``.
"""
from .dsp import BANDS
from .eegio import EegRecording, read_recording, synthesize, write_recording
from .montage import DEAP_CHANNELS, deap_layout

__version__ = "0.1.0"
