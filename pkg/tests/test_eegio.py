import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegconn import dsp
from eegconn.connectivity import pli, plv
from eegconn.eegio import (Coupling, CouplingSpec, EegRecording, FormatError, read_csv,
                           read_recording, synthesize, write_recording)
from eegconn.montage import DEAP_CHANNELS


def _rec(n_ch=32, n=7680, seed=0, **kw):
    rng = np.random.default_rng(seed)
    names = DEAP_CHANNELS[:n_ch] if n_ch <= 32 else tuple(f"c{i}" for i in range(n_ch))
    return EegRecording(names, rng.normal(size=(n_ch, n)), **kw)


def test_roundtrip_full_recording(tmp_path):
    rec = _rec(subject_id=3, video_id=17, valence_score=6.5)
    write_recording(rec, tmp_path / "a.eegb")
    back = read_recording(tmp_path / "a.eegb")
    assert back == rec
    assert np.array_equal(back.samples, rec.samples)
    assert (back.subject_id, back.video_id, back.valence_score) == (3, 17, 6.5)


def test_handmade_two_channel_file(tmp_path):
    head = struct.pack("<4sHHQdiid", b"EEGB", 1, 2, 4, 128.0, 1, 2, 3.0)
    names = b"\x01a\x01b"
    payload = np.arange(8, dtype="<f4").tobytes()
    (tmp_path / "h.eegb").write_bytes(head + names + payload)
    rec = read_recording(tmp_path / "h.eegb")
    assert rec.channel_names == ("a", "b")
    assert rec.samples.tolist() == [[0, 1, 2, 3], [4, 5, 6, 7]]


def test_truncated_payload_names_offset(tmp_path):
    rec = _rec(n=100)
    write_recording(rec, tmp_path / "a.eegb")
    data = (tmp_path / "a.eegb").read_bytes()
    (tmp_path / "b.eegb").write_bytes(data[:-100 * 4])  # 31 channels of payload
    with pytest.raises(FormatError, match="truncated payload at offset"):
        read_recording(tmp_path / "b.eegb")


@pytest.mark.parametrize("blob, msg", [
    (b"XXXX" + bytes(40), "bad magic"),
    (b"EEG", "truncated header"),
])
def test_bad_headers(tmp_path, blob, msg):
    (tmp_path / "x.eegb").write_bytes(blob)
    with pytest.raises(FormatError, match=msg):
        read_recording(tmp_path / "x.eegb")


def test_oversized_payload(tmp_path):
    write_recording(_rec(n_ch=2, n=4), tmp_path / "a.eegb")
    with open(tmp_path / "a.eegb", "ab") as fh:
        fh.write(b"\0\0\0\0")
    with pytest.raises(FormatError, match="oversized"):
        read_recording(tmp_path / "a.eegb")


def test_empty_channel_list_rejected():
    with pytest.raises(ValueError):
        EegRecording((), np.zeros((0, 10)))


def test_one_channel_readable_but_not_pipeline_ready(tmp_path):
    rec = EegRecording(("Cz",), np.ones((1, 10)))
    write_recording(rec, tmp_path / "one.eegb")
    back = read_recording(tmp_path / "one.eegb")
    assert back == rec
    with pytest.raises(ValueError, match="32 channels"):
        back.require_pipeline_ready()


@pytest.mark.parametrize("kw", [dict(sample_rate_hz=0), dict(valence_score=9.5)])
def test_invalid_metadata(kw):
    with pytest.raises(ValueError):
        _rec(n_ch=2, n=4, **kw)


def test_duplicate_channel_names():
    with pytest.raises(ValueError, match="unique"):
        EegRecording(("a", "a"), np.zeros((2, 3)))


def test_samples_are_immutable():
    rec = _rec(n_ch=2, n=4)
    with pytest.raises(ValueError):
        rec.samples[0, 0] = 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 50), st.integers(0, 2**31 - 1),
       st.floats(1, 9), st.floats(1, 4096))
def test_roundtrip_property(tmp_path_factory, n_ch, n, seed, valence, rate):
    rec = _rec(n_ch=n_ch, n=n, seed=seed, valence_score=valence, sample_rate_hz=rate)
    p = tmp_path_factory.mktemp("rt") / "r.eegb"
    write_recording(rec, p)
    assert read_recording(p) == rec


def test_csv_import(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("Fp1,Fp2\n1,2\n3,4\n5,6\n")
    rec = read_csv(p, sample_rate_hz=256)
    assert rec.channel_names == ("Fp1", "Fp2")
    assert rec.samples.tolist() == [[1, 3, 5], [2, 4, 6]]
    assert rec.sample_rate_hz == 256


@pytest.mark.parametrize("text", ["", "a,b\n", "a,b\n1,x\n", "a,b\n1,2,3\n"])
def test_csv_errors(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(FormatError):
        read_csv(p)


# ---------------------------------------------------------------------------
# synthesis

def _pair_phases(rec, a, b, band="alpha", filtered=True):
    x = rec.samples.astype(float)[[rec.channel_names.index(a), rec.channel_names.index(b)]]
    if filtered:
        x = dsp.bandpass(x, rec.sample_rate_hz, band)
    return dsp.instantaneous_phase(x)


def test_synthesize_deterministic():
    spec = CouplingSpec((Coupling("Fp1", "Fp2", "alpha", 0.8, 0.3),), seed=11)
    assert synthesize(spec, 10) == synthesize(spec, 10)
    assert not synthesize(spec, 10) == synthesize(CouplingSpec(spec.couplings, seed=12), 10)


def test_strength_one_pair_is_phase_locked():
    # zero noise, no background: the pair is one oscillator and its delayed copy
    spec = CouplingSpec((Coupling("Fp1", "F4", "alpha", 1.0, 0.5),), noise=0.0, seed=3,
                        band_amplitude={})
    rec = synthesize(spec, 60)
    ph = _pair_phases(rec, "Fp1", "F4", filtered=False)
    d = np.angle(np.exp(1j * (ph[0] - ph[1])))
    n = d.size
    inner = slice(n // 20, n - n // 20)
    assert np.max(np.abs(d[inner] - 0.5)) < 1e-3
    assert abs(plv(ph[0], ph[1]) - 1.0) <= 1e-6
    assert pli(ph[0], ph[1]) == 1.0


def test_strength_one_pair_after_band_filtering():
    spec = CouplingSpec((Coupling("Fp1", "F4", "alpha", 1.0, 0.5),), noise=0.0, seed=3,
                        band_amplitude={})
    ph = _pair_phases(synthesize(spec, 60), "Fp1", "F4")
    # 3-s windows clear of the filter/Hilbert transients at both ends
    for s in range(6 * 64, 7680 - 384 - 6 * 64 + 1, 64):
        assert abs(plv(ph[0, s:s + 384], ph[1, s:s + 384]) - 1.0) <= 1e-6
        assert pli(ph[0, s:s + 384], ph[1, s:s + 384]) == 1.0


def test_uncoupled_pair_has_low_plv():
    values = [plv(*_pair_phases(synthesize(CouplingSpec(seed=s), 60), "Fp1", "F4"))
              for s in range(20)]
    assert max(values) < 0.2


def test_coupling_leaves_band_power_unchanged():
    # phase-only mixing: amplitude of every band oscillator is fixed
    from eegconn.topomap import band_powers
    base = synthesize(CouplingSpec(noise=0.0, seed=5), 60)
    coupled = synthesize(CouplingSpec((Coupling("Fp1", "F4", "alpha", 0.9, 0.4),),
                                      noise=0.0, seed=5), 60)
    for rec in (base, coupled):
        bp = band_powers(rec.samples.astype(float), 128)
        i = rec.channel_names.index("Fp1")
        k = [b.name for b in dsp.BANDS].index("low_alpha")
        assert bp[i, k] == pytest.approx(bp[rec.channel_names.index("Cz"), k], rel=0.25)
    assert base.samples[0].var() == pytest.approx(coupled.samples[0].var(), rel=0.05)


@pytest.mark.parametrize("bad", [
    lambda: Coupling("Fp1", "Fp2", "alpha", 1.5),
    lambda: Coupling("Fp1", "Fp1", "alpha", 0.5),
    lambda: Coupling("Fp1", "Fp2", "kappa", 0.5),
    lambda: CouplingSpec((Coupling("Fp1", "Xx", "alpha", 0.5),)),
    lambda: CouplingSpec(noise={"Nope": 0.1}),
    lambda: synthesize(CouplingSpec(), 0.0),
])
def test_synthesis_errors(bad):
    with pytest.raises((ValueError, KeyError)):
        bad()


def test_per_channel_noise():
    spec = CouplingSpec(noise={"Fp1": 3.0}, default_noise=0.0, seed=1, band_amplitude={})
    rec = synthesize(spec, 10)
    assert rec.samples[0].std() == pytest.approx(3.0, rel=0.05)
    assert np.all(rec.samples[1:] == 0)
