import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from sepkit.signals import (
    MultichannelError,
    NotPCMError,
    TruncatedWavError,
    Waveform,
    read_wav,
    resample,
    segment,
    write_wav,
)


def _stdlib_wav(path, frames: bytes, channels=1, width=2, rate=8000):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(width)
        w.setframerate(rate)
        w.writeframes(frames)


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform(np.zeros(3), 0)
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]), 8000)
    assert Waveform(np.zeros(16000), 8000).duration_seconds == 2.0


def test_read_fixed_point_mapping(tmp_path):
    path = tmp_path / "a.wav"
    _stdlib_wav(path, np.array([0, 16384, -32768], dtype="<i2").tobytes())
    w = read_wav(path)
    assert w.sample_rate == 8000
    assert np.array_equal(w.samples, [0.0, 0.5, -1.0])


def test_write_single_zero_sample(tmp_path):
    path = tmp_path / "z.wav"
    write_wav(path, Waveform([0.0], 8000))
    raw = path.read_bytes()
    assert len(raw) == 44 + 2
    assert raw[44:] == b"\x00\x00"
    with wave.open(str(path)) as w:
        assert (w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()) == (1, 2, 8000, 1)


def test_write_clamps_out_of_range(tmp_path):
    path = tmp_path / "c.wav"
    write_wav(path, Waveform([1.5, -1.5], 8000))
    ints = np.frombuffer(path.read_bytes()[44:], dtype="<i2")
    assert ints.tolist() == [32767, -32768]


def test_writes_are_byte_identical(tmp_path):
    w = Waveform(np.random.default_rng(0).uniform(-1, 1, 500), 16000)
    write_wav(tmp_path / "a.wav", w)
    write_wav(tmp_path / "b.wav", w)
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 200), elements=st.floats(-1, 0.999, allow_nan=False)))
def test_round_trip_within_one_lsb(tmp_path_factory, samples):
    path = tmp_path_factory.mktemp("rt") / "x.wav"
    write_wav(path, Waveform(samples, 16000))
    back = read_wav(path)
    assert back.sample_rate == 16000
    assert np.max(np.abs(back.samples - samples)) <= 1 / 32768


def test_stereo_rejected(tmp_path):
    path = tmp_path / "s.wav"
    _stdlib_wav(path, np.zeros(8, dtype="<i2").tobytes(), channels=2)
    with pytest.raises(MultichannelError):
        read_wav(path)


def test_non_16bit_rejected(tmp_path):
    path = tmp_path / "u8.wav"
    _stdlib_wav(path, bytes([128] * 8), width=1)
    with pytest.raises(NotPCMError):
        read_wav(path)


def test_truncated_and_missing(tmp_path):
    path = tmp_path / "t.wav"
    write_wav(path, Waveform(np.zeros(100), 8000))
    path.write_bytes(path.read_bytes()[:100])
    with pytest.raises(TruncatedWavError):
        read_wav(path)
    with pytest.raises(FileNotFoundError):
        read_wav(tmp_path / "missing.wav")


def test_segment_counts():
    segs = segment(Waveform(np.zeros(7 * 8000), 8000), 3)
    assert [len(s.waveform) for s in segs] == [24000, 24000]
    assert [s.offset_samples for s in segs] == [0, 24000]
    assert segment(Waveform(np.zeros(2 * 8000), 8000), 3) == []


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 500), st.floats(0.001, 0.05))
def test_segments_concatenate_to_prefix(n, seconds):
    x = np.arange(n, dtype=float)
    segs = segment(Waveform(x, 1000), seconds)
    joined = np.concatenate([s.waveform.samples for s in segs]) if segs else np.zeros(0)
    assert np.array_equal(joined, x[: joined.size])


def test_resample_identity_and_constant():
    x = np.random.default_rng(1).standard_normal(100)
    assert np.array_equal(resample(Waveform(x, 8000), 8000).samples, x)
    const = resample(Waveform(np.full(1000, 0.3), 16000), 10000)
    assert np.allclose(const.samples, 0.3, atol=1e-15)
    assert len(const) == 625


def test_resample_sine_tracks_analytic_samples():
    t_in = np.arange(16000) / 16000
    out = resample(Waveform(np.sin(2 * np.pi * 100 * t_in), 16000), 10000)
    expected = np.sin(2 * np.pi * 100 * np.arange(len(out)) / 10000)
    assert np.corrcoef(out.samples, expected)[0, 1] > 0.999
