import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepkit.datagen import make_profiles, synth_utterance
from sepkit.metrics import EvalReport, EvalRow, leakage, si_snr, si_snri, stoi
from sepkit.signals import Waveform


def _speech(seed, seconds=1.5, rate=16000):
    p = make_profiles(4, rate, seed=0)[seed % 4]
    return synth_utterance(p, seconds, seed=seed, sample_rate=rate).samples


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_si_snr_scale_invariant(a):
    x = np.random.default_rng(0).standard_normal(1000)
    y = x + 0.3 * np.random.default_rng(1).standard_normal(1000)
    assert abs(si_snr(x, a * y) - si_snr(x, y)) < 1e-9
    assert abs(si_snr(x, a * x) - si_snr(x, x)) < 1e-9


def test_si_snr_orthogonal_unit_error_is_zero_db():
    assert abs(si_snr([1.0, 0.0], [1.0, 1.0])) < 1e-9


def test_si_snr_gram_schmidt_ten_db():
    rng = np.random.default_rng(2)
    ref = rng.standard_normal(4000)
    ref -= ref.mean()
    e = rng.standard_normal(4000)
    e -= e.mean()
    e -= (e @ ref) / (ref @ ref) * ref
    e *= np.sqrt((ref @ ref) / 10 / (e @ e))
    assert abs(si_snr(ref, ref + e) - 10.0) < 1e-6


def test_si_snr_self_is_huge_and_errors():
    x = np.random.default_rng(3).standard_normal(100)
    assert si_snr(x, x) >= 100
    with pytest.raises(ValueError):
        si_snr(np.zeros(10), np.ones(10))
    with pytest.raises(ValueError):
        si_snr(np.ones(10), np.ones(11))


def test_si_snri_edges():
    rng = np.random.default_rng(4)
    s1, s2 = rng.standard_normal((2, 500))
    mix = s1 + s2
    assert si_snri(mix, s1, mix) == 0.0
    assert si_snri(mix, s1, s1) >= 100


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_si_snri_scale_invariant(seed, a):
    rng = np.random.default_rng(seed)
    s1, s2, n = rng.standard_normal((3, 300))
    mix = s1 + s2
    est = s1 + 0.2 * n
    assert abs(si_snri(mix, s1, a * est) - si_snri(mix, s1, est)) < 1e-9


def test_leakage_extremes_and_mixture():
    s1, s2 = _speech(0), _speech(1)
    assert leakage(s2, s2) >= 100
    rng = np.random.default_rng(5)
    u = rng.standard_normal(1000)
    v = rng.standard_normal(1000)
    v -= v.mean()
    u -= u.mean()
    v -= (v @ u) / (u @ u) * u
    assert leakage(v, u) < -100
    mixed = leakage(s1 + s2, s2)
    assert leakage(s1, s2) < mixed < leakage(s2, s2)
    assert mixed == pytest.approx(si_snr(s2, s1 + s2), abs=0)


def test_stoi_of_identical_signals():
    x = _speech(2)
    assert stoi(x, x, 16000) >= 0.99


def test_stoi_gain_invariant():
    x = _speech(3)
    y = x + 0.05 * np.random.default_rng(6).standard_normal(x.size)
    assert abs(stoi(x, 2 * y, 16000) - stoi(x, y, 16000)) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_si_snr_symmetric_under_time_reversal(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(300)
    y = x + rng.uniform(0.1, 3.0) * rng.standard_normal(300)
    assert abs(si_snr(x[::-1], y[::-1]) - si_snr(x, y)) < 1e-9


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_stoi_stays_in_correlation_range(seed):
    x = _speech(seed)
    rng = np.random.default_rng(seed)
    for y in (rng.standard_normal(x.size), -x, x[::-1].copy()):
        assert -1.0 <= stoi(x, y, 16000) <= 1.0


def test_stoi_needs_enough_frames():
    x = _speech(0, seconds=0.2)
    with pytest.raises(ValueError):
        stoi(x, x, 16000)
    with pytest.raises(ValueError):
        stoi(np.ones(10), np.ones(10))


def test_stoi_waveform_carries_rate():
    x = Waveform(_speech(1, rate=10000), 10000)
    assert stoi(x, x) >= 0.99


def _noisy_stoi(snr_db, seeds=range(10)):
    scores = []
    for s in seeds:
        x = _speech(s)
        noise = np.random.default_rng(100 + s).standard_normal(x.size)
        noise *= np.sqrt(np.mean(x**2) / np.mean(noise**2) / 10 ** (snr_db / 10))
        scores.append(stoi(x, x + noise, 16000))
    return float(np.median(scores))


def test_stoi_decreases_with_noise():
    medians = [_noisy_stoi(snr) for snr in (20, 15, 10, 5, 0)]
    assert all(a > b for a, b in zip(medians, medians[1:]))


def _report():
    rows = [
        EvalRow(0, [10.0, 12.0], [9.0, 11.0], [0.9, 0.8], [-20.0, -10.0]),
        EvalRow(1, [4.0, 6.0], [3.0, 5.0], [0.7, 0.6], [-5.0, -15.0]),
    ]
    return EvalReport(rows, "m")


def test_report_aggregates_match_rows():
    agg = _report().aggregates()
    assert agg["mean_si_snr"] == pytest.approx(8.0, abs=1e-12)
    assert agg["median_si_snri"] == pytest.approx(7.0, abs=1e-12)
    assert agg["mean_stoi"] == pytest.approx(0.75, abs=1e-12)
    assert agg["mean_leakage"] == pytest.approx(-12.5, abs=1e-12)


def test_report_skips_nan_stoi():
    r = _report()
    r.rows[1].stoi = [float("nan"), float("nan")]
    assert r.aggregates()["mean_stoi"] == pytest.approx(0.85, abs=1e-12)


def test_report_round_trip(tmp_path):
    r = _report()
    back = EvalReport.from_dict(r.to_dict())
    assert back.to_dict() == r.to_dict()
    r.write_summary_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines == ["model,si_snr_db,stoi", "m,8.000000,0.750000"]
