"""Objective separation metrics: SI-SNR, SI-SNR improvement, STOI and leakage."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .signals import Waveform, resample

EPS = 1e-12
# keeps 0/0 (an all-constant estimate) at exactly 0 dB
TINY = np.finfo(np.float64).tiny

# STOI constants (Taal et al. 2011 reference algorithm)
STOI_RATE = 10000
STOI_FRAME = 256
STOI_NFFT = 512
STOI_BANDS = 15
STOI_MIN_FREQ = 150.0
STOI_SEGMENT = 30
STOI_BETA_DB = -15.0
STOI_DYN_RANGE_DB = 40.0


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)


def si_snr(reference, estimate) -> float:
    """Scale-invariant SNR in dB after removing the mean of both signals."""
    ref = _samples(reference)
    est = _samples(estimate)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: reference {ref.shape} vs estimate {est.shape}")
    ref = ref - ref.mean()
    est = est - est.mean()
    energy = float(np.dot(ref, ref))
    if energy == 0.0:
        raise ValueError("reference has zero energy")
    target = (np.dot(est, ref) / energy) * ref
    noise = est - target
    # eps is relative to the estimate energy so the ratio stays exactly gain invariant
    floor = EPS * np.dot(est, est) + TINY
    return float(10.0 * np.log10((np.dot(target, target) + floor) / (np.dot(noise, noise) + floor)))


def si_snri(mixture, reference, estimate) -> float:
    return si_snr(reference, estimate) - si_snr(reference, mixture)


def leakage(estimate, nontarget) -> float:
    """How much of a non-target source is present in an estimate, as SI-SNR in dB."""
    return si_snr(nontarget, estimate)


# ----------------------------------------------------------------------------
# STOI


def _third_octave_matrix(rate: int, nfft: int, num_bands: int, min_freq: float) -> np.ndarray:
    freqs = np.linspace(0, rate, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(num_bands)
    lows = min_freq * 2.0 ** ((2 * k - 1) / 6.0)
    highs = min_freq * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((num_bands, freqs.size))
    for i in range(num_bands):
        lo = np.argmin((freqs - lows[i]) ** 2)
        hi = np.argmin((freqs - highs[i]) ** 2)
        obm[i, lo:hi] = 1.0
    return obm


_OBM = _third_octave_matrix(STOI_RATE, STOI_NFFT, STOI_BANDS, STOI_MIN_FREQ)


def _frames(x: np.ndarray, size: int, hop: int) -> np.ndarray:
    count = (len(x) - size) // hop + 1
    if count < 1:
        return np.zeros((0, size))
    idx = np.arange(size)[None, :] + hop * np.arange(count)[:, None]
    return x[idx]


def _remove_silent_frames(x: np.ndarray, y: np.ndarray, dyn_range: float, size: int, hop: int):
    window = np.hanning(size + 2)[1:-1]
    xf = _frames(x, size, hop) * window
    yf = _frames(y, size, hop) * window
    energy = 20 * np.log10(np.linalg.norm(xf, axis=1) + np.finfo(float).eps)
    keep = (np.max(energy) - dyn_range - energy) < 0
    xf, yf = xf[keep], yf[keep]
    # overlap-add the surviving frames back into a signal
    n = (len(xf) - 1) * hop + size if len(xf) else 0
    xs = np.zeros(n)
    ys = np.zeros(n)
    for i in range(len(xf)):
        xs[i * hop : i * hop + size] += xf[i]
        ys[i * hop : i * hop + size] += yf[i]
    return xs, ys


def _band_envelopes(x: np.ndarray) -> np.ndarray:
    window = np.hanning(STOI_FRAME + 2)[1:-1]
    frames = _frames(x, STOI_FRAME, STOI_FRAME // 2) * window
    spec = np.fft.rfft(frames, n=STOI_NFFT, axis=1)
    return np.sqrt(_OBM @ (np.abs(spec) ** 2).T)  # bands x frames


def stoi(reference, estimate, rate: int | None = None) -> float:
    """Short-time objective intelligibility of ``estimate`` against ``reference``."""
    if rate is None:
        if not isinstance(reference, Waveform):
            raise ValueError("sample rate required for raw arrays")
        rate = reference.sample_rate
    x = _samples(reference)
    y = _samples(estimate)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if rate != STOI_RATE:
        x = resample(Waveform(x, rate), STOI_RATE).samples
        y = resample(Waveform(y, rate), STOI_RATE).samples
    x, y = _remove_silent_frames(x, y, STOI_DYN_RANGE_DB, STOI_FRAME, STOI_FRAME // 2)
    x_bands = _band_envelopes(x)
    y_bands = _band_envelopes(y)
    n_frames = x_bands.shape[1]
    if n_frames < STOI_SEGMENT:
        raise ValueError(
            f"not enough voiced content for STOI: {n_frames} frames, need {STOI_SEGMENT} (~384 ms)"
        )
    clip = 10 ** (-STOI_BETA_DB / 20)
    scores = []
    for m in range(STOI_SEGMENT, n_frames + 1):
        xs = x_bands[:, m - STOI_SEGMENT : m]
        ys = y_bands[:, m - STOI_SEGMENT : m]
        alpha = np.linalg.norm(xs, axis=1, keepdims=True) / (np.linalg.norm(ys, axis=1, keepdims=True) + EPS)
        ys = np.minimum(ys * alpha, xs * (1 + clip))
        xc = xs - xs.mean(axis=1, keepdims=True)
        yc = ys - ys.mean(axis=1, keepdims=True)
        num = np.sum(xc * yc, axis=1)
        den = np.linalg.norm(xc, axis=1) * np.linalg.norm(yc, axis=1) + EPS
        scores.append(num / den)
    return float(np.mean(scores))


# ----------------------------------------------------------------------------
# reports


@dataclass
class EvalRow:
    index: int
    si_snr: list[float]
    si_snri: list[float]
    stoi: list[float]
    leakage: list[float]

    def summary(self) -> dict:
        return {
            "index": self.index,
            "si_snr": float(np.mean(self.si_snr)),
            "si_snri": float(np.mean(self.si_snri)),
            "stoi": float(np.nanmean(self.stoi)) if np.any(~np.isnan(self.stoi)) else float("nan"),
            "leakage": float(np.mean(self.leakage)),
        }

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "si_snr": self.si_snr,
            "si_snri": self.si_snri,
            "stoi": [_json_float(v) for v in self.stoi],
            "leakage": self.leakage,
        }


def _json_float(x):
    """NaN (an unscorable STOI) is stored as JSON null."""
    return None if x is None or np.isnan(x) else float(x)


METRIC_KEYS = ("si_snr", "si_snri", "stoi", "leakage")


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    model: str = "model"

    def aggregates(self) -> dict[str, float]:
        out = {}
        summaries = [r.summary() for r in self.rows]
        for key in METRIC_KEYS:
            vals = np.array([s[key] for s in summaries], dtype=np.float64)
            # rows whose STOI could not be computed carry NaN and are skipped
            vals = vals[~np.isnan(vals)]
            out[f"mean_{key}"] = float(np.mean(vals)) if vals.size else float("nan")
            out[f"median_{key}"] = float(np.median(vals)) if vals.size else float("nan")
        return out

    def to_dict(self) -> dict:
        agg = {k: _json_float(v) for k, v in self.aggregates().items()}
        return {"model": self.model, "rows": [r.to_dict() for r in self.rows], "aggregates": agg}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rows = [
            EvalRow(r["index"], r["si_snr"], r["si_snri"], [np.nan if v is None else v for v in r["stoi"]], r["leakage"])
            for r in d["rows"]
        ]
        return cls(rows, d.get("model", "model"))

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.rows:
                fh.write(json.dumps(r.to_dict()) + "\n")

    def write_summary_csv(self, path) -> None:
        agg = self.aggregates()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "si_snr_db", "stoi"])
            w.writerow([self.model, f"{agg['mean_si_snr']:.6f}", f"{agg['mean_stoi']:.6f}"])
