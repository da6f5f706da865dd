"""Deterministic synthetic multi-speaker corpus.

Each "speaker" is a harmonic voice with its own pitch band and timbre.  Pitch
bands of different speakers never overlap, so identity is a measurable
spectral property of every utterance.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .signals import Waveform, read_wav, write_wav

TARGET_RMS = 0.1
BAND_START_HZ = 90.0
BAND_WIDTH_HZ = 30.0
BAND_GAP_HZ = 20.0
NUM_HARMONICS = 8


@dataclass
class SpeakerProfile:
    speaker_id: str
    f0_range: tuple[float, float]
    harmonic_gains: np.ndarray
    vibrato_rate: float = 5.0
    seed: int = 0
    vibrato_depth: float = 0.01
    pause_rate: float = 1.0

    def __post_init__(self):
        self.harmonic_gains = np.asarray(self.harmonic_gains, dtype=np.float64)
        low, high = self.f0_range
        if not 0 < low < high:
            raise ValueError(f"f0_range must satisfy 0 < low < high, got {self.f0_range}")

    def validate(self, sample_rate: int) -> None:
        if self.f0_range[1] >= sample_rate / 4:
            raise ValueError(f"f0 upper bound {self.f0_range[1]} must stay below sample_rate/4")
        gains = self.harmonic_gains
        if gains.size == 0:
            raise ValueError("harmonic_gains must not be empty")
        if np.any(gains < 0) or not np.any(gains > 0):
            raise ValueError("harmonic_gains must be non-negative with at least one positive entry")


@dataclass
class MixtureExample:
    mixture: Waveform
    sources: list[Waveform]
    speaker_ids: list[str]

    @property
    def num_sources(self) -> int:
        return len(self.sources)


@dataclass
class ManifestEntry:
    mix: str
    srcs: list[str]
    speakers: list[str]
    dur: float

    def to_json(self) -> str:
        return json.dumps({"mix": self.mix, "srcs": self.srcs, "speakers": self.speakers, "dur": self.dur})


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    sample_rate: int
    seed: int
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def load_example(self, index: int) -> MixtureExample:
        e = self.entries[index]
        return MixtureExample(
            read_wav(self.resolve(e.mix)),
            [read_wav(self.resolve(p)) for p in e.srcs],
            list(e.speakers),
        )

    def load_all(self) -> list[MixtureExample]:
        return [self.load_example(i) for i in range(len(self.entries))]

    def subset(self, indices) -> "DatasetManifest":
        return DatasetManifest([self.entries[i] for i in indices], self.sample_rate, self.seed, self.root)


def entry_seed(global_seed: int, index: int) -> int:
    digest = hashlib.sha256(f"{global_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def make_profiles(num_speakers: int, sample_rate: int, seed: int) -> list[SpeakerProfile]:
    """Speakers with disjoint pitch bands spaced 50 Hz apart."""
    rng = np.random.default_rng(seed)
    profiles = []
    for k in range(num_speakers):
        low = BAND_START_HZ + k * (BAND_WIDTH_HZ + BAND_GAP_HZ)
        # random spectral tilt plus jitter gives each voice its own timbre
        tilt = rng.uniform(0.4, 0.9)
        gains = tilt ** np.arange(NUM_HARMONICS) * rng.uniform(0.5, 1.5, NUM_HARMONICS)
        profile = SpeakerProfile(
            speaker_id=f"spk{k:02d}",
            f0_range=(low, low + BAND_WIDTH_HZ),
            harmonic_gains=gains,
            vibrato_rate=float(rng.uniform(4.0, 7.0)),
            seed=int(rng.integers(2**31)),
        )
        profile.validate(sample_rate)
        profiles.append(profile)
    return profiles


def _pause_envelope(n: int, sample_rate: int, rate_per_s: float, rng: np.random.Generator) -> np.ndarray:
    env = np.ones(n)
    n_pauses = rng.poisson(rate_per_s * n / sample_rate)
    ramp = max(int(0.01 * sample_rate), 1)
    for _ in range(n_pauses):
        length = int(rng.uniform(0.05, 0.15) * sample_rate)
        start = int(rng.integers(0, max(n - length, 1)))
        stop = min(start + length, n)
        env[start:stop] = 0.0
        # raised-cosine edges, strictly positive outside the gap
        rise = 0.5 - 0.5 * np.cos(np.pi * np.arange(1, ramp + 1) / (ramp + 1))
        lo = max(start - ramp, 0)
        env[lo:start] = np.minimum(env[lo:start], rise[::-1][ramp - (start - lo) :])
        hi = min(stop + ramp, n)
        env[stop:hi] = np.minimum(env[stop:hi], rise[: hi - stop])
    return env


def synth_utterance(profile: SpeakerProfile, duration_s: float, seed: int, sample_rate: int = 16000) -> Waveform:
    """Harmonic voice with a piecewise pitch contour, vibrato, pauses and an envelope.

    Non-silent samples are scaled to an RMS of exactly ``TARGET_RMS``; pause
    samples are exactly zero.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    profile.validate(sample_rate)
    rng = np.random.default_rng([profile.seed, seed])
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate

    low, high = profile.f0_range
    n_knots = max(int(np.ceil(duration_s / 0.2)), 1) + 1
    knot_t = np.linspace(0.0, duration_s, n_knots)
    knot_f = rng.uniform(low, high, n_knots)
    f0 = np.interp(t, knot_t, knot_f)
    if profile.vibrato_rate > 0:
        f0 = f0 * (1.0 + profile.vibrato_depth * np.sin(2 * np.pi * profile.vibrato_rate * t))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate + rng.uniform(0.1, 2 * np.pi - 0.1)

    voice = np.zeros(n)
    for k, gain in enumerate(profile.harmonic_gains, start=1):
        if gain == 0 or k * high >= sample_rate / 2:
            continue
        voice += gain * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    # syllable-rate amplitude modulation, bounded away from zero
    am_rate = rng.uniform(2.0, 4.0)
    envelope = 0.6 + 0.4 * np.sin(2 * np.pi * am_rate * t + rng.uniform(0, 2 * np.pi))
    envelope *= _pause_envelope(n, sample_rate, profile.pause_rate, rng)
    x = voice * envelope

    voiced = x != 0
    if not np.any(voiced):
        return Waveform(x, sample_rate)
    rms = np.sqrt(np.mean(x[voiced] ** 2))
    return Waveform(x * (TARGET_RMS / rms), sample_rate)


def voiced_rms(waveform: Waveform) -> float:
    x = waveform.samples
    voiced = x != 0
    return float(np.sqrt(np.mean(x[voiced] ** 2)))


def make_mixture(sources: list[Waveform], speaker_ids: list[str]) -> MixtureExample:
    """Sample-wise sum of the sources."""
    if len(sources) < 2:
        raise ValueError("a mixture needs at least two sources")
    if len(speaker_ids) != len(sources):
        raise ValueError("one speaker id per source required")
    rate = sources[0].sample_rate
    length = len(sources[0])
    for s in sources[1:]:
        if s.sample_rate != rate:
            raise ValueError(f"sample rate mismatch: {s.sample_rate} vs {rate}")
        if len(s) != length:
            raise ValueError(f"length mismatch: {len(s)} vs {length}")
    total = np.zeros(length)
    for s in sources:
        total = total + s.samples
    return MixtureExample(Waveform(total, rate), list(sources), list(speaker_ids))


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [e.to_json() for e in manifest.entries]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    entries = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        entries.append(ManifestEntry(d["mix"], list(d["srcs"]), list(d["speakers"]), float(d["dur"])))
    if not entries:
        return DatasetManifest([], 0, 0, path.parent)
    rate = read_wav(path.parent / entries[0].mix).sample_rate
    meta = path.parent / "corpus.json"
    seed = json.loads(meta.read_text()).get("seed", 0) if meta.exists() else 0
    return DatasetManifest(entries, rate, seed, path.parent)


def iter_examples(num_speakers: int, utterances_per_pair: int, duration_s: float, sample_rate: int, seed: int):
    """Yield ``(index, MixtureExample)`` in manifest order, before any quantization."""
    if num_speakers < 2:
        raise ValueError("need at least two speakers")
    if utterances_per_pair < 1:
        raise ValueError("utterances_per_pair must be >= 1")
    profiles = make_profiles(num_speakers, sample_rate, seed)
    index = 0
    for a, b in itertools.combinations(range(num_speakers), 2):
        for _ in range(utterances_per_pair):
            es = entry_seed(seed, index)
            pair = [profiles[a], profiles[b]]
            sources = [synth_utterance(p, duration_s, es + k, sample_rate) for k, p in enumerate(pair)]
            yield index, make_mixture(sources, [p.speaker_id for p in pair])
            index += 1


def generate_dataset(
    num_speakers: int,
    utterances_per_pair: int,
    duration_s: float,
    sample_rate: int,
    out_dir,
    seed: int,
) -> DatasetManifest:
    """Mix every unordered speaker pair ``utterances_per_pair`` times and write the corpus.

    Layout under ``out_dir``: ``wav/NNNNN_{mix,s1,s2}.wav``, ``manifest.jsonl``
    and ``corpus.json`` (generation parameters).
    """
    if num_speakers < 2:
        raise ValueError("need at least two speakers")
    out = Path(out_dir)
    try:
        (out / "wav").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    entries = []
    for index, ex in iter_examples(num_speakers, utterances_per_pair, duration_s, sample_rate, seed):
        stem = f"wav/{index:05d}"
        mix_rel = f"{stem}_mix.wav"
        src_rels = [f"{stem}_s{k + 1}.wav" for k in range(len(ex.sources))]
        write_wav(out / mix_rel, ex.mixture)
        for rel, src in zip(src_rels, ex.sources):
            write_wav(out / rel, src)
        entries.append(ManifestEntry(mix_rel, src_rels, ex.speaker_ids, round(ex.mixture.duration_seconds, 6)))

    manifest = DatasetManifest(entries, sample_rate, seed, out)
    write_manifest(manifest, out / "manifest.jsonl")
    profiles = make_profiles(num_speakers, sample_rate, seed)
    meta = {
        "num_speakers": num_speakers,
        "utterances_per_pair": utterances_per_pair,
        "duration_s": duration_s,
        "sample_rate": sample_rate,
        "seed": seed,
        "speakers": {p.speaker_id: list(p.f0_range) for p in profiles},
    }
    (out / "corpus.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return manifest
