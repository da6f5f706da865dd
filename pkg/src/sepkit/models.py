"""Separation networks, FiLM conditioning, embedders and checkpoint I/O.

Shapes follow the ``[batch, channels, time]`` convention throughout.  The
separator is an encoder / masker / decoder stack: a strided learned filterbank
(ReLU), a grouped stack of dilated causal residual conv blocks that emits one
sigmoid mask per source, and an overlap-add decoder.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensorgrad as tg
from .signals import Waveform
from .tensorgrad import DiffTensor, ParameterStore

CHECKPOINT_MAGIC = b"SEPKITCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class SeparatorConfig:
    num_sources: int = 2
    encoder_filters: int = 64
    kernel_size: int = 32
    stride: int | None = None
    masker_channels: int = 64
    num_layers: int = 8
    group_size: int = 4
    conv_width: int = 3
    dilations: list[int] | None = None
    film_enabled: bool = False
    embed_dim: int = 32

    def __post_init__(self):
        if self.stride is None:
            self.stride = max(self.kernel_size // 2, 1)
        if self.num_sources < 2:
            raise ValueError("num_sources must be >= 2")
        if self.group_size < 1 or self.num_layers % self.group_size:
            raise ValueError(f"num_layers ({self.num_layers}) must be divisible by group_size ({self.group_size})")
        if self.dilations is None:
            self.dilations = [2**k for _ in range(self.num_groups) for k in range(self.group_size)]
        self.dilations = [int(d) for d in self.dilations]
        if len(self.dilations) != self.num_layers:
            raise ValueError("one dilation per layer required")
        for g in range(self.num_groups):
            group = self.dilations[g * self.group_size : (g + 1) * self.group_size]
            if group[0] != 1:
                raise ValueError(f"group {g}: first dilation must be 1")
            if any(b <= a for a, b in zip(group, group[1:])):
                raise ValueError(f"group {g}: dilations must increase strictly")

    @property
    def num_groups(self) -> int:
        return self.num_layers // self.group_size

    @property
    def receptive_field(self) -> int:
        return 1 + (self.conv_width - 1) * sum(self.dilations)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FilmParams:
    """Per-source scale/shift for every FiLM site.

    ``gamma`` and ``beta`` are ``[..., num_sites, channels]``; leading axes
    index batch and source.
    """

    gamma: DiffTensor
    beta: DiffTensor

    def __post_init__(self):
        if self.gamma.shape != self.beta.shape:
            raise tg.ShapeError(f"FiLM gamma {self.gamma.shape} vs beta {self.beta.shape}")

    @classmethod
    def identity(cls, leading: tuple, num_sites: int, channels: int) -> "FilmParams":
        shape = tuple(leading) + (num_sites, channels)
        return cls(DiffTensor(np.ones(shape)), DiffTensor(np.zeros(shape)))


@dataclass
class SpeakerEmbedding:
    vector: np.ndarray
    speaker_hint: str | None = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.vector)):
            raise ValueError("speaker embedding is not finite")


@dataclass
class EmbeddingSequence:
    """``frames`` is ``[M, D]``: one representation vector per analysis frame."""

    frames: DiffTensor
    frame_hop: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[-2]

    @property
    def dim(self) -> int:
        return self.frames.shape[-1]


def _init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) / np.sqrt(fan_in)


def _as_batch(x) -> DiffTensor:
    """Waveform(s) or arrays to a ``[batch, time]`` tensor."""
    if isinstance(x, Waveform):
        x = x.samples
    t = tg.as_tensor(x)
    if t.ndim == 1:
        t = t.reshape(1, t.shape[0])
    return t


def _add_channel_bias(x: DiffTensor, bias: DiffTensor) -> DiffTensor:
    return x + tg.broadcast_to(bias.reshape(bias.shape[0], 1), x.shape)


class SeparationModel:
    """Encoder, (optionally FiLM-conditioned) masker and decoder."""

    def __init__(self, config: SeparatorConfig, seed: int = 0, prefix: str = "", store: ParameterStore | None = None):
        self.config = config
        self.params = store if store is not None else ParameterStore()
        self.prefix = prefix
        rng = np.random.default_rng(seed)
        c = config
        n, h, k = c.encoder_filters, c.masker_channels, c.kernel_size
        p = self._p
        self.params.add(p("encoder.weight"), _init(rng, (n, 1, k), k))
        self.params.add(p("masker.norm.gain"), np.ones(n))
        self.params.add(p("masker.norm.bias"), np.zeros(n))
        self.params.add(p("masker.in.weight"), _init(rng, (h, n, 1), n))
        for i in range(c.num_layers):
            self.params.add(p(f"masker.layer{i:02d}.weight"), _init(rng, (h, h, c.conv_width), h * c.conv_width))
            self.params.add(p(f"masker.layer{i:02d}.norm.gain"), np.ones(h))
            self.params.add(p(f"masker.layer{i:02d}.norm.bias"), np.zeros(h))
            self.params.add(p(f"masker.layer{i:02d}.prelu"), np.full(1, 0.25))
        heads = 1 if c.film_enabled else c.num_sources
        self.params.add(p("masker.out.weight"), _init(rng, (heads * n, h, 1), h))
        self.params.add(p("masker.out.bias"), np.zeros(heads * n))
        self.params.add(p("decoder.weight"), _init(rng, (n, 1, k), n))
        if c.film_enabled:
            sites = c.num_groups * h
            # zero init: gamma starts at exactly 1 and beta at exactly 0
            self.params.add(p("film.weight"), np.zeros((c.embed_dim, 2 * sites)))
            self.params.add(p("film.bias"), np.zeros(2 * sites))

    def _p(self, name: str) -> str:
        return self.prefix + name

    def w(self, name: str) -> DiffTensor:
        return self.params[self.prefix + name]

    # -- encoder / decoder ------------------------------------------------

    def encode(self, mixture) -> DiffTensor:
        x = _as_batch(mixture)
        if x.shape[-1] < self.config.kernel_size:
            raise tg.ShapeError(f"input of {x.shape[-1]} samples shorter than encoder kernel {self.config.kernel_size}")
        x = x.reshape(x.shape[0], 1, x.shape[1])
        return tg.relu(tg.conv1d(x, self.w("encoder.weight"), stride=self.config.stride))

    def num_frames(self, length: int) -> int:
        return (length - self.config.kernel_size) // self.config.stride + 1

    def decode(self, masked: DiffTensor, length: int) -> DiffTensor:
        """``[..., N, frames]`` to ``[..., length]`` by overlap-add."""
        lead = masked.shape[:-2]
        n, frames = masked.shape[-2:]
        flat = masked.reshape((-1, n, frames))
        out = tg.conv_transpose1d(flat, self.w("decoder.weight"), stride=self.config.stride, output_length=length)
        return out.reshape(lead + (length,))

    # -- masker -----------------------------------------------------------

    def _masker_trunk(self, feats: DiffTensor, film: FilmParams | None) -> DiffTensor:
        c = self.config
        h = tg.channel_layer_norm(feats, self.w("masker.norm.gain"), self.w("masker.norm.bias"))
        h = tg.conv1d(h, self.w("masker.in.weight"))
        for i, dil in enumerate(c.dilations):
            name = f"masker.layer{i:02d}"
            r = tg.conv1d(h, self.w(name + ".weight"), dilation=dil, causal=True)
            r = tg.channel_layer_norm(r, self.w(name + ".norm.gain"), self.w(name + ".norm.bias"))
            r = tg.prelu(r, self.w(name + ".prelu"))
            h = h + r
            if film is not None and (i + 1) % c.group_size == 0:
                site = i // c.group_size
                h = _apply_film(h, film.gamma[:, site, :], film.beta[:, site, :])
        logits = _add_channel_bias(tg.conv1d(h, self.w("masker.out.weight")), self.w("masker.out.bias"))
        return tg.sigmoid(logits)

    def separator_masks(self, feats: DiffTensor, film: FilmParams | None = None) -> DiffTensor:
        """Masks ``[batch, C, N, frames]`` with entries in (0, 1).

        Conditioned models run the shared masker once per source, each pass
        modulated by that source's FiLM parameters; ``film=None`` runs every
        pass unmodulated.
        """
        c = self.config
        b, n, frames = feats.shape
        if not c.film_enabled:
            if film is not None:
                raise ValueError("FiLM parameters given to an unconditioned separator")
            masks = self._masker_trunk(feats, None)
            return masks.reshape(b, c.num_sources, n, frames)
        rep = tg.broadcast_to(feats.reshape(b, 1, n, frames), (b, c.num_sources, n, frames))
        rep = rep.reshape(b * c.num_sources, n, frames)
        flat_film = None
        if film is not None:
            want = (b, c.num_sources, c.num_groups, c.masker_channels)
            if film.gamma.shape != want:
                raise tg.ShapeError(f"FiLM params shape {film.gamma.shape}, expected {want}")
            flat = (b * c.num_sources, c.num_groups, c.masker_channels)
            flat_film = FilmParams(film.gamma.reshape(flat), film.beta.reshape(flat))
        masks = self._masker_trunk(rep, flat_film)
        return masks.reshape(b, c.num_sources, n, frames)

    def film_generate(self, embeddings) -> FilmParams:
        """Affine map from speaker embeddings ``[batch, C, D]`` to FiLM params."""
        c = self.config
        if not c.film_enabled:
            raise ValueError("separator was built without FiLM")
        e = tg.as_tensor(_stack_embeddings(embeddings))
        if e.ndim == 2:
            e = e.reshape(1, *e.shape)
        b, n_src, dim = e.shape
        if n_src != c.num_sources:
            raise tg.ShapeError(f"expected {c.num_sources} embeddings, got {n_src}")
        if dim != c.embed_dim:
            raise tg.ShapeError(f"embedding dim {dim} != configured {c.embed_dim}")
        flat = e.reshape(b * n_src, dim) @ self.w("film.weight")
        flat = flat + tg.broadcast_to(self.w("film.bias").reshape(1, -1), flat.shape)
        sites = c.num_groups * c.masker_channels
        shape = (b, n_src, c.num_groups, c.masker_channels)
        gamma = (flat[:, :sites] + 1.0).reshape(shape)
        beta = flat[:, sites:].reshape(shape)
        return FilmParams(gamma, beta)

    # -- full passes ------------------------------------------------------

    def forward(self, mixture, film: FilmParams | None = None) -> DiffTensor:
        """Separate ``[batch, time]`` mixtures into ``[batch, C, time]`` estimates."""
        x = _as_batch(mixture)
        length = x.shape[-1]
        feats = self.encode(x)
        masks = self.separator_masks(feats, film)
        b, n_src, n, frames = masks.shape
        masked = masks * tg.broadcast_to(feats.reshape(b, 1, n, frames), masks.shape)
        return self.decode(masked, length)

    def conditioned_forward(self, mixture, embeddings) -> DiffTensor:
        return self.forward(mixture, self.film_generate(embeddings))

    def separate(self, mixture: Waveform, embeddings=None) -> list[Waveform]:
        with tg.no_grad():
            if embeddings is None:
                out = self.forward(mixture)
            else:
                out = self.conditioned_forward(mixture, embeddings)
        return [Waveform(row, mixture.sample_rate) for row in out.data[0]]


def _apply_film(h: DiffTensor, gamma: DiffTensor, beta: DiffTensor) -> DiffTensor:
    b, ch, frames = h.shape
    g = tg.broadcast_to(gamma.reshape(b, ch, 1), h.shape)
    s = tg.broadcast_to(beta.reshape(b, ch, 1), h.shape)
    return h * g + s


def _stack_embeddings(embeddings):
    if isinstance(embeddings, DiffTensor):
        return embeddings
    if isinstance(embeddings, (list, tuple)) and embeddings and isinstance(embeddings[0], SpeakerEmbedding):
        return np.stack([e.vector for e in embeddings])
    return np.asarray(embeddings, dtype=np.float64)


# ----------------------------------------------------------------------------
# fixed spectral representation (stand-in for a pretrained speech encoder)


def _mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def triangular_filterbank(num_bands: int, num_bins: int, sample_rate: int) -> np.ndarray:
    freqs = np.linspace(0, sample_rate / 2, num_bins)
    edges = _mel_inv(np.linspace(0.0, _mel(sample_rate / 2), num_bands + 2))
    bank = np.zeros((num_bands, num_bins))
    for i in range(num_bands):
        lo, mid, hi = edges[i : i + 3]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        bank[i] = np.maximum(0.0, np.minimum(up, down))
        if bank[i].sum() == 0:
            bank[i, np.argmin(np.abs(freqs - mid))] = 1.0
    return bank


@dataclass
class SpectralConfig:
    sample_rate: int = 16000
    win: int = 400
    hop: int = 160
    num_bands: int = 24
    # magnitude gain: a full-scale sinusoid of amplitude A maps to about A * gain
    gain: float = 0.1


class SpectralEmbedder:
    """Windowed DFT magnitude, ``log(1 + .)`` and triangular band pooling.

    Every step is a fixed linear map or a smooth pointwise function of the
    waveform, so the representation is differentiable but has no trainable
    parameters.
    """

    def __init__(self, config: SpectralConfig | None = None):
        self.config = config or SpectralConfig()
        c = self.config
        n_bins = c.win // 2 + 1
        window = np.hanning(c.win + 1)[:-1]
        t = np.arange(c.win)
        k = np.arange(n_bins)[:, None]
        norm = 2.0 * c.gain / window.sum()
        cos = np.cos(2 * np.pi * k * t / c.win) * window * norm
        sin = -np.sin(2 * np.pi * k * t / c.win) * window * norm
        self.n_bins = n_bins
        self.basis = DiffTensor(np.concatenate([cos, sin])[:, None, :])
        self.bank = DiffTensor(triangular_filterbank(c.num_bands, n_bins, c.sample_rate)[:, :, None])

    def num_frames(self, length: int) -> int:
        return (length - self.config.win) // self.config.hop + 1

    def embed_batch(self, x) -> DiffTensor:
        """``[batch, time]`` (or ``[..., time]``) to ``[..., M, D]``."""
        x = tg.as_tensor(x)
        if x.shape[-1] < self.config.win:
            raise tg.ShapeError(f"need at least {self.config.win} samples, got {x.shape[-1]}")
        lead = x.shape[:-1]
        flat = x.reshape(-1, 1, x.shape[-1])
        spec = tg.conv1d(flat, self.basis, stride=self.config.hop)
        re = spec[:, : self.n_bins, :]
        im = spec[:, self.n_bins :, :]
        power = tg.square(re) + tg.square(im)
        mag = tg.sqrt(power + 1e-12)
        bands = tg.conv1d(tg.log1p(mag), self.bank)
        out = tg.transpose(bands, (0, 2, 1))
        return out.reshape(lead + out.shape[1:])

    def __call__(self, waveform) -> EmbeddingSequence:
        samples = waveform.samples if isinstance(waveform, Waveform) else waveform
        frames = self.embed_batch(samples)
        return EmbeddingSequence(frames, self.config.hop)


_DEFAULT_SPECTRAL: SpectralEmbedder | None = None


def spectral_embed(waveform) -> EmbeddingSequence:
    global _DEFAULT_SPECTRAL
    if _DEFAULT_SPECTRAL is None:
        _DEFAULT_SPECTRAL = SpectralEmbedder()
    return _DEFAULT_SPECTRAL(waveform)


# ----------------------------------------------------------------------------
# speaker-identification embedder (stand-in for a pretrained verification net)


@dataclass
class SpeakerEmbedderConfig:
    embed_dim: int = 32
    hidden: int = 32
    width: int = 3
    spectral: SpectralConfig = field(default_factory=SpectralConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SpeakerEmbedderConfig":
        d = dict(d)
        d["spectral"] = SpectralConfig(**d.get("spectral", {}))
        return cls(**d)


class SpeakerEmbedder:
    """Conv stack over normalized spectral frames, mean-pooled to one vector."""

    def __init__(self, config: SpeakerEmbedderConfig | None = None, seed: int = 0, prefix: str = "", store=None):
        self.config = config or SpeakerEmbedderConfig()
        self.params = store if store is not None else ParameterStore()
        self.prefix = prefix
        self.spectral = SpectralEmbedder(self.config.spectral)
        rng = np.random.default_rng(seed)
        c = self.config
        d = c.spectral.num_bands
        add = self.params.add
        add(prefix + "si.norm.gain", np.ones(d))
        add(prefix + "si.norm.bias", np.zeros(d))
        add(prefix + "si.conv1.weight", _init(rng, (c.hidden, d, c.width), d * c.width))
        add(prefix + "si.conv1.bias", np.zeros(c.hidden))
        add(prefix + "si.conv2.weight", _init(rng, (c.embed_dim, c.hidden, c.width), c.hidden * c.width))
        add(prefix + "si.conv2.bias", np.zeros(c.embed_dim))

    def w(self, name: str) -> DiffTensor:
        return self.params[self.prefix + name]

    def embed_batch(self, x) -> DiffTensor:
        """``[..., time]`` to ``[..., embed_dim]``."""
        x = tg.as_tensor(x)
        lead = x.shape[:-1]
        feats = self.spectral.embed_batch(x.reshape(-1, x.shape[-1]))  # [B, M, D]
        h = tg.transpose(feats, (0, 2, 1))
        h = tg.channel_layer_norm(h, self.w("si.norm.gain"), self.w("si.norm.bias"))
        h = tg.relu(_add_channel_bias(tg.conv1d(h, self.w("si.conv1.weight")), self.w("si.conv1.bias")))
        h = tg.relu(_add_channel_bias(tg.conv1d(h, self.w("si.conv2.weight")), self.w("si.conv2.bias")))
        pooled = tg.reduce_mean(h, axis=-1)
        return pooled.reshape(lead + (self.config.embed_dim,))

    def __call__(self, waveform, hint: str | None = None) -> SpeakerEmbedding:
        samples = waveform.samples if isinstance(waveform, Waveform) else waveform
        with tg.no_grad():
            vec = self.embed_batch(np.asarray(samples)[None, :]).data[0]
        return SpeakerEmbedding(vec, hint)


def si_embed(waveform, embedder: SpeakerEmbedder) -> SpeakerEmbedding:
    return embedder(waveform)


# ----------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Versioned header, JSON metadata, then name-sorted float64 parameters."""
    meta_bytes = json.dumps({"kind": kind, **meta}, sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(meta_bytes)), meta_bytes]
    parts.append(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        encoded = name.encode()
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a sepkit checkpoint")
    try:
        version, meta_len = struct.unpack_from("<II", raw, 8)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        pos = 16
        meta = json.loads(raw[pos : pos + meta_len])
        pos += meta_len
        (count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos : pos + nlen].decode()
            pos += nlen
            (ndim,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            size = int(np.prod(shape)) * 8
            if pos + size > len(raw):
                raise CheckpointError(f"{path}: truncated parameter {name!r}")
            arrays[name] = np.frombuffer(raw[pos : pos + size], dtype="<f8").reshape(shape).astype(np.float64)
            pos += size
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    return meta, arrays


def save_separator(path, model: SeparationModel, extra: dict | None = None) -> None:
    meta = {"separator": model.config.to_dict(), **(extra or {})}
    save_checkpoint(path, "separator", meta, model.params.state_arrays())


def load_separator(path) -> SeparationModel:
    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "separator":
        raise CheckpointError(f"{path}: expected a separator checkpoint, found {meta.get('kind')!r}")
    model = SeparationModel(SeparatorConfig(**meta["separator"]))
    model.params.load_arrays(arrays)
    return model


def save_speaker_embedder(path, embedder: SpeakerEmbedder, extra: dict | None = None) -> None:
    meta = {"embedder": embedder.config.to_dict(), **(extra or {})}
    save_checkpoint(path, "speaker_embedder", meta, embedder.params.state_arrays())


def load_speaker_embedder(path) -> SpeakerEmbedder:
    meta, arrays = load_checkpoint(path)
    if meta.get("kind") != "speaker_embedder":
        raise CheckpointError(f"{path}: expected a speaker_embedder checkpoint, found {meta.get('kind')!r}")
    emb = SpeakerEmbedder(SpeakerEmbedderConfig.from_dict(meta["embedder"]))
    emb.params.load_arrays(arrays)
    return emb
