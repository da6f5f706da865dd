"""Training loops, the two-stage speaker-conditioned pipeline, evaluation and
the four-arm perceptual-loss ablation."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import losses
from . import tensorgrad as tg
from .datagen import DatasetManifest, MixtureExample
from .losses import LossConfig
from .metrics import EvalReport, EvalRow, leakage, si_snr, si_snri, stoi
from .models import (
    CheckpointError,
    SeparationModel,
    SeparatorConfig,
    SpeakerEmbedder,
    SpeakerEmbedderConfig,
    SpectralConfig,
    SpectralEmbedder,
    load_checkpoint,
    load_separator,
    load_speaker_embedder,
    save_checkpoint,
)
from .signals import Waveform, segment
from .tensorgrad import DiffTensor

log = logging.getLogger(__name__)

ABLATION_ARMS = (
    ("Basic loss (Conv-TasNet)", "basic"),
    ("Basic loss + D_pos", "pos_only"),
    ("Basic loss + D_neg", "neg_only"),
    ("Basic loss + D_pos + D_neg", "weighted_sum"),
)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 4
    segment_seconds: float = 3.0
    lr: float = 0.001
    patience: int = 10
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    refinement_iters: int = 0
    val_fraction: float = 0.1
    eval_stoi: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        # lr == 0 freezes the parameters (optimizer skipped); used for plateau probes
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.refinement_iters < 0:
            raise ValueError("refinement_iters must be >= 0")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    name: str
    train_loss: list[float] = field(default_factory=list)
    val_si_snr: list[float] = field(default_factory=list)
    val_si_snri: list[float] = field(default_factory=list)
    batch_hashes: list[str] = field(default_factory=list)
    stopping_epoch: int = 0
    best_epoch: int = 0
    final: EvalReport | None = None
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def metrics_dict(self) -> dict:
        """Everything except wall time: equal across identical runs."""
        return {
            "name": self.name,
            "train_loss": self.train_loss,
            "val_si_snr": self.val_si_snr,
            "val_si_snri": self.val_si_snri,
            "batch_hashes": self.batch_hashes,
            "stopping_epoch": self.stopping_epoch,
            "best_epoch": self.best_epoch,
            "final": None if self.final is None else self.final.to_dict(),
            "config": self.config,
        }

    def to_dict(self) -> dict:
        return {**self.metrics_dict(), "wall_time": self.wall_time}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        d = dict(d)
        final = d.pop("final", None)
        return cls(final=None if final is None else EvalReport.from_dict(final), **d)


class EarlyStopping:
    """Stop once the monitored value has not improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        if value > self.best:
            self.best = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


# ----------------------------------------------------------------------------
# data


@dataclass
class ArrayDataset:
    mixtures: np.ndarray  # [n, T]
    sources: np.ndarray  # [n, C, T]
    sample_rate: int
    origin: list[int]  # manifest entry of each segment

    def __len__(self) -> int:
        return self.mixtures.shape[0]

    def example(self, i: int) -> MixtureExample:
        rate = self.sample_rate
        return MixtureExample(
            Waveform(self.mixtures[i], rate), [Waveform(s, rate) for s in self.sources[i]], []
        )


def split_indices(manifest: DatasetManifest, fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Deterministic hash split; at least one entry lands on each side."""
    n = len(manifest)
    if n < 2:
        raise ValueError("need at least two manifest entries to split")
    keys = [hashlib.sha256(f"{seed}:{e.mix}".encode()).hexdigest() for e in manifest.entries]
    order = sorted(range(n), key=lambda i: keys[i])
    n_val = min(max(int(np.ceil(fraction * n)), 1), n - 1)
    return sorted(order[n_val:]), sorted(order[:n_val])


def build_dataset(examples: list[MixtureExample], indices, segment_seconds: float) -> ArrayDataset:
    """Cut examples into fixed-length training segments.

    Utterances shorter than one segment are kept whole; segments of
    different lengths cannot share a batch, so all kept pieces must agree.
    """
    mixes, srcs, origin = [], [], []
    rate = None
    for i in indices:
        ex = examples[i]
        rate = ex.mixture.sample_rate
        mix_segs = segment(ex.mixture, segment_seconds)
        if not mix_segs:
            mixes.append(ex.mixture.samples)
            srcs.append(np.stack([s.samples for s in ex.sources]))
            origin.append(i)
            continue
        src_segs = [segment(s, segment_seconds) for s in ex.sources]
        for k, seg in enumerate(mix_segs):
            mixes.append(seg.waveform.samples)
            srcs.append(np.stack([ss[k].waveform.samples for ss in src_segs]))
            origin.append(i)
    lengths = {m.shape[0] for m in mixes}
    if len(lengths) != 1:
        raise ValueError(f"segments have differing lengths {sorted(lengths)}; regenerate with one duration")
    return ArrayDataset(np.stack(mixes), np.stack(srcs), rate, origin)


def _examples_of(manifest) -> list[MixtureExample]:
    if isinstance(manifest, DatasetManifest):
        if len(manifest) == 0:
            raise ValueError("manifest is empty")
        return manifest.load_all()
    examples = list(manifest)
    if not examples:
        raise ValueError("no examples")
    return examples


def _batch_hash(indices) -> str:
    return hashlib.sha1(np.asarray(indices, dtype=np.int64).tobytes()).hexdigest()[:16]


# ----------------------------------------------------------------------------
# evaluation


def _threads() -> int:
    try:
        return max(int(os.environ.get("SEPKIT_THREADS", "1")), 1)
    except ValueError:
        return 1


def evaluate(
    separate_fn: Callable[[MixtureExample], list],
    examples: list[MixtureExample],
    model_name: str = "model",
    with_stoi: bool = True,
    parallel: bool = False,
) -> EvalReport:
    """Score ``separate_fn`` on each example after uPIT alignment.

    ``parallel`` (opt-in) scores examples on ``SEPKIT_THREADS`` worker
    threads; results are identical but ordering of floating-point work in
    BLAS may differ.
    """

    def score(index: int) -> EvalRow:
        ex = examples[index]
        est = [getattr(e, "samples", e) for e in separate_fn(ex)]
        refs = [s.samples for s in ex.sources]
        assign = losses.upit_assign(est, refs)
        rate = ex.mixture.sample_rate
        row = EvalRow(index, [], [], [], [])
        for i, j in enumerate(assign.permutation):
            row.si_snr.append(si_snr(refs[j], est[i]))
            row.si_snri.append(si_snri(ex.mixture.samples, refs[j], est[i]))
            if with_stoi:
                try:
                    row.stoi.append(stoi(refs[j], est[i], rate))
                except ValueError:
                    row.stoi.append(float("nan"))
            for k in range(len(refs)):
                if k != j:
                    row.leakage.append(leakage(est[i], refs[k]))
        return row

    indices = range(len(examples))
    if parallel and _threads() > 1:
        with ThreadPoolExecutor(_threads()) as pool:
            rows = list(pool.map(score, indices))
    else:
        rows = [score(i) for i in indices]
    return EvalReport(rows, model_name)


def _val_scores(forward: Callable[[np.ndarray], np.ndarray], data: ArrayDataset, batch_size: int):
    snr, snri = [], []
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        with tg.no_grad():
            est = forward(idx)
        for b, i in enumerate(idx):
            a = losses.upit_assign(est[b], data.sources[i])
            for k, j in enumerate(a.permutation):
                snr.append(si_snr(data.sources[i][j], est[b][k]))
                snri.append(si_snri(data.mixtures[i], data.sources[i][j], est[b][k]))
    return float(np.mean(snr)), float(np.mean(snri))


# ----------------------------------------------------------------------------
# generic loop


def _fit(
    name: str,
    params: tg.ParameterStore,
    forward: Callable[[np.ndarray, ArrayDataset], DiffTensor],
    train: ArrayDataset,
    val: ArrayDataset,
    config: TrainConfig,
    embedder: SpectralEmbedder | None,
    on_epoch: Callable[[int, tg.ParameterStore], None] | None = None,
) -> RunReport:
    report = RunReport(name, config=config.to_dict())
    stopper = EarlyStopping(config.patience)
    best_state = params.state_arrays()
    clean_emb = None
    if config.loss.mode != "basic":
        with tg.no_grad():
            clean_emb = embedder.embed_batch(train.sources).data
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train))
        digest = hashlib.sha1()
        losses_seen = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            digest.update(_batch_hash(idx).encode())
            est = forward(idx, train)
            parts = losses.objective(
                est, train.sources[idx], config.loss, embedder, None if clean_emb is None else clean_emb[idx]
            )
            value = parts.total.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"{name}: non-finite loss at epoch {epoch}, batch {start // config.batch_size} "
                    f"(basic={parts.basic}, perceptual={parts.perceptual})"
                )
            tg.backward(parts.total)
            if config.lr > 0:
                tg.adam_step(params, config.lr)
            params.zero_grad()
            losses_seen.append(value)
        report.batch_hashes.append(digest.hexdigest()[:16])
        report.train_loss.append(float(np.mean(losses_seen)))
        v_snr, v_snri = _val_scores(lambda i: forward(i, val).data, val, config.batch_size)
        report.val_si_snr.append(v_snr)
        report.val_si_snri.append(v_snri)
        if stopper.update(epoch, v_snr):
            best_state = params.state_arrays()
        log.info(
            "%s epoch %d loss %.4f val si-snr %.3f dB (si-snri %.3f)", name, epoch, report.train_loss[-1], v_snr, v_snri
        )
        report.stopping_epoch = epoch
        if on_epoch is not None:
            on_epoch(epoch, params)
        if stopper.should_stop:
            break
    params.load_arrays(best_state)
    report.best_epoch = stopper.best_epoch
    report.wall_time = time.perf_counter() - t0
    return report


def _prepare(manifest, config: TrainConfig):
    examples = _examples_of(manifest)
    if isinstance(manifest, DatasetManifest):
        train_idx, val_idx = split_indices(manifest, config.val_fraction, config.seed)
    else:
        n = len(examples)
        n_val = min(max(int(np.ceil(config.val_fraction * n)), 1), n - 1)
        val_idx = list(range(n - n_val, n))
        train_idx = list(range(n - n_val))
    train = build_dataset(examples, train_idx, config.segment_seconds)
    val = build_dataset(examples, val_idx, config.segment_seconds)
    return examples, train, val, [examples[i] for i in val_idx]


def default_spectral(rate: int) -> SpectralEmbedder:
    return SpectralEmbedder(SpectralConfig(sample_rate=rate))


def train_basic(
    manifest,
    config: TrainConfig,
    model_config: SeparatorConfig | None = None,
    name: str | None = None,
    on_epoch: Callable[[int, tg.ParameterStore], None] | None = None,
) -> tuple[SeparationModel, RunReport]:
    """uPIT training of the unconditioned separator with the configured loss mode.

    ``on_epoch(epoch, params)`` is called after each epoch's validation.
    """
    model_config = model_config or SeparatorConfig()
    if model_config.film_enabled:
        raise ValueError("train_basic expects an unconditioned separator config")
    _, train, val, val_examples = _prepare(manifest, config)
    model = SeparationModel(model_config, seed=config.seed)
    embedder = default_spectral(train.sample_rate) if config.loss.mode != "basic" else None
    report = _fit(
        name or config.loss.mode,
        model.params,
        lambda idx, data: model.forward(data.mixtures[idx]),
        train,
        val,
        config,
        embedder,
        on_epoch,
    )
    report.config["model"] = model_config.to_dict()
    report.final = evaluate(lambda ex: model.separate(ex.mixture), val_examples, report.name, config.eval_stoi)
    return model, report


# ----------------------------------------------------------------------------
# speaker embedder pretraining


def pretrain_speaker_embedder(
    manifest,
    config: SpeakerEmbedderConfig | None = None,
    epochs: int = 20,
    batch_size: int = 16,
    lr: float = 3e-3,
    seed: int = 0,
    val_fraction: float = 0.1,
) -> tuple[SpeakerEmbedder, dict]:
    """Train the embedder with a speaker-classification head on clean sources.

    The head is discarded afterwards.  Returns the embedder and a summary
    with held-out accuracy.
    """
    examples = _examples_of(manifest)
    if isinstance(manifest, DatasetManifest):
        train_idx, val_idx = split_indices(manifest, val_fraction, seed)
    else:
        n = len(examples)
        n_val = min(max(int(np.ceil(val_fraction * n)), 1), n - 1)
        train_idx, val_idx = list(range(n - n_val)), list(range(n - n_val, n))

    def clips(indices):
        xs, ys = [], []
        for i in indices:
            for src, spk in zip(examples[i].sources, examples[i].speaker_ids):
                xs.append(src.samples)
                ys.append(spk)
        return np.stack(xs), ys

    x_train, y_train = clips(train_idx)
    x_val, y_val = clips(val_idx)
    speakers = sorted(set(y_train) | set(y_val))
    label = {s: k for k, s in enumerate(speakers)}
    yt = np.array([label[s] for s in y_train])
    yv = np.array([label[s] for s in y_val])

    config = config or SpeakerEmbedderConfig()
    config.spectral.sample_rate = examples[0].mixture.sample_rate
    emb = SpeakerEmbedder(config, seed=seed)
    head = tg.ParameterStore()
    rng = np.random.default_rng(seed)
    head.add("head.weight", rng.standard_normal((config.embed_dim, len(speakers))) / np.sqrt(config.embed_dim))
    head.add("head.bias", np.zeros(len(speakers)))
    both = tg.ParameterStore()
    both.params = {**emb.params.params, **head.params}
    both.m = {**emb.params.m, **head.m}
    both.v = {**emb.params.v, **head.v}

    def logits(x):
        z = emb.embed_batch(x) @ head["head.weight"]
        return z + tg.broadcast_to(head["head.bias"].reshape(1, -1), z.shape)

    history = []
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(len(x_train))
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            loss = tg.cross_entropy(logits(x_train[idx]), yt[idx])
            tg.backward(loss)
            tg.adam_step(both, lr)
            both.zero_grad()
        with tg.no_grad():
            acc = float(np.mean(np.argmax(logits(x_val).data, axis=1) == yv))
        history.append(acc)
        log.info("speaker embedder epoch %d held-out accuracy %.3f", epoch + 1, acc)
    emb.params.freeze()
    return emb, {"val_accuracy": history[-1], "history": history, "speakers": speakers}


# ----------------------------------------------------------------------------
# speaker-conditioned pipeline


class ConditionedPipeline:
    """Basic separator -> speaker embedder -> FiLM-conditioned separator.

    With ``oracle`` the embeddings come from the clean sources instead of the
    basic model's estimates.
    """

    def __init__(
        self,
        basic: SeparationModel,
        embedder: SpeakerEmbedder,
        separator: SeparationModel,
        oracle: bool = False,
        refinement_iters: int = 0,
    ):
        if not separator.config.film_enabled:
            raise ValueError("conditioned separator must have film_enabled")
        if separator.config.embed_dim != embedder.config.embed_dim:
            raise CheckpointError(
                f"embedder dim {embedder.config.embed_dim} != separator embed_dim {separator.config.embed_dim}"
            )
        if separator.config.num_sources != basic.config.num_sources:
            raise CheckpointError("basic and conditioned separators disagree on num_sources")
        self.basic = basic
        self.embedder = embedder
        self.separator = separator
        self.oracle = oracle
        self.refinement_iters = refinement_iters

    def embed(self, signals: np.ndarray) -> np.ndarray:
        """``[..., C, T]`` signals to unit-norm ``[..., C, D]`` speaker embeddings."""
        return unit_embeddings(self.embedder, signals)

    def initial_estimates(self, mixtures: np.ndarray) -> np.ndarray:
        with tg.no_grad():
            return self.basic.forward(mixtures).data

    def separate(self, example_or_mixture, sources=None) -> list[Waveform]:
        if isinstance(example_or_mixture, MixtureExample):
            mixture = example_or_mixture.mixture
            sources = [s.samples for s in example_or_mixture.sources]
        else:
            mixture = example_or_mixture
        if self.oracle:
            if sources is None:
                raise ValueError("oracle pipeline needs the clean sources")
            emb = self.embed(np.stack([getattr(s, "samples", s) for s in sources]))
            return self.separator.separate(mixture, emb[None])
        return recurrent_refine(mixture, self, self.embedder, 1 + self.refinement_iters)

    def save(self, path, extra: dict | None = None) -> None:
        arrays = {}
        for prefix, store in (("basic.", self.basic.params), ("spk.", self.embedder.params), ("cond.", self.separator.params)):
            for k, v in store.state_arrays().items():
                arrays[prefix + k] = v
        meta = {
            "basic": self.basic.config.to_dict(),
            "embedder": self.embedder.config.to_dict(),
            "separator": self.separator.config.to_dict(),
            "oracle": self.oracle,
            "refinement_iters": self.refinement_iters,
            **(extra or {}),
        }
        save_checkpoint(path, "conditioned", meta, arrays)

    @classmethod
    def load(cls, path) -> "ConditionedPipeline":
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "conditioned":
            raise CheckpointError(f"{path}: expected a conditioned checkpoint, found {meta.get('kind')!r}")
        basic = SeparationModel(SeparatorConfig(**meta["basic"]))
        emb = SpeakerEmbedder(SpeakerEmbedderConfig.from_dict(meta["embedder"]))
        sep = SeparationModel(SeparatorConfig(**meta["separator"]))
        for prefix, store in (("basic.", basic.params), ("spk.", emb.params), ("cond.", sep.params)):
            store.load_arrays({k[len(prefix) :]: v for k, v in arrays.items() if k.startswith(prefix)})
        basic.params.freeze()
        emb.params.freeze()
        return cls(basic, emb, sep, meta.get("oracle", False), meta.get("refinement_iters", 0))


def unit_embeddings(embedder: SpeakerEmbedder, signals: np.ndarray) -> np.ndarray:
    """Speaker embeddings scaled to unit norm before they reach the FiLM generator."""
    with tg.no_grad():
        v = embedder.embed_batch(signals).data
    # raw embeddings have norms near 20, which makes early FiLM steps far too large
    return v / (np.linalg.norm(v, axis=-1, keepdims=True) + 1e-12)


def recurrent_refine(mixture: Waveform, pipeline: ConditionedPipeline, si_embedder: SpeakerEmbedder, passes: int):
    """Separate, re-embed the outputs, re-condition; ``passes`` conditioned passes in total."""
    if passes < 1:
        raise ValueError("need at least one conditioned pass")
    est = pipeline.initial_estimates(mixture.samples[None])[0]
    for _ in range(passes):
        out = pipeline.separator.separate(mixture, unit_embeddings(si_embedder, est)[None])
        est = np.stack([w.samples for w in out])
    return [Waveform(row, mixture.sample_rate) for row in est]


def conditioned_config(basic: SeparatorConfig, embed_dim: int) -> SeparatorConfig:
    d = basic.to_dict()
    d.update(film_enabled=True, embed_dim=embed_dim)
    return SeparatorConfig(**d)


def warm_start(separator: SeparationModel, basic: SeparationModel) -> bool:
    """Copy the basic model's weights into a FiLM separator of the same size.

    The single conditioned mask head starts as the mean of the basic heads.
    Together with the identity FiLM this means training starts from a working
    separator.  Returns False (and copies nothing) when the sizes differ.
    """
    c = basic.config
    if conditioned_config(c, separator.config.embed_dim) != separator.config:
        return False
    n = c.encoder_filters
    for name, p in basic.params:
        if name.startswith("masker.out."):
            heads = p.data.reshape((c.num_sources, n) + p.shape[1:])
            separator.params[name].data = heads.mean(axis=0)
        else:
            separator.params[name].data = p.data.copy()
    return True


def train_conditioned(
    manifest,
    config: TrainConfig,
    basic,
    si_embedder,
    model_config: SeparatorConfig | None = None,
    oracle: bool = False,
    name: str = "conditioned",
) -> tuple[ConditionedPipeline, RunReport]:
    """Train FiLM generator and conditioned separator jointly; basic model and embedder stay frozen.

    ``basic`` and ``si_embedder`` may be models or checkpoint paths.
    """
    if not isinstance(basic, SeparationModel):
        basic = load_separator(basic)
    if not isinstance(si_embedder, SpeakerEmbedder):
        si_embedder = load_speaker_embedder(si_embedder)
    if basic.config.film_enabled:
        raise CheckpointError("basic model checkpoint is FiLM-conditioned")
    model_config = model_config or conditioned_config(basic.config, si_embedder.config.embed_dim)
    basic.params.freeze()
    si_embedder.params.freeze()
    sep = SeparationModel(model_config, seed=config.seed + 1)
    warm = warm_start(sep, basic)
    pipeline = ConditionedPipeline(basic, si_embedder, sep, oracle, config.refinement_iters)
    _, train, val, val_examples = _prepare(manifest, config)

    def conditions(data: ArrayDataset) -> np.ndarray:
        if oracle:
            return pipeline.embed(data.sources)
        out = []
        for start in range(0, len(data), config.batch_size):
            chunk = data.mixtures[start : start + config.batch_size]
            out.append(pipeline.embed(pipeline.initial_estimates(chunk)))
        return np.concatenate(out)

    cond = {id(train): conditions(train), id(val): conditions(val)}
    embedder = default_spectral(train.sample_rate) if config.loss.mode != "basic" else None
    report = _fit(
        name,
        sep.params,
        lambda idx, data: sep.conditioned_forward(data.mixtures[idx], cond[id(data)][idx]),
        train,
        val,
        config,
        embedder,
    )
    report.config["model"] = model_config.to_dict()
    report.config["oracle"] = oracle
    report.config["warm_start"] = warm
    report.final = evaluate(pipeline.separate, val_examples, name, config.eval_stoi)
    return pipeline, report


# ----------------------------------------------------------------------------
# evaluation from checkpoints, ablation


def load_any(path):
    meta, _ = load_checkpoint(path)
    kind = meta.get("kind")
    if kind == "separator":
        return load_separator(path)
    if kind == "conditioned":
        return ConditionedPipeline.load(path)
    raise CheckpointError(f"{path}: cannot evaluate a {kind!r} checkpoint")


def evaluate_model(checkpoint, manifest, with_stoi: bool = True, parallel: bool = False) -> EvalReport:
    model = load_any(checkpoint) if not isinstance(checkpoint, (SeparationModel, ConditionedPipeline)) else checkpoint
    examples = _examples_of(manifest)
    if isinstance(model, SeparationModel):
        fn = lambda ex: model.separate(ex.mixture)  # noqa: E731
        name = "basic"
    else:
        fn = model.separate
        name = "conditioned"
    return evaluate(fn, examples, name, with_stoi, parallel)


@dataclass
class AblationResult:
    reports: list[RunReport]
    table: list[dict]
    models: list[SeparationModel]

    def write_csv(self, path) -> None:
        write_table_csv(self.table, path)


def write_table_csv(table: list[dict], path) -> None:
    """One row per ablation arm in fixed order; metrics use fixed 6-decimal formatting."""
    cols = ["model", "si_snr_db", "stoi", "si_snri_db", "leakage_db"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in table:
            w.writerow([row["model"]] + [f"{row[c]:.6f}" for c in cols[1:]])


def table_row(label: str, report: EvalReport) -> dict:
    agg = report.aggregates()
    return {
        "model": label,
        "si_snr_db": agg["mean_si_snr"],
        "stoi": agg["mean_stoi"],
        "si_snri_db": agg["mean_si_snri"],
        "leakage_db": agg["median_leakage"],
    }


def run_ablation(
    manifest,
    base_config: TrainConfig,
    model_config: SeparatorConfig | None = None,
) -> AblationResult:
    """Train the four loss arms with identical seed, initialization and batch order."""
    reports, table, models = [], [], []
    for label, mode in ABLATION_ARMS:
        loss_cfg = LossConfig(**{**base_config.loss.to_dict(), "mode": mode})
        cfg = TrainConfig(**{**base_config.to_dict(), "loss": loss_cfg})
        model, report = train_basic(manifest, cfg, model_config, name=mode)
        models.append(model)
        reports.append(report)
        table.append(table_row(label, report.final))
    return AblationResult(reports, table, models)
