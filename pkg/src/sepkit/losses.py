"""Training objectives: uPIT SI-SNR loss, positive/negative embedding distances,
the weighted-sum and triplet-like perceptual losses, and their combination."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import metrics
from . import tensorgrad as tg
from .models import EmbeddingSequence
from .tensorgrad import DiffTensor

LOSS_MODES = ("basic", "pos_only", "neg_only", "weighted_sum", "triplet_like")
SI_SNR_EPS = metrics.EPS
_DB = 10.0 / math.log(10.0)


@dataclass
class LossConfig:
    mode: str = "basic"
    lambda_b: float = 1.0
    lambda_p: float = 1.0
    lambda1: float = 100.0
    lambda2: float = 0.001
    alpha: float = 0.0035
    eps_inv: float = 1e-8
    # rescale each estimate to its matched target's energy before embedding
    level_match: bool = True

    def __post_init__(self):
        if self.mode not in LOSS_MODES:
            raise ValueError(f"unknown loss mode {self.mode!r}; expected one of {LOSS_MODES}")
        for name in ("lambda_b", "lambda_p", "lambda1", "lambda2", "alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.eps_inv <= 0:
            raise ValueError("eps_inv must be positive")

    @classmethod
    def paper(cls, mode: str) -> "LossConfig":
        """Published weights: (1, 1, 100, 0.001) for weighted-sum, (1, 300, alpha=0.0035) for triplet-like."""
        if mode == "triplet_like":
            return cls(mode=mode, lambda_b=1.0, lambda_p=300.0, alpha=0.0035)
        return cls(mode=mode, lambda_b=1.0, lambda_p=1.0, lambda1=100.0, lambda2=0.001)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PermutationAssignment:
    """``permutation[i]`` is the (0-based) target matched to estimate ``i``."""

    permutation: tuple[int, ...]
    matrix: np.ndarray  # matrix[i, j] = si_snr(target j, estimate i)
    best_mean: float


def _rows(x) -> list[np.ndarray]:
    if isinstance(x, DiffTensor):
        x = x.data
    if isinstance(x, np.ndarray):
        return list(x)
    return [getattr(w, "samples", w) for w in x]


def upit_assign(estimates, targets) -> PermutationAssignment:
    """Exhaustive search over all C! assignments maximizing mean SI-SNR.

    Ties go to the lexicographically smallest permutation.
    """
    est = _rows(estimates)
    tgt = _rows(targets)
    if len(est) != len(tgt):
        raise ValueError(f"{len(est)} estimates vs {len(tgt)} targets")
    lengths = {len(r) for r in est} | {len(r) for r in tgt}
    if len(lengths) != 1:
        raise ValueError(f"all signals must share one length, got {sorted(lengths)}")
    c = len(est)
    matrix = np.array([[metrics.si_snr(tgt[j], est[i]) for j in range(c)] for i in range(c)])
    best, best_perm = -np.inf, None
    for perm in itertools.permutations(range(c)):
        score = matrix[np.arange(c), perm].mean()
        if score > best:
            best, best_perm = score, perm
    return PermutationAssignment(tuple(best_perm), matrix, float(best))


def si_snr_tensor(estimate: DiffTensor, reference) -> DiffTensor:
    """Differentiable SI-SNR (dB) along the last axis; ``reference`` is constant."""
    ref = reference.data if isinstance(reference, DiffTensor) else np.asarray(reference, dtype=np.float64)
    if ref.shape != estimate.shape:
        raise tg.ShapeError(f"si_snr: estimate {estimate.shape} vs reference {ref.shape}")
    ref_c = ref - ref.mean(axis=-1, keepdims=True)
    energy = np.sum(ref_c * ref_c, axis=-1, keepdims=True)
    if np.any(energy == 0):
        raise ValueError("reference has zero energy")
    shape = estimate.shape
    keep = shape[:-1] + (1,)
    est_c = estimate - tg.broadcast_to(tg.reduce_mean(estimate, axis=-1, keepdims=True), shape)
    coef = tg.reduce_sum(est_c * DiffTensor(ref_c), axis=-1, keepdims=True) * DiffTensor(1.0 / energy)
    proj = tg.broadcast_to(coef.reshape(keep), shape) * DiffTensor(ref_c)
    noise = est_c - proj
    floor = tg.reduce_sq_l2(est_c, axis=-1) * SI_SNR_EPS + metrics.TINY
    num = tg.reduce_sq_l2(proj, axis=-1) + floor
    den = tg.reduce_sq_l2(noise, axis=-1) + floor
    return tg.log(num / den) * _DB


def align_targets(targets: np.ndarray, permutation) -> np.ndarray:
    """Reorder ``[C, T]`` targets so row ``i`` is the target matched to estimate ``i``."""
    return np.asarray(targets)[list(permutation)]


def si_snr_loss(estimates: DiffTensor, targets, assignment) -> DiffTensor:
    """Negative mean SI-SNR of uPIT-matched pairs.

    ``estimates`` is ``[C, T]`` with one assignment, or ``[B, C, T]`` with a
    list of assignments (one per example).
    """
    tgt = np.asarray(targets.data if isinstance(targets, DiffTensor) else _stack(targets), dtype=np.float64)
    if estimates.shape != tgt.shape:
        raise ValueError(f"estimates {estimates.shape} vs targets {tgt.shape}")
    if estimates.ndim == 2:
        aligned = align_targets(tgt, assignment.permutation)
    else:
        aligned = np.stack([align_targets(t, a.permutation) for t, a in zip(tgt, assignment)])
    return -tg.reduce_mean(si_snr_tensor(estimates, aligned))


def _stack(x):
    return np.stack(_rows(x))


def _frames_of(seq) -> DiffTensor:
    return seq.frames if isinstance(seq, EmbeddingSequence) else tg.as_tensor(seq)


def _frame_distance(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """sum_m (1/D) ||a_m - b_m||^2 over the last two axes ``[M, D]``."""
    if a.shape != b.shape:
        raise tg.ShapeError(f"embedding sequences differ in shape: {a.shape} vs {b.shape}")
    dim = a.shape[-1]
    return tg.reduce_sq_l2(a - b, axis=(-2, -1)) * (1.0 / dim)


def dist_pos(clean, est) -> DiffTensor:
    """Attraction between a clean target and its matched estimate."""
    return _frame_distance(_frames_of(clean), _frames_of(est))


def dist_neg(clean, est_others) -> DiffTensor:
    """Repulsion: summed distance from clean source ``i`` to every estimate ``j != i``."""
    others = list(est_others)
    if not others:
        raise ValueError("dist_neg needs at least one non-target estimate")
    c = _frames_of(clean)
    total = _frame_distance(c, _frames_of(others[0]))
    for o in others[1:]:
        total = total + _frame_distance(c, _frames_of(o))
    return total


def pairwise_distances(clean: DiffTensor, est: DiffTensor) -> tuple[DiffTensor, DiffTensor]:
    """Vectorized positive and negative distances for aligned ``[..., C, M, D]`` embeddings.

    Returns two ``[..., C]`` tensors; entry ``i`` pairs clean ``i`` with
    estimate ``i`` (positive) or with every estimate ``j != i`` (negative).
    """
    c = clean.shape[-3]
    pos = _frame_distance(clean, est)
    neg = None
    for shift in range(1, c):
        idx = [(i + shift) % c for i in range(c)]
        rolled = est[(Ellipsis, idx, slice(None), slice(None))]
        term = _frame_distance(clean, rolled)
        neg = term if neg is None else neg + term
    return pos, neg


def _flat_terms(terms) -> DiffTensor:
    if isinstance(terms, DiffTensor):
        t = terms
    else:
        items = [tg.as_tensor(x).reshape(1) for x in terms]
        if not items:
            raise ValueError("empty batch")
        t = tg.concat(items)
    if t.size == 0:
        raise ValueError("empty batch")
    return t.reshape(t.size)


def batch_distances(pos_terms, neg_terms) -> tuple[DiffTensor, DiffTensor]:
    """Minibatch means of the per-example distances."""
    return tg.reduce_mean(_flat_terms(pos_terms)), tg.reduce_mean(_flat_terms(neg_terms))


def perc_weighted_sum(d_pos, d_neg, config: LossConfig) -> DiffTensor:
    d_pos, d_neg = tg.as_tensor(d_pos), tg.as_tensor(d_neg)
    return d_pos * config.lambda1 + tg.reciprocal(d_neg + config.eps_inv) * config.lambda2


def perc_triplet(pos_terms, neg_terms, config: LossConfig) -> DiffTensor:
    """Mean hinge ``max(0, pos - neg + alpha)`` over the batch."""
    pos = _flat_terms(pos_terms)
    neg = _flat_terms(neg_terms)
    return tg.reduce_mean(tg.relu(pos - neg + config.alpha))


def perceptual_loss(pos_terms, neg_terms, config: LossConfig) -> DiffTensor | None:
    """The perceptual term selected by ``config.mode`` (None for ``basic``)."""
    if config.mode == "basic":
        return None
    if config.mode == "triplet_like":
        return perc_triplet(pos_terms, neg_terms, config)
    d_pos, d_neg = batch_distances(pos_terms, neg_terms)
    if config.mode == "pos_only":
        return d_pos * config.lambda1
    if config.mode == "neg_only":
        return tg.reciprocal(d_neg + config.eps_inv) * config.lambda2
    return perc_weighted_sum(d_pos, d_neg, config)


def combined_loss(l_basic: DiffTensor, l_perc: DiffTensor | None, config: LossConfig) -> DiffTensor:
    """``lambda_b * L_basic + lambda_p * L_perc``."""
    if config.mode == "basic":
        if l_perc is not None:
            raise ValueError("basic mode takes no perceptual term")
        return l_basic * config.lambda_b
    if l_perc is None:
        raise ValueError(f"mode {config.mode!r} requires a perceptual term")
    return l_basic * config.lambda_b + l_perc * config.lambda_p


@dataclass
class ObjectiveParts:
    total: DiffTensor
    basic: float
    perceptual: float | None
    assignments: list[PermutationAssignment]


def _match_levels(estimates: DiffTensor, targets: np.ndarray, perms) -> DiffTensor:
    """Scale estimate ``i`` to the energy of its matched target.

    The SI-SNR term ignores output gain, so without this the distances
    could be moved by loudness alone rather than by what the estimate contains.
    """
    matched = np.stack([t[p] for t, p in zip(targets, perms)])
    ref = np.sum(matched**2, axis=-1, keepdims=True)
    energy = tg.reduce_sq_l2(estimates, axis=-1, keepdims=True)
    norm = tg.sqrt(energy + DiffTensor(ref * SI_SNR_EPS + metrics.TINY))
    gain = DiffTensor(np.sqrt(ref)) / norm
    return estimates * tg.broadcast_to(gain, estimates.shape)


def objective(estimates: DiffTensor, targets: np.ndarray, config: LossConfig, embedder=None, clean_embeddings=None):
    """Full training objective for a ``[B, C, T]`` batch.

    uPIT fixes the estimate/target pairing first; the perceptual distances
    are then computed on the matched pairs.  ``clean_embeddings`` may carry
    precomputed ``[B, C, M, D]`` target embeddings (in original target order).
    """
    targets = np.asarray(targets, dtype=np.float64)
    assignments = [upit_assign(e, t) for e, t in zip(estimates.data, targets)]
    l_basic = si_snr_loss(estimates, targets, assignments)
    l_perc = None
    if config.mode != "basic":
        if embedder is None:
            raise ValueError(f"mode {config.mode!r} needs an embedder")
        if clean_embeddings is None:
            with tg.no_grad():
                clean_embeddings = embedder.embed_batch(targets).data
        perms = [list(a.permutation) for a in assignments]
        clean = np.stack([np.asarray(ce)[p] for ce, p in zip(clean_embeddings, perms)])
        est_emb = embedder.embed_batch(_match_levels(estimates, targets, perms) if config.level_match else estimates)
        pos, neg = pairwise_distances(DiffTensor(clean), est_emb)
        l_perc = perceptual_loss(pos, neg, config)
    total = combined_loss(l_basic, l_perc, config)
    return ObjectiveParts(total, l_basic.item(), None if l_perc is None else l_perc.item(), assignments)
