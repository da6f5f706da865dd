import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepkit import tensorgrad as tg
from sepkit.losses import (
    LossConfig,
    batch_distances,
    combined_loss,
    dist_neg,
    dist_pos,
    objective,
    pairwise_distances,
    perc_triplet,
    perc_weighted_sum,
    perceptual_loss,
    si_snr_loss,
    upit_assign,
)
from sepkit.metrics import si_snr
from sepkit.models import EmbeddingSequence, SpectralConfig, SpectralEmbedder
from sepkit.tensorgrad import DiffTensor


def _brute_force(est, tgt):
    best, best_perm = -np.inf, None
    for perm in itertools.permutations(range(len(est))):
        score = np.mean([si_snr(tgt[p], est[i]) for i, p in enumerate(perm)])
        if score > best:
            best, best_perm = score, perm
    return best_perm


def test_upit_identity_and_swap():
    rng = np.random.default_rng(0)
    tgt = rng.standard_normal((2, 200))
    assert upit_assign(tgt, tgt).permutation == (0, 1)
    assert upit_assign(tgt[::-1], tgt).permutation == (1, 0)


@pytest.mark.parametrize("c", [2, 3])
def test_upit_matches_brute_force(c):
    rng = np.random.default_rng(c)
    for _ in range(25):
        tgt = rng.standard_normal((c, 64))
        est = tgt[rng.permutation(c)] + rng.standard_normal((c, 64))
        assert upit_assign(est, tgt).permutation == _brute_force(est, tgt)


def test_upit_rejects_mismatch():
    with pytest.raises(ValueError):
        upit_assign(np.zeros((2, 10)), np.ones((3, 10)))


def test_si_snr_loss_perfect_and_consistent():
    rng = np.random.default_rng(1)
    tgt = rng.standard_normal((2, 100))
    a = upit_assign(tgt, tgt)
    assert si_snr_loss(DiffTensor(tgt), tgt, a).item() <= -100
    est = tgt[::-1] + 0.5 * rng.standard_normal((2, 100))
    a = upit_assign(est, tgt)
    expected = -np.mean([si_snr(tgt[j], est[i]) for i, j in enumerate(a.permutation)])
    assert abs(si_snr_loss(DiffTensor(est), tgt, a).item() - expected) < 1e-9


def _seq(frames):
    return EmbeddingSequence(DiffTensor(np.asarray(frames, dtype=float)), 160)


def test_dist_pos_values():
    a = _seq(np.random.default_rng(2).standard_normal((5, 3)))
    assert dist_pos(a, a).item() == 0.0
    assert dist_pos(_seq([[0.0, 0.0]]), _seq([[3.0, 4.0]])).item() == 12.5
    b = _seq(np.random.default_rng(3).standard_normal((5, 3)))
    assert dist_pos(a, b).item() == dist_pos(b, a).item()


def test_dist_neg_values():
    a = _seq(np.random.default_rng(4).standard_normal((4, 2)))
    assert dist_neg(a, [a, a]).item() == 0.0
    assert dist_neg(_seq([[0.0, 0.0]]), [_seq([[3.0, 4.0]])]).item() == 12.5
    u = _seq(np.random.default_rng(5).standard_normal((4, 2)))
    v = _seq(np.random.default_rng(6).standard_normal((4, 2)))
    assert dist_neg(a, [u, v]).item() == pytest.approx(dist_neg(a, [u]).item() + dist_neg(a, [v]).item(), abs=1e-12)
    with pytest.raises(ValueError):
        dist_neg(a, [])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_distances_nonnegative_and_pairwise_consistent(seed):
    rng = np.random.default_rng(seed)
    clean = rng.standard_normal((3, 4, 2))
    est = rng.standard_normal((3, 4, 2))
    pos, neg = pairwise_distances(DiffTensor(clean), DiffTensor(est))
    for i in range(3):
        others = [_seq(est[j]) for j in range(3) if j != i]
        assert pos.data[i] == pytest.approx(dist_pos(_seq(clean[i]), _seq(est[i])).item(), abs=1e-12)
        assert neg.data[i] == pytest.approx(dist_neg(_seq(clean[i]), others).item(), abs=1e-12)
    assert np.all(pos.data >= 0) and np.all(neg.data >= 0)


def test_batch_distances():
    d_pos, d_neg = batch_distances([DiffTensor(0.3)], [DiffTensor(0.7)])
    assert (d_pos.item(), d_neg.item()) == (0.3, 0.7)
    d_pos, _ = batch_distances([2.0, 4.0], [1.0, 1.0])
    assert d_pos.item() == 3.0
    a, _ = batch_distances([1.0, 5.0, 2.5], [0.0, 0.0, 0.0])
    b, _ = batch_distances([2.5, 1.0, 5.0], [0.0, 0.0, 0.0])
    assert a.item() == b.item()


def test_weighted_sum_paper_weights():
    cfg = LossConfig.paper("weighted_sum")
    value = perc_weighted_sum(0.01, 0.1, cfg).item()
    assert abs(value - (1 + 0.001 / (0.1 + cfg.eps_inv))) < 1e-9


def test_weighted_sum_without_neg_term_is_pos_only():
    cfg = LossConfig(mode="weighted_sum", lambda2=0.0)
    pos_cfg = LossConfig(mode="pos_only")
    assert perc_weighted_sum(0.02, 0.3, cfg).item() == perceptual_loss([0.02], [0.3], pos_cfg).item()


def test_weighted_sum_decreases_in_neg_distance():
    cfg = LossConfig.paper("weighted_sum")
    d_neg = DiffTensor(0.05, requires_grad=True)
    tg.backward(perc_weighted_sum(DiffTensor(0.01), d_neg, cfg))
    assert d_neg.grad < 0


def test_triplet_values():
    cfg = LossConfig.paper("triplet_like")
    assert perc_triplet([0.001], [0.01], cfg).item() == 0.0
    assert abs(perc_triplet([0.01], [0.005], cfg).item() - 0.0085) < 1e-12
    assert perc_triplet([0.2], [0.2], LossConfig(mode="triplet_like", alpha=0.0)).item() == 0.0


def test_triplet_kink_subgradient_is_zero():
    cfg = LossConfig(mode="triplet_like", alpha=0.0)
    pos = DiffTensor(np.array([0.5]), requires_grad=True)
    tg.backward(perc_triplet(pos, DiffTensor(np.array([0.5])), cfg))
    assert pos.grad[0] == 0.0


def test_combined_loss_settings():
    basic, perc = DiffTensor(-3.0), DiffTensor(0.5)
    assert combined_loss(basic, perc, LossConfig(mode="pos_only", lambda_p=0.0)).item() == -3.0
    assert combined_loss(basic, perc, LossConfig.paper("weighted_sum")).item() == -2.5
    assert combined_loss(basic, perc, LossConfig.paper("triplet_like")).item() == -3.0 + 300 * 0.5
    with pytest.raises(ValueError):
        combined_loss(basic, perc, LossConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(mode="nope")
    with pytest.raises(ValueError):
        LossConfig(lambda1=-1.0)


def test_objective_aligns_perceptual_pairs_with_upit():
    rng = np.random.default_rng(7)
    emb = SpectralEmbedder(SpectralConfig(sample_rate=8000, win=32, hop=16, num_bands=6))
    tgt = rng.standard_normal((1, 2, 128))
    est = DiffTensor(tgt[:, ::-1] + 0.01 * rng.standard_normal((1, 2, 128)))
    parts = objective(est, tgt, LossConfig(mode="pos_only"), emb)
    assert parts.assignments[0].permutation == (1, 0)
    # matched estimates are near their targets, so the attraction term is small
    matched = tgt[0][::-1]
    leveled = est.data[0] * np.linalg.norm(matched, axis=-1, keepdims=True) / np.linalg.norm(est.data[0], axis=-1, keepdims=True)
    clean = emb.embed_batch(matched).data
    own = emb.embed_batch(leveled).data
    expected = np.mean(np.sum((clean - own) ** 2, axis=(-2, -1)) / clean.shape[-1]) * 100
    assert parts.perceptual == pytest.approx(expected, rel=1e-9)


def test_objective_needs_embedder_for_perceptual_modes():
    with pytest.raises(ValueError):
        objective(DiffTensor(np.ones((1, 2, 50))), np.random.default_rng(0).standard_normal((1, 2, 50)), LossConfig(mode="neg_only"))


@pytest.mark.parametrize("mode", ["pos_only", "neg_only", "weighted_sum"])
def test_perceptual_term_ignores_estimate_gain(mode):
    rng = np.random.default_rng(8)
    emb = SpectralEmbedder(SpectralConfig(sample_rate=8000, win=32, hop=16, num_bands=6))
    tgt = rng.standard_normal((2, 2, 128))
    est = tgt + 0.5 * rng.standard_normal((2, 2, 128))
    cfg = LossConfig.paper(mode)
    base = objective(DiffTensor(est), tgt, cfg, emb).perceptual
    louder = objective(DiffTensor(3.0 * est), tgt, cfg, emb).perceptual
    assert louder == pytest.approx(base, rel=1e-9)
    raw = LossConfig(mode=mode, level_match=False)
    assert objective(DiffTensor(3.0 * est), tgt, raw, emb).perceptual != pytest.approx(objective(DiffTensor(est), tgt, raw, emb).perceptual)
