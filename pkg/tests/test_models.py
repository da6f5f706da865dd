import numpy as np
import pytest

from sepkit import tensorgrad as tg
from sepkit.gradcheck import check_directional, check_inputs, tiny_separator_config
from sepkit.models import (
    CheckpointError,
    FilmParams,
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
    save_separator,
    save_speaker_embedder,
    si_embed,
    spectral_embed,
)
from sepkit.signals import Waveform
from sepkit.tensorgrad import DiffTensor


def _mix(n=160, seed=0):
    return np.random.default_rng(seed).standard_normal(n) * 0.1


def test_config_invariants():
    with pytest.raises(ValueError):
        SeparatorConfig(num_layers=6, group_size=4)
    with pytest.raises(ValueError):
        SeparatorConfig(num_layers=4, group_size=2, dilations=[2, 4, 1, 2])
    with pytest.raises(ValueError):
        SeparatorConfig(num_layers=4, group_size=2, dilations=[1, 1, 1, 2])
    cfg = SeparatorConfig()
    assert cfg.dilations == [1, 2, 4, 8, 1, 2, 4, 8]
    assert cfg.stride == cfg.kernel_size // 2


def test_encode_zero_input_and_frame_count():
    model = SeparationModel(tiny_separator_config())
    assert np.array_equal(model.encode(np.zeros(64)).data, np.zeros((1, 8, 15)))
    for t in (8, 9, 40, 63):
        assert model.encode(_mix(t)).shape[-1] == (t - 8) // 4 + 1 == model.num_frames(t)


def test_encode_gradient():
    model = SeparationModel(tiny_separator_config(), seed=1)
    w = np.random.default_rng(0).standard_normal((1, 8, 15))
    assert check_inputs(lambda x: tg.reduce_sum(model.encode(x) * DiffTensor(w)), [_mix(64)]) < 1e-5


def test_masks_in_unit_interval():
    model = SeparationModel(tiny_separator_config(), seed=2)
    masks = model.separator_masks(model.encode(_mix(200)))
    assert masks.shape == (1, 2, 8, 49)
    assert np.all((masks.data > 0) & (masks.data < 1))


@pytest.mark.parametrize("film", [False, True])
def test_masker_is_causal(film):
    model = SeparationModel(tiny_separator_config(film), seed=3)
    feats = np.abs(np.random.default_rng(1).standard_normal((1, 8, 30)))
    base = model.separator_masks(DiffTensor(feats)).data
    for t in (0, 7, 29):
        bumped = feats.copy()
        bumped[:, :, t] += 1.0
        out = model.separator_masks(DiffTensor(bumped)).data
        assert np.array_equal(out[..., :t], base[..., :t])
        assert not np.array_equal(out[..., t], base[..., t])


def test_decode_zero_and_length():
    model = SeparationModel(tiny_separator_config(), seed=4)
    assert np.array_equal(model.decode(DiffTensor(np.zeros((1, 2, 8, 10))), 44).data, np.zeros((1, 2, 44)))
    for t in (37, 40, 41):
        assert model.forward(_mix(t)).shape == (1, 2, t)


def test_end_to_end_gradient():
    model = SeparationModel(tiny_separator_config(), seed=5)
    rng = np.random.default_rng(5)
    for _, p in model.params:
        p.data = p.data + 0.1 * rng.standard_normal(p.shape)
    x = _mix(48, seed=5)
    w = rng.standard_normal((1, 2, 48))
    params = [p for _, p in model.params]
    err = check_directional(lambda: tg.reduce_sum(model.forward(x) * DiffTensor(w)), params, rng)
    assert err < 1e-5


def test_film_identity_is_bitwise():
    model = SeparationModel(tiny_separator_config(film=True), seed=6)
    cfg = model.config
    x = _mix(100)
    identity = FilmParams.identity((1, 2), cfg.num_groups, cfg.masker_channels)
    plain = model.forward(x).data
    assert np.array_equal(model.forward(x, identity).data, plain)
    emb = np.random.default_rng(0).standard_normal((1, 2, cfg.embed_dim))
    # zero-initialized generator emits exactly the identity
    film = model.film_generate(emb)
    assert np.array_equal(film.gamma.data, np.ones_like(film.gamma.data))
    assert np.array_equal(film.beta.data, np.zeros_like(film.beta.data))
    assert np.array_equal(model.conditioned_forward(x, emb).data, plain)


def _trained_film_model(seed=7):
    model = SeparationModel(tiny_separator_config(film=True), seed=seed)
    rng = np.random.default_rng(seed)
    model.params["film.weight"].data = 0.3 * rng.standard_normal(model.params["film.weight"].shape)
    return model


def test_film_generate_is_deterministic():
    model = _trained_film_model()
    emb = np.random.default_rng(1).standard_normal((1, 2, model.config.embed_dim))
    a, b = model.film_generate(emb), model.film_generate(emb)
    assert np.array_equal(a.gamma.data, b.gamma.data) and np.array_equal(a.beta.data, b.beta.data)


def test_film_params_separate_after_one_step():
    model = SeparationModel(tiny_separator_config(film=True), seed=8)
    rng = np.random.default_rng(8)
    emb = rng.standard_normal((1, 2, model.config.embed_dim))
    x = _mix(80)
    target = rng.standard_normal((1, 2, 80))
    loss = tg.reduce_sq_l2(model.conditioned_forward(x, emb) - DiffTensor(target))
    tg.backward(loss)
    tg.adam_step(model.params, lr=1e-2)
    film = model.film_generate(emb)
    assert not np.allclose(film.gamma.data[0, 0], film.gamma.data[0, 1])


def test_swapping_embeddings_swaps_outputs():
    model = _trained_film_model()
    emb = np.random.default_rng(2).standard_normal((2, model.config.embed_dim))
    mix = Waveform(_mix(120), 8000)
    out = model.separate(mix, emb[None])
    swapped = model.separate(mix, emb[::-1][None])
    assert len(out) == 2 and all(len(w) == 120 for w in out)
    assert np.array_equal(out[0].samples, swapped[1].samples)
    assert np.array_equal(out[1].samples, swapped[0].samples)


def test_film_rejects_wrong_dims():
    model = _trained_film_model()
    with pytest.raises(tg.ShapeError):
        model.film_generate(np.zeros((1, 2, model.config.embed_dim + 1)))
    with pytest.raises(tg.ShapeError):
        model.film_generate(np.zeros((1, 3, model.config.embed_dim)))


def test_spectral_frame_count():
    x = np.random.default_rng(0).standard_normal(16000)
    seq = spectral_embed(Waveform(x, 16000))
    assert seq.num_frames == (16000 - 400) // 160 + 1
    assert seq.frame_hop == 160


def test_spectral_shift_by_one_hop():
    x = np.random.default_rng(1).standard_normal(4000)
    emb = SpectralEmbedder()
    a = emb.embed_batch(x[160:]).data
    b = emb.embed_batch(x).data
    assert np.max(np.abs(a[:-1] - b[1 : a.shape[0]])) < 1e-9


def test_spectral_gradient():
    emb = SpectralEmbedder(SpectralConfig(sample_rate=8000, win=32, hop=16, num_bands=6))
    x = np.random.default_rng(2).standard_normal(96)
    assert check_inputs(lambda t: tg.reduce_sum(emb.embed_batch(t)), [x]) < 1e-4


def test_speaker_embedder_inference():
    emb = SpeakerEmbedder(seed=0)
    x = Waveform(np.random.default_rng(3).standard_normal(8000) * 0.1, 16000)
    a, b = si_embed(x, emb), si_embed(x, emb)
    assert a.vector.shape == (32,)
    assert np.all(np.isfinite(a.vector))
    assert np.array_equal(a.vector, b.vector)


def test_separator_checkpoint_round_trip(tmp_path):
    model = _trained_film_model()
    save_separator(tmp_path / "m.ckpt", model)
    back = load_separator(tmp_path / "m.ckpt")
    assert back.config == model.config
    x = _mix(64)
    emb = np.ones((1, 2, model.config.embed_dim))
    assert np.array_equal(back.conditioned_forward(x, emb).data, model.conditioned_forward(x, emb).data)


def test_checkpoint_is_name_sorted_and_versioned(tmp_path):
    arrays = {"b": np.arange(3.0), "a": np.ones((2, 2))}
    save_checkpoint(tmp_path / "c.ckpt", "thing", {"x": 1}, arrays)
    raw = (tmp_path / "c.ckpt").read_bytes()
    assert raw.startswith(b"SEPKITCK")
    assert raw.index(b"\x01\x00a") < raw.index(b"\x01\x00b")
    meta, back = load_checkpoint(tmp_path / "c.ckpt")
    assert meta["kind"] == "thing" and meta["x"] == 1
    assert list(back) == ["a", "b"]
    assert np.array_equal(back["b"], arrays["b"])


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "e.ckpt"
    path.write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    save_speaker_embedder(path, SpeakerEmbedder())
    with pytest.raises(CheckpointError):
        load_separator(path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CheckpointError):
        load_speaker_embedder(path)


def test_speaker_embedder_round_trip(tmp_path):
    emb = SpeakerEmbedder(SpeakerEmbedderConfig(embed_dim=8, hidden=8), seed=3)
    save_speaker_embedder(tmp_path / "s.ckpt", emb)
    back = load_speaker_embedder(tmp_path / "s.ckpt")
    x = np.random.default_rng(0).standard_normal(2000)
    assert np.array_equal(back(x).vector, emb(x).vector)
