"""Shared fixtures for the toy training runs and the acceptance summary."""

import numpy as np
import pytest

from sepkit.datagen import generate_dataset
from sepkit.losses import LossConfig
from sepkit.models import SeparatorConfig, SpeakerEmbedderConfig, SpectralConfig
from sepkit.training import TrainConfig, pretrain_speaker_embedder, run_ablation, train_conditioned

TOY_RATE = 8000
TOY_SEEDS = (0, 1, 2)
TOY_EPOCHS = 40

_verdicts: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line, then assert it."""

    def record(number: int, name: str, passed: bool, detail: str = ""):
        _verdicts[number] = (name, bool(passed), detail)
        print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}  {detail}")
        assert passed, f"criterion {number} ({name}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        name, passed, detail = _verdicts[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}  {detail}")


def toy_model_config(film: bool = False) -> SeparatorConfig:
    return SeparatorConfig(encoder_filters=32, kernel_size=16, masker_channels=32, num_layers=4, group_size=2, film_enabled=film)


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory):
    # 5 speakers, 10 mixtures per pair: 100 one-second mixtures at 8 kHz
    return generate_dataset(5, 10, 1.0, TOY_RATE, tmp_path_factory.mktemp("toy"), seed=0)


def toy_train_config(seed: int, mode: str = "weighted_sum") -> TrainConfig:
    return TrainConfig(
        epochs=TOY_EPOCHS, batch_size=4, seed=seed, patience=10, loss=LossConfig.paper(mode), eval_stoi=False
    )


@pytest.fixture(scope="session")
def toy_ablations(toy_manifest):
    """Four-arm ablation per seed; arms share initialization and batch order."""
    return {seed: run_ablation(toy_manifest, toy_train_config(seed), toy_model_config()) for seed in TOY_SEEDS}


@pytest.fixture(scope="session")
def toy_conditioned(toy_manifest, toy_ablations):
    """Oracle-embedding two-stage model per seed, built on that seed's basic-loss arm."""
    out = {}
    for seed in TOY_SEEDS:
        basic = toy_ablations[seed].models[0]
        embedder, summary = pretrain_speaker_embedder(
            toy_manifest, SpeakerEmbedderConfig(spectral=SpectralConfig(sample_rate=TOY_RATE)), seed=seed
        )
        pipeline, report = train_conditioned(toy_manifest, toy_train_config(seed, "basic"), basic, embedder, oracle=True)
        out[seed] = (pipeline, report, summary)
    return out


def median_over_seeds(values) -> float:
    return float(np.median(list(values)))
