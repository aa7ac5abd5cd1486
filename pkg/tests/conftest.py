import numpy as np
import pytest
import torch

from ufema.config import ExperimentConfig

torch.set_num_threads(1)


def tiny_config(**kw) -> ExperimentConfig:
    """Smallest config that still exercises every stage of the pipeline."""
    base = dict(n_speakers=4, train_utts_per_speaker=8, heldout_utts_per_speaker=2,
                n_unseen_speakers=3, unseen_utts_per_speaker=3, noise_bank_size=2,
                noise_bank_s=3.0, mask_train_pairs=12, mask_epochs=2, mask_hidden=16,
                unet_channels=[4, 8], pretrain_epochs=2, pretrain_batch_size=8, batch_size=8,
                epochs=2, embed_dim=16, encoder_channels=8)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_art(tiny_cfg):
    from ufema.training import prepare_artifacts

    return prepare_artifacts(tiny_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
