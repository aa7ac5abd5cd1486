import numpy as np
import pytest

from ufema.corpus import Waveform, mix_at_snr, random_speaker, synth_noise, synth_utterance
from ufema.enhancement import (
    MaskTrainConfig,
    SpectralSubtraction,
    _stft,
    build_spectral_subtraction,
    enhance,
    load_enhancer,
    save_enhancer,
    train_mask_enhancer,
)
from ufema.errors import InvalidArgumentError


def white_pairs(n, seed, snr=0.0):
    out = []
    for i in range(n):
        clean = synth_utterance(random_speaker(7000 + i % 20, seed=seed), 1.0, seed * 1000 + i)
        noise = Waveform(np.random.default_rng([seed, i]).standard_normal(len(clean)))
        out.append((mix_at_snr(clean, noise, snr), clean))
    return out


def projection_snr(y: np.ndarray, s: np.ndarray) -> float:
    """SNR of y against the clean reference s after projecting out the target part."""
    a = np.dot(y, s) / np.dot(s, s)
    e = y - a * s
    return 10 * np.log10(np.sum((a * s) ** 2) / np.sum(e ** 2))


@pytest.fixture(scope="module")
def mask_enh():
    return train_mask_enhancer(white_pairs(120, 1), MaskTrainConfig(epochs=8, hidden=64, seed=0))


@pytest.fixture(scope="module")
def speech():
    return synth_utterance(random_speaker(3), 1.5, 11)


def _rms(x):
    return float(np.sqrt(np.mean(np.asarray(x) ** 2)))


def test_specsub_zero_noise_estimate_is_identity(speech):
    e = build_spectral_subtraction()
    out = e.enhance_with_noise_estimate(speech, 0.0)
    assert _rms(out.samples - speech.samples) < 1e-4


def test_specsub_full_floor_is_identity(rng):
    x = Waveform(rng.standard_normal(12000))
    out = build_spectral_subtraction(2.0, 1.0).enhance(x)
    assert _rms(out.samples - x.samples) < 1e-4


def test_specsub_reduces_stationary_noise(speech, rng):
    noise = Waveform(rng.standard_normal(len(speech)))
    noisy = mix_at_snr(speech, noise, 5.0)
    g = noisy.samples - speech.samples
    e = build_spectral_subtraction(1.0, 0.0)
    # the gain is applied to the mixture; the residual is what it lets through of the noise
    z_noisy, z_noise = _stft(noisy.samples, 16000), _stft(g, 16000)
    gain = e.gain(np.abs(z_noisy), e.estimate_noise(np.abs(z_noisy)))
    assert np.sum(np.abs(gain * z_noise) ** 2) < np.sum(np.abs(z_noise) ** 2)


def test_specsub_deterministic_and_validated(speech):
    e = build_spectral_subtraction()
    np.testing.assert_array_equal(e.enhance(speech).samples, e.enhance(speech).samples)
    with pytest.raises(InvalidArgumentError):
        build_spectral_subtraction(0.5)
    with pytest.raises(InvalidArgumentError):
        build_spectral_subtraction(2.0, 1.5)


@pytest.mark.parametrize("n", [401, 8000, 16001, 23456])
def test_output_length_matches_input(n, rng, mask_enh):
    x = Waveform(0.1 * rng.standard_normal(n))
    for e in (SpectralSubtraction(), mask_enh):
        assert len(enhance(e, x)) == n


def test_sample_rate_mismatch(mask_enh):
    with pytest.raises(InvalidArgumentError):
        mask_enh.enhance(Waveform(np.ones(1000), 8000))


def test_mask_enhancer_gains_snr_on_white_noise(mask_enh):
    gains = []
    for noisy, clean in white_pairs(8, 2, snr=0.0):
        out = mask_enh.enhance(noisy)
        gains.append(projection_snr(out.samples, clean.samples) -
                     projection_snr(noisy.samples, clean.samples))
    assert np.mean(gains) >= 3.0
    assert min(gains) > 0.0


def test_mask_training_descends_and_beats_noisy(mask_enh):
    assert mask_enh.history[-1] < mask_enh.history[0]
    # held-out 0 dB mixtures: masked magnitude closer to clean than the noisy magnitude
    for noisy, clean in white_pairs(4, 3):
        zn, zc = _stft(noisy.samples, 16000), _stft(clean.samples, 16000)
        masked = mask_enh.mask(noisy) * np.abs(zn)
        assert np.mean((masked - np.abs(zc)) ** 2) < np.mean((np.abs(zn) - np.abs(zc)) ** 2)


def test_identity_pairs_learn_open_mask():
    clean = [synth_utterance(random_speaker(7100 + i), 1.0, i) for i in range(24)]
    e = train_mask_enhancer([(c, c) for c in clean], MaskTrainConfig(epochs=10, hidden=32, seed=1))
    probe = synth_utterance(random_speaker(7200), 1.0, 99)
    mag = np.abs(_stft(probe.samples, 16000))
    active = mag > 0.1 * mag.max()
    assert e.mask(probe)[active].mean() >= 0.9


def test_never_amplifies_much(mask_enh):
    for kind in ("noise", "music", "babble"):
        x = mix_at_snr(synth_utterance(random_speaker(5), 1.0, 1), synth_noise(kind, 1.0, 4), -5)
        for e in (SpectralSubtraction(), mask_enh):
            assert _rms(e.enhance(x).samples) <= 2 * _rms(x.samples)


def test_enhancer_persistence_and_hash(tmp_path, mask_enh, speech):
    for e in (SpectralSubtraction(1.5, 0.1), mask_enh):
        save_enhancer(e, tmp_path / "e.ckpt")
        back = load_enhancer(tmp_path / "e.ckpt")
        assert back.param_hash() == e.param_hash()
        np.testing.assert_array_equal(back.enhance(speech).samples, e.enhance(speech).samples)
    assert SpectralSubtraction(2.0).param_hash() != SpectralSubtraction(2.5).param_hash()
