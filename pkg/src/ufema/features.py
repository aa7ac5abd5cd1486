"""Log-mel features and the multi-channel stack fed to the fusion UNet."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .corpus import SAMPLE_RATE, Waveform
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class FeatureConfig:
    n_mels: int = 80
    win_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    log_eps: float = 1e-6
    sample_rate: int = SAMPLE_RATE

    @property
    def win_length(self) -> int:
        return int(round(self.win_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.win_length) // self.hop_length


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """HTK-style triangular filters from 0 Hz to Nyquist, shape (n_mels, n_fft//2 + 1).

    Filters peak at 1.0 (no area normalization). With 80 bands and a
    512-point transform the lowest bands are narrower than one FFT bin and
    come out empty; their log-mel cells sit at the log floor.
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


@dataclass(frozen=True)
class MelFeature:
    values: np.ndarray  # (T, F)
    frame_len_s: float = 0.025
    frame_hop_s: float = 0.010

    def __post_init__(self):
        if self.values.ndim != 2:
            raise InvalidArgumentError(f"MelFeature needs a (T, F) matrix, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("MelFeature contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def magnitude_frames(x: np.ndarray, config: FeatureConfig) -> np.ndarray:
    win, hop = config.win_length, config.hop_length
    frames = sliding_window_view(x, win)[::hop]
    window = get_window("hann", win)
    return np.abs(np.fft.rfft(frames * window, n=config.n_fft, axis=-1))


def log_mel(w: Waveform, config: FeatureConfig = FeatureConfig()) -> MelFeature:
    """Magnitude STFT -> mel filterbank -> log(x + eps), without centering.

    Produces ``1 + (L - win) // hop`` frames for an ``L``-sample input.
    """
    if w.sample_rate != config.sample_rate:
        raise InvalidArgumentError(
            f"waveform at {w.sample_rate} Hz, features configured for {config.sample_rate} Hz")
    if len(w) < config.win_length:
        raise InvalidArgumentError(
            f"waveform has {len(w)} samples, need at least {config.win_length} for one frame")
    mag = magnitude_frames(w.samples, config)
    fb = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate)
    return MelFeature(np.log(mag @ fb.T + config.log_eps),
                      config.win_ms / 1000.0, config.hop_ms / 1000.0)


def mean_normalize(values):
    """Subtract the per-bin mean over time (last-but-one axis).

    Works on numpy arrays and torch tensors of shape (..., T, F).
    """
    return values - values.mean(axis=-2, keepdims=True) if isinstance(values, np.ndarray) \
        else values - values.mean(dim=-2, keepdim=True)


@dataclass(frozen=True)
class MultiChannelFeature:
    """Channel 0 is the noisy input; channels 1..N follow enhancer registry order."""

    channels: np.ndarray  # (C, T, F)
    names: tuple = field(default=())

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def channel(self, i: int) -> MelFeature:
        return MelFeature(self.channels[i])

    def unstack(self) -> list[MelFeature]:
        return [self.channel(i) for i in range(self.n_channels)]


def stack_channels(noisy: MelFeature | None, enhanced: Sequence[MelFeature],
                   names: Sequence[str] = ()) -> MultiChannelFeature:
    """Stack noisy + enhanced features along a new leading channel axis.

    ``noisy`` may be ``None`` for the ablation without the noisy channel, in
    which case the enhanced channels are stacked alone.
    """
    feats = ([noisy] if noisy is not None else []) + list(enhanced)
    if not feats or (noisy is not None and not enhanced):
        raise InvalidArgumentError("need a noisy feature and at least one enhanced feature")
    shape = feats[0].values.shape
    for i, f in enumerate(feats):
        if f.values.shape != shape:
            label = names[i] if i < len(names) else f"channel {i}"
            raise InvalidArgumentError(
                f"{label} has shape {f.values.shape}, expected {shape}")
    return MultiChannelFeature(np.stack([f.values for f in feats]), tuple(names))
