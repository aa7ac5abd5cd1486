"""Frozen speech enhancers behind one interface.

Two stand-ins are provided: analytic spectral subtraction and a small
trained mask network. Both resynthesize with the noisy phase, and both
keep the output length equal to the input length.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from scipy.signal import istft, stft
from torch import nn

from . import checkpoint
from .corpus import SAMPLE_RATE, Waveform
from .errors import CheckpointError, InvalidArgumentError, TrainingFailureError

log = logging.getLogger(__name__)

STFT_NPERSEG = 512
STFT_HOP = 128


def _stft(x: np.ndarray, sample_rate: int) -> np.ndarray:
    if len(x) < STFT_NPERSEG:
        # shorter than one frame: zero-pad; the inverse crops back to len(x)
        x = np.pad(x, (0, STFT_NPERSEG - len(x)))
    return stft(x, fs=sample_rate, window="hann", nperseg=STFT_NPERSEG,
                noverlap=STFT_NPERSEG - STFT_HOP)[2]


def _istft(z: np.ndarray, n: int, sample_rate: int) -> np.ndarray:
    x = istft(z, fs=sample_rate, window="hann", nperseg=STFT_NPERSEG,
              noverlap=STFT_NPERSEG - STFT_HOP)[1]
    if len(x) < n:
        x = np.pad(x, (0, n - len(x)))
    return x[:n]


class Enhancer:
    """Base class. Subclasses implement ``_enhance`` and ``arrays``."""

    name: str
    domain: str  # "spectral-mask" or "waveform"
    sample_rate: int = SAMPLE_RATE

    def enhance(self, noisy: Waveform) -> Waveform:
        if noisy.sample_rate != self.sample_rate:
            raise InvalidArgumentError(
                f"{self.name} runs at {self.sample_rate} Hz, got {noisy.sample_rate} Hz")
        out = self._enhance(noisy.samples)
        return Waveform(out, noisy.sample_rate)

    def _enhance(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def arrays(self) -> dict:
        raise NotImplementedError

    def hyperparameters(self) -> dict:
        raise NotImplementedError

    def param_hash(self) -> str:
        h = hashlib.sha256(repr(sorted(self.hyperparameters().items())).encode())
        h.update(checkpoint.array_hash(self.arrays()).encode())
        return h.hexdigest()


def enhance(e: Enhancer, noisy: Waveform) -> Waveform:
    return e.enhance(noisy)


class SpectralSubtraction(Enhancer):
    """Magnitude spectral subtraction with over-subtraction and a spectral floor.

    The noise magnitude per bin is the mean of that bin over its quietest
    ``noise_fraction`` of frames. Output magnitude is
    ``max(|Y| - alpha * N, floor * |Y|)``.
    """

    domain = "spectral-mask"

    def __init__(self, alpha_oversub: float = 2.0, floor: float = 0.05,
                 noise_fraction: float = 0.1, name: str = "spectral_subtraction",
                 sample_rate: int = SAMPLE_RATE):
        self.alpha_oversub = float(alpha_oversub)
        self.floor = float(floor)
        self.noise_fraction = float(noise_fraction)
        self.name = name
        self.sample_rate = sample_rate

    def estimate_noise(self, mag: np.ndarray) -> np.ndarray:
        k = max(1, int(round(self.noise_fraction * mag.shape[1])))
        return np.sort(mag, axis=1)[:, :k].mean(axis=1)

    def gain(self, mag: np.ndarray, noise_mag) -> np.ndarray:
        noise_mag = np.asarray(noise_mag, dtype=np.float64)
        if noise_mag.ndim == 1:
            noise_mag = noise_mag[:, None]
        sub = np.maximum(mag - self.alpha_oversub * noise_mag, self.floor * mag)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(mag > 0, sub / mag, 1.0)

    def enhance_with_noise_estimate(self, noisy: Waveform, noise_mag) -> Waveform:
        """Subtract a caller-supplied noise magnitude (scalar or per bin)."""
        z = _stft(noisy.samples, noisy.sample_rate)
        out = _istft(z * self.gain(np.abs(z), noise_mag), len(noisy), noisy.sample_rate)
        return Waveform(out, noisy.sample_rate)

    def _enhance(self, x):
        z = _stft(x, self.sample_rate)
        mag = np.abs(z)
        return _istft(z * self.gain(mag, self.estimate_noise(mag)), len(x), self.sample_rate)

    def arrays(self) -> dict:
        return {}

    def hyperparameters(self) -> dict:
        return {"alpha_oversub": self.alpha_oversub, "floor": self.floor,
                "noise_fraction": self.noise_fraction}


def build_spectral_subtraction(alpha_oversub: float = 2.0, floor: float = 0.05,
                               name: str = "spectral_subtraction") -> SpectralSubtraction:
    if alpha_oversub < 1:
        raise InvalidArgumentError(f"alpha_oversub must be >= 1, got {alpha_oversub}")
    if not 0 <= floor <= 1:
        raise InvalidArgumentError(f"floor must lie in [0, 1], got {floor}")
    return SpectralSubtraction(alpha_oversub, floor, name=name)


class MaskNet(nn.Module):
    """1-D conv encoder-decoder over time with frequency bins as channels."""

    def __init__(self, n_bins: int = STFT_NPERSEG // 2 + 1, hidden: int = 128, kernel: int = 5):
        super().__init__()
        pad = kernel // 2
        self.enc1 = nn.Conv1d(n_bins, hidden, kernel, padding=pad)
        self.enc2 = nn.Conv1d(hidden, hidden // 2, kernel, padding=pad)
        self.dec1 = nn.Conv1d(hidden // 2, hidden, kernel, padding=pad)
        self.dec2 = nn.Conv1d(2 * hidden, n_bins, kernel, padding=pad)

    def forward(self, logmag):
        e1 = torch.relu(self.enc1(logmag))
        e2 = torch.relu(self.enc2(e1))
        d1 = torch.relu(self.dec1(e2))
        return torch.sigmoid(self.dec2(torch.cat([d1, e1], dim=1)))


def _net_input(mag: np.ndarray) -> torch.Tensor:
    lm = np.log(mag + 1e-4)
    return torch.from_numpy((lm - lm.mean()).astype(np.float32))


@dataclass
class MaskTrainConfig:
    epochs: int = 15
    batch_size: int = 16
    lr: float = 1e-3
    hidden: int = 128
    seed: int = 0


class MaskEnhancer(Enhancer):
    """Trained magnitude-mask enhancer; parameters are frozen on construction."""

    domain = "waveform"

    def __init__(self, net: MaskNet, name: str = "mask_net", sample_rate: int = SAMPLE_RATE,
                 history: Sequence[float] = ()):
        self.net = net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)
        self.name = name
        self.sample_rate = sample_rate
        self.hidden = net.enc1.out_channels
        self.history = list(history)

    def mask(self, noisy: Waveform) -> np.ndarray:
        z = _stft(noisy.samples, noisy.sample_rate)
        with torch.no_grad():
            return self.net(_net_input(np.abs(z))[None])[0].double().numpy()

    def _enhance(self, x):
        z = _stft(x, self.sample_rate)
        with torch.no_grad():
            m = self.net(_net_input(np.abs(z))[None])[0].double().numpy()
        return _istft(z * m, len(x), self.sample_rate)

    def arrays(self) -> dict:
        return checkpoint.module_arrays(self.net)

    def hyperparameters(self) -> dict:
        return {"hidden": self.hidden}


def train_mask_enhancer(pairs: Sequence[tuple], config: MaskTrainConfig = MaskTrainConfig(),
                        name: str = "mask_net") -> MaskEnhancer:
    """Fit a [0, 1] magnitude mask minimizing MSE(mask * |noisy|, |clean|).

    ``pairs`` holds (noisy, clean) waveforms of equal length; the noisy side
    must come from the train noise pool. Each pair is scaled to unit noisy
    power first so that loud and quiet pairs weigh equally. ``history`` on the returned
    enhancer holds the mean loss of each epoch.
    """
    if not pairs:
        raise InvalidArgumentError("train_mask_enhancer needs at least one (noisy, clean) pair")
    rate = pairs[0][0].sample_rate
    noisy_in, noisy_mag, clean_mag = [], [], []
    for noisy, clean in pairs:
        if len(noisy) != len(clean):
            raise InvalidArgumentError("noisy and clean lengths differ")
        scale = 1.0 / np.sqrt(noisy.power())
        zn, zc = _stft(noisy.samples * scale, rate), _stft(clean.samples * scale, rate)
        noisy_in.append(_net_input(np.abs(zn)))
        noisy_mag.append(torch.from_numpy(np.abs(zn).astype(np.float32)))
        clean_mag.append(torch.from_numpy(np.abs(zc).astype(np.float32)))

    torch.manual_seed(config.seed)
    net = MaskNet(hidden=config.hidden)
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    gen = torch.Generator().manual_seed(config.seed)
    history = []
    n = len(pairs)
    for epoch in range(config.epochs):
        order = torch.randperm(n, generator=gen).tolist()
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x = torch.stack([noisy_in[i] for i in idx])
            y = torch.stack([clean_mag[i] for i in idx])
            m = net(x) * torch.stack([noisy_mag[i] for i in idx])
            loss = torch.mean((m - y) ** 2)
            if not torch.isfinite(loss):
                raise TrainingFailureError(f"mask enhancer loss diverged at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / n)
        log.debug("mask enhancer epoch %d loss %.6g", epoch, history[-1])
    return MaskEnhancer(net, name=name, sample_rate=rate, history=history)


# -------------------------------------------------------------- persistence


def save_enhancer(e: Enhancer, path) -> None:
    meta = {"name": e.name, "domain": e.domain, "sample_rate": e.sample_rate,
            "type": type(e).__name__, "hyperparameters": e.hyperparameters()}
    checkpoint.save(path, "enhancer", meta, e.arrays())


def load_enhancer(path) -> Enhancer:
    _, meta, arrays = checkpoint.load(path, expect_kind="enhancer")
    hp = meta["hyperparameters"]
    if meta["type"] == "SpectralSubtraction":
        return SpectralSubtraction(hp["alpha_oversub"], hp["floor"], hp["noise_fraction"],
                                   name=meta["name"], sample_rate=meta["sample_rate"])
    if meta["type"] == "MaskEnhancer":
        net = MaskNet(hidden=hp["hidden"])
        checkpoint.load_module_arrays(net, arrays)
        return MaskEnhancer(net, name=meta["name"], sample_rate=meta["sample_rate"])
    raise CheckpointError(f"unknown enhancer type {meta['type']!r}")
