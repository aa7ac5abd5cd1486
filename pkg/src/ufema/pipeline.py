"""Inference path shared by training and evaluation.

noisy waveform -> frozen enhancers -> per-channel log-mel -> stack -> UNet
(or a linear noisy/enhanced interpolation) -> mean normalization -> encoder.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .corpus import Waveform
from .errors import InvalidArgumentError
from .features import FeatureConfig, log_mel, mean_normalize, stack_channels
from .fusion import FusionUNet

INTERP_MODES = ("unet", "linear", "none")


def linear_interp_baseline(w: float, noisy: Waveform, enhanced: Waveform) -> Waveform:
    """``w * enhanced + (1 - w) * noisy``, elementwise."""
    if not 0.0 <= w <= 1.0:
        raise InvalidArgumentError(f"interpolation weight must lie in [0, 1], got {w}")
    if len(noisy) != len(enhanced):
        raise InvalidArgumentError(f"length mismatch: {len(noisy)} vs {len(enhanced)}")
    if w == 0.0:
        return Waveform(noisy.samples, noisy.sample_rate)
    if w == 1.0:
        return Waveform(enhanced.samples, enhanced.sample_rate)
    return Waveform(w * enhanced.samples + (1.0 - w) * noisy.samples, noisy.sample_rate)


def average_enhanced(enhanced: Sequence[Waveform]) -> Waveform:
    if len(enhanced) == 1:
        return enhanced[0]
    return Waveform(np.mean([e.samples for e in enhanced], axis=0), enhanced[0].sample_rate)


@dataclass
class FrontEnd:
    """Everything between a noisy waveform and the encoder input, minus the UNet."""

    enhancers: list = field(default_factory=list)
    feature_config: FeatureConfig = FeatureConfig()
    use_noisy_channel: bool = True
    interp: str = "unet"
    interp_weight: float = 0.5

    def __post_init__(self):
        if self.interp not in INTERP_MODES:
            raise InvalidArgumentError(f"interp must be one of {INTERP_MODES}, got {self.interp!r}")
        if self.interp == "unet" and not self.enhancers:
            raise InvalidArgumentError("UNet fusion needs at least one enhancer")
        if self.interp == "linear" and not self.enhancers:
            raise InvalidArgumentError("linear interpolation needs an enhanced signal")

    @property
    def n_channels(self) -> int:
        return len(self.enhancers) + int(self.use_noisy_channel)

    @property
    def channel_names(self) -> tuple:
        return (("noisy",) if self.use_noisy_channel else ()) + tuple(e.name for e in self.enhancers)

    def features(self, noisy: Waveform, enhanced: dict | None = None) -> np.ndarray:
        """(C, T, F) stack for UNet mode, (T, F) log-mel otherwise.

        ``enhanced`` may hold already-computed enhancer outputs keyed by
        enhancer name; missing ones are computed here.
        """
        cfg = self.feature_config
        if self.interp == "none":
            return log_mel(noisy, cfg).values
        cache = enhanced or {}
        enhanced = [cache[e.name] if e.name in cache else e.enhance(noisy) for e in self.enhancers]
        for e, out in zip(self.enhancers, enhanced):
            if len(out) != len(noisy):
                raise InvalidArgumentError(f"{e.name} changed the signal length")
        if self.interp == "linear":
            mixed = linear_interp_baseline(self.interp_weight, noisy, average_enhanced(enhanced))
            return log_mel(mixed, cfg).values
        noisy_feat = log_mel(noisy, cfg) if self.use_noisy_channel else None
        return stack_channels(noisy_feat, [log_mel(x, cfg) for x in enhanced],
                              self.channel_names).channels


def encoder_input(fusion: FusionUNet | None, batch: torch.Tensor) -> torch.Tensor:
    """Fuse (if needed) and mean-normalize a batch of front-end features."""
    if fusion is not None:
        batch = fusion(batch)
    return mean_normalize(batch)


@torch.no_grad()
def embed_batch(front: FrontEnd, fusion: FusionUNet | None, encoder, feats: np.ndarray) -> np.ndarray:
    if fusion is not None:
        fusion.eval()
    encoder.eval()
    x = torch.from_numpy(np.asarray(feats, dtype=np.float32))
    return encoder(encoder_input(fusion if front.interp == "unet" else None, x)).double().numpy()
