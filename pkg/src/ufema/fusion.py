"""UNet that fuses the stacked noisy/enhanced log-mels into one spectrogram."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidArgumentError
from .features import MelFeature, MultiChannelFeature

# Mean of ReLU(x) for x ~ N(0, 1); the BN+ReLU output mean at initialization.
_RELU_GAUSS_MEAN = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 3
    encoder_channels: tuple = (32, 64, 128, 256)
    kernel: int = 3
    skip_connections: bool = True
    decoder_out_channels: int = 16

    def __post_init__(self):
        if self.in_channels < 1:
            raise InvalidArgumentError("in_channels must be >= 1")
        if not self.encoder_channels:
            raise InvalidArgumentError("encoder_channels must be non-empty")
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))

    @property
    def depth(self) -> int:
        return len(self.encoder_channels)


class EncoderBlock(nn.Module):
    """Strided conv, conv, batch norm, ReLU."""

    def __init__(self, cin: int, cout: int, k: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, k, stride=2, padding=k // 2)
        self.conv2 = nn.Conv2d(cout, cout, k, padding=k // 2, bias=False)  # BN follows
        self.bn = nn.BatchNorm2d(cout)

    def forward(self, x):
        return F.relu(self.bn(self.conv2(self.conv1(x))))


class DecoderBlock(nn.Module):
    """Transposed-conv upsampling, optional skip concat, conv, batch norm, ReLU."""

    def __init__(self, cin: int, cout: int, cskip: int, k: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(cin, cout, 2, stride=2)
        self.conv = nn.Conv2d(cout + cskip, cout, k, padding=k // 2, bias=False)
        self.bn = nn.BatchNorm2d(cout)

    def forward(self, x, skip=None):
        h = self.up(x)
        if skip is not None:
            h = torch.cat([h, skip], dim=1)
        return F.relu(self.bn(self.conv(h)))


class FusionUNet(nn.Module):
    """Maps (B, C, T, F) log-mels to (B, T, F).

    T and F are zero-padded symmetrically up to a multiple of ``2**depth``
    and the output is cropped back, so any size is accepted. The 1x1 output
    head sees the last decoder features and, with skips on, the input
    channels themselves.
    """

    def __init__(self, config: UNetConfig = UNetConfig()):
        super().__init__()
        self.config = config
        k, chans = config.kernel, config.encoder_channels
        self.encoders = nn.ModuleList()
        prev = config.in_channels
        for c in chans:
            self.encoders.append(EncoderBlock(prev, c, k))
            prev = c
        # decoder levels from deepest to full resolution
        outs = list(chans[:-1][::-1]) + [config.decoder_out_channels]
        skips = list(chans[:-1][::-1]) + [config.in_channels]
        self.decoders = nn.ModuleList()
        for cout, cskip in zip(outs, skips):
            self.decoders.append(DecoderBlock(prev, cout, cskip if config.skip_connections else 0, k))
            prev = cout
        head_in = prev + (config.in_channels if config.skip_connections else 0)
        self.head = nn.Conv2d(head_in, 1, 1)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.config.in_channels:
            raise InvalidArgumentError(
                f"expected (B, {self.config.in_channels}, T, F) input, got {tuple(x.shape)}")
        if self.training and x.shape[0] < 2:
            raise InvalidArgumentError("batch norm in training mode needs a batch of at least 2")
        t, f = x.shape[-2:]
        m = 2 ** self.config.depth
        pt, pf = (-t) % m, (-f) % m
        x = F.pad(x, (pf // 2, pf - pf // 2, pt // 2, pt - pt // 2))
        skips, h = [x], x
        for enc in self.encoders:
            h = enc(h)
            skips.append(h)
        skips.pop()
        for dec in self.decoders:
            s = skips.pop()
            h = dec(h, s if self.config.skip_connections else None)
        if self.config.skip_connections:
            h = torch.cat([h, x], dim=1)
        y = self.head(h)[:, 0]
        return y[:, pt // 2:pt // 2 + t, pf // 2:pf // 2 + f]


def init_fusion(config: UNetConfig = UNetConfig(), seed: int = 0) -> FusionUNet:
    """He-normal convolutions, seeded; output head starts near the channel mean.

    With skips on, the head weights on the raw input channels are set to
    ``1 / in_channels`` and the small random weights on decoder features are
    offset by the bias, which cancels their expected contribution at init.
    """
    gen = torch.Generator().manual_seed(int(seed))
    net = FusionUNet(config)
    for mod in net.modules():
        if isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d)) and mod is not net.head:
            nn.init.kaiming_normal_(mod.weight, nonlinearity="relu", generator=gen)
            if mod.bias is not None:
                nn.init.zeros_(mod.bias)
    n_dec = net.head.in_channels - (config.in_channels if config.skip_connections else 0)
    with torch.no_grad():
        w = net.head.weight
        nn.init.normal_(w, std=0.1 / math.sqrt(n_dec), generator=gen)
        if config.skip_connections:
            w[0, n_dec:] = 1.0 / config.in_channels
        net.head.bias.fill_(-float(w[0, :n_dec].sum()) * _RELU_GAUSS_MEAN)
    return net


def fuse(net: FusionUNet, z: MultiChannelFeature) -> MelFeature:
    """Inference-mode fusion of one stacked feature."""
    if z.n_channels != net.config.in_channels:
        raise InvalidArgumentError(
            f"fusion network expects {net.config.in_channels} channels, got {z.n_channels}")
    was_training = net.training
    net.eval()
    try:
        with torch.no_grad():
            p = next(net.parameters())
            y = net(torch.as_tensor(z.channels, dtype=p.dtype)[None])[0]
    finally:
        net.train(was_training)
    return MelFeature(y.double().numpy())
