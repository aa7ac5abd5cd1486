"""Compact speaker encoder, AAM-softmax head and clean-speech pretraining."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidArgumentError, TrainingFailureError
from .features import MelFeature, mean_normalize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    n_mels: int = 80
    channels: int = 64
    pool_channels: int = 128
    embed_dim: int = 192
    kernels: tuple = (5, 3, 3)
    dilations: tuple = (1, 2, 3)

    @property
    def receptive_field(self) -> int:
        return 1 + sum((k - 1) * d for k, d in zip(self.kernels, self.dilations))


class SpeakerEncoder(nn.Module):
    """Dilated 1-D convs over time, statistics pooling, linear projection.

    Input is (B, T, F) log-mel; output is (B, D).
    """

    def __init__(self, config: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.config = config
        layers = []
        prev = config.n_mels
        for k, d in zip(config.kernels, config.dilations):
            layers += [nn.Conv1d(prev, config.channels, k, dilation=d), nn.ReLU(),
                       nn.BatchNorm1d(config.channels)]
            prev = config.channels
        layers += [nn.Conv1d(prev, config.pool_channels, 1), nn.ReLU(),
                   nn.BatchNorm1d(config.pool_channels)]
        self.frames = nn.Sequential(*layers)
        self.project = nn.Linear(2 * config.pool_channels, config.embed_dim)

    def forward(self, x):
        if x.dim() != 3 or x.shape[-1] != self.config.n_mels:
            raise InvalidArgumentError(
                f"expected (B, T, {self.config.n_mels}) features, got {tuple(x.shape)}")
        if x.shape[1] < self.config.receptive_field:
            raise InvalidArgumentError(
                f"need at least {self.config.receptive_field} frames, got {x.shape[1]}")
        h = self.frames(x.transpose(1, 2))
        stats = torch.cat([h.mean(dim=2), torch.sqrt(h.var(dim=2, unbiased=False) + 1e-5)], dim=1)
        return self.project(stats)


def init_encoder(config: EncoderConfig = EncoderConfig(), seed: int = 0) -> SpeakerEncoder:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed))
        return SpeakerEncoder(config)


def embed(encoder: SpeakerEncoder, feature: MelFeature, normalize: bool = True) -> np.ndarray:
    """Inference-mode embedding of one feature (mean-normalized over time first)."""
    if feature.n_mels != encoder.config.n_mels:
        raise InvalidArgumentError(
            f"encoder expects {encoder.config.n_mels} mel bins, got {feature.n_mels}")
    x = mean_normalize(feature.values) if normalize else feature.values
    was_training = encoder.training
    encoder.eval()
    try:
        with torch.no_grad():
            p = next(encoder.parameters())
            return encoder(torch.as_tensor(x, dtype=p.dtype)[None])[0].double().numpy()
    finally:
        encoder.train(was_training)


class AAMHead(nn.Module):
    """Class-weight matrix for additive angular margin softmax."""

    def __init__(self, n_classes: int, embed_dim: int = 192, margin: float = 0.2,
                 scale: float = 30.0, seed: int = 0):
        super().__init__()
        if not 0.0 <= margin <= 0.5:
            raise InvalidArgumentError(f"margin must lie in [0, 0.5], got {margin}")
        if scale <= 0:
            raise InvalidArgumentError(f"scale must be positive, got {scale}")
        gen = torch.Generator().manual_seed(int(seed))
        self.weight = nn.Parameter(torch.empty(n_classes, embed_dim))
        nn.init.xavier_normal_(self.weight, generator=gen)
        self.margin = float(margin)
        self.scale = float(scale)

    @property
    def n_classes(self) -> int:
        return self.weight.shape[0]

    def cosine(self, emb):
        return F.normalize(emb, dim=1) @ F.normalize(self.weight, dim=1).T

    def forward(self, emb, labels):
        return aam_loss(self, emb, labels)


def aam_logits(head: AAMHead, emb, labels):
    """``s*cos(theta_y + m)`` for the target class, ``s*cos(theta_j)`` elsewhere.

    Past ``theta_y + m > pi`` the target logit falls back to
    ``cos(theta_y) - m*sin(m)``, which keeps it decreasing in m.
    """
    cos = head.cosine(emb)
    m = head.margin
    target = cos.gather(1, labels[:, None])
    sin = torch.sqrt(torch.clamp(1.0 - target * target, min=1e-12))
    phi = target * math.cos(m) - sin * math.sin(m)
    phi = torch.where(target > math.cos(math.pi - m), phi, target - m * math.sin(m))
    logits = cos.scatter(1, labels[:, None], phi)
    return head.scale * logits


def aam_loss(head: AAMHead, emb, labels):
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.numel() == 0:
        raise InvalidArgumentError("empty batch")
    if int(labels.min()) < 0 or int(labels.max()) >= head.n_classes:
        raise InvalidArgumentError(
            f"labels must lie in [0, {head.n_classes}), got range "
            f"[{int(labels.min())}, {int(labels.max())}]")
    return F.cross_entropy(aam_logits(head, emb, labels), labels)


# ------------------------------------------------------------- pretraining


@dataclass
class PretrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    segment_frames: int = 198
    margin: float = 0.2
    scale: float = 30.0
    seed: int = 0


@dataclass
class PretrainState:
    encoder: SpeakerEncoder
    head: AAMHead
    optimizer: torch.optim.Optimizer
    epoch: int = 0
    step_in_epoch: int = 0
    history: list | None = None


def new_pretrain_state(n_classes: int, enc_config: EncoderConfig, config: PretrainConfig) -> PretrainState:
    encoder = init_encoder(enc_config, config.seed)
    head = AAMHead(n_classes, enc_config.embed_dim, config.margin, config.scale, seed=config.seed + 1)
    opt = torch.optim.Adam(list(encoder.parameters()) + list(head.parameters()), lr=config.lr)
    return PretrainState(encoder, head, opt, history=[])


def _batches(n: int, batch_size: int, seed: int, epoch: int):
    order = np.random.default_rng([seed, epoch]).permutation(n)
    # drop the last partial batch: batch norm needs >= 2 items
    return [order[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)] \
        or [order]


def _crops(feats: np.ndarray, idx: np.ndarray, frames: int, seed: int, epoch: int, step: int):
    rng = np.random.default_rng([seed, epoch, step, 7])
    t = feats.shape[1]
    offs = rng.integers(0, t - frames + 1, size=len(idx))
    return np.stack([feats[i, o:o + frames] for i, o in zip(idx, offs)])


def pretrain_steps(state: PretrainState, feats: np.ndarray, labels: np.ndarray,
                   config: PretrainConfig, max_steps: int | None = None) -> PretrainState:
    """Advance pretraining, resumable at any step.

    The batch order and crop offsets depend only on (seed, epoch, step),
    so a state restored from a checkpoint continues exactly where the
    original run would have.
    """
    labels_t = torch.as_tensor(labels, dtype=torch.long)
    done = 0
    state.encoder.train()
    while state.epoch < config.epochs:
        batches = _batches(len(feats), config.batch_size, config.seed, state.epoch)
        while state.step_in_epoch < len(batches):
            if max_steps is not None and done >= max_steps:
                return state
            idx = batches[state.step_in_epoch]
            x = torch.from_numpy(mean_normalize(
                _crops(feats, idx, config.segment_frames, config.seed, state.epoch,
                       state.step_in_epoch)).astype(np.float32))
            loss = aam_loss(state.head, state.encoder(x), labels_t[idx])
            if not torch.isfinite(loss):
                raise TrainingFailureError(
                    f"encoder pretraining diverged at epoch {state.epoch} step {state.step_in_epoch}")
            state.optimizer.zero_grad()
            loss.backward()
            state.optimizer.step()
            state.history.append(loss.item())
            state.step_in_epoch += 1
            done += 1
        state.epoch += 1
        state.step_in_epoch = 0
        log.info("pretrain epoch %d loss %.4f", state.epoch, state.history[-1])
    return state


def recalibrate_batchnorm(encoder: SpeakerEncoder, feats: np.ndarray, batch_size: int = 50) -> None:
    """Replace batch-norm running statistics with exact averages over ``feats``.

    The momentum-0.1 running estimates trail the weights, and with Adam
    near convergence that lag alone can swing inference accuracy by tens of
    points. Weights are untouched.
    """
    bns = [m for m in encoder.modules() if isinstance(m, nn.modules.batchnorm._BatchNorm)]
    saved = [b.momentum for b in bns]
    was_training = encoder.training
    for b in bns:
        b.reset_running_stats()
        b.momentum = None  # cumulative average
    encoder.train()
    try:
        with torch.no_grad():
            p = next(encoder.parameters())
            for i in range(0, len(feats), batch_size):
                encoder(torch.as_tensor(mean_normalize(feats[i:i + batch_size]), dtype=p.dtype))
    finally:
        for b, m in zip(bns, saved):
            b.momentum = m
        encoder.train(was_training)


def classify_accuracy(encoder: SpeakerEncoder, head: AAMHead, feats: np.ndarray,
                      labels: np.ndarray, batch_size: int = 64) -> float:
    encoder.eval()
    correct = 0
    with torch.no_grad():
        for i in range(0, len(feats), batch_size):
            x = torch.from_numpy(mean_normalize(feats[i:i + batch_size]).astype(np.float32))
            pred = head.cosine(encoder(x)).argmax(dim=1).numpy()
            correct += int(np.sum(pred == labels[i:i + batch_size]))
    return correct / len(feats)


def pretrain_encoder(feats: np.ndarray, labels: np.ndarray,
                     enc_config: EncoderConfig = EncoderConfig(),
                     config: PretrainConfig = PretrainConfig()) -> PretrainState:
    """Train encoder + AAM head on clean log-mels of shape (N, T, F).

    Each step takes a random ``segment_frames`` crop of every utterance.
    """
    labels = np.asarray(labels)
    n_classes = int(labels.max()) + 1
    if len(np.unique(labels)) < 2:
        raise InvalidArgumentError("pretraining needs at least two speakers")
    if feats.shape[1] < config.segment_frames:
        raise InvalidArgumentError("utterances shorter than the training segment")
    state = new_pretrain_state(n_classes, enc_config, config)
    state = pretrain_steps(state, feats, labels, config)
    recalibrate_batchnorm(state.encoder, feats)
    return state
