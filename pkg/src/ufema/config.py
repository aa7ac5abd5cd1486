"""Experiment configuration: one flat YAML mapping per run.

Every key maps onto an ``ExperimentConfig`` field. Unknown keys are an
error, never ignored. Defaults follow the published setup where it states
one (lr 1e-3, EMA alpha 0.999, 80 mel bins, 192-dim embeddings, UNet
channels 32/64/128/256) and desk-scale choices elsewhere.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .features import FeatureConfig

ENCODER_MODES = ("ema", "fixed", "scratch", "finetune")


@dataclass
class ExperimentConfig:
    # joint-training seed (UNet init, batch order, augmentation draws)
    seed: int = 0
    # seed for the corpus, noise banks, enhancer training and encoder pretraining
    corpus_seed: int = 0

    # corpus
    n_speakers: int = 20
    train_utts_per_speaker: int = 50
    heldout_utts_per_speaker: int = 5
    n_unseen_speakers: int = 20
    unseen_utts_per_speaker: int = 10
    utterance_s: float = 3.0
    segment_s: float = 2.0
    noise_bank_size: int = 12
    noise_bank_s: float = 8.0

    # features
    n_mels: int = 80
    win_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    log_eps: float = 1e-6

    # enhancers, in channel order
    enhancers: list = field(default_factory=lambda: ["spectral_subtraction", "mask_net"])
    enabled_enhancers: list | None = None
    specsub_alpha: float = 2.0
    specsub_floor: float = 0.05
    mask_train_pairs: int = 300
    mask_epochs: int = 20
    mask_hidden: int = 128

    # fusion
    unet_channels: list = field(default_factory=lambda: [32, 64, 128, 256])
    unet_skip: bool = True

    # speaker encoder and AAM head
    embed_dim: int = 192
    encoder_channels: int = 64
    aam_margin: float = 0.2
    aam_scale: float = 30.0
    pretrain_epochs: int = 30
    pretrain_batch_size: int = 32

    # joint training
    lr: float = 1e-3
    ema_alpha: float = 0.999
    batch_size: int = 32
    epochs: int = 5
    train_snrs: list = field(default_factory=lambda: [-5, 0, 5, 10])
    clean_prob: float = 0.2
    use_noisy_channel: bool = True
    encoder_mode: str = "ema"
    interp_mode: str = "unet"
    interp_weight: float = 0.5
    update_aam_head: bool = True
    eval_copy: str = "ema"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.encoder_mode not in ENCODER_MODES:
            raise ConfigError(f"encoder_mode must be one of {ENCODER_MODES}, got {self.encoder_mode!r}")
        if self.interp_mode not in ("unet", "linear", "none"):
            raise ConfigError(f"interp_mode must be unet, linear or none, got {self.interp_mode!r}")
        if self.eval_copy not in ("ema", "model"):
            raise ConfigError(f"eval_copy must be 'ema' or 'model', got {self.eval_copy!r}")
        if not 0.0 <= self.ema_alpha < 1.0:
            raise ConfigError(f"ema_alpha must lie in [0, 1), got {self.ema_alpha}")
        if not 0.0 <= self.interp_weight <= 1.0:
            raise ConfigError(f"interp_weight must lie in [0, 1], got {self.interp_weight}")
        if not 0.0 <= self.clean_prob <= 1.0:
            raise ConfigError("clean_prob must lie in [0, 1]")
        unknown = set(self.enabled_enhancers or []) - set(self.enhancers)
        if unknown:
            raise ConfigError(f"enabled_enhancers names unregistered enhancers {sorted(unknown)}")
        if self.interp_mode == "unet" and not self.active_enhancers and not self.use_noisy_channel:
            raise ConfigError("at least one input channel must be enabled")
        if self.interp_mode == "unet" and not self.active_enhancers:
            raise ConfigError("UNet fusion needs at least one enabled enhancer")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (batch norm)")
        if self.n_speakers < 2:
            raise ConfigError("need at least two training speakers")

    @property
    def active_enhancers(self) -> list:
        if self.enabled_enhancers is None:
            return list(self.enhancers)
        return [e for e in self.enhancers if e in self.enabled_enhancers]

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(self.n_mels, self.win_ms, self.hop_ms, self.n_fft, self.log_eps)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_FIELDS = {f.name for f in fields(ExperimentConfig)}


def config_from_dict(data: dict, source: str = "<dict>", lines: dict | None = None) -> ExperimentConfig:
    for key in data:
        if key not in _FIELDS:
            where = f"{source}:{lines[key]}" if lines and key in lines else source
            raise ConfigError(f"{where}: unknown config key {key!r}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}{line}: cannot parse config: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        return ExperimentConfig()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a key-value mapping")
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    return config_from_dict(data, str(path), lines)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=True), encoding="utf-8")
