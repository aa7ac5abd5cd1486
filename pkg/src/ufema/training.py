"""Joint training of fusion UNet + speaker encoder, and the experiment arms built on it.

Per step: crop clean segments, corrupt them with train-pool noise at a
random SNR (or leave them clean), run the frozen enhancers, stack
log-mels, fuse, mean-normalize, embed, AAM loss, backprop, then update the
EMA shadow of the encoder.

All randomness is derived from (seed, epoch, index), never from global
generator state, so runs replay exactly and several runs sharing a seed can
be trained in lockstep on one stream of augmented data.
"""
from __future__ import annotations

import copy
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import checkpoint as ckpt_io
from .config import ExperimentConfig, load_config, save_config
from .corpus import (
    NOISE_KINDS,
    NoiseBank,
    NoiseCondition,
    NoisePoolRegistry,
    Utterance,
    build_noise_bank,
    make_corpus,
    mix_at_snr,
    random_speaker,
    synth_utterance,
    truncate_segment,
)
from .ema import EMAState, ema_update
from .encoder import (
    AAMHead,
    EncoderConfig,
    PretrainConfig,
    SpeakerEncoder,
    aam_loss,
    classify_accuracy,
    init_encoder,
    pretrain_encoder,
)
from .enhancement import (MaskTrainConfig, build_spectral_subtraction, load_enhancer, save_enhancer,
                          train_mask_enhancer)
from .errors import CheckpointError, InvalidArgumentError, PoolViolationError, TrainingFailureError
from .evaluation import evaluate, make_trials
from .features import log_mel, mean_normalize
from .fusion import FusionUNet, UNetConfig, init_fusion
from .pipeline import FrontEnd, embed_batch, linear_interp_baseline  # noqa: F401 (re-export)

log = logging.getLogger(__name__)

UNSEEN_SPEAKER_OFFSET = 1000
ENHANCER_SPEAKER_OFFSET = 5000

TABLE2_CONDITIONS = tuple(NoiseCondition(k, -5.0) for k in NOISE_KINDS)
FULL_CONDITIONS = (NoiseCondition("clean"),) + tuple(
    NoiseCondition(k, float(s)) for k in NOISE_KINDS for s in (-5, 0, 5, 10))


# ------------------------------------------------------------- artifacts


@dataclass
class Artifacts:
    """Pretrained, frozen inputs shared by every run of one experiment."""

    config: ExperimentConfig
    speakers: list
    train_utts: list
    heldout_utts: list
    unseen_utts: list
    registry: NoisePoolRegistry
    train_bank: NoiseBank
    test_bank: NoiseBank
    enhancers: dict  # name -> Enhancer, registry order
    encoder: SpeakerEncoder | None = None
    head: AAMHead | None = None
    pretrain_accuracy: float | None = None
    enhancer_history: dict = field(default_factory=dict)

    @property
    def labels(self) -> np.ndarray:
        index = {s.speaker_id: i for i, s in enumerate(self.speakers)}
        return np.array([index[u.speaker_id] for u in self.train_utts])

    def trials(self, which: str = "unseen"):
        utts = self.unseen_utts if which == "unseen" else self.heldout_utts
        return make_trials(utts, seed=self.config.corpus_seed)

    def eval_utterances(self, which: str = "unseen") -> list:
        return self.unseen_utts if which == "unseen" else self.heldout_utts

    def enhancer_hashes(self) -> dict:
        return {name: e.param_hash() for name, e in self.enhancers.items()}


def build_corpus(config: ExperimentConfig):
    n_train, n_held = config.train_utts_per_speaker, config.heldout_utts_per_speaker
    seen = make_corpus(range(config.n_speakers), range(n_train + n_held),
                       config.utterance_s, config.corpus_seed)
    by_spk = seen.by_speaker()
    train = [u for s in seen.speakers for u in by_spk[s.speaker_id][:n_train]]
    held = [u for s in seen.speakers for u in by_spk[s.speaker_id][n_train:]]
    unseen = make_corpus(range(UNSEEN_SPEAKER_OFFSET, UNSEEN_SPEAKER_OFFSET + config.n_unseen_speakers),
                         range(config.unseen_utts_per_speaker), config.utterance_s, config.corpus_seed)
    return seen.speakers, train, held, unseen.utterances


def enhancer_training_pairs(config: ExperimentConfig, bank: NoiseBank) -> list:
    """(noisy, clean) pairs from speakers outside the SV corpus, train-pool noise only."""
    if bank.pool != "train":
        raise PoolViolationError("enhancers must be trained on the train noise pool")
    rng = np.random.default_rng([config.corpus_seed, 41])
    pairs = []
    for i in range(config.mask_train_pairs):
        spk = random_speaker(ENHANCER_SPEAKER_OFFSET + i % 40, seed=config.corpus_seed)
        clean = truncate_segment(synth_utterance(spk, config.utterance_s, 10_000 + i),
                                 config.segment_s, seed=i)
        kind = NOISE_KINDS[i % len(NOISE_KINDS)]
        snr = float(config.train_snrs[rng.integers(len(config.train_snrs))])
        noise = bank.draw(kind, len(clean), int(rng.integers(2**31)))
        pairs.append((mix_at_snr(clean, noise, snr), clean))
    return pairs


def build_enhancers(config: ExperimentConfig, train_bank: NoiseBank) -> tuple[dict, dict]:
    out, history = {}, {}
    for name in config.enhancers:
        if name == "spectral_subtraction":
            out[name] = build_spectral_subtraction(config.specsub_alpha, config.specsub_floor, name=name)
        elif name == "mask_net":
            e = train_mask_enhancer(
                enhancer_training_pairs(config, train_bank),
                MaskTrainConfig(epochs=config.mask_epochs, hidden=config.mask_hidden,
                                seed=config.corpus_seed),
                name=name)
            out[name], history[name] = e, e.history
        else:
            raise InvalidArgumentError(f"unknown enhancer {name!r}")
    return out, history


def encoder_config(config: ExperimentConfig) -> EncoderConfig:
    return EncoderConfig(n_mels=config.n_mels, channels=config.encoder_channels,
                         embed_dim=config.embed_dim)


def pretrain_config(config: ExperimentConfig) -> PretrainConfig:
    frames = config.feature_config.n_frames(int(round(config.segment_s * 16000)))
    return PretrainConfig(epochs=config.pretrain_epochs, batch_size=config.pretrain_batch_size,
                          lr=config.lr, segment_frames=frames, margin=config.aam_margin,
                          scale=config.aam_scale, seed=config.corpus_seed)


def clean_features(utts: Sequence[Utterance], config: ExperimentConfig) -> np.ndarray:
    fc = config.feature_config
    return np.stack([log_mel(u.waveform, fc).values for u in utts]).astype(np.float32)


def prepare_artifacts(config: ExperimentConfig, pretrain: bool = True,
                      enhancers: bool = True) -> Artifacts:
    """Corpus, disjoint noise banks, enhancers and (optionally) the pretrained encoder."""
    speakers, train, held, unseen = build_corpus(config)
    registry = NoisePoolRegistry()
    train_bank = build_noise_bank("train", config.noise_bank_size, config.noise_bank_s, registry)
    test_bank = build_noise_bank("test", config.noise_bank_size, config.noise_bank_s, registry)
    registry.assert_disjoint()
    enh, history = build_enhancers(config, train_bank) if enhancers else ({}, {})
    art = Artifacts(config, speakers, train, held, unseen, registry, train_bank, test_bank,
                    enh, enhancer_history=history)
    if pretrain:
        feats = clean_features(train, config)
        state = pretrain_encoder(feats, art.labels, encoder_config(config), pretrain_config(config))
        art.encoder, art.head = state.encoder.eval(), state.head
        art.pretrain_accuracy = classify_accuracy(state.encoder, state.head, feats, art.labels)
        log.info("pretrained encoder: train accuracy %.3f", art.pretrain_accuracy)
    return art


def save_pretrained_encoder(art: Artifacts, path) -> None:
    arrays = ckpt_io.module_arrays(art.encoder, "encoder.")
    arrays["head.weight"] = art.head.weight.detach().numpy()
    meta = {"encoder_config": {**art.encoder.config.__dict__},
            "head": {"margin": art.head.margin, "scale": art.head.scale,
                     "n_classes": art.head.n_classes},
            "train_accuracy": art.pretrain_accuracy,
            "speakers": [s.speaker_id for s in art.speakers]}
    ckpt_io.save(path, "encoder", meta, arrays)


def load_pretrained_encoder(path) -> tuple[SpeakerEncoder, AAMHead, dict]:
    _, meta, arrays = ckpt_io.load(path, expect_kind="encoder")
    ec = dict(meta["encoder_config"])
    ec["kernels"], ec["dilations"] = tuple(ec["kernels"]), tuple(ec["dilations"])
    encoder = SpeakerEncoder(EncoderConfig(**ec))
    ckpt_io.load_module_arrays(encoder, arrays, "encoder.")
    h = meta["head"]
    head = AAMHead(h["n_classes"], encoder.config.embed_dim, h["margin"], h["scale"])
    with torch.no_grad():
        head.weight.copy_(torch.from_numpy(arrays["head.weight"]))
    return encoder.eval(), head, meta


def save_artifacts(art: Artifacts, directory) -> None:
    """Persist the trained parts; corpus and noise banks are regenerated from the config."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_config(art.config, d / "config.yaml")
    for name, e in art.enhancers.items():
        save_enhancer(e, d / f"enhancer-{name}.ckpt")
    if art.encoder is not None:
        save_pretrained_encoder(art, d / "encoder.ckpt")


def load_artifacts(config: ExperimentConfig, directory) -> Artifacts:
    """Regenerate corpus and banks for ``config`` and load enhancers/encoder from ``directory``.

    Raises ``CheckpointError`` if the stored artifacts were built from a
    different corpus or enhancer setup.
    """
    d = Path(directory)
    stored = load_config(d / "config.yaml")
    for key in _ARTIFACT_KEYS:
        if getattr(stored, key) != getattr(config, key):
            raise CheckpointError(f"{d}: artifacts were built with a different {key!r}")
    art = prepare_artifacts(config, pretrain=False, enhancers=False)
    art.enhancers = {n: load_enhancer(d / f"enhancer-{n}.ckpt") for n in config.enhancers}
    if (d / "encoder.ckpt").exists():
        art.encoder, art.head, meta = load_pretrained_encoder(d / "encoder.ckpt")
        art.pretrain_accuracy = meta["train_accuracy"]
    return art


# ------------------------------------------------------------ checkpoint


@dataclass
class JointCheckpoint:
    config: ExperimentConfig
    fusion: FusionUNet | None
    ema: EMAState
    head: AAMHead
    optimizer: torch.optim.Optimizer
    enhancer_hashes: dict
    epoch: int = 0
    step_in_epoch: int = 0
    global_step: int = 0
    history: list = field(default_factory=list)

    def eval_encoder(self) -> SpeakerEncoder:
        return self.ema.shadow if self.config.eval_copy == "ema" else self.ema.model


def _front_end(config: ExperimentConfig, enhancers: dict) -> FrontEnd:
    return FrontEnd([enhancers[n] for n in config.active_enhancers], config.feature_config,
                    config.use_noisy_channel, config.interp_mode, config.interp_weight)


def _unet_config(config: ExperimentConfig) -> UNetConfig:
    n_in = len(config.active_enhancers) + int(config.use_noisy_channel)
    return UNetConfig(in_channels=n_in, encoder_channels=tuple(config.unet_channels),
                      skip_connections=config.unet_skip)


def _make_optimizer(config, fusion, encoder, head) -> torch.optim.Optimizer:
    params = []
    if fusion is not None:
        params += list(fusion.parameters())
    if config.encoder_mode != "fixed":
        params += list(encoder.parameters())
    if config.update_aam_head:
        params += list(head.parameters())
    if not params:
        raise InvalidArgumentError("nothing to train: fixed encoder, no fusion and frozen head")
    return torch.optim.Adam(params, lr=config.lr)


def new_checkpoint(config: ExperimentConfig, art: Artifacts) -> JointCheckpoint:
    fusion = init_fusion(_unet_config(config), config.seed) if config.interp_mode == "unet" else None
    if config.encoder_mode == "scratch":
        encoder = init_encoder(encoder_config(config), seed=config.seed + 17)
        head = AAMHead(len(art.speakers), config.embed_dim, config.aam_margin, config.aam_scale,
                       seed=config.seed + 18)
    else:
        if art.encoder is None:
            raise InvalidArgumentError(
                f"encoder_mode={config.encoder_mode!r} needs a pretrained encoder checkpoint")
        encoder, head = copy.deepcopy(art.encoder), copy.deepcopy(art.head)
        head.margin, head.scale = config.aam_margin, config.aam_scale
    if config.encoder_mode == "fixed":
        for p in encoder.parameters():
            p.requires_grad_(False)
    if not config.update_aam_head:
        for p in head.parameters():
            p.requires_grad_(False)
    alpha = config.ema_alpha if config.encoder_mode == "ema" else 0.0
    ema = EMAState(encoder, alpha)
    return JointCheckpoint(config, fusion, ema, head, _make_optimizer(config, fusion, encoder, head),
                           art.enhancer_hashes())


def save_joint_checkpoint(ck: JointCheckpoint, path) -> None:
    arrays = {}
    if ck.fusion is not None:
        arrays.update(ckpt_io.module_arrays(ck.fusion, "fusion."))
    arrays.update(ckpt_io.module_arrays(ck.ema.model, "model."))
    arrays.update(ckpt_io.module_arrays(ck.ema.shadow, "ema."))
    arrays["head.weight"] = ck.head.weight.detach().numpy()
    opt_state = ck.optimizer.state_dict()
    for idx, st in opt_state["state"].items():
        for key, val in st.items():
            arrays[f"opt.{idx}.{key}"] = val.detach().numpy()
    meta = {
        "config": ck.config.to_dict(),
        "feature_config": ck.config.feature_config.__dict__,
        "ema": {"alpha": ck.ema.alpha, "step": ck.ema.step},
        "head": {"margin": ck.head.margin, "scale": ck.head.scale, "n_classes": ck.head.n_classes},
        "optimizer": {"param_groups": opt_state["param_groups"]},
        "progress": {"epoch": ck.epoch, "step_in_epoch": ck.step_in_epoch,
                     "global_step": ck.global_step},
        "history": ck.history,
        "enhancer_hashes": ck.enhancer_hashes,
        # every random draw is a pure function of these
        "rng": {"scheme": "seedsequence(seed, epoch, index)", "seed": ck.config.seed,
                "corpus_seed": ck.config.corpus_seed},
    }
    ckpt_io.save(path, "joint", meta, arrays)


def load_joint_checkpoint(path, enhancers: dict | None = None) -> JointCheckpoint:
    """Rebuild a checkpoint; when ``enhancers`` is given their hashes must match."""
    from .config import config_from_dict

    _, meta, arrays = ckpt_io.load(path, expect_kind="joint")
    config = config_from_dict(meta["config"], str(path))
    if enhancers is not None:
        current = {n: e.param_hash() for n, e in enhancers.items()}
        for name, h in meta["enhancer_hashes"].items():
            if current.get(name) != h:
                raise CheckpointError(f"{path}: enhancer {name!r} does not match the one trained with")
    fusion = None
    if config.interp_mode == "unet":
        fusion = FusionUNet(_unet_config(config))
        ckpt_io.load_module_arrays(fusion, arrays, "fusion.")
    model = SpeakerEncoder(encoder_config(config))
    shadow = SpeakerEncoder(encoder_config(config))
    ckpt_io.load_module_arrays(model, arrays, "model.")
    ckpt_io.load_module_arrays(shadow, arrays, "ema.")
    h = meta["head"]
    head = AAMHead(h["n_classes"], config.embed_dim, h["margin"], h["scale"])
    with torch.no_grad():
        head.weight.copy_(torch.from_numpy(arrays["head.weight"]))
    if config.encoder_mode == "fixed":
        for p in model.parameters():
            p.requires_grad_(False)
    if not config.update_aam_head:
        for p in head.parameters():
            p.requires_grad_(False)
    ema = EMAState(model, meta["ema"]["alpha"], shadow=shadow, step=meta["ema"]["step"])
    opt = _make_optimizer(config, fusion, model, head)
    groups = meta["optimizer"]["param_groups"]
    for g in groups:
        if "betas" in g:
            g["betas"] = tuple(g["betas"])
    state = {}
    for name, a in arrays.items():
        if name.startswith("opt."):
            _, idx, key = name.split(".", 2)
            state.setdefault(int(idx), {})[key] = torch.from_numpy(np.array(a))
    opt.load_state_dict({"state": state, "param_groups": groups})
    p = meta["progress"]
    return JointCheckpoint(config, fusion, ema, head, opt, meta["enhancer_hashes"],
                           p["epoch"], p["step_in_epoch"], p["global_step"], list(meta["history"]))


# -------------------------------------------------------------- training

# Config keys that determine the stored artifacts.
_ARTIFACT_KEYS = ("corpus_seed", "n_speakers", "train_utts_per_speaker", "heldout_utts_per_speaker",
                  "utterance_s", "segment_s", "noise_bank_size", "noise_bank_s", "n_mels", "win_ms",
                  "hop_ms", "n_fft", "log_eps", "enhancers", "specsub_alpha", "specsub_floor",
                  "mask_train_pairs", "mask_epochs", "mask_hidden", "embed_dim", "encoder_channels",
                  "aam_margin", "aam_scale", "pretrain_epochs", "pretrain_batch_size", "train_snrs")

# Config keys that define the augmented data stream; lockstep runs must agree on them.
_DATA_KEYS = ("seed", "corpus_seed", "epochs", "batch_size", "segment_s", "clean_prob",
              "train_snrs", "n_speakers", "train_utts_per_speaker")


def _batches(n: int, batch_size: int, seed: int, epoch: int) -> list:
    order = np.random.default_rng([seed, epoch, 1]).permutation(n)
    # drop the trailing partial batch: batch norm needs >= 2 items
    return [order[i:i + batch_size] for i in range(0, n - batch_size + 1, batch_size)]


def training_input(art: Artifacts, config: ExperimentConfig, epoch: int, index: int):
    """Augmented noisy segment for one (epoch, utterance) slot, and its condition."""
    rng = np.random.default_rng([config.seed, epoch, int(index), 5])
    crop_seed, noise_seed = (int(v) for v in rng.integers(2**31, size=2))
    is_clean = rng.random() < config.clean_prob
    kind = NOISE_KINDS[int(rng.integers(len(NOISE_KINDS)))]
    snr = float(config.train_snrs[int(rng.integers(len(config.train_snrs)))])
    clean = truncate_segment(art.train_utts[index].waveform, config.segment_s, crop_seed)
    if is_clean:
        return clean, NoiseCondition("clean", None, "train")
    noise = art.train_bank.draw(kind, len(clean), noise_seed)
    return mix_at_snr(clean, noise, snr), NoiseCondition(kind, snr, "train")


def _train_step(ck: JointCheckpoint, feats: np.ndarray, labels: torch.Tensor) -> float:
    cfg = ck.config
    encoder = ck.ema.model
    if ck.fusion is not None:
        ck.fusion.train()
    encoder.train(cfg.encoder_mode != "fixed")
    x = torch.from_numpy(feats)
    z = mean_normalize(ck.fusion(x) if ck.fusion is not None else x)
    loss = aam_loss(ck.head, encoder(z), labels)
    if not torch.isfinite(loss):
        raise TrainingFailureError(
            f"loss is {loss.item()} at step {ck.global_step} (epoch {ck.epoch}); "
            f"last finite loss {ck.history[-1] if ck.history else 'n/a'}")
    ck.optimizer.zero_grad()
    loss.backward()
    ck.optimizer.step()
    if cfg.encoder_mode != "fixed":
        ema_update(ck.ema)
    return loss.item()


def train_many(configs: Sequence[ExperimentConfig], art: Artifacts,
               resume: Sequence[JointCheckpoint] | None = None,
               max_steps: int | None = None, log_file=None) -> list[JointCheckpoint]:
    """Train several runs in lockstep over one augmented data stream.

    The runs must agree on every data-defining key (seed, epochs, batch
    size, augmentation); they may differ in channels, enhancers, encoder
    mode and interpolation. Each result is identical to training that
    config alone.
    """
    base = configs[0]
    for c in configs[1:]:
        for key in _DATA_KEYS:
            if getattr(c, key) != getattr(base, key):
                raise InvalidArgumentError(f"lockstep runs disagree on {key!r}")
    if art.train_bank.pool != "train" or art.test_bank.pool != "test":
        raise PoolViolationError("noise banks are assigned to the wrong pools")
    art.registry.assert_disjoint()
    hashes = art.enhancer_hashes()

    runs = list(resume) if resume is not None else [new_checkpoint(c, art) for c in configs]
    for ck in runs:
        for name, h in ck.enhancer_hashes.items():
            if hashes.get(name) != h:
                raise CheckpointError(f"enhancer {name!r} differs from the one this run started with")
    fronts = [_front_end(ck.config, art.enhancers) for ck in runs]
    needed = [n for n in art.enhancers if any(n in ck.config.active_enhancers for ck in runs)
              and any(ck.config.interp_mode != "none" for ck in runs)]
    labels = torch.as_tensor(art.labels, dtype=torch.long)

    ck0 = runs[0]
    epoch, step_in_epoch, done = ck0.epoch, ck0.step_in_epoch, 0
    while epoch < base.epochs:
        batches = _batches(len(art.train_utts), base.batch_size, base.seed, epoch)
        while step_in_epoch < len(batches):
            if max_steps is not None and done >= max_steps:
                return runs
            idx = batches[step_in_epoch]
            noisy = [training_input(art, base, epoch, int(i))[0] for i in idx]
            enhanced = [{n: art.enhancers[n].enhance(x) for n in needed} for x in noisy]
            for ck, front in zip(runs, fronts):
                feats = np.stack([front.features(x, e) for x, e in zip(noisy, enhanced)])
                loss = _train_step(ck, feats.astype(np.float32), labels[idx])
                ck.history.append(loss)
                ck.global_step += 1
                ck.epoch, ck.step_in_epoch = epoch, step_in_epoch + 1
                if log_file is not None:
                    log_file.write(f"run={ck.config.hash()} step={ck.global_step} epoch={epoch} "
                                   f"loss={loss:.6f} lr={ck.optimizer.param_groups[0]['lr']:g}\n")
            step_in_epoch += 1
            done += 1
        epoch += 1
        step_in_epoch = 0
        for ck in runs:
            ck.epoch, ck.step_in_epoch = epoch, 0
        log.info("epoch %d done, losses %s", epoch, [round(ck.history[-1], 4) for ck in runs])

    if art.enhancer_hashes() != hashes:
        raise TrainingFailureError("enhancer parameters changed during joint training")
    return runs


def train_ufema(config: ExperimentConfig, art: Artifacts, resume: JointCheckpoint | None = None,
                max_steps: int | None = None, log_file=None) -> JointCheckpoint:
    return train_many([config], art, None if resume is None else [resume], max_steps, log_file)[0]


# ------------------------------------------------------------ evaluation


def embed_fn(front: FrontEnd, fusion: FusionUNet | None, encoder: SpeakerEncoder):
    def run(waves):
        feats = np.stack([front.features(w) for w in waves])
        return embed_batch(front, fusion, encoder, feats)
    return run


def checkpoint_embed_fn(ck: JointCheckpoint, art: Artifacts):
    return embed_fn(_front_end(ck.config, art.enhancers), ck.fusion, ck.eval_encoder())


def baseline_embed_fn(art: Artifacts):
    """Pretrained encoder on the noisy log-mel, no enhancement or fusion."""
    front = FrontEnd([], art.config.feature_config, interp="none")
    return embed_fn(front, None, art.encoder)


def evaluate_checkpoint(ck: JointCheckpoint, art: Artifacts,
                        conditions: Sequence[NoiseCondition] = FULL_CONDITIONS,
                        which: str = "unseen") -> list[dict]:
    return evaluate(checkpoint_embed_fn(ck, art), art.eval_utterances(which), art.trials(which),
                    conditions, art.test_bank, art.config.segment_s)


# -------------------------------------------------------------- ablation


def ablation_arms(base: ExperimentConfig) -> dict:
    """The seven ablation arms, keyed by display name."""
    names = base.enhancers
    arms = {
        "All": {},
        "w/o Noisy input": {"use_noisy_channel": False},
    }
    for n in names:
        arms[f"w/o {n}"] = {"enabled_enhancers": [m for m in names if m != n]}
    arms["w/o EMA (Fixed)"] = {"encoder_mode": "fixed"}
    arms["w/o EMA (From scratch)"] = {"encoder_mode": "scratch"}
    arms["w/o EMA (Fine-tune)"] = {"encoder_mode": "finetune"}
    return arms


def run_ablation_matrix(base: ExperimentConfig, art: Artifacts, arms: Sequence[str] | None = None,
                        seeds: Sequence[int] | None = None,
                        conditions: Sequence[NoiseCondition] = TABLE2_CONDITIONS,
                        which: str = "unseen") -> list[dict]:
    """EER per (arm, seed, condition); arms sharing a seed train in lockstep."""
    table = ablation_arms(base)
    arms = list(table) if arms is None else list(arms)
    seeds = [base.seed] if seeds is None else list(seeds)
    rows = []
    for seed in seeds:
        configs = [base.with_overrides(seed=seed, **table[a]) for a in arms]
        for arm, ck in zip(arms, train_many(configs, art)):
            for r in evaluate_checkpoint(ck, art, conditions, which):
                if r["condition"] != "average":
                    rows.append({"arm": arm, "seed": seed, "condition": r["condition"],
                                 "snr_db": r["snr_db"], "eer": r["eer"]})
    return rows


def summarize_ablation(rows: Sequence[dict]) -> list[dict]:
    """Mean EER over seeds per (arm, condition), in first-seen order."""
    keys, acc = [], {}
    for r in rows:
        k = (r["arm"], r["condition"], r["snr_db"])
        if k not in acc:
            keys.append(k)
            acc[k] = []
        acc[k].append(r["eer"])
    return [{"arm": a, "condition": c, "snr_db": s, "eer": float(np.mean(acc[(a, c, s)]))}
            for a, c, s in keys]


def train_linear_family(base: ExperimentConfig, art: Artifacts,
                        weights: Sequence[float]) -> dict:
    """One linear-interpolation system per weight, trained in lockstep."""
    configs = [base.with_overrides(interp_mode="linear", interp_weight=float(w)) for w in weights]
    return dict(zip([float(w) for w in weights], train_many(configs, art)))


def sweep_interpolation(family: dict, unet: JointCheckpoint | None, art: Artifacts,
                        conditions: Sequence[NoiseCondition] = TABLE2_CONDITIONS,
                        which: str = "unseen") -> list[dict]:
    """EER per (w, condition) for a linear family, plus the UNet-fusion point per condition."""
    for w in family:
        if not 0.0 <= w <= 1.0:
            raise InvalidArgumentError(f"interpolation weight must lie in [0, 1], got {w}")
    rows = []
    systems = [("linear", w, ck) for w, ck in sorted(family.items())]
    if unet is not None:
        systems.append(("unet", None, unet))
    for system, w, ck in systems:
        for r in evaluate_checkpoint(ck, art, conditions, which):
            if r["condition"] != "average":
                rows.append({"system": system, "w": w, "condition": r["condition"],
                             "snr_db": r["snr_db"], "eer": r["eer"]})
    return rows


def _fmt(v):
    if v is None:
        return ""
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_ablation_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["arm", "condition", "snr_db", "eer"])
        for r in rows:
            w.writerow([r["arm"], r["condition"], _fmt(r["snr_db"]), repr(float(r["eer"]))])


def read_ablation_csv(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return [{"arm": r["arm"], "condition": r["condition"],
             "snr_db": float(r["snr_db"]) if r["snr_db"] else None, "eer": float(r["eer"])}
            for r in rows]


def write_sweep_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["system", "w", "condition", "snr_db", "eer"])
        for r in rows:
            w.writerow([r["system"], _fmt(r["w"]), r["condition"], _fmt(r["snr_db"]),
                        repr(float(r["eer"]))])
