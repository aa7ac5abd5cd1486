"""The reference desk run: every trained system behind the directional checks.

One call trains and evaluates, for the default corpus:

- the pretrained-encoder baseline (no enhancement, no fusion),
- the ablation arms at -5 dB for several joint-training seeds,
- the full system on every condition (clean and four SNRs per noise kind),
- the linear-interpolation family at -5 dB.

Artifacts, checkpoints and evaluation rows are cached under one directory,
stage by stage, so an interrupted run picks up where it stopped and a
finished run is read back in well under a second. The cache is keyed by the
config hash only: delete it after changing training code.
"""
from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from . import training as T
from .config import ExperimentConfig
from .evaluation import evaluate

log = logging.getLogger(__name__)

REFERENCE_SEEDS = (0, 1, 2)
GATED_ARMS = ("All", "w/o Noisy input", "w/o EMA (Fixed)")
SWEEP_WEIGHTS = tuple(round(0.1 * i, 1) for i in range(11))
REFERENCE_EMA_ALPHA = 0.97


def reference_config(**overrides) -> ExperimentConfig:
    """Default config with the EMA horizon scaled to the desk-size run.

    alpha = 0.999 averages over about a thousand steps, while the reference
    run is 5 epochs of 31 steps. With alpha = 0.97 the averaging window
    (1 / (1 - alpha) ~ 33 steps) is about one epoch and the pretrained
    weights keep about 1 % of the shadow by the last step (0.97 ** 155).
    """
    return ExperimentConfig(ema_alpha=REFERENCE_EMA_ALPHA, **overrides)


@dataclass
class ReferenceResults:
    config: dict
    config_hash: str
    version: str
    pretrain_accuracy: float
    baseline: list  # evaluation rows, pretrained encoder on noisy log-mels
    ablation: list  # {arm, seed, condition, snr_db, eer}
    full: list  # evaluation rows of arm "All", first seed, every condition
    sweep: list  # {system, w, condition, snr_db, eer}
    history: dict  # arm -> per-step training loss, first seed
    request: dict = field(default_factory=dict)  # seeds, arms, weights
    seconds: dict = field(default_factory=dict)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ReferenceResults":
        return cls(**json.loads(Path(path).read_text()))

    def arm_mean(self, arm: str, conditions: Sequence[str] = ("noise", "music", "babble")) -> float:
        """Mean EER of ``arm`` over conditions and seeds."""
        vals = [r["eer"] for r in self.ablation if r["arm"] == arm and r["condition"] in conditions]
        if not vals:
            raise KeyError(arm)
        return sum(vals) / len(vals)


def _slug(arm: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", arm.lower()).strip("-")


def _stage(cache: dict, path: Path, key: str, fn):
    """Memoize ``fn()`` under ``key`` in a JSON file."""
    if key not in cache:
        t0 = time.perf_counter()
        cache[key] = fn()
        cache.setdefault("_seconds", {})[key] = round(time.perf_counter() - t0, 1)
        path.write_text(json.dumps(cache, indent=1, sort_keys=True))
    return cache[key]


def _trained(config: ExperimentConfig, art: T.Artifacts, runs: dict, d: Path) -> dict:
    """Load cached checkpoints for ``runs`` (name -> config), training the missing ones in lockstep."""
    out, todo = {}, {}
    for name, cfg in runs.items():
        p = d / f"{name}.ckpt"
        if p.exists():
            ck = T.load_joint_checkpoint(p, art.enhancers)
            if ck.config.to_dict() == cfg.to_dict() and ck.epoch >= cfg.epochs:
                out[name] = ck
                continue
        todo[name] = cfg
    if todo:
        log.info("training %d systems in lockstep: %s", len(todo), ", ".join(todo))
        for name, ck in zip(todo, T.train_many(list(todo.values()), art)):
            T.save_joint_checkpoint(ck, d / f"{name}.ckpt")
            out[name] = ck
    return {name: out[name] for name in runs}


def run_reference(cache_dir, config: ExperimentConfig | None = None,
                  seeds: Sequence[int] = REFERENCE_SEEDS, arms: Sequence[str] = GATED_ARMS,
                  weights: Sequence[float] = SWEEP_WEIGHTS) -> ReferenceResults:
    config = reference_config() if config is None else config
    root = Path(cache_dir) / config.hash()
    root.mkdir(parents=True, exist_ok=True)
    request = {"seeds": list(seeds), "arms": list(arms), "weights": [float(w) for w in weights]}
    if (root / "results.json").exists():
        done = ReferenceResults.load(root / "results.json")
        if done.request == request and done.version == __version__:
            return done
    memo_path = root / "stages.json"
    memo = json.loads(memo_path.read_text()) if memo_path.exists() else {}

    art_dir = root / "artifacts"
    if (art_dir / "encoder.ckpt").exists():
        art = T.load_artifacts(config, art_dir)
    else:
        t0 = time.perf_counter()
        art = T.prepare_artifacts(config)
        T.save_artifacts(art, art_dir)
        memo.setdefault("_seconds", {})["artifacts"] = round(time.perf_counter() - t0, 1)
        memo_path.write_text(json.dumps(memo, indent=1, sort_keys=True))

    baseline = _stage(memo, memo_path, "baseline", lambda: evaluate(
        T.baseline_embed_fn(art), art.unseen_utts, art.trials(), T.FULL_CONDITIONS, art.test_bank,
        config.segment_s))

    table = T.ablation_arms(config)
    ablation, history, full = [], {}, None
    for seed in seeds:
        runs = {_slug(a): config.with_overrides(seed=seed, **table[a]) for a in arms}
        sd = root / f"seed{seed}"
        sd.mkdir(exist_ok=True)
        cks = None
        for arm in arms:
            key = f"ablation/{seed}/{_slug(arm)}"
            if key not in memo:
                cks = cks or _trained(config, art, runs, sd)
            rows = _stage(memo, memo_path, key, lambda: T.evaluate_checkpoint(
                cks[_slug(arm)], art, T.TABLE2_CONDITIONS))
            ablation += [{"arm": arm, "seed": seed, "condition": r["condition"], "snr_db": r["snr_db"],
                          "eer": r["eer"]} for r in rows if r["condition"] != "average"]
            if seed == seeds[0]:
                history[arm] = _stage(memo, memo_path, f"history/{_slug(arm)}", lambda: (
                    cks or _trained(config, art, runs, sd))[_slug(arm)].history)
        if seed == seeds[0] and "All" in arms:
            full = _stage(memo, memo_path, "full/all", lambda: T.evaluate_checkpoint(
                (cks or _trained(config, art, runs, sd))["all"], art, T.FULL_CONDITIONS))

    sweep = []
    if weights:
        wd = root / "linear"
        wd.mkdir(exist_ok=True)
        linear = {f"w{w:.1f}": config.with_overrides(interp_mode="linear", interp_weight=float(w))
                  for w in weights}
        fam = None
        for w in weights:
            key = f"sweep/w{w:.1f}"
            if key not in memo:
                fam = fam or _trained(config, art, linear, wd)
            rows = _stage(memo, memo_path, key, lambda: T.evaluate_checkpoint(
                fam[f"w{w:.1f}"], art, T.TABLE2_CONDITIONS))
            sweep += [{"system": "linear", "w": float(w), "condition": r["condition"],
                       "snr_db": r["snr_db"], "eer": r["eer"]} for r in rows if r["condition"] != "average"]
        sweep += [{"system": "unet", "w": None, "condition": r["condition"], "snr_db": r["snr_db"],
                   "eer": r["eer"]} for r in ablation
                  if r["arm"] == "All" and r["seed"] == seeds[0]]

    results = ReferenceResults(config.to_dict(), config.hash(), __version__, art.pretrain_accuracy,
                               baseline, ablation, full or [], sweep, history, request,
                               dict(memo.get("_seconds", {})))
    results.save(root / "results.json")
    return results
