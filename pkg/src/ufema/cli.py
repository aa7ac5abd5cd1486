"""``ufema`` command line.

Paths come from ``UFEMA_DATA_DIR`` (enhancers, pretrained encoder) and
``UFEMA_RUNS_DIR`` (one directory per joint-training run). Everything else
comes from the config file, which is snapshot-copied into the run directory.
On failure a single JSON line ``{"error": <type>, "message": <text>}`` is
written to stderr and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import time
from pathlib import Path

from . import training as T
from .config import ExperimentConfig, load_config, save_config
from .corpus import SynthCorpus, export_corpus, parse_condition
from .enhancement import save_enhancer
from .errors import CheckpointError, InvalidArgumentError, UfemaError
from .evaluation import evaluate, read_trials, write_results_csv, write_trials
from .plotting import curve_series, emit_plot
from .runs import RunManifest, artifact_dir, run_lock, runs_dir

log = logging.getLogger("ufema")


# ------------------------------------------------------------- helpers


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def _artifacts(config: ExperimentConfig, need_encoder: bool = True) -> T.Artifacts:
    """Load stored artifacts for ``config``, building any missing stage first."""
    d = artifact_dir(config)
    have_enh = all((d / f"enhancer-{n}.ckpt").exists() for n in config.enhancers)
    have_enc = (d / "encoder.ckpt").exists()
    if not have_enh or (need_encoder and not have_enc):
        log.info("building missing artifacts in %s", d)
        with run_lock(d):
            art = T.prepare_artifacts(config, pretrain=need_encoder or have_enc)
            T.save_artifacts(art, d)
        return art
    return T.load_artifacts(config, d)


def _parse_weights(text: str) -> list:
    """``start:stop:step`` (inclusive stop) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidArgumentError(f"weights must be start:stop:step, got {text!r}")
        a, b, s = (float(p) for p in parts)
        if s <= 0:
            raise InvalidArgumentError("weight step must be positive")
        n = int(round((b - a) / s)) + 1
        ws = [round(a + i * s, 10) for i in range(n)]
    else:
        ws = [float(p) for p in text.split(",") if p]
    if not ws or any(not 0.0 <= w <= 1.0 for w in ws):
        raise InvalidArgumentError(f"weights must lie in [0, 1]: {text!r}")
    return ws


def _parse_conditions(text: str) -> list:
    return [parse_condition(c.strip()) for c in text.split(",") if c.strip()]


def _run_dir(config: ExperimentConfig, suffix: str = "") -> tuple[str, Path]:
    run_id = config.hash() + (f"-{suffix}" if suffix else "")
    return run_id, runs_dir() / run_id


def _finish(manifest: RunManifest, d: Path) -> None:
    manifest.save(d / "manifest.json")
    print(d)


# --------------------------------------------------------- subcommands


def cmd_synth_corpus(args) -> None:
    config = load_config(args.config)
    out = Path(args.out)
    with run_lock(out):
        manifest = RunManifest.for_config(f"corpus-{config.hash()}", config)
        with manifest.stage("synth-corpus") as produced:
            speakers, train, held, unseen = T.build_corpus(config)
            for name, utts in (("train", train), ("heldout", held), ("unseen", unseen)):
                path = export_corpus(SynthCorpus(speakers, utts), out / name)
                produced.append(path)
            art = T.Artifacts(config, speakers, train, held, unseen, None, None, None, {})
            for which in ("unseen", "heldout"):
                write_trials(out / f"trials-{which}.txt", art.trials(which))
                produced.append(out / f"trials-{which}.txt")
            save_config(config, out / "config.yaml")
            produced.append(out / "config.yaml")
        _finish(manifest, out)


def cmd_train_enhancer(args) -> None:
    config = load_config(args.config)
    d = artifact_dir(config)
    with run_lock(d):
        manifest = RunManifest.for_config(f"artifacts-{d.name}", config)
        with manifest.stage("train-enhancer") as produced:
            art = T.prepare_artifacts(config, pretrain=False)
            save_config(config, d / "config.yaml")
            for name, e in art.enhancers.items():
                save_enhancer(e, d / f"enhancer-{name}.ckpt")
                produced.append(d / f"enhancer-{name}.ckpt")
            produced.append(d / "config.yaml")
        _finish(manifest, d)


def cmd_pretrain_encoder(args) -> None:
    config = load_config(args.config)
    d = artifact_dir(config)
    art = _artifacts(config, need_encoder=False)
    with run_lock(d):
        manifest = RunManifest.for_config(f"artifacts-{d.name}", config)
        with manifest.stage("pretrain-encoder") as produced:
            if art.encoder is None:
                full = T.prepare_artifacts(config, pretrain=True, enhancers=False)
                art.encoder, art.head = full.encoder, full.head
                art.pretrain_accuracy = full.pretrain_accuracy
            T.save_pretrained_encoder(art, d / "encoder.ckpt")
            produced.append(d / "encoder.ckpt")
        log.info("pretrained encoder train accuracy %.3f", art.pretrain_accuracy)
        _finish(manifest, d)


def cmd_train(args) -> None:
    config = load_config(args.config)
    suffix = ""
    if args.ablate:
        arms = T.ablation_arms(config)
        if args.ablate not in arms:
            raise InvalidArgumentError(f"unknown arm {args.ablate!r}; choose from {list(arms)}")
        config = config.with_overrides(**arms[args.ablate])
        suffix = _slug(args.ablate)
    run_id, d = _run_dir(config, suffix)
    art = _artifacts(config, need_encoder=config.encoder_mode != "scratch")
    with run_lock(d):
        manifest = RunManifest.for_config(run_id, config)
        ckpt_path = d / "checkpoint.ckpt"
        with manifest.stage("train") as produced:
            save_config(config, d / "config.yaml")
            resume = None
            if args.resume and ckpt_path.exists():
                resume = T.load_joint_checkpoint(ckpt_path, art.enhancers)
                if resume.config.to_dict() != config.to_dict():
                    raise CheckpointError(f"{ckpt_path} was trained with a different config")
            mode = "a" if resume is not None else "w"
            with open(d / "train.log", mode, encoding="utf-8") as lf:
                ck = T.train_ufema(config, art, resume=resume, max_steps=args.max_steps, log_file=lf)
            T.save_joint_checkpoint(ck, ckpt_path)
            produced += [d / "config.yaml", d / "train.log", ckpt_path]
        finished = ck.epoch >= config.epochs
        if finished and not args.no_eval:
            with manifest.stage("evaluate") as produced:
                rows = T.evaluate_checkpoint(ck, art, T.FULL_CONDITIONS)
                write_results_csv(d / "results.csv", rows)
                produced.append(d / "results.csv")
        _finish(manifest, d)


def cmd_evaluate(args) -> None:
    ck = T.load_joint_checkpoint(args.ckpt)
    config = ck.config
    art = _artifacts(config)
    for name, h in ck.enhancer_hashes.items():
        if art.enhancers[name].param_hash() != h:
            raise CheckpointError(f"enhancer {name!r} on disk differs from the one {args.ckpt} used")
    trials = read_trials(args.trials)
    utts = art.unseen_utts + art.heldout_utts
    rows = evaluate(T.checkpoint_embed_fn(ck, art), utts, trials, _parse_conditions(args.conditions),
                    art.test_bank, config.segment_s)
    out = Path(args.out) if args.out else Path(args.ckpt).with_name("eval.csv")
    write_results_csv(out, rows)
    print(out)


def cmd_sweep_interp(args) -> None:
    unet = T.load_joint_checkpoint(args.ckpt)
    config = unet.config
    art = _artifacts(config)
    weights = _parse_weights(args.weights)
    d = Path(args.out) if args.out else Path(args.ckpt).parent / "sweep"
    with run_lock(d):
        manifest = RunManifest.for_config(f"sweep-{config.hash()}", config)
        with manifest.stage("sweep-interp") as produced:
            family = {}
            todo = []
            for w in weights:
                p = d / f"linear-w{w:.3f}.ckpt"
                if p.exists():
                    family[w] = T.load_joint_checkpoint(p, art.enhancers)
                else:
                    todo.append(w)
            for w, ck in T.train_linear_family(config, art, todo).items():
                T.save_joint_checkpoint(ck, d / f"linear-w{w:.3f}.ckpt")
                family[w] = ck
            produced += [d / f"linear-w{w:.3f}.ckpt" for w in weights]
            rows = T.sweep_interpolation(family, unet, art)
            T.write_sweep_csv(d / "sweep.csv", rows)
            series, unet_eer = curve_series(rows)
            for cond in series:
                emit_plot({cond: series[cond]}, d / f"sweep-{cond}.png",
                          {cond: unet_eer[cond]} if cond in unet_eer else None, title=f"{cond} @ -5 dB")
                produced.append(d / f"sweep-{cond}.png")
            produced.append(d / "sweep.csv")
        _finish(manifest, d)


def cmd_ablate(args) -> None:
    config = load_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [config.seed]
    art = _artifacts(config)
    run_id, d = _run_dir(config, "ablation")
    with run_lock(d):
        manifest = RunManifest.for_config(run_id, config)
        manifest.seeds["arm_seeds"] = seeds
        with manifest.stage("ablate") as produced:
            save_config(config, d / "config.yaml")
            rows = T.run_ablation_matrix(config, art, seeds=seeds)
            T.write_ablation_csv(d / "ablation.csv", T.summarize_ablation(rows))
            with open(d / "ablation-per-seed.json", "w", encoding="utf-8") as f:
                json.dump(rows, f, indent=1, sort_keys=True)
            produced += [d / "config.yaml", d / "ablation.csv", d / "ablation-per-seed.json"]
        _finish(manifest, d)


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ufema",
        description="Noise-robust speaker verification: UNet fusion of noisy and enhanced "
                    "log-mels with an EMA-updated speaker encoder.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-corpus", help="write the synthetic corpus as WAV + manifests + trials")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_corpus)

    s = sub.add_parser("train-enhancer", help="train/build the frozen enhancers")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_train_enhancer)

    s = sub.add_parser("pretrain-encoder", help="pretrain the speaker encoder on clean speech")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_pretrain_encoder)

    s = sub.add_parser("train", help="joint UNet + encoder training, then evaluation")
    s.add_argument("--config", required=True)
    s.add_argument("--ablate", metavar="ARM", help="train one ablation arm instead of the full system")
    s.add_argument("--max-steps", type=int, default=None, help="stop after this many steps")
    s.add_argument("--resume", action="store_true", help="continue from the run's checkpoint")
    s.add_argument("--no-eval", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="EER per condition for a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--trials", required=True)
    s.add_argument("--conditions", default="clean,noise@-5,music@-5,babble@-5")
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep-interp", help="linear interpolation sweep against a UNet checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--weights", default="0:1:0.1")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep_interp)

    s = sub.add_parser("ablate", help="train and evaluate every ablation arm")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", help="comma-separated joint-training seeds (default: config seed)")
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s %(message)s")
    t0 = time.perf_counter()
    try:
        args.func(args)
    except (UfemaError, ValueError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
