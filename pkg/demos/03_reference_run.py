"""The reference desk run: ablation, SNR robustness and the interpolation sweep.

Trains (or, when cached, reloads) every system behind the directional
checks on the default 20-speaker corpus and prints the result tables. The
cold run takes over an hour on one CPU core; the cache lives in
``reference/`` at the repository root, or under ``$UFEMA_REFERENCE_DIR``.

    python demos/03_reference_run.py [--plot sweep.png]
"""
import argparse
import logging
import os
from pathlib import Path

import torch

from ufema.plotting import curve_series, emit_plot
from ufema.reference import GATED_ARMS, reference_config, run_reference

KINDS = ("noise", "music", "babble")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--plot", type=Path, default=None, help="write the sweep figure here")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    torch.set_num_threads(1)

    root = Path(os.environ.get("UFEMA_REFERENCE_DIR", Path(__file__).resolve().parents[1] / "reference"))
    res = run_reference(root, reference_config())
    print(f"\npretrained encoder train accuracy {res.pretrain_accuracy:.3f}")

    print("\nEER (%) at -5 dB, mean over seeds", res.request["seeds"])
    print(f"{'arm':<20}" + "".join(f"{k:>9}" for k in KINDS) + f"{'mean':>9}")
    for arm in GATED_ARMS:
        cells = [res.arm_mean(arm, (k,)) for k in KINDS]
        print(f"{arm:<20}" + "".join(f"{100 * c:>9.2f}" for c in cells) + f"{100 * res.arm_mean(arm):>9.2f}")

    print("\nEER (%) by SNR: pretrained baseline / All")
    base = {(r["condition"], r["snr_db"]): r["eer"] for r in res.baseline}
    full = {(r["condition"], r["snr_db"]): r["eer"] for r in res.full}
    print(f"{'':<8}" + "".join(f"{s:>14}" for s in ("-5", "0", "5", "10")))
    for k in KINDS:
        print(f"{k:<8}" + "".join(f"{100 * base[(k, s)]:>7.1f}/{100 * full[(k, s)]:<6.1f}"
                                  for s in (-5.0, 0.0, 5.0, 10.0)))
    print(f"{'clean':<8}{100 * base[('clean', None)]:>7.1f}/{100 * full[('clean', None)]:<6.1f}")

    series, unet = curve_series(res.sweep)
    print("\nlinear interpolation at -5 dB, EER (%) by w; last column is UNet fusion")
    for k in KINDS:
        print(f"{k:<8}" + "".join(f"{100 * e:>6.1f}" for _, e in series[k]) + f" | {100 * unet[k]:.1f}")
    if args.plot is not None:
        emit_plot(series, args.plot, unet, title="-5 dB")
        print(f"wrote {args.plot}")


if __name__ == "__main__":
    main()
