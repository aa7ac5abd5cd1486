"""Exit criteria 1-7, one PASS/FAIL line each.

Criteria 1-3 re-run the oracle tests that carry the exact tolerances, in a
fresh interpreter, and hold the wall time to the budget. Criteria 4-6 read
the reference desk run (``ufema.reference``); the first call trains it,
which takes over an hour on one CPU core, and later calls load the cached
results. Criterion 7 trains the tiny config twice.

Run just this suite with ``pytest -m acceptance -s tests/test_acceptance.py``.
"""
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, tiny_config
from ufema import training as T
from ufema.evaluation import write_results_csv
from ufema.reference import GATED_ARMS, REFERENCE_SEEDS, reference_config, run_reference

pytestmark = pytest.mark.acceptance

ROOT = Path(__file__).resolve().parents[1]
REFERENCE_DIR = Path(os.environ.get("UFEMA_REFERENCE_DIR", ROOT / "reference"))

KINDS = ("noise", "music", "babble")
SNR_SLACK = 0.01  # one percentage point of EER per SNR step
BASELINE_CLEAN_EER = 0.07  # pretrained encoder, clean unseen-speaker trials, reference run
BASELINE_TOL = 0.005
PRETRAIN_ACCURACY_GATE = 0.90


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return emit


def _timed_suite(nodes):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *nodes],
                          cwd=ROOT, capture_output=True, text=True)
    return proc, time.perf_counter() - t0


def _last_line(proc):
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    return lines[-1] if lines else proc.stderr.strip()[-200:]


MATH_NODES = [
    "tests/test_ema.py::test_closed_form_geometric_recursion",  # 1e-12 relative
    "tests/test_ema.py::test_alpha_zero_copies_model",
    "tests/test_ema.py::test_contraction_by_alpha_per_step",
    "tests/test_encoder.py::test_margin_free_aam_is_softmax_over_cosines",  # 1e-9
    "tests/test_encoder.py::test_two_class_closed_form",
    "tests/test_corpus.py::test_mix_reconstructs_snr",  # 1e-9 dB
    "tests/test_corpus.py::test_noise_gain_closed_forms",
    "tests/test_evaluation.py::test_spec_examples",
    "tests/test_evaluation.py::test_matches_brute_force_oracle",  # <= 50 trials, ties included
    "tests/test_evaluation.py::test_balanced_tie_free_equals_minmax",
    "tests/test_evaluation.py::test_cosine_examples",
    "tests/test_evaluation.py::test_cosine_symmetry_and_scale_invariance",  # exact equality
]
GRADIENT_NODES = [
    "tests/test_fusion.py::test_finite_difference_gradients",  # relative 1e-3
    "tests/test_encoder.py::test_encoder_gradients_match_finite_differences",
    "tests/test_encoder.py::test_aam_gradients_match_finite_differences",
]
SHAPE_NODES = [
    "tests/test_fusion.py::test_default_shape_contract",
    "tests/test_fusion.py::test_shape_restored_for_any_size",
    "tests/test_features.py::test_stack_channels_order_and_identity",
    "tests/test_features.py::test_stack_without_noisy_and_errors",
    "tests/test_training.py::test_fixed_mode_leaves_encoder_untouched",
    "tests/test_training.py::test_ema_mode_moves_both_copies_and_keeps_artifacts",
    "tests/test_corpus.py::test_pool_registry_disjoint",
    "tests/test_training.py::test_pool_swap_is_refused",
]


@pytest.mark.parametrize("criterion,name,nodes,budget", [
    (1, "math suite", MATH_NODES, 30.0),
    (2, "gradient suite", GRADIENT_NODES, 120.0),
    (3, "shape/invariant suite", SHAPE_NODES, 60.0),
])
def test_unit_suites(report, criterion, name, nodes, budget):
    proc, seconds = _timed_suite(nodes)
    ok = proc.returncode == 0 and seconds < budget
    report(criterion, ok, f"{name}: {len(nodes)} oracle tests, {_last_line(proc)}; "
                          f"{seconds:.1f} s (budget {budget:.0f} s)")
    assert proc.returncode == 0, proc.stdout[-3000:]
    assert seconds < budget


# ---------------------------------------------------------- reference run


@pytest.fixture(scope="module")
def reference():
    return run_reference(REFERENCE_DIR, reference_config())


@pytest.mark.slow
def test_c4_ablation_direction(reference, report):
    all_ = reference.arm_mean("All")
    rows = []
    for other in GATED_ARMS[1:]:
        rows.append((other, reference.arm_mean(other)))
    ok = all(all_ <= v for _, v in rows)
    detail = ", ".join(f"All {all_:.4f} <= {name} {v:.4f} (margin {v - all_:+.4f})" for name, v in rows)
    report(4, ok, f"mean EER at -5 dB over {'/'.join(KINDS)} and seeds {list(REFERENCE_SEEDS)}: {detail}")
    assert ok


def _curves(reference):
    lin = {k: sorted((r["w"], r["eer"]) for r in reference.sweep
                     if r["system"] == "linear" and r["condition"] == k) for k in KINDS}
    unet = {r["condition"]: r["eer"] for r in reference.sweep if r["system"] == "unet"}
    return lin, unet


@pytest.mark.slow
def test_c5_interpolation_curve(reference, report):
    lin, unet = _curves(reference)
    interior = {}
    for k in ("noise", "music"):
        ends = min(lin[k][0][1], lin[k][-1][1])
        inner = min(e for w, e in lin[k] if 0.0 < w < 1.0)
        interior[k] = inner < ends
    beats = {k: unet[k] <= min(e for _, e in lin[k]) for k in KINDS}
    ok = any(interior.values()) and sum(beats.values()) >= 2
    shape = ", ".join(f"{k} min at w={min(lin[k], key=lambda p: (p[1], p[0]))[0]:.1f}" for k in ("noise", "music"))
    cmp = ", ".join(f"{k} UNet {unet[k]:.4f} vs linear min {min(e for _, e in lin[k]):.4f}" for k in KINDS)
    report(5, ok, f"interior minimum {interior}; {shape}; UNet <= linear for {sum(beats.values())}/3 ({cmp})")
    assert any(interior.values())
    assert sum(beats.values()) >= 2


@pytest.mark.slow
def test_c6_monotone_in_snr(reference, report):
    eer = {(r["condition"], r["snr_db"]): r["eer"] for r in reference.full}
    worst, failures = -1.0, []
    for k in KINDS:
        seq = [eer[(k, s)] for s in (-5.0, 0.0, 5.0, 10.0)] + [eer[("clean", None)]]
        for a, b in zip(seq, seq[1:]):
            worst = max(worst, b - a)
            if b > a + SNR_SLACK:
                failures.append((k, a, b))
    ok = not failures
    report(6, ok, f"largest EER rise per SNR step {100 * worst:+.2f} pp (slack {100 * SNR_SLACK:.0f} pp); "
                  f"violations {failures}")
    assert ok


@pytest.mark.slow
def test_reference_run_sanity(reference):
    """Side checks of the reference run: loss descent, pretraining gate, pinned baseline."""
    hist = np.asarray(reference.history["All"])
    epochs = reference.config["epochs"]
    per_epoch = hist.reshape(epochs, -1).mean(axis=1)
    assert per_epoch[-1] < per_epoch[0], per_epoch
    assert reference.pretrain_accuracy > PRETRAIN_ACCURACY_GATE
    clean = next(r["eer"] for r in reference.baseline if r["condition"] == "clean")
    assert abs(clean - BASELINE_CLEAN_EER) <= BASELINE_TOL


# ------------------------------------------------------- reproducibility


def test_c7_reproducibility(report, tmp_path):
    cfg = tiny_config()
    art = T.prepare_artifacts(cfg)
    a, b = T.train_ufema(cfg, art), T.train_ufema(cfg, art)
    T.save_joint_checkpoint(a, tmp_path / "a.ckpt")
    T.save_joint_checkpoint(b, tmp_path / "b.ckpt")
    same_ckpt = (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    conditions = T.FULL_CONDITIONS[:2]
    write_results_csv(tmp_path / "a.csv", T.evaluate_checkpoint(a, art, conditions))
    write_results_csv(tmp_path / "b.csv", T.evaluate_checkpoint(b, art, conditions))
    same_csv = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    half = T.train_ufema(cfg, art, max_steps=3)
    T.save_joint_checkpoint(half, tmp_path / "half.ckpt")
    resumed = T.train_ufema(cfg, art, resume=T.load_joint_checkpoint(tmp_path / "half.ckpt", art.enhancers))
    T.save_joint_checkpoint(resumed, tmp_path / "r.ckpt")
    same_resume = (tmp_path / "r.ckpt").read_bytes() == (tmp_path / "a.ckpt").read_bytes()

    ok = same_ckpt and same_csv and same_resume
    report(7, ok, f"rerun checkpoint identical {same_ckpt}, EER CSV identical {same_csv}, "
                  f"resume after 3 steps identical {same_resume}")
    assert ok
