import json

from conftest import tiny_config
from ufema.reference import REFERENCE_EMA_ALPHA, ReferenceResults, reference_config, run_reference


def test_reference_config_scales_only_the_ema_horizon():
    cfg = reference_config()
    assert cfg.ema_alpha == REFERENCE_EMA_ALPHA
    assert cfg.with_overrides(ema_alpha=0.999).to_dict() == type(cfg)().to_dict()
    steps = cfg.epochs * -(-cfg.n_speakers * cfg.train_utts_per_speaker // cfg.batch_size)
    assert REFERENCE_EMA_ALPHA ** steps < 0.02 < 0.999 ** steps


def test_run_is_cached_and_resumable(tmp_path):
    cfg = tiny_config(epochs=1)
    kw = dict(seeds=(0,), arms=("All", "w/o EMA (Fixed)"), weights=(0.0, 1.0))
    res = run_reference(tmp_path, cfg, **kw)
    root = tmp_path / cfg.hash()
    assert {r["arm"] for r in res.ablation} == {"All", "w/o EMA (Fixed)"}
    assert len(res.ablation) == 2 * 3 and len(res.full) == 14
    assert len(res.sweep) == 2 * 3 + 3
    unet = {r["condition"]: r["eer"] for r in res.sweep if r["system"] == "unet"}
    assert unet == {r["condition"]: r["eer"] for r in res.ablation if r["arm"] == "All"}
    assert res.arm_mean("All") == sum(unet.values()) / 3
    assert ReferenceResults.load(root / "results.json") == res

    # a finished run is read back; dropping the summary rebuilds it from the stage cache
    assert run_reference(tmp_path, cfg, **kw) == res
    ckpts = {p: p.stat().st_mtime_ns for p in root.glob("**/*.ckpt")}
    (root / "results.json").unlink()
    again = run_reference(tmp_path, cfg, **kw)
    assert {k: v for k, v in again.__dict__.items() if k != "seconds"} == \
        {k: v for k, v in res.__dict__.items() if k != "seconds"}
    assert ckpts == {p: p.stat().st_mtime_ns for p in root.glob("**/*.ckpt")}
    assert "baseline" in json.loads((root / "stages.json").read_text())
