import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ufema import checkpoint as ckpt_io
from ufema.config import ExperimentConfig, load_config, save_config
from ufema.errors import CheckpointError, ConfigError


def test_empty_file_gives_documented_defaults(tmp_path):
    (tmp_path / "c.yaml").write_text("")
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg == ExperimentConfig()
    assert (cfg.ema_alpha, cfg.lr, cfg.n_mels, cfg.embed_dim) == (0.999, 1e-3, 80, 192)
    assert cfg.unet_channels == [32, 64, 128, 256]


def test_unknown_key_is_rejected_with_line(tmp_path):
    (tmp_path / "c.yaml").write_text("seed: 3\nemaa_alpha: 0.99\n")
    with pytest.raises(ConfigError, match=r"c\.yaml:2: unknown config key 'emaa_alpha'"):
        load_config(tmp_path / "c.yaml")


def test_parse_error_reports_line(tmp_path):
    (tmp_path / "c.yaml").write_text("seed: 1\nlr: [1\nepochs: 2\n")
    with pytest.raises(ConfigError, match=r"c\.yaml:\d+"):
        load_config(tmp_path / "c.yaml")


@pytest.mark.parametrize("text", ["ema_alpha: 1.0", "encoder_mode: frozen", "interp_weight: 2",
                                  "batch_size: 1", "enabled_enhancers: [wiener]", "- 1\n- 2"])
def test_constraint_violations(tmp_path, text):
    (tmp_path / "c.yaml").write_text(text + "\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.yaml")


def test_config_roundtrip_and_hash(tmp_path):
    cfg = ExperimentConfig(seed=4, encoder_mode="finetune", enabled_enhancers=["mask_net"],
                           train_snrs=[0, 5], interp_weight=0.3)
    save_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg and back.hash() == cfg.hash()
    assert cfg.hash() != cfg.with_overrides(seed=5).hash()


def _sample_arrays(seed=0):
    r = np.random.default_rng(seed)
    return {"w": r.standard_normal((3, 4)).astype(np.float32), "d": r.standard_normal(5),
            "n": np.array(7, dtype=np.int64), "flag": np.array([True, False]), "empty": np.zeros((0, 2))}


def test_container_roundtrip_is_byte_identical(tmp_path):
    meta = {"b": [1, 2], "a": {"x": 0.5}}
    ckpt_io.save(tmp_path / "a.ckpt", "test", meta, _sample_arrays())
    kind, m, arrays = ckpt_io.load(tmp_path / "a.ckpt", expect_kind="test")
    assert kind == "test" and m == meta
    assert arrays["n"].shape == () and arrays["w"].dtype == np.dtype("<f4")
    assert arrays["flag"].dtype == np.dtype("|u1")
    ckpt_io.save(tmp_path / "b.ckpt", kind, m, arrays)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


@settings(max_examples=30, deadline=None)
@given(cut=st.integers(1, 400), seed=st.integers(0, 100))
def test_truncation_is_detected(cut, seed):
    data = ckpt_io.dumps("test", {"k": seed}, _sample_arrays(seed))
    with pytest.raises(CheckpointError):
        ckpt_io.loads(data[:-min(cut, len(data) - 1)])


def test_corruption_version_and_kind(tmp_path):
    data = bytearray(ckpt_io.dumps("test", {}, _sample_arrays()))
    flipped = bytearray(data)
    flipped[len(flipped) // 2] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        ckpt_io.loads(bytes(flipped))
    with pytest.raises(CheckpointError, match="magic"):
        ckpt_io.loads(b"XX" + bytes(data))
    # a well-formed file from a future format version
    body = bytes(data[:data.rfind(b"\nSHA256 ")]).replace(b"UFEMA-CKPT 1\n", b"UFEMA-CKPT 2\n", 1)
    import hashlib
    future = body + b"\nSHA256 " + hashlib.sha256(body).hexdigest().encode() + b"\n"
    with pytest.raises(CheckpointError, match="version"):
        ckpt_io.loads(future)
    ckpt_io.save(tmp_path / "a.ckpt", "encoder", {}, {})
    with pytest.raises(CheckpointError, match="expected a 'joint'"):
        ckpt_io.load(tmp_path / "a.ckpt", expect_kind="joint")


def test_payload_is_little_endian_float32(tmp_path):
    ckpt_io.save(tmp_path / "a.ckpt", "t", {}, {"x": np.array([1.0, -2.0], dtype=">f4")})
    raw = (tmp_path / "a.ckpt").read_bytes()
    assert np.array([1.0, -2.0], dtype="<f4").tobytes() in raw
    assert ckpt_io.load(tmp_path / "a.ckpt")[2]["x"].tolist() == [1.0, -2.0]


def test_array_hash_sensitivity():
    a = _sample_arrays()
    h = ckpt_io.array_hash(a)
    assert h == ckpt_io.array_hash(dict(reversed(list(a.items()))))
    b = dict(a, w=a["w"].copy())
    b["w"][0, 0] = np.nextafter(b["w"][0, 0], np.float32(10))
    assert ckpt_io.array_hash(b) != h
