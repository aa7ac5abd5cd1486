import pytest

from ufema.errors import InvalidArgumentError
from ufema.plotting import curve_series, emit_plot

WEIGHTS = [round(0.1 * i, 1) for i in range(11)]


def _rows():
    rows = []
    for j, cond in enumerate(("noise", "music", "babble")):
        for w in WEIGHTS:
            rows.append({"system": "linear", "w": w, "condition": cond, "snr_db": -5.0,
                         "eer": 0.2 + 0.05 * j + 0.3 * (w - 0.5) ** 2})
        rows.append({"system": "unet", "w": None, "condition": cond, "snr_db": -5.0, "eer": 0.15 + 0.05 * j})
    return rows


def test_three_conditions_eleven_points():
    series, unet = curve_series(_rows()[::-1])
    assert list(series) == ["babble", "music", "noise"]
    assert all(len(p) == 11 for p in series.values())
    assert [w for w, _ in series["noise"]] == WEIGHTS
    assert unet == {"noise": 0.15, "music": 0.2, "babble": 0.25}


def test_w0_point_matches_source_rows():
    rows = _rows()
    series, _ = curve_series(rows)
    base = next(r["eer"] for r in rows if r["w"] == 0.0 and r["condition"] == "music")
    assert series["music"][0] == (0.0, base)


@pytest.mark.parametrize("suffix", [".png", ".svg", ".pdf"])
def test_deterministic_bytes(tmp_path, suffix):
    series, unet = curve_series(_rows())
    a = emit_plot(series, tmp_path / f"a{suffix}", unet, title="-5 dB").read_bytes()
    b = emit_plot(series, tmp_path / f"b{suffix}", unet, title="-5 dB").read_bytes()
    assert a == b and len(a) > 1000


def test_png_is_an_image(tmp_path):
    series, unet = curve_series(_rows())
    data = emit_plot(series, tmp_path / "p.png", unet).read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"


def test_errors(tmp_path):
    with pytest.raises(InvalidArgumentError):
        emit_plot({}, tmp_path / "x.png")
    with pytest.raises(InvalidArgumentError):
        emit_plot({"noise": []}, tmp_path / "x.png")
    with pytest.raises(InvalidArgumentError):
        emit_plot({"noise": [(0.0, 0.1)]}, tmp_path / "x.gif")
