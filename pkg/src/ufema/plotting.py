"""EER-versus-weight curves for the linear-interpolation sweep.

Output bytes are deterministic for fixed data: timestamps and software
tags are stripped and the SVG id salt is pinned.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import InvalidArgumentError  # noqa: E402

_FORMATS = {".png": {"Software": None}, ".svg": {"Date": None, "Creator": None},
            ".pdf": {"CreationDate": None, "Producer": None, "Creator": None}}


def curve_series(rows: Sequence[dict]) -> tuple[dict, dict]:
    """Split sweep rows into ``{condition: [(w, eer), ...]}`` and ``{condition: unet_eer}``."""
    series, unet = {}, {}
    for r in rows:
        if r["system"] == "unet":
            unet[r["condition"]] = r["eer"]
        else:
            series.setdefault(r["condition"], []).append((r["w"], r["eer"]))
    return {c: sorted(p) for c, p in series.items()}, unet


def emit_plot(series: Mapping[str, Sequence[tuple]], path, unet: Mapping[str, float] | None = None,
              title: str | None = None) -> Path:
    """One line per condition (x = w, y = EER in %), dashed lines at the UNet-fusion EERs."""
    if not series or any(len(p) == 0 for p in series.values()):
        raise InvalidArgumentError("emit_plot needs at least one non-empty series")
    path = Path(path)
    if path.suffix not in _FORMATS:
        raise InvalidArgumentError(f"unsupported plot format {path.suffix!r}; use png, svg or pdf")
    with plt.rc_context({"svg.hashsalt": "ufema", "font.family": "DejaVu Sans"}):
        fig, ax = plt.subplots(figsize=(5.0, 4.2), dpi=100)
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for i, (cond, pts) in enumerate(series.items()):
            c = colors[i % len(colors)]
            ax.plot([w for w, _ in pts], [100 * e for _, e in pts], marker="o", ms=3, color=c,
                    label=f"{cond} (linear)")
            if unet and cond in unet:
                ax.axhline(100 * unet[cond], color=c, ls="--", lw=1, label=f"{cond} (UNet)")
        ax.set_xlabel("interpolation weight w")
        ax.set_ylabel("EER (%)")
        if title:
            ax.set_title(title)
        ax.grid(alpha=0.3)
        # below the axes, so no line is hidden behind it
        ax.legend(fontsize=7, ncol=3, loc="upper center", bbox_to_anchor=(0.5, -0.16))
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, metadata=_FORMATS[path.suffix])
        plt.close(fig)
    return path
