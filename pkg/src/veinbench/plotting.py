"""Score-distribution figures written next to the tabular report."""

from __future__ import annotations

import io
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evalstat import ScoreSet, error_rates, partition_by_attribute  # noqa: E402
from .io_utils import atomic_write_bytes  # noqa: E402

# no Software/date chunks, so identical figures are byte-identical files
_PNG_META = {"Software": None}


def _save(fig, path: str | os.PathLike) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def _bins(scores: np.ndarray) -> np.ndarray:
    lo, hi = float(scores.min()), float(scores.max())
    if hi <= lo:
        hi = lo + 1e-6
    return np.linspace(lo, hi, 41)


def plot_group_histograms(ss: ScoreSet, attr, path: str | os.PathLike) -> None:
    """Genuine and impostor score densities per group, one panel per label."""
    parts = partition_by_attribute(ss, attr)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    for ax, idx, title in ((axes[0], 0, "genuine"), (axes[1], 1, "impostor")):
        pooled = [parts[g][idx] for g in parts if parts[g][idx].size]
        if pooled:
            bins = _bins(np.concatenate(pooled))
            for g in parts:
                s = parts[g][idx]
                if s.size:
                    ax.hist(s, bins=bins, density=True, histtype="step", label=f"{g} (n={s.size})")
            ax.legend(fontsize=7)
        ax.set_title(f"{title} scores by {attr.kind}", fontsize=9)
        ax.set_xlabel("score")
    fig.suptitle(f"{ss.dataset} / {ss.algorithm}", fontsize=10)
    fig.tight_layout()
    _save(fig, path)


def plot_det(ss: ScoreSet, attr, path: str | os.PathLike) -> None:
    """FNMR against FMR (log axes) overall and per group."""
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    curves = [("all", ss.genuine_scores, ss.impostor_scores)]
    if attr is not None:
        curves += [(g, gen, imp) for g, (gen, imp) in partition_by_attribute(ss, attr).items()]
    floor = 1e-4
    for name, gen, imp in curves:
        if gen.size == 0 or imp.size == 0:
            continue
        _, fmr, fnmr = error_rates(gen, imp)
        ax.plot(np.maximum(fmr, floor), np.maximum(fnmr, floor), label=name, lw=1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlim(floor / 2, 1.2)
    ax.set_ylim(floor / 2, 1.2)
    ax.set_xlabel("FMR")
    ax.set_ylabel("FNMR")
    ax.set_title(f"{ss.dataset} / {ss.algorithm}", fontsize=9)
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)
