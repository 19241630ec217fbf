"""Report figures rendered next to the JSON/TSV outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}

COLORS = {"forward": "#2f6f9f", "reverse": "#d4792a", "baseline": "0.5"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def training_curves(histories: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_cos) = plt.subplots(1, 2, figsize=(8, 3))
        for name, h in histories.items():
            epochs = range(1, len(h.loss) + 1)
            ax_loss.plot(epochs, h.loss, color=COLORS.get(name), label=name)
            ax_cos.plot([0, *epochs], [h.initial_heldout_cosine, *h.heldout_cosine],
                        color=COLORS.get(name), label=name)
        ax_loss.set(xlabel="epoch", ylabel="composite loss", yscale="log")
        ax_cos.set(xlabel="epoch", ylabel="held-out mean cosine")
        ax_cos.legend()
        return _save(fig, Path(path))


def alignment_bars(report: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        width = 0.4
        for k, name in enumerate(("forward", "reverse")):
            vals = report[name]["per_pair"]
            xs = [i + (k - 0.5) * width for i in range(len(vals))]
            ax.bar(xs, vals, width, color=COLORS[name], label=f"{name} (mean {report[name]['mean']:.3f})")
            ax.axhline(report[name]["baseline"]["value"], color=COLORS[name], ls="--", lw=0.8)
        ax.set(xlabel="held-out pair", ylabel="cosine", title="translated vs target, dashed = mispaired baseline")
        ax.legend(fontsize=7)
        return _save(fig, Path(path))


def steering_kl(steering: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        kl = steering["kl_per_step"]
        ax.plot(range(len(kl)), kl, marker="o", ms=3, color=COLORS["forward"])
        ax.axvspan(-0.5, steering["policy"]["steps"] - 0.5, color="0.85", label="injection active")
        ax.set(xlabel="decoding step", ylabel="symmetric KL (baseline vs injected)")
        ax.legend()
        return _save(fig, Path(path))
