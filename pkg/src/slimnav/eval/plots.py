"""Static report figures (PNG via the Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps files byte-stable across runs
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def pareto(points: list[dict], path) -> Path:
    """``points``: dicts with label, energy_mj, accuracy and kind ('adaptive' or 'static')."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for kind, marker in (("static", "s"), ("adaptive", "o")):
        sel = [p for p in points if p["kind"] == kind]
        if sel:
            ax.scatter([p["energy_mj"] for p in sel], [100 * p["accuracy"] for p in sel], marker=marker, label=kind)
            for p in sel:
                ax.annotate(str(p["label"]), (p["energy_mj"], 100 * p["accuracy"]), fontsize=7,
                            xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("total MDE energy on test set [mJ]")
    ax.set_ylabel("navigation accuracy [%]")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def heatmap(mean: np.ndarray, bin_size: float, path, title: str = "mean slimming factor") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    img = np.ma.masked_invalid(mean)
    h, w = mean.shape
    im = ax.imshow(img, origin="lower", extent=(0, w * bin_size, 0, h * bin_size), vmin=0, vmax=1, cmap="viridis")
    fig.colorbar(im, ax=ax, label="rho")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title)
    return _save(fig, path)


def learning_curve(curve: list[dict], path) -> Path:
    ep = [r["episode"] for r in curve]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(ep, [100 * r["validation_accuracy"] for r in curve], color="C0")
    ax.set_xlabel("training episodes")
    ax.set_ylabel("validation accuracy [%]", color="C0")
    ax2 = ax.twinx()
    ax2.plot(ep, [r["validation_energy_mj"] for r in curve], color="C1")
    ax2.set_ylabel("validation MDE energy [mJ]", color="C1")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def r2_bars(r2_by_rho: dict[float, float], path) -> Path:
    rhos = sorted(r2_by_rho)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.bar([f"{r:g}" for r in rhos], [r2_by_rho[r] for r in rhos], color="C2")
    ax.set_xlabel("slimming factor")
    ax.set_ylabel("test R2")
    ax.set_ylim(min(0.0, min(r2_by_rho.values())), 1.0)
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def context_scatter(xs, rhos, xlabel: str, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    rng = np.random.default_rng(0)
    jitter = rng.uniform(-0.02, 0.02, len(rhos))
    ax.scatter(xs, np.asarray(rhos) + jitter, s=4, alpha=0.3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("applied rho")
    ax.grid(alpha=0.3)
    return _save(fig, path)
