"""Figure rendering for the evaluation reports.

The CSV stays the canonical output; figures are a convenience rendered
alongside it.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import RobustnessCurve


def render_curve(curve: RobustnessCurve, out_path, title: str | None = None) -> None:
    """Accuracy vs distortion budget for one model."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot(curve.eps, curve.acc, marker="o", markersize=3.5, linewidth=1.5)
    ax.set_xlabel("distortion budget (eps, normalized pixels)")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(-2, 102)
    ax.grid(True, alpha=0.3)
    label = title if title is not None else (curve.model_id or "model")
    family = curve.attack.get("family", "attack")
    ax.set_title(f"{label} under {family} (n={curve.eval_n})", fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_curves(curves: dict[str, RobustnessCurve], out_path, title: str = "") -> None:
    """Several models overlaid on one axes; used by comparison reports."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for label, curve in curves.items():
        ax.plot(curve.eps, curve.acc, marker="o", markersize=3, linewidth=1.4, label=label)
    ax.set_xlabel("distortion budget (eps, normalized pixels)")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(-2, 102)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
