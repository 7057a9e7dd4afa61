"""Static SVG rendering for loss curves and attribution bars."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

TERM_KEYS = ("total", "val", "prox", "spars", "plaus", "div", "cat")


def loss_curves_svg(trace, path, terms=TERM_KEYS):
    """Loss curves over the whole run; dashed verticals mark perturbation restarts."""
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = range(len(trace))
    for key in terms:
        ax.plot(steps, [rec[key] for rec in trace], label=key, linewidth=1.0)
    for i, rec in enumerate(trace):
        if rec.get("perturbed"):
            ax.axvline(i, color="grey", linestyle="--", linewidth=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8, ncol=4)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def attribution_bars_svg(report, path):
    """Horizontal importance bars, most important on top."""
    names = [name for name, _ in report.scores]
    values = [v for _, v in report.scores]
    fig, ax = plt.subplots(figsize=(6, 0.4 * max(len(names), 4) + 1))
    ax.barh(range(len(names)), values, color="#4878b0")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlabel("attribution")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
