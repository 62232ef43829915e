"""Learning-curve rendering to standalone vector files."""

import matplotlib

matplotlib.use("Agg")
# keep text as text so the only <use> elements in an SVG are data markers
matplotlib.rcParams["svg.fonttype"] = "none"

import matplotlib.pyplot as plt  # noqa: E402

from .nn import ContractError

__all__ = ["render_curve"]


def render_curve(rows, path, title: str = "") -> None:
    """Draw one line per seed of (step, mean_return), one marker per point.

    rows are (step, seed, mean_return, sd_return) tuples; the file format
    follows the path suffix (.svg for the standard run artifact).
    """
    if not rows:
        raise ContractError("nothing to plot; no evaluation rows")
    by_seed: dict[int, list] = {}
    for step, seed, mean, _sd in rows:
        by_seed.setdefault(seed, []).append((step, mean))
    fig, axis = plt.subplots(figsize=(6.0, 4.0))
    for seed in sorted(by_seed):
        pts = sorted(by_seed[seed])
        axis.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            markersize=4,
            linewidth=1.2,
        )
    # tick marks would also render as <use> elements; keep labels only so
    # the file holds exactly one <use> per plotted evaluation point
    axis.tick_params(which="both", length=0)
    axis.set_xlabel("environment steps")
    axis.set_ylabel("mean evaluation return")
    if title:
        axis.set_title(title)
    fig.tight_layout()
    try:
        fig.savefig(path)
    finally:
        plt.close(fig)
