"""Plot-data extraction from a persisted campaign.

Produces the per-query loss scatter of all runs, the per-query mean loss
over still-live runs, and the count of images left to attack after each
query, as CSVs plus a dependency-free static SVG.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import DatasetError


@dataclass
class CampaignSeries:
    trajectories: dict[str, list[float]]  # run id -> loss per query index
    successes: dict[str, bool]

    @property
    def max_len(self) -> int:
        return max(len(t) for t in self.trajectories.values())


def load_campaign_series(campaign_dir) -> CampaignSeries:
    root = Path(campaign_dir)
    per_image = root / "per_image.csv"
    traj_dir = root / "trajectories"
    if not per_image.is_file() or not traj_dir.is_dir():
        raise DatasetError(f"{root} is not a campaign output directory")
    successes: dict[str, bool] = {}
    with open(per_image, newline="") as fh:
        for row in csv.DictReader(fh):
            successes[row["id"]] = row["success"] == "true"
    trajectories: dict[str, list[float]] = {}
    for run_id in successes:
        path = traj_dir / f"{run_id}.csv"
        if not path.is_file():
            raise DatasetError(f"missing trajectory for {run_id}")
        with open(path, newline="") as fh:
            trajectories[run_id] = [float(row["loss"]) for row in csv.DictReader(fh)]
    if not trajectories or all(len(t) == 0 for t in trajectories.values()):
        raise DatasetError(f"{root}: campaign holds no trajectories")
    return CampaignSeries(trajectories=trajectories, successes=successes)


def mean_loss_series(trajectories: dict[str, list[float]]) -> list[float]:
    """Per query index, the mean loss over runs still alive at that index."""
    longest = max(len(t) for t in trajectories.values())
    series = []
    for k in range(longest):
        alive = [t[k] for t in trajectories.values() if len(t) > k]
        series.append(sum(alive) / len(alive))
    return series


def remaining_series(series: CampaignSeries) -> list[int]:
    """Images still unsolved before query k, for k = 0 .. longest trajectory.

    A successful run counts as solved from the query after its final one
    (early stopping makes the final query the successful one); failed runs
    are never removed.
    """
    solved_at = {
        run_id: len(traj) - 1
        for run_id, traj in series.trajectories.items()
        if series.successes.get(run_id, False)
    }
    total = len(series.trajectories)
    out = []
    for k in range(series.max_len + 1):
        solved = sum(1 for idx in solved_at.values() if idx < k)
        out.append(total - solved)
    return out


def emit_plot_data(campaign_dir, out_dir) -> dict[str, str]:
    """Write scatter.csv, mean_loss.csv, remaining.csv and loss_curves.svg."""
    series = load_campaign_series(campaign_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    scatter_path = out / "scatter.csv"
    with open(scatter_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "query", "loss"])
        for run_id in sorted(series.trajectories):
            for q, loss in enumerate(series.trajectories[run_id]):
                writer.writerow([run_id, q, repr(loss)])

    means = mean_loss_series(series.trajectories)
    mean_path = out / "mean_loss.csv"
    with open(mean_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["query", "mean_loss"])
        for q, value in enumerate(means):
            writer.writerow([q, repr(value)])

    remaining = remaining_series(series)
    remaining_path = out / "remaining.csv"
    with open(remaining_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["query", "remaining"])
        for q, value in enumerate(remaining):
            writer.writerow([q, value])

    svg_path = out / "loss_curves.svg"
    svg_path.write_text(render_svg(series, means, remaining))
    return {
        "scatter": str(scatter_path),
        "mean_loss": str(mean_path),
        "remaining": str(remaining_path),
        "svg": str(svg_path),
    }


_WIDTH, _PANEL_H, _MARGIN = 720, 260, 48


def _x(q: float, qmax: float) -> float:
    usable = _WIDTH - 2 * _MARGIN
    return _MARGIN + (q / qmax if qmax else 0.0) * usable


def _y(v: float, vmax: float, panel_top: float) -> float:
    usable = _PANEL_H - 2 * _MARGIN
    frac = v / vmax if vmax else 0.0
    return panel_top + _MARGIN + (1.0 - frac) * usable


def render_svg(series: CampaignSeries, means: list[float], remaining: list[int]) -> str:
    """Two stacked panels: losses per query on top, unsolved count below."""
    qmax = float(max(series.max_len - 1, 1))
    height = 2 * _PANEL_H
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{height}" '
        f'viewBox="0 0 {_WIDTH} {height}">',
        f'<rect width="{_WIDTH}" height="{height}" fill="white"/>',
        f'<text x="{_MARGIN}" y="24" font-size="14">loss per query '
        f"({len(series.trajectories)} runs)</text>",
    ]
    for traj in series.trajectories.values():
        for q, loss in enumerate(traj):
            parts.append(
                f'<circle cx="{_x(q, qmax):.2f}" cy="{_y(loss, 1.0, 0):.2f}" '
                f'r="1.2" fill="#7799cc" fill-opacity="0.35"/>'
            )
    mean_pts = " ".join(
        f"{_x(q, qmax):.2f},{_y(v, 1.0, 0):.2f}" for q, v in enumerate(means)
    )
    parts.append(
        f'<polyline points="{mean_pts}" fill="none" stroke="#cc2222" stroke-width="1.5"/>'
    )
    for q, v in enumerate(means):
        parts.append(
            f'<circle cx="{_x(q, qmax):.2f}" cy="{_y(v, 1.0, 0):.2f}" r="2" fill="#cc2222"/>'
        )

    top = _PANEL_H
    rmax = float(max(remaining)) if remaining else 1.0
    parts.append(
        f'<text x="{_MARGIN}" y="{top + 24}" font-size="14">images left to attack</text>'
    )
    rem_pts = " ".join(
        f"{_x(q, float(max(len(remaining) - 1, 1))):.2f},{_y(v, rmax, top):.2f}"
        for q, v in enumerate(remaining)
    )
    parts.append(
        f'<polyline points="{rem_pts}" fill="none" stroke="#228822" stroke-width="1.5"/>'
    )
    for panel_top in (0, top):
        parts.append(
            f'<rect x="{_MARGIN}" y="{panel_top + _MARGIN}" '
            f'width="{_WIDTH - 2 * _MARGIN}" height="{_PANEL_H - 2 * _MARGIN}" '
            f'fill="none" stroke="#444444" stroke-width="1"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
