"""Static SVG renderings of a run directory: the arena with delta states
and trajectories, planning-duration curves, and bound-policy disagreement
bars. Rendering is a pure function of the CSV/atlas content; the SVG writer
is pinned (fixed hash salt, no date metadata) so regeneration from the same
inputs is byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "deltaplan"

import matplotlib.pyplot as plt
import numpy as np

from .atlas import load_atlas
from .harness import inversion_report, read_records, read_timings, timing_report


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def arena_plot_data(records: list[dict], atlas) -> dict:
    """Arrays drawn by the arena plot (kept separate so counts are testable)."""
    truth = {}
    obs_pts = []
    for row in records:
        sid = int(row["scenario_id"])
        truth.setdefault(sid, []).append((float(row["true_x"]), float(row["true_y"])))
        if row["obs_x"]:
            obs_pts.append((float(row["obs_x"]), float(row["obs_y"])))
    return {
        "delta_xy": atlas.delta_states if atlas is not None else np.empty((0, 2)),
        "delta_values": atlas.delta_values if atlas is not None else np.empty(0),
        "trajectories": {sid: np.array(pts) for sid, pts in truth.items()},
        "observations": np.array(obs_pts) if obs_pts else np.empty((0, 2)),
    }


def plot_arena(data: dict, out_path: Path, *, arena=(-2, 0, 12, 6), goal=(4, -1.5, 6, 0),
               beacon_xs=(0, 2, 4, 6, 8, 10), beacon_y=4.0, beacon_radius=1.0) -> None:
    fig, ax = plt.subplots(figsize=(8, 5))
    x1, y1, x2, y2 = arena
    ax.add_patch(plt.Rectangle((x1, y1), x2 - x1, y2 - y1, fill=False, color="grey", lw=2))
    gx1, gy1, gx2, gy2 = goal
    ax.add_patch(plt.Rectangle((gx1, gy1), gx2 - gx1, gy2 - gy1, color="tab:blue", alpha=0.4))
    for bx in beacon_xs:
        ax.add_patch(plt.Circle((bx, beacon_y), beacon_radius, fill=False, color="tab:green"))
        ax.plot([bx], [beacon_y], marker="s", color="tab:green", ms=4)
    if data["delta_xy"].shape[0]:
        sc = ax.scatter(
            data["delta_xy"][:, 0],
            data["delta_xy"][:, 1],
            c=data["delta_values"],
            cmap="viridis",
            marker="v",
            s=12,
        )
        fig.colorbar(sc, ax=ax, label="estimated discrepancy")
    for sid in sorted(data["trajectories"]):
        pts = data["trajectories"][sid]
        ax.plot(pts[:, 0], pts[:, 1], "-", color="black", alpha=0.35, lw=0.8)
    if data["observations"].shape[0]:
        ax.scatter(
            data["observations"][:, 0],
            data["observations"][:, 1],
            color="tab:red",
            s=6,
            alpha=0.5,
        )
    ax.set_xlim(x1 - 1.5, x2 + 1.5)
    ax.set_ylim(gy1 - 1.0, y2 + 1.5)
    ax.set_aspect("equal")
    ax.set_title("arena, delta states, true trajectories, observations")
    _save(fig, out_path)


def plot_timing(timings: list[dict], out_path: Path) -> None:
    report = timing_report(timings)
    fig, ax = plt.subplots(figsize=(7, 4))
    tags = sorted({row["model_tag"] for row in report})
    for tag in tags:
        rows = [r for r in report if r["model_tag"] == tag]
        ts = [r["t"] for r in rows]
        means = [r["mean_ms"] for r in rows]
        stds = [r["std_ms"] for r in rows]
        ax.errorbar(ts, means, yerr=stds, marker="o", capsize=3, label=tag)
    ax.set_xlabel("scenario time step")
    ax.set_ylabel("planning duration [ms]")
    ax.legend()
    ax.set_title("planning duration per time step")
    _save(fig, out_path)


def plot_inversions(records: list[dict], out_path: Path) -> None:
    report = inversion_report(records)
    fig, ax = plt.subplots(figsize=(7, 4))
    ts = [r["t"] for r in report]
    width = 0.4
    ax.bar([t - width / 2 for t in ts], [r["pct_lb_differs"] for r in report],
           width=width, label="lower-bound choice differs")
    ax.bar([t + width / 2 for t in ts], [r["pct_ub_differs"] for r in report],
           width=width, label="upper-bound choice differs")
    ax.set_xlabel("scenario time step")
    ax.set_ylabel("% of planned steps")
    ax.legend()
    ax.set_title("bound-policy disagreement")
    _save(fig, out_path)


def emit_plots(in_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render every plot supported by the contents of ``in_dir``."""
    in_dir = Path(in_dir)
    out_dir = Path(out_dir) if out_dir is not None else in_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = in_dir / "records.csv"
    if not records_path.exists():
        raise FileNotFoundError(f"no records.csv under {in_dir}")
    records = read_records(records_path)
    if not records:
        raise ValueError("records.csv is empty")
    written = []
    atlas = None
    atlas_path = in_dir / "atlas.txt"
    if atlas_path.exists():
        atlas = load_atlas(atlas_path)
    data = arena_plot_data(records, atlas)
    arena_out = out_dir / "arena.svg"
    plot_arena(data, arena_out)
    written.append(arena_out)
    timings_path = in_dir / "timings.csv"
    if timings_path.exists():
        timings = read_timings(timings_path)
        if timings:
            timing_out = out_dir / "timing.svg"
            plot_timing(timings, timing_out)
            written.append(timing_out)
    if any(r.get("phi_hat_0") for r in records):
        inv_out = out_dir / "inversions.svg"
        plot_inversions(records, inv_out)
        written.append(inv_out)
    return written
