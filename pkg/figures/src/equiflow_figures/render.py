"""Builds the three figure kinds from scenario output directories.

histogram: stacked user-rate bars per travel-time bin, colored by dominant
mode, with a vertical marker at the sufficiency threshold. heatmap: regional
insufficiency at demand-weighted centroids on a perceptually uniform
sequential scale. comparison: one histogram panel and one heatmap panel per
scenario, heatmaps sharing a single color scale so equal values match colors
across panels.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.colors import Normalize

MODE_COLORS = {
    "walk": "#4daf4a",
    "bike": "#984ea3",
    "road": "#e41a1c",
    "transit": "#377eb8",
    "switch": "#999999",
}
HEAT_CMAP = "viridis"


class RenderInputError(Exception):
    """Missing or garbled input; the message carries file and line."""


@dataclass
class FigureJob:
    input_dirs: list[str]
    kind: str  # "histogram" | "heatmap" | "comparison"
    out_path: str
    bin_width: float | None = None  # coarsen histogram bins to this width
    vmin: float | None = None
    vmax: float | None = None

    def __post_init__(self):
        if self.kind not in ("histogram", "heatmap", "comparison"):
            raise RenderInputError(f"unknown figure kind {self.kind!r}")
        if not self.input_dirs:
            raise RenderInputError("at least one input directory is required")
        if self.kind in ("histogram", "heatmap") and len(self.input_dirs) != 1:
            raise RenderInputError(f"figure kind {self.kind} takes exactly one input directory")


@dataclass
class ScenarioData:
    name: str
    histogram: list[tuple[float, float, str, float]]
    heatmap: list[tuple[int, float, float, float]]
    t_suff: float | None
    objective: str = ""


def _read_csv_rows(path: str, expected_header: list[str]):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise RenderInputError(f"{path}:1: empty file") from None
            if header != expected_header:
                raise RenderInputError(
                    f"{path}:1: expected header {','.join(expected_header)}, got {','.join(header)}"
                )
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                yield path, lineno, row
    except OSError as exc:
        raise RenderInputError(f"{path}: {exc}") from exc


def load_scenario(directory: str) -> ScenarioData:
    hist_path = os.path.join(directory, "histogram.csv")
    rows = []
    for path, lineno, row in _read_csv_rows(
        hist_path, ["bin_start", "bin_end", "mode", "users_per_min"]
    ):
        try:
            rows.append((float(row[0]), float(row[1]), row[2], float(row[3])))
        except (ValueError, IndexError) as exc:
            raise RenderInputError(f"{path}:{lineno}: {exc}") from exc

    heat_path = os.path.join(directory, "heatmap.csv")
    heat = []
    for path, lineno, row in _read_csv_rows(heat_path, ["region", "x", "y", "u_r"]):
        try:
            heat.append((int(row[0]), float(row[1]), float(row[2]), float(row[3])))
        except (ValueError, IndexError) as exc:
            raise RenderInputError(f"{path}:{lineno}: {exc}") from exc

    t_suff = None
    objective = ""
    cfg_path = os.path.join(directory, "config.json")
    if os.path.exists(cfg_path):
        try:
            with open(cfg_path, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
            if isinstance(cfg.get("t_suff"), (int, float)):
                t_suff = float(cfg["t_suff"])
            objective = str(cfg.get("objective", ""))
        except (OSError, json.JSONDecodeError) as exc:
            raise RenderInputError(f"{cfg_path}: {exc}") from exc

    name = os.path.basename(os.path.normpath(directory))
    return ScenarioData(name=name, histogram=rows, heatmap=heat, t_suff=t_suff, objective=objective)


def _rebin(rows, width: float):
    acc: dict[tuple[int, str], float] = {}
    for start, _end, mode, rate in rows:
        b = int(math.floor(start / width + 1e-12))
        acc[(b, mode)] = acc.get((b, mode), 0.0) + rate
    return [(b * width, (b + 1) * width, mode, rate) for (b, mode), rate in sorted(acc.items())]


def _draw_histogram(ax, data: ScenarioData, bin_width: float | None) -> None:
    rows = data.histogram
    if bin_width:
        rows = _rebin(rows, bin_width)
    starts = sorted({(s, e) for s, e, *_ in rows})
    modes = sorted({mode for *_3, mode, _ in [(0, 0, m, r) for _s, _e, m, r in rows]})
    bottom = {s: 0.0 for s, _ in starts}
    for mode in modes:
        xs, heights, bottoms, widths = [], [], [], []
        for s, e in starts:
            rate = sum(r for s2, e2, m, r in rows if (s2, e2) == (s, e) and m == mode)
            if rate <= 0:
                continue
            xs.append((s + e) / 2.0)
            widths.append(e - s)
            heights.append(rate)
            bottoms.append(bottom[s])
            bottom[s] += rate
        if xs:
            ax.bar(xs, heights, width=widths, bottom=bottoms,
                   color=MODE_COLORS.get(mode, "#666666"), label=mode, edgecolor="none")
    if data.t_suff is not None:
        ax.axvline(data.t_suff, color="black", linestyle="--", linewidth=1.0)
    ax.set_xlabel("travel time [min]")
    ax.set_ylabel("users per min")
    if modes:
        ax.legend(fontsize=7, frameon=False)


def _draw_heatmap(ax, data: ScenarioData, norm: Normalize):
    xs = [x for _, x, _, _ in data.heatmap]
    ys = [y for _, _, y, _ in data.heatmap]
    us = [u for *_, u in data.heatmap]
    sc = ax.scatter(xs, ys, c=us, cmap=HEAT_CMAP, norm=norm, s=220, edgecolor="black", linewidth=0.4)
    for region, x, y, _ in data.heatmap:
        ax.annotate(str(region), (x, y), ha="center", va="center", fontsize=6, color="white")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    return sc


def _heat_norm(job: FigureJob, scenarios: list[ScenarioData]) -> Normalize:
    values = [u for s in scenarios for *_, u in s.heatmap]
    vmax = job.vmax if job.vmax is not None else (max(values) if values else 1.0)
    vmin = job.vmin if job.vmin is not None else 0.0
    if vmax <= vmin:
        vmax = vmin + 1.0
    return Normalize(vmin=vmin, vmax=vmax)


def render(job: FigureJob):
    """Render the job and write the image; returns the matplotlib figure."""
    scenarios = [load_scenario(d) for d in job.input_dirs]
    if job.kind == "histogram":
        fig, ax = plt.subplots(figsize=(6, 4))
        _draw_histogram(ax, scenarios[0], job.bin_width)
        ax.set_title(scenarios[0].name)
    elif job.kind == "heatmap":
        fig, ax = plt.subplots(figsize=(5, 5))
        norm = _heat_norm(job, scenarios)
        sc = _draw_heatmap(ax, scenarios[0], norm)
        fig.colorbar(sc, ax=ax, label="commute insufficiency [min^2]")
        ax.set_title(scenarios[0].name)
    else:  # comparison: one histogram and one heatmap panel per scenario
        n = len(scenarios)
        ncols = 2 if n > 1 else 1
        nrows = math.ceil(n / ncols)
        fig, axes = plt.subplots(
            nrows * 2, ncols, figsize=(5.5 * ncols, 6.5 * nrows), squeeze=False
        )
        norm = _heat_norm(job, scenarios)  # one scale across every heatmap panel
        mappable = None
        for k, data in enumerate(scenarios):
            r, c = divmod(k, ncols)
            ax_h = axes[2 * r][c]
            ax_m = axes[2 * r + 1][c]
            _draw_histogram(ax_h, data, job.bin_width)
            ax_h.set_title(f"{data.name} ({data.objective})" if data.objective else data.name, fontsize=9)
            mappable = _draw_heatmap(ax_m, data, norm)
        for k in range(n, nrows * ncols):
            r, c = divmod(k, ncols)
            axes[2 * r][c].axis("off")
            axes[2 * r + 1][c].axis("off")
        if mappable is not None:
            fig.colorbar(
                mappable, ax=[axes[2 * r + 1][c] for r in range(nrows) for c in range(ncols)],
                label="commute insufficiency [min^2]", shrink=0.8,
            )
    if job.kind != "comparison":
        fig.tight_layout()
    fig.savefig(job.out_path)
    return fig
