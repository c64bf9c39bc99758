"""Reported quantities: excess times, regional insufficiency, aggregate
objectives, mode shares, histograms, and heatmap rows.

Evaluation is solver-independent: excess times are recomputed from the flows
(max form), never read from the solver, so any feasible flow can be scored,
including one produced under the other objective.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .assembler import FlowSolution
from .demand import DemandSet
from .netmodel import Network
from .paths import PathAssignment


@dataclass
class RegionRow:
    region: int
    insufficiency: float  # min^2
    rate: float  # users/min
    population: float
    centroid_x: float | None
    centroid_y: float | None


@dataclass
class MetricsReport:
    avg_travel_time: float  # min/user
    total_passenger_time: float  # min * users/min
    rebalancing_time: float  # min * vehicles/min
    util_eff_objective: float  # total passenger time + gamma_reb * rebalancing time
    commute_insufficiency: float  # min^2, population-weighted
    composite_objective: float  # insufficiency + gamma_time * efficiency objective
    t_suff: float
    total_rate: float
    per_region: list[RegionRow]
    demand_mean_time: dict[int, float]
    demand_excess: dict[int, float]
    mode_share_dominant: dict[str, float] = field(default_factory=dict)
    mode_share_set: dict[str, float] = field(default_factory=dict)
    histogram_rows: list[tuple[float, float, str, float]] = field(default_factory=list)
    histogram_demand_rows: list[tuple[float, float, float]] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "format": "equiflow/1",
            "avg_travel_time_min": self.avg_travel_time,
            "total_passenger_time": self.total_passenger_time,
            "rebalancing_time": self.rebalancing_time,
            "util_eff_objective": self.util_eff_objective,
            "commute_insufficiency_min2": self.commute_insufficiency,
            "composite_objective": self.composite_objective,
            "t_suff_min": self.t_suff,
            "total_rate_users_min": self.total_rate,
            "regions": [
                {
                    "region": r.region,
                    "insufficiency_min2": r.insufficiency,
                    "rate_users_min": r.rate,
                    "population": r.population,
                    "centroid_x": r.centroid_x,
                    "centroid_y": r.centroid_y,
                }
                for r in self.per_region
            ],
            "demands": [
                {
                    "demand": m,
                    "mean_time_min": self.demand_mean_time[m],
                    "excess_min": self.demand_excess[m],
                }
                for m in sorted(self.demand_mean_time)
            ],
            "mode_share_dominant": dict(sorted(self.mode_share_dominant.items())),
            "mode_share_set": dict(sorted(self.mode_share_set.items())),
        }


def evaluate(
    flows: FlowSolution,
    dem: DemandSet,
    net: Network,
    t_suff: float,
    gamma_reb: float = 1e-3,
    gamma_time: float = 1e-3,
    assignment: PathAssignment | None = None,
    bin_width: float = 1.0,
) -> MetricsReport:
    arcs = net.arcs
    total_rate = dem.total_rate

    mean_time: dict[int, float] = {}
    excess: dict[int, float] = {}
    total_time = 0.0
    for d in dem.demands:
        t = sum(arcs[ai].time_min * v for ai, v in flows.demand_flows.get(d.id, {}).items())
        total_time += t
        mean_time[d.id] = t / d.rate
        excess[d.id] = max(0.0, mean_time[d.id] - t_suff)

    reb_time = sum(arcs[ai].time_min * v for ai, v in flows.rebalancing.items())
    util_obj = total_time + gamma_reb * reb_time

    per_region: list[RegionRow] = []
    n_pop = dem.total_population
    weighted = 0.0
    for r in dem.regions:
        ds = dem.demands_by_region.get(r.id, ())
        rate = sum(d.rate for d in ds)
        if rate > 0.0:
            u_r = sum(d.rate * excess[d.id] ** 2 for d in ds) / rate
            cx = sum(d.rate * net.node_by_id[d.origin].x for d in ds) / rate
            cy = sum(d.rate * net.node_by_id[d.origin].y for d in ds) / rate
        else:
            u_r, cx, cy = 0.0, None, None
        per_region.append(
            RegionRow(
                region=r.id,
                insufficiency=u_r,
                rate=rate,
                population=r.population,
                centroid_x=cx,
                centroid_y=cy,
            )
        )
        weighted += r.population * u_r
    insufficiency = weighted / n_pop if n_pop > 0 else 0.0

    report = MetricsReport(
        avg_travel_time=total_time / total_rate if total_rate > 0 else 0.0,
        total_passenger_time=total_time,
        rebalancing_time=reb_time,
        util_eff_objective=util_obj,
        commute_insufficiency=insufficiency,
        composite_objective=insufficiency + gamma_time * util_obj,
        t_suff=t_suff,
        total_rate=total_rate,
        per_region=per_region,
        demand_mean_time=mean_time,
        demand_excess=excess,
    )
    if assignment is not None:
        report.mode_share_dominant, report.mode_share_set = mode_shares(assignment, total_rate)
        report.histogram_rows = histogram(assignment, bin_width)
        report.histogram_demand_rows = demand_mean_histogram(report, dem, bin_width)
    return report


def mode_shares(
    assignment: PathAssignment, total_rate: float
) -> tuple[dict[str, float], dict[str, float]]:
    dominant: dict[str, float] = {}
    byset: dict[str, float] = {}
    for plist in assignment.paths.values():
        for p in plist:
            dominant[p.dominant_mode] = dominant.get(p.dominant_mode, 0.0) + p.share
            key = "+".join(p.mode_set) if p.mode_set else "switch"
            byset[key] = byset.get(key, 0.0) + p.share
    if total_rate > 0:
        dominant = {k: v / total_rate for k, v in dominant.items()}
        byset = {k: v / total_rate for k, v in byset.items()}
    return dominant, byset


def histogram(
    assignment: PathAssignment, bin_width: float = 1.0
) -> list[tuple[float, float, str, float]]:
    """User rate per (travel-time bin, dominant mode); bin b covers
    [b*w, (b+1)*w). Rows sorted by (bin, mode)."""
    acc: dict[tuple[int, str], float] = {}
    for plist in assignment.paths.values():
        for p in plist:
            b = int(math.floor(p.time_min / bin_width))
            key = (b, p.dominant_mode)
            acc[key] = acc.get(key, 0.0) + p.share
    return [
        (b * bin_width, (b + 1) * bin_width, mode, rate)
        for (b, mode), rate in sorted(acc.items())
    ]


def demand_mean_histogram(
    report: MetricsReport, dem: DemandSet, bin_width: float = 1.0
) -> list[tuple[float, float, float]]:
    """Companion histogram over per-demand mean times (rate-weighted)."""
    acc: dict[int, float] = {}
    for d in dem.demands:
        b = int(math.floor(report.demand_mean_time[d.id] / bin_width))
        acc[b] = acc.get(b, 0.0) + d.rate
    return [(b * bin_width, (b + 1) * bin_width, rate) for b, rate in sorted(acc.items())]


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------


def write_metrics_json(report: MetricsReport, path) -> None:
    from . import _json

    _json.dump_path(report.to_doc(), path)


def write_histogram_csv(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_start", "bin_end", "mode", "users_per_min"])
        for start, end, mode, rate in report.histogram_rows:
            writer.writerow([f"{start:.12g}", f"{end:.12g}", mode, f"{rate:.12g}"])


def write_demand_histogram_csv(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_start", "bin_end", "users_per_min"])
        for start, end, rate in report.histogram_demand_rows:
            writer.writerow([f"{start:.12g}", f"{end:.12g}", f"{rate:.12g}"])


def write_heatmap_csv(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["region", "x", "y", "u_r"])
        for r in report.per_region:
            if r.centroid_x is None:
                continue  # no demands, no signal
            writer.writerow(
                [r.region, f"{r.centroid_x:.12g}", f"{r.centroid_y:.12g}", f"{r.insufficiency:.12g}"]
            )
