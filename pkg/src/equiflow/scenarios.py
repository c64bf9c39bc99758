"""Scenario configuration, policy toggles, the synthetic grid-city generator,
and the end-to-end pipeline runner.

The generator builds a k x k road grid with parallel walk and bike grids,
transit lines over a station subset, mode-switch arcs with boarding fares,
regions as vertical strips, and O-D demands between region blocks. All
sampling is split into named substreams per entity class, so output is a
deterministic function of (spec, seed) and byte-identical across platforms.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import _json
from .assembler import (
    FarePolicy,
    FlowSolution,
    ObjectiveKind,
    apply_fare_policy,
    assemble,
    extract_flows,
)
from .demand import Demand, DemandSet, Region, demand_set_to_doc, split_by_bike_share
from .errors import ConfigError, ScenarioFailure, SchemaError, SpecError
from .metrics import (
    MetricsReport,
    evaluate,
    write_demand_histogram_csv,
    write_heatmap_csv,
    write_histogram_csv,
    write_metrics_json,
)
from .netmodel import (
    Arc,
    ArcKind,
    Layer,
    Network,
    Node,
    network_to_doc,
    prune_unsafe_bike_arcs,
    validate_network,
)
from .paths import PathAssignment, decompose, write_paths_csv
from .solver import SolveSettings, SolveStatus, solve

_INF = "inf"


def _num_or_inf(v: float):
    return _INF if math.isinf(v) else v


def _parse_num_or_inf(v, where: str) -> float:
    if v == _INF:
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}: expected a number or 'inf', got {v!r}")
    return float(v)


@dataclass
class ScenarioConfig:
    safety_threshold: float | None = None  # None: use the network's own threshold
    n_amod_max: float = 240.0
    t_suff: float = 20.0
    gamma_reb: float = 1e-3
    gamma_time: float = 1e-3
    budget_enabled: bool = True
    fare_policy: FarePolicy = FarePolicy.NOMINAL
    operating_window_min: float = 1440.0
    histogram_bin_min: float = 1.0
    seed: int = 0
    # Scenario runs default tighter than the bare solver so decomposition and
    # the metric cross-checks see well-converged flows.
    solver: SolveSettings = field(default_factory=lambda: SolveSettings(feas_tol=1e-9, gap_tol=1e-10))

    def __post_init__(self):
        for name in ("n_amod_max", "t_suff", "gamma_reb", "gamma_time", "operating_window_min", "histogram_bin_min"):
            v = getattr(self, name)
            if not (v >= 0.0):
                raise ConfigError(f"{name} must be nonnegative, got {v}")
        if self.t_suff <= 0.0:
            raise ConfigError("t_suff must be positive")
        if self.safety_threshold is not None and not (self.safety_threshold >= 0.0):
            raise ConfigError("safety_threshold must be nonnegative")
        self.fare_policy = FarePolicy(self.fare_policy)

    def to_doc(self) -> dict:
        return {
            "format": "equiflow/1",
            "safety_threshold": None if self.safety_threshold is None else _num_or_inf(self.safety_threshold),
            "n_amod_max": _num_or_inf(self.n_amod_max),
            "t_suff": self.t_suff,
            "gamma_reb": self.gamma_reb,
            "gamma_time": self.gamma_time,
            "budget_enabled": self.budget_enabled,
            "fare_policy": self.fare_policy.value,
            "operating_window_min": self.operating_window_min,
            "histogram_bin_min": self.histogram_bin_min,
            "seed": self.seed,
            "solver": {
                "feas_tol": self.solver.feas_tol,
                "gap_tol": self.solver.gap_tol,
                "max_iter": self.solver.max_iter,
                "backend": self.solver.backend,
                "external_command": list(self.solver.external_command or []) or None,
            },
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "ScenarioConfig":
        if not isinstance(doc, Mapping):
            raise SchemaError("scenario config must be a JSON object")
        known = {
            "format", "objective", "safety_threshold", "n_amod_max", "t_suff", "gamma_reb",
            "gamma_time", "budget_enabled", "fare_policy", "operating_window_min",
            "histogram_bin_min", "seed", "solver",
        }
        unknown = set(doc) - known
        if unknown:
            raise SchemaError(f"scenario config: unknown fields {sorted(unknown)}")
        kwargs: dict = {}
        if doc.get("safety_threshold") is not None:
            kwargs["safety_threshold"] = _parse_num_or_inf(doc["safety_threshold"], "safety_threshold")
        for name in ("t_suff", "gamma_reb", "gamma_time", "operating_window_min", "histogram_bin_min"):
            if name in doc:
                kwargs[name] = float(doc[name])
        if "n_amod_max" in doc:
            kwargs["n_amod_max"] = _parse_num_or_inf(doc["n_amod_max"], "n_amod_max")
        if "budget_enabled" in doc:
            kwargs["budget_enabled"] = bool(doc["budget_enabled"])
        if "fare_policy" in doc:
            try:
                kwargs["fare_policy"] = FarePolicy(doc["fare_policy"])
            except ValueError:
                raise SchemaError(f"unknown fare policy {doc['fare_policy']!r}") from None
        if "seed" in doc:
            kwargs["seed"] = int(doc["seed"])
        if "solver" in doc and doc["solver"] is not None:
            s = doc["solver"]
            cmd = s.get("external_command")
            kwargs["solver"] = SolveSettings(
                feas_tol=float(s.get("feas_tol", 1e-9)),
                gap_tol=None if s.get("gap_tol") is None else float(s["gap_tol"]),
                max_iter=int(s.get("max_iter", 200)),
                backend=str(s.get("backend", "embedded")),
                external_command=tuple(cmd) if cmd else None,
            )
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"scenario config malformed: {exc}") from exc


# ---------------------------------------------------------------------------
# Grid-city generator
# ---------------------------------------------------------------------------


@dataclass
class GridCitySpec:
    rows: int = 4
    cols: int = 4
    regions: int = 2  # vertical strips over columns
    demand_count: int = 6
    block_meters: float = 500.0
    include_bike: bool = True
    include_transit: bool = True
    transit_lines: int = 2
    transit_stop_spacing: int = 1
    walk_time_range: tuple[float, float] = (6.0, 10.0)  # minutes per block
    bike_time_range: tuple[float, float] = (2.5, 4.5)
    road_time_range: tuple[float, float] = (0.6, 1.4)
    transit_time_range: tuple[float, float] = (0.4, 0.9)
    transit_wait_range: tuple[float, float] = (1.5, 4.0)
    switch_time_range: tuple[float, float] = (0.3, 1.0)
    transit_fare_range: tuple[float, float] = (1.8, 3.2)
    amod_base_fare_range: tuple[float, float] = (2.0, 4.0)
    amod_per_min_rate_range: tuple[float, float] = (0.8, 1.6)
    road_cap_range: tuple[float, float] = (3.0, 8.0)  # vehicles/min per arc
    transit_cap_range: tuple[float, float] = (2.0, 6.0)  # users/min per arc
    unsafety_range: tuple[float, float] = (0.0, 1.0)
    safety_threshold: float = 0.7
    population_range: tuple[int, int] = (200, 1000)
    budget_range: tuple[float, float] = (2.0, 6.0)  # currency per trip
    demand_rate_range: tuple[float, float] = (0.2, 1.5)  # users/min
    bike_incapable_share: float = 0.3
    operating_window_min: float = 1440.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols < 2:
            raise SpecError("grid needs at least two intersections")
        if self.regions < 1 or self.regions > self.cols:
            raise SpecError("regions must be between 1 and the column count")
        if self.demand_count < 1:
            raise SpecError("demand_count must be positive")
        if not (0.0 <= self.bike_incapable_share <= 1.0):
            raise SpecError("bike_incapable_share must lie in [0, 1]")
        if self.transit_stop_spacing < 1:
            raise SpecError("transit_stop_spacing must be >= 1")
        for name in (
            "walk_time_range", "bike_time_range", "road_time_range", "transit_time_range",
            "transit_wait_range", "switch_time_range", "transit_fare_range",
            "amod_base_fare_range", "amod_per_min_rate_range", "road_cap_range",
            "transit_cap_range", "unsafety_range", "population_range", "budget_range",
            "demand_rate_range",
        ):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                raise SpecError(f"{name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})")
        if self.safety_threshold < 0 or self.operating_window_min <= 0:
            raise SpecError("safety_threshold must be >= 0 and operating window positive")

    def to_doc(self) -> dict:
        doc = {"format": "equiflow/1"}
        for name in _SPEC_FIELDS:
            v = getattr(self, name)
            doc[name] = list(v) if isinstance(v, tuple) else v
        return doc

    @classmethod
    def from_doc(cls, doc: Mapping) -> "GridCitySpec":
        if not isinstance(doc, Mapping):
            raise SpecError("grid spec must be a JSON object")
        unknown = set(doc) - set(_SPEC_FIELDS) - {"format"}
        if unknown:
            raise SpecError(f"grid spec: unknown fields {sorted(unknown)}")
        kwargs = {}
        for name in _SPEC_FIELDS:
            if name in doc:
                v = doc[name]
                if isinstance(v, list):
                    if len(v) != 2:
                        raise SpecError(f"{name} must be a [lo, hi] pair")
                    v = (v[0], v[1])
                kwargs[name] = v
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise SpecError(f"grid spec malformed: {exc}") from exc


_SPEC_FIELDS = [f for f in GridCitySpec.__dataclass_fields__]  # declaration order

_STREAMS = (
    "walk", "bike", "road", "transit", "switch", "fares", "caps", "unsafety",
    "regions", "demands",
)


def _rngs(seed: int) -> dict[str, np.random.Generator]:
    """One independent PCG64 substream per entity class, spawned in the fixed
    order of _STREAMS from the scenario seed."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(_STREAMS, children)}


def generate_grid_city(spec: GridCitySpec, seed: int) -> tuple[Network, DemandSet]:
    rngs = _rngs(seed)
    rows, cols = spec.rows, spec.cols
    blk = spec.block_meters

    def uniform(rng, rng_pair) -> float:
        lo, hi = rng_pair
        return float(rng.uniform(lo, hi)) if hi > lo else float(lo)

    nodes: list[Node] = []
    arcs: list[Arc] = []
    next_id = 0

    def add_node(layer: Layer, x: float, y: float, region: int | None = None) -> int:
        nonlocal next_id
        nodes.append(Node(id=next_id, layer=layer, x=x, y=y, region=region))
        next_id += 1
        return next_id - 1

    def region_of_col(c: int) -> int:
        return min(spec.regions - 1, c * spec.regions // cols)

    grid_nodes: dict[Layer, dict[tuple[int, int], int]] = {}
    layers = [Layer.ROAD, Layer.WALK] + ([Layer.BIKE] if spec.include_bike else [])
    for layer in layers:
        grid_nodes[layer] = {}
        for i in range(rows):
            for j in range(cols):
                grid_nodes[layer][(i, j)] = add_node(layer, j * blk, i * blk)

    layer_stream = {Layer.ROAD: "road", Layer.WALK: "walk", Layer.BIKE: "bike"}
    layer_trange = {
        Layer.ROAD: spec.road_time_range,
        Layer.WALK: spec.walk_time_range,
        Layer.BIKE: spec.bike_time_range,
    }
    fare_rng = rngs["fares"]
    amod_base_fare = uniform(fare_rng, spec.amod_base_fare_range)
    amod_per_min = uniform(fare_rng, spec.amod_per_min_rate_range)
    transit_fare = uniform(fare_rng, spec.transit_fare_range)

    for layer in layers:
        rng = rngs[layer_stream[layer]]
        kind = ArcKind(layer.value)
        for i in range(rows):
            for j in range(cols):
                for di, dj in ((0, 1), (1, 0)):
                    ii, jj = i + di, j + dj
                    if ii >= rows or jj >= cols:
                        continue
                    for tail, head in (
                        (grid_nodes[layer][(i, j)], grid_nodes[layer][(ii, jj)]),
                        (grid_nodes[layer][(ii, jj)], grid_nodes[layer][(i, j)]),
                    ):
                        t = uniform(rng, layer_trange[layer])
                        if layer is Layer.ROAD:
                            arcs.append(
                                Arc(tail, head, kind, t, cost=amod_per_min * t,
                                    flow_cap_veh_min=uniform(rngs["caps"], spec.road_cap_range))
                            )
                        elif layer is Layer.BIKE:
                            arcs.append(
                                Arc(tail, head, kind, t, cost=0.0,
                                    unsafety=uniform(rngs["unsafety"], spec.unsafety_range))
                            )
                        else:
                            arcs.append(Arc(tail, head, kind, t, cost=0.0))

    # Mode switches at every intersection, with the walk layer as the hub.
    sw = rngs["switch"]
    for i in range(rows):
        for j in range(cols):
            w = grid_nodes[Layer.WALK][(i, j)]
            r = grid_nodes[Layer.ROAD][(i, j)]
            arcs.append(Arc(w, r, ArcKind.SWITCH, uniform(sw, spec.switch_time_range), cost=amod_base_fare))
            arcs.append(Arc(r, w, ArcKind.SWITCH, uniform(sw, spec.switch_time_range), cost=0.0))
            if spec.include_bike:
                b = grid_nodes[Layer.BIKE][(i, j)]
                arcs.append(Arc(w, b, ArcKind.SWITCH, uniform(sw, spec.switch_time_range), cost=0.0))
                arcs.append(Arc(b, w, ArcKind.SWITCH, uniform(sw, spec.switch_time_range), cost=0.0))

    # Transit lines: alternately horizontal and vertical, evenly spread.
    if spec.include_transit:
        tr = rngs["transit"]
        n_h = (spec.transit_lines + 1) // 2
        n_v = spec.transit_lines // 2
        lines: list[list[tuple[int, int]]] = []
        for k in range(n_h):
            i = (k + 1) * rows // (n_h + 1)
            stations = [(i, j) for j in range(0, cols, spec.transit_stop_spacing)]
            lines.append(stations)
        for k in range(n_v):
            j = (k + 1) * cols // (n_v + 1)
            stations = [(i, j) for i in range(0, rows, spec.transit_stop_spacing)]
            lines.append(stations)
        for stations in lines:
            if len(stations) < 2:
                continue
            stops = [
                add_node(Layer.TRANSIT, c * blk, r * blk) for r, c in stations
            ]
            for k in range(len(stops) - 1):
                (r0, c0), (r1, c1) = stations[k], stations[k + 1]
                blocks = abs(r1 - r0) + abs(c1 - c0)
                for tail, head in ((stops[k], stops[k + 1]), (stops[k + 1], stops[k])):
                    arcs.append(
                        Arc(tail, head, ArcKind.TRANSIT,
                            blocks * uniform(tr, spec.transit_time_range), cost=0.0,
                            capacity_users_min=uniform(rngs["caps"], spec.transit_cap_range))
                    )
            for (r0, c0), stop in zip(stations, stops):
                w = grid_nodes[Layer.WALK][(r0, c0)]
                arcs.append(Arc(w, stop, ArcKind.SWITCH, uniform(tr, spec.transit_wait_range), cost=transit_fare))
                arcs.append(Arc(stop, w, ArcKind.SWITCH, uniform(sw, spec.switch_time_range), cost=0.0))

    # Regions.
    reg_rng = rngs["regions"]
    regions = [
        Region(
            id=r,
            population=float(reg_rng.integers(spec.population_range[0], spec.population_range[1] + 1)),
            budget=uniform(reg_rng, spec.budget_range),
        )
        for r in range(spec.regions)
    ]

    # Demands between region blocks.
    dem_rng = rngs["demands"]
    cols_of_region: dict[int, list[int]] = {r: [] for r in range(spec.regions)}
    for c in range(cols):
        cols_of_region[region_of_col(c)].append(c)
    demands: list[Demand] = []
    for k in range(spec.demand_count):
        r = k % spec.regions
        oc = int(dem_rng.choice(cols_of_region[r]))
        oi = int(dem_rng.integers(0, rows))
        if spec.regions > 1:
            other = [rr for rr in range(spec.regions) if rr != r]
            rd = int(other[int(dem_rng.integers(0, len(other)))])
            dc = int(dem_rng.choice(cols_of_region[rd]))
            di = int(dem_rng.integers(0, rows))
        else:
            while True:
                dc = int(dem_rng.integers(0, cols))
                di = int(dem_rng.integers(0, rows))
                if (di, dc) != (oi, oc):
                    break
        rate = uniform(dem_rng, spec.demand_rate_range)
        o_node = add_node(Layer.ORIGIN, oc * blk, oi * blk, region=r)
        d_node = add_node(Layer.DESTINATION, dc * blk, di * blk)
        arcs.append(Arc(o_node, grid_nodes[Layer.WALK][(oi, oc)], ArcKind.SWITCH, 0.0, cost=0.0))
        arcs.append(Arc(grid_nodes[Layer.WALK][(di, dc)], d_node, ArcKind.SWITCH, 0.0, cost=0.0))
        demands.append(
            Demand(id=k, origin=o_node, destination=d_node, rate=rate, region=r, bike_capable=True)
        )

    net = Network(nodes=tuple(nodes), arcs=tuple(arcs), safety_threshold=spec.safety_threshold)
    dem = DemandSet(
        regions=tuple(regions),
        demands=tuple(demands),
        operating_window_min=spec.operating_window_min,
    )
    dem = split_by_bike_share(dem, spec.bike_incapable_share if spec.include_bike else 0.0)
    return net, dem


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def working_network(net: Network, cfg: ScenarioConfig) -> Network:
    """The network the optimizer actually sees: fares applied, then unsafe
    bike arcs pruned. Arc ids in flows/paths artifacts refer to THIS network
    (pruning reindexes arcs), so consumers must rebuild it the same way."""
    w = apply_fare_policy(net, cfg.fare_policy)
    if cfg.safety_threshold is not None:
        w = replace(w, safety_threshold=cfg.safety_threshold)
    return prune_unsafe_bike_arcs(w)


def run_scenario(
    net: Network,
    dem: DemandSet,
    cfg: ScenarioConfig,
    kind: ObjectiveKind,
    out_dir: str | None = None,
) -> tuple[FlowSolution, MetricsReport, PathAssignment]:
    """Fare policy -> safety pruning -> assemble -> solve -> decompose -> evaluate.

    Raises ScenarioFailure when the solver does not reach an optimum; no
    partial metrics are produced in that case.
    """
    kind = ObjectiveKind(kind)
    violations = validate_network(net)
    if violations:
        raise SchemaError(
            f"network has {len(violations)} validation violations, first: {violations[0]}"
        )
    # Demand files store daily users; (rate * W) / W is not bit-exact, so pin
    # the rates to their file round-trip now. `report` then recomputes every
    # derived artifact byte-identically from the stored directory.
    window = dem.operating_window_min
    dem = replace(
        dem,
        demands=tuple(replace(d, rate=(d.rate * window) / window) for d in dem.demands),
    )
    working = working_network(net, cfg)

    problem = assemble(working, dem, cfg, kind)
    result = solve(problem, cfg.solver)
    if result.status is not SolveStatus.OPTIMAL:
        raise ScenarioFailure(
            f"solver returned {result.status.value}"
            + (f" (suspect family: {result.diagnosis})" if result.diagnosis else ""),
            status=result.status.value,
            diagnosis=result.diagnosis,
        )
    flows = extract_flows(problem, result)
    assignment = decompose(flows, working, dem, solver_tol=cfg.solver.feas_tol)
    report = evaluate(
        flows,
        dem,
        working,
        cfg.t_suff,
        gamma_reb=cfg.gamma_reb,
        gamma_time=cfg.gamma_time,
        assignment=assignment,
        bin_width=cfg.histogram_bin_min,
    )
    if out_dir is not None:
        write_scenario_outputs(out_dir, net, dem, cfg, kind, flows, report, assignment, result.log)
    return flows, report, assignment


def write_scenario_outputs(
    out_dir: str,
    net: Network,
    dem: DemandSet,
    cfg: ScenarioConfig,
    kind: ObjectiveKind,
    flows: FlowSolution,
    report: MetricsReport,
    assignment: PathAssignment,
    solve_log: str = "",
) -> None:
    """Self-describing scenario directory: inputs echoed verbatim plus all
    derived artifacts, so `report` can rebuild everything from the directory."""
    os.makedirs(out_dir, exist_ok=True)
    cfg_doc = cfg.to_doc()
    cfg_doc["objective"] = kind.value
    _json.dump_path(cfg_doc, os.path.join(out_dir, "config.json"))
    # Inputs and flows round-trip exactly (17 significant digits) so `report`
    # can rebuild every derived file byte-identically.
    _json.dump_path(network_to_doc(net), os.path.join(out_dir, "network.json"), float_spec=".17g")
    _json.dump_path(demand_set_to_doc(dem), os.path.join(out_dir, "demand.json"), float_spec=".17g")
    _json.dump_path(flows.to_doc(), os.path.join(out_dir, "flows.json"), float_spec=".17g")
    write_metrics_json(report, os.path.join(out_dir, "metrics.json"))
    write_histogram_csv(report, os.path.join(out_dir, "histogram.csv"))
    write_demand_histogram_csv(report, os.path.join(out_dir, "histogram_by_demand.csv"))
    write_heatmap_csv(report, os.path.join(out_dir, "heatmap.csv"))
    write_paths_csv(assignment, os.path.join(out_dir, "paths.csv"))
    with open(os.path.join(out_dir, "solve_log.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(solve_log + "\n")
