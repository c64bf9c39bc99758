"""Builds the sparse standard-form convex program for both planning objectives.

Variables are per-demand arc flows (restricted to each demand's reachable arc
set), empty-vehicle rebalancing flows on road arcs and, for the sufficiency
objective, one excess-time slack per demand. Constraint rows carry a
(family, detail) tag for diagnostics: conservation, amod-balance, fleet,
budget, road-cap, transit-cap, slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Mapping

import numpy as np
import scipy.sparse as sp

from .demand import DemandSet
from .errors import ConfigError, DisconnectedDemand, InfeasibleStructure, SchemaError
from .netmodel import ArcKind, Layer, Network, reachable_arc_set

if TYPE_CHECKING:
    from .solver import SolveResult


class ObjectiveKind(str, Enum):
    UTIL_EFF = "util-eff"
    COMM_SUFF = "comm-suff"


class FarePolicy(str, Enum):
    NOMINAL = "nominal"
    FREE_TRANSIT = "free-transit"
    FREE_ALL = "free-all"


@dataclass(frozen=True)
class VariableIndex:
    """Bijection between model variables and column indices.

    Column order: per-demand flow columns (demands in id order, arcs in id
    order within each demand), then rebalancing columns (road arcs in id
    order), then slack columns (demands in id order, sufficiency problem only).
    """

    flow: dict[tuple[int, int], int]  # (demand id, arc id) -> column
    rebalance: dict[int, int]  # road arc id -> column
    slack: dict[int, int]  # demand id -> column
    arcs_by_demand: dict[int, tuple[int, ...]]
    n: int

    @cached_property
    def column_meaning(self) -> tuple[tuple, ...]:
        cols: list[tuple] = [()] * self.n
        for (m, a), j in self.flow.items():
            cols[j] = ("flow", m, a)
        for a, j in self.rebalance.items():
            cols[j] = ("rebalance", a)
        for m, j in self.slack.items():
            cols[j] = ("slack", m)
        return tuple(cols)


@dataclass
class StandardProblem:
    """min 1/2 x'Qx + q'x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  x >= 0."""

    Q: sp.csr_matrix
    q: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    index: VariableIndex
    objective_kind: ObjectiveKind
    eq_tags: list[tuple[str, str]]
    in_tags: list[tuple[str, str]]
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.index.n

    def objective_value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.Q @ x) + self.q @ x)


def apply_fare_policy(net: Network, policy: FarePolicy) -> Network:
    """Zero out fares according to policy. Transit fares live on boarding
    switch arcs (head in the transit layer), so free transit clears those too."""
    if policy is FarePolicy.NOMINAL:
        return net
    by_id = net.node_by_id
    new_arcs = []
    for a in net.arcs:
        if policy is FarePolicy.FREE_ALL:
            free = True
        else:  # FREE_TRANSIT
            free = a.kind is ArcKind.TRANSIT or (
                a.kind is ArcKind.SWITCH and by_id[a.head].layer is Layer.TRANSIT
            )
        new_arcs.append(replace(a, cost=0.0) if free and a.cost != 0.0 else a)
    return replace(net, arcs=tuple(new_arcs))


def _check_config(cfg, dem: DemandSet) -> None:
    for name in ("n_amod_max", "t_suff", "gamma_reb", "gamma_time"):
        v = getattr(cfg, name)
        if not (v >= 0.0):
            raise ConfigError(f"config field {name} must be nonnegative, got {v}")
    if not (cfg.t_suff > 0.0):
        raise ConfigError(f"t_suff must be positive, got {cfg.t_suff}")
    for d in dem.demands:
        if not (d.rate > 0.0):
            raise ConfigError(f"demand {d.id} has nonpositive rate {d.rate}")


def assemble(net: Network, dem: DemandSet, cfg, kind: ObjectiveKind) -> StandardProblem:
    """Encode conservation, vehicle balance, fleet, budget, capacity and (for
    the sufficiency objective) excess-time rows over the pruned variable set.

    Expects a validated, safety-pruned, fare-adjusted network.
    """
    _check_config(cfg, dem)
    kind = ObjectiveKind(kind)
    arcs = net.arcs
    by_id = net.node_by_id

    # Per-demand reachable arc sets (sorted for deterministic column order).
    arcs_by_demand: dict[int, tuple[int, ...]] = {}
    for d in dem.demands:
        try:
            reach = reachable_arc_set(net, d.origin, d.destination, allow_bike=d.bike_capable)
        except DisconnectedDemand as exc:
            raise InfeasibleStructure(f"demand {d.id}: {exc}") from exc
        arcs_by_demand[d.id] = tuple(sorted(reach))

    road_arcs = [ai for ai, a in enumerate(arcs) if a.kind is ArcKind.ROAD]

    flow_col: dict[tuple[int, int], int] = {}
    col = 0
    for d in dem.demands:
        for ai in arcs_by_demand[d.id]:
            flow_col[(d.id, ai)] = col
            col += 1
    reb_col = {ai: col + k for k, ai in enumerate(road_arcs)}
    col += len(road_arcs)
    slack_col: dict[int, int] = {}
    if kind is ObjectiveKind.COMM_SUFF:
        for d in dem.demands:
            slack_col[d.id] = col
            col += 1
    n = col
    index = VariableIndex(
        flow=flow_col,
        rebalance=reb_col,
        slack=slack_col,
        arcs_by_demand=arcs_by_demand,
        n=n,
    )

    # Demand flow columns grouped by arc, for the shared vehicle/capacity rows.
    flows_by_arc: dict[int, list[int]] = {}
    for (m, ai), j in flow_col.items():
        flows_by_arc.setdefault(ai, []).append(j)

    eq_rows: list[int] = []
    eq_cols: list[int] = []
    eq_vals: list[float] = []
    b_eq: list[float] = []
    eq_tags: list[tuple[str, str]] = []

    def eq_entry(row: int, j: int, v: float) -> None:
        eq_rows.append(row)
        eq_cols.append(j)
        eq_vals.append(v)

    # Rows implied by the others (the node rows of one commodity sum to zero);
    # the embedded solver drops them so its normal equations stay full-rank.
    redundant_eq: list[int] = []

    # Flow conservation: one row per demand and per node touched by its arcs.
    row = 0
    for d in dem.demands:
        incident: dict[int, tuple[list[int], list[int]]] = {}
        for ai in arcs_by_demand[d.id]:
            a = arcs[ai]
            incident.setdefault(a.tail, ([], []))[0].append(ai)
            incident.setdefault(a.head, ([], []))[1].append(ai)
        for v in sorted(incident):
            out_list, in_list = incident[v]
            for ai in out_list:
                eq_entry(row, flow_col[(d.id, ai)], 1.0)
            for ai in in_list:
                eq_entry(row, flow_col[(d.id, ai)], -1.0)
            rhs = 0.0
            if v == d.origin:
                rhs += d.rate
            if v == d.destination:
                rhs -= d.rate
            if v == d.destination:
                redundant_eq.append(row)
            b_eq.append(rhs)
            eq_tags.append(("conservation", f"demand={d.id},node={v}"))
            row += 1

    # Vehicle balance at road nodes: occupied plus rebalancing road flow in = out.
    road_incident: dict[int, tuple[list[int], list[int]]] = {}
    for ai in road_arcs:
        a = arcs[ai]
        road_incident.setdefault(a.tail, ([], []))[0].append(ai)
        road_incident.setdefault(a.head, ([], []))[1].append(ai)
    road_component = _connected_components(road_incident, [(arcs[ai].tail, arcs[ai].head) for ai in road_arcs])
    component_last = {}
    for v in sorted(road_incident):
        component_last[road_component[v]] = v
    drop_nodes = set(component_last.values())
    for v in sorted(road_incident):
        out_list, in_list = road_incident[v]
        for ai in out_list:
            eq_entry(row, reb_col[ai], 1.0)
            for j in flows_by_arc.get(ai, ()):
                eq_entry(row, j, 1.0)
        for ai in in_list:
            eq_entry(row, reb_col[ai], -1.0)
            for j in flows_by_arc.get(ai, ()):
                eq_entry(row, j, -1.0)
        if v in drop_nodes:
            redundant_eq.append(row)
        b_eq.append(0.0)
        eq_tags.append(("amod-balance", f"node={v}"))
        row += 1
    m_eq = row

    in_rows: list[int] = []
    in_cols: list[int] = []
    in_vals: list[float] = []
    b_in: list[float] = []
    in_tags: list[tuple[str, str]] = []

    def in_entry(row: int, j: int, v: float) -> None:
        in_rows.append(row)
        in_cols.append(j)
        in_vals.append(v)

    row = 0
    # Fleet size: total road travel time of occupied plus empty vehicles.
    if road_arcs and math.isfinite(cfg.n_amod_max):
        for ai in road_arcs:
            t = arcs[ai].time_min
            in_entry(row, reb_col[ai], t)
            for j in flows_by_arc.get(ai, ()):
                in_entry(row, j, t)
        b_in.append(float(cfg.n_amod_max))
        in_tags.append(("fleet", ""))
        row += 1

    # Personal budget per demand, multiplied through by the demand rate.
    if cfg.budget_enabled:
        for d in dem.demands:
            budget = dem.region_by_id[d.region].budget
            for ai in arcs_by_demand[d.id]:
                c = arcs[ai].cost
                if c != 0.0:
                    in_entry(row, flow_col[(d.id, ai)], c)
            b_in.append(budget * d.rate)
            in_tags.append(("budget", f"demand={d.id}"))
            row += 1

    # Per-arc capacity rows (absent cap means uncapacitated).
    for ai in road_arcs:
        cap = arcs[ai].flow_cap_veh_min
        if cap is None or not math.isfinite(cap):
            continue
        in_entry(row, reb_col[ai], 1.0)
        for j in flows_by_arc.get(ai, ()):
            in_entry(row, j, 1.0)
        b_in.append(cap)
        in_tags.append(("road-cap", f"arc={ai}"))
        row += 1
    for ai, a in enumerate(arcs):
        if a.kind is not ArcKind.TRANSIT:
            continue
        cap = a.capacity_users_min
        if cap is None or not math.isfinite(cap):
            continue
        for j in flows_by_arc.get(ai, ()):
            in_entry(row, j, 1.0)
        b_in.append(cap)
        in_tags.append(("transit-cap", f"arc={ai}"))
        row += 1

    # Excess-time slack rows: mean trip time minus slack bounded by the threshold.
    if kind is ObjectiveKind.COMM_SUFF:
        for d in dem.demands:
            for ai in arcs_by_demand[d.id]:
                t = arcs[ai].time_min
                if t != 0.0:
                    in_entry(row, flow_col[(d.id, ai)], t / d.rate)
            in_entry(row, slack_col[d.id], -1.0)
            b_in.append(float(cfg.t_suff))
            in_tags.append(("slack", f"demand={d.id}"))
            row += 1
    m_in = row

    # Objective.
    q = np.zeros(n)
    for (m, ai), j in flow_col.items():
        q[j] = arcs[ai].time_min
    for ai, j in reb_col.items():
        q[j] = cfg.gamma_reb * arcs[ai].time_min
    q_diag = np.zeros(n)
    if kind is ObjectiveKind.COMM_SUFF:
        q *= cfg.gamma_time
        n_pop = dem.total_population
        if n_pop <= 0.0:
            raise ConfigError("total population must be positive for the sufficiency objective")
        rate_by_region = {
            rid: sum(d.rate for d in ds) for rid, ds in dem.demands_by_region.items()
        }
        for d in dem.demands:
            n_r = dem.region_by_id[d.region].population
            q_diag[slack_col[d.id]] = 2.0 * n_r * d.rate / (n_pop * rate_by_region[d.region])
    Q = sp.diags(q_diag, format="csr") if q_diag.any() else sp.csr_matrix((n, n))

    A_eq = sp.coo_matrix((eq_vals, (eq_rows, eq_cols)), shape=(m_eq, n)).tocsr()
    A_in = sp.coo_matrix((in_vals, (in_rows, in_cols)), shape=(m_in, n)).tocsr()

    return StandardProblem(
        Q=Q,
        q=q,
        A_eq=A_eq,
        b_eq=np.asarray(b_eq),
        A_in=A_in,
        b_in=np.asarray(b_in),
        index=index,
        objective_kind=kind,
        eq_tags=eq_tags,
        in_tags=in_tags,
        meta={
            "gamma_reb": cfg.gamma_reb,
            "gamma_time": cfg.gamma_time,
            "t_suff": cfg.t_suff,
            "n_amod_max": cfg.n_amod_max,
            "budget_enabled": bool(cfg.budget_enabled),
            "redundant_eq_rows": redundant_eq,
        },
    )


def _connected_components(incident: Mapping[int, object], edges) -> dict[int, int]:
    """Undirected connected components over the given node set; returns a
    node -> component-representative map (representative = smallest node id)."""
    parent = {v: v for v in incident}

    def find(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    return {v: find(v) for v in incident}


# ---------------------------------------------------------------------------
# Solution extraction and (de)serialization
# ---------------------------------------------------------------------------


@dataclass
class FlowSolution:
    """Optimal flows mapped back to network entities."""

    objective_kind: ObjectiveKind
    status: str
    objective: float
    gap: float | None
    iterations: int
    demand_flows: dict[int, dict[int, float]]  # demand id -> {arc id: users/min}
    rebalancing: dict[int, float]  # road arc id -> vehicles/min
    slacks: dict[int, float]  # demand id -> excess time (sufficiency runs)

    def to_doc(self) -> dict:
        return {
            "format": "equiflow/1",
            "objective_kind": self.objective_kind.value,
            "status": self.status,
            "objective": self.objective,
            "gap": self.gap,
            "iterations": self.iterations,
            "demand_flows": {
                str(m): {str(a): v for a, v in sorted(flows.items())}
                for m, flows in sorted(self.demand_flows.items())
            },
            "rebalancing": {str(a): v for a, v in sorted(self.rebalancing.items())},
            "slacks": {str(m): v for m, v in sorted(self.slacks.items())},
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "FlowSolution":
        if doc.get("format") != "equiflow/1":
            raise SchemaError("flow solution document: missing or unknown format tag")
        try:
            return cls(
                objective_kind=ObjectiveKind(doc["objective_kind"]),
                status=str(doc["status"]),
                objective=float(doc["objective"]),
                gap=None if doc.get("gap") is None else float(doc["gap"]),
                iterations=int(doc["iterations"]),
                demand_flows={
                    int(m): {int(a): float(v) for a, v in flows.items()}
                    for m, flows in doc["demand_flows"].items()
                },
                rebalancing={int(a): float(v) for a, v in doc["rebalancing"].items()},
                slacks={int(m): float(v) for m, v in doc["slacks"].items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"flow solution document malformed: {exc}") from exc


def extract_flows(problem: StandardProblem, result: "SolveResult") -> FlowSolution:
    x = result.x
    idx = problem.index
    objective = result.objective
    if idx.slack:
        # Polish: a slack column appears only in its own row and the objective,
        # so its exact partial minimum given the flows is closed-form. This can
        # only lower the true objective (the interior point leaves slacks
        # slightly off their bound).
        x = x.copy()
        for i, (family, detail) in enumerate(problem.in_tags):
            if family != "slack":
                continue
            m = int(detail.split("=", 1)[1])
            j = idx.slack[m]
            row = problem.A_in.getrow(i)
            excess = float((row @ x)[0]) + x[j] - problem.b_in[i]
            x[j] = max(0.0, excess)
        objective = problem.objective_value(x)
    demand_flows: dict[int, dict[int, float]] = {m: {} for m in idx.arcs_by_demand}
    for (m, a), j in idx.flow.items():
        demand_flows[m][a] = float(x[j])
    return FlowSolution(
        objective_kind=problem.objective_kind,
        status=result.status.value,
        objective=objective,
        gap=result.gap,
        iterations=result.iterations,
        demand_flows=demand_flows,
        rebalancing={a: float(x[j]) for a, j in idx.rebalance.items()},
        slacks={m: float(x[j]) for m, j in idx.slack.items()},
    )


def export_problem(problem: StandardProblem, triplet_path, index_path) -> None:
    """Debug/backend export: sectioned sparse triplets plus a JSON index sidecar.

    Matrix sections list one nonzero per line as ``row col value``; vector
    sections list ``index value``. Values use 17 significant digits so they
    round-trip exactly.
    """
    lines = ["equiflow/1 triplets", f"objective {problem.objective_kind.value}"]
    lines.append(
        f"shape n={problem.n} eq={problem.A_eq.shape[0]} in={problem.A_in.shape[0]}"
    )

    def matrix_section(name: str, mat: sp.csr_matrix) -> None:
        lines.append(f"section {name}")
        coo = mat.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            lines.append(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}")

    def vector_section(name: str, vec: np.ndarray) -> None:
        lines.append(f"section {name}")
        for i, v in enumerate(vec):
            if v != 0.0:
                lines.append(f"{i} {v:.17g}")

    matrix_section("Q", problem.Q)
    vector_section("q", problem.q)
    matrix_section("A_eq", problem.A_eq)
    vector_section("b_eq", problem.b_eq)
    matrix_section("A_in", problem.A_in)
    vector_section("b_in", problem.b_in)

    with open(triplet_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    from . import _json

    sidecar = {
        "format": "equiflow/1",
        "objective": problem.objective_kind.value,
        "num_vars": problem.n,
        "num_eq": int(problem.A_eq.shape[0]),
        "num_in": int(problem.A_in.shape[0]),
        "columns": [list(c) for c in problem.index.column_meaning],
        "eq_tags": [list(t) for t in problem.eq_tags],
        "in_tags": [list(t) for t in problem.in_tags],
    }
    _json.dump_path(sidecar, index_path)


def parse_problem_triplets(triplet_path) -> dict:
    """Parse the triplet export back into arrays (used by external backends
    and round-trip tests)."""
    with open(triplet_path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("equiflow/1"):
        raise SchemaError("triplet file: missing format header")
    objective = lines[1].split()[1]
    shape = dict(part.split("=") for part in lines[2].split()[1:])
    n, m_eq, m_in = int(shape["n"]), int(shape["eq"]), int(shape["in"])

    sections: dict[str, list[str]] = {}
    current = None
    for ln in lines[3:]:
        if ln.startswith("section "):
            current = ln.split(" ", 1)[1]
            sections[current] = []
        elif ln.strip():
            sections[current].append(ln)

    def read_matrix(name: str, shape: tuple[int, int]) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for ln in sections.get(name, ()):
            r, c, v = ln.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
        return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()

    def read_vector(name: str, size: int) -> np.ndarray:
        vec = np.zeros(size)
        for ln in sections.get(name, ()):
            i, v = ln.split()
            vec[int(i)] = float(v)
        return vec

    return {
        "objective": objective,
        "n": n,
        "Q": read_matrix("Q", (n, n)),
        "q": read_vector("q", n),
        "A_eq": read_matrix("A_eq", (m_eq, n)),
        "b_eq": read_vector("b_eq", m_eq),
        "A_in": read_matrix("A_in", (m_in, n)),
        "b_in": read_vector("b_in", m_in),
    }
