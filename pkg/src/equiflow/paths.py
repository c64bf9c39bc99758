"""Reconstructs explicit O-D paths (and residual cycles) from optimal arc flows.

Per demand: repeatedly extract the minimum-travel-time path through the
positive-flow subgraph, assign it its bottleneck flow, subtract, and continue
until the demand rate is routed. Whatever positive flow remains is decomposed
into cycles and reported, never dropped silently.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, replace

from .assembler import FlowSolution
from .demand import DemandSet
from .errors import ConservationViolation
from .netmodel import ArcKind, Network

DUST = 1e-9  # flows below this are zeroed before decomposition


@dataclass(frozen=True)
class PathFlow:
    nodes: tuple[int, ...]
    arcs: tuple[int, ...]
    share: float  # users/min
    time_min: float
    cost: float
    mode_set: tuple[str, ...]  # sorted intra-layer kinds traversed
    dominant_mode: str  # largest in-path time share


@dataclass(frozen=True)
class CycleFlow:
    nodes: tuple[int, ...]
    arcs: tuple[int, ...]
    flow: float
    time_min: float


@dataclass
class PathAssignment:
    paths: dict[int, list[PathFlow]]  # demand id -> extraction order
    cycles: dict[int, list[CycleFlow]]

    def total_share(self, demand_id: int) -> float:
        return sum(p.share for p in self.paths.get(demand_id, ()))


def _path_modes(net: Network, arc_ids: tuple[int, ...]) -> tuple[tuple[str, ...], str]:
    time_by_kind: dict[str, float] = {}
    for ai in arc_ids:
        a = net.arcs[ai]
        time_by_kind[a.kind.value] = time_by_kind.get(a.kind.value, 0.0) + a.time_min
    intra = {k: t for k, t in time_by_kind.items() if k != ArcKind.SWITCH.value}
    if not intra:
        return (), ArcKind.SWITCH.value
    mode_set = tuple(sorted(intra))
    best = max(intra.values())
    dominant = sorted(k for k, t in intra.items() if t == best)[0]  # alphabetical tie-break
    return mode_set, dominant


def path_extraction_rule(
    net: Network, residual: dict[int, float], origin: int, destination: int
) -> list[int] | None:
    """Minimum-travel-time path in the positive-flow subgraph, ties broken by
    the lexicographically smallest node sequence. Returns arc ids, or None."""
    out: dict[int, list[int]] = {}
    for ai in residual:
        out.setdefault(net.arcs[ai].tail, []).append(ai)
    # Dijkstra on (distance, node-sequence) labels; the tuple comparison makes
    # the tie-break exact and deterministic (subgraphs here are tiny).
    heap: list[tuple[float, tuple[int, ...], tuple[int, ...]]] = [(0.0, (origin,), ())]
    settled: set[int] = set()
    while heap:
        dist, nodes, arcs_used = heapq.heappop(heap)
        v = nodes[-1]
        if v == destination:
            return list(arcs_used)
        if v in settled:
            continue
        settled.add(v)
        for ai in out.get(v, ()):
            head = net.arcs[ai].head
            if head in settled:
                continue
            heapq.heappush(heap, (dist + net.arcs[ai].time_min, nodes + (head,), arcs_used + (ai,)))
    return None


def _check_conservation(
    net: Network, dem: DemandSet, flows: FlowSolution, solver_tol: float
) -> None:
    limit = 1e3 * solver_tol
    for d in dem.demands:
        balance: dict[int, float] = {}
        for ai, v in flows.demand_flows.get(d.id, {}).items():
            a = net.arcs[ai]
            balance[a.tail] = balance.get(a.tail, 0.0) - v
            balance[a.head] = balance.get(a.head, 0.0) + v
        balance[d.origin] = balance.get(d.origin, 0.0) + d.rate
        balance[d.destination] = balance.get(d.destination, 0.0) - d.rate
        worst = max((abs(v) for v in balance.values()), default=0.0)
        if worst > limit:
            raise ConservationViolation(
                f"demand {d.id}: conservation residual {worst:.3e} exceeds {limit:.3e}"
            )


def decompose(
    flows: FlowSolution, net: Network, dem: DemandSet, solver_tol: float = 1e-8
) -> PathAssignment:
    _check_conservation(net, dem, flows, solver_tol)
    paths: dict[int, list[PathFlow]] = {}
    cycles: dict[int, list[CycleFlow]] = {}
    for d in dem.demands:
        residual = {
            ai: v for ai, v in flows.demand_flows.get(d.id, {}).items() if v > DUST
        }
        extracted: list[PathFlow] = []
        routed = 0.0
        while routed < d.rate - DUST:
            arc_ids = path_extraction_rule(net, residual, d.origin, d.destination)
            if arc_ids is None:
                break
            bottleneck = min(residual[ai] for ai in arc_ids)
            share = min(bottleneck, d.rate - routed)
            nodes = (net.arcs[arc_ids[0]].tail,) + tuple(net.arcs[ai].head for ai in arc_ids)
            mode_set, dominant = _path_modes(net, tuple(arc_ids))
            extracted.append(
                PathFlow(
                    nodes=nodes,
                    arcs=tuple(arc_ids),
                    share=share,
                    time_min=sum(net.arcs[ai].time_min for ai in arc_ids),
                    cost=sum(net.arcs[ai].cost for ai in arc_ids),
                    mode_set=mode_set,
                    dominant_mode=dominant,
                )
            )
            routed += share
            for ai in arc_ids:
                left = residual[ai] - share
                if left <= DUST:
                    residual.pop(ai)
                else:
                    residual[ai] = left
        leftover = d.rate - routed
        if leftover > max(DUST, 1e3 * solver_tol):
            raise ConservationViolation(
                f"demand {d.id}: could not route {leftover:.3e} users/min "
                "through the positive-flow subgraph"
            )
        if leftover > 0.0 and routed > 0.0:
            # dust zeroing can strand slightly more than DUST when the solver
            # residual spreads over many arcs; reattribute it proportionally
            # so shares sum to the demand rate exactly
            scale = d.rate / routed
            extracted = [replace(p, share=p.share * scale) for p in extracted]
        paths[d.id] = extracted
        cycles[d.id] = _extract_cycles(net, residual)
    return PathAssignment(paths=paths, cycles=cycles)


def _extract_cycles(net: Network, residual: dict[int, float]) -> list[CycleFlow]:
    found: list[CycleFlow] = []
    guard = 0
    while residual:
        guard += 1
        if guard > 10 * (len(residual) + 1):
            break  # numerical crumbs that no longer close a cycle
        out: dict[int, list[int]] = {}
        for ai in residual:
            out.setdefault(net.arcs[ai].tail, []).append(ai)
        start = min(out)
        walk_nodes = [start]
        walk_arcs: list[int] = []
        seen = {start: 0}
        v = start
        while True:
            choices = out.get(v)
            if not choices:
                for ai in walk_arcs:  # dead-end dust
                    residual.pop(ai, None)
                break
            ai = min(choices, key=lambda k: (net.arcs[k].time_min, net.arcs[k].head))
            walk_arcs.append(ai)
            v = net.arcs[ai].head
            if v in seen:
                k = seen[v]
                cyc_nodes = tuple(walk_nodes[k:] + [v])
                cyc_arcs = tuple(walk_arcs[k:])
                flow = min(residual[a] for a in cyc_arcs)
                found.append(
                    CycleFlow(
                        nodes=cyc_nodes,
                        arcs=cyc_arcs,
                        flow=flow,
                        time_min=sum(net.arcs[a].time_min for a in cyc_arcs),
                    )
                )
                for a in cyc_arcs:
                    left = residual[a] - flow
                    if left <= DUST:
                        residual.pop(a)
                    else:
                        residual[a] = left
                break
            seen[v] = len(walk_nodes)
            walk_nodes.append(v)
    return found


def write_paths_csv(assignment: PathAssignment, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["demand", "path_index", "share_users_min", "time_min", "cost", "mode_set", "nodes"]
        )
        for m in sorted(assignment.paths):
            for k, p in enumerate(assignment.paths[m]):
                writer.writerow(
                    [
                        m,
                        k,
                        f"{p.share:.12g}",
                        f"{p.time_min:.12g}",
                        f"{p.cost:.12g}",
                        "+".join(p.mode_set) if p.mode_set else "switch",
                        ">".join(str(v) for v in p.nodes),
                    ]
                )
        for m in sorted(assignment.cycles):
            for k, cyc in enumerate(assignment.cycles[m]):
                writer.writerow(
                    [
                        m,
                        f"cycle-{k}",
                        f"{cyc.flow:.12g}",
                        f"{cyc.time_min:.12g}",
                        "",
                        "",
                        ">".join(str(v) for v in cyc.nodes),
                    ]
                )
