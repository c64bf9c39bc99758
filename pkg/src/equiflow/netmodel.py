"""Multilayer intermodal network: nodes, arcs, validation, safety pruning, reachability.

The graph has six layers (walk, bike, road, transit, origin, destination).
Intra-layer arcs carry the layer's mode; arcs between layers are mode switches
restricted to an admissible layer-pair list. Origin nodes have no incoming
arcs and destination nodes no outgoing arcs.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Mapping

from .errors import ConfigError, DisconnectedDemand, SchemaError


class Layer(str, Enum):
    WALK = "walk"
    BIKE = "bike"
    ROAD = "road"
    TRANSIT = "transit"
    ORIGIN = "origin"
    DESTINATION = "destination"


class ArcKind(str, Enum):
    WALK = "walk"
    BIKE = "bike"
    ROAD = "road"
    TRANSIT = "transit"
    SWITCH = "switch"


# Intra-layer arc kind per layer; origin/destination layers have no internal arcs.
INTRA_KIND: Mapping[Layer, ArcKind] = {
    Layer.WALK: ArcKind.WALK,
    Layer.BIKE: ArcKind.BIKE,
    Layer.ROAD: ArcKind.ROAD,
    Layer.TRANSIT: ArcKind.TRANSIT,
}

_MODE_LAYERS = (Layer.BIKE, Layer.WALK, Layer.ROAD, Layer.TRANSIT)

# Admissible mode-switching layer pairs: origins feed every mode layer, mode
# layers connect to each other and to destinations.
SWITCH_PAIRS: frozenset[tuple[Layer, Layer]] = frozenset(
    [(Layer.ORIGIN, lay) for lay in _MODE_LAYERS]
    + [
        (a, b)
        for a in _MODE_LAYERS
        for b in _MODE_LAYERS + (Layer.DESTINATION,)
        if a is not b
    ]
)


@dataclass(frozen=True)
class Node:
    id: int
    layer: Layer
    x: float
    y: float
    region: int | None = None  # required for origin nodes


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    kind: ArcKind
    time_min: float
    cost: float = 0.0
    unsafety: float | None = None  # bike arcs only
    capacity_users_min: float | None = None  # transit arcs only
    flow_cap_veh_min: float | None = None  # road arcs only


@dataclass(frozen=True)
class Network:
    """Immutable after construction; arc ids are positions in the `arcs` tuple."""

    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    safety_threshold: float

    @cached_property
    def node_by_id(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def out_arcs(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for ai, a in enumerate(self.arcs):
            if a.tail in out:
                out[a.tail].append(ai)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def in_arcs(self) -> dict[int, tuple[int, ...]]:
        inc: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for ai, a in enumerate(self.arcs):
            if a.head in inc:
                inc[a.head].append(ai)
        return {k: tuple(v) for k, v in inc.items()}

    def arcs_of_kind(self, kind: ArcKind) -> tuple[int, ...]:
        return tuple(ai for ai, a in enumerate(self.arcs) if a.kind is kind)

    def layer_of(self, node_id: int) -> Layer:
        return self.node_by_id[node_id].layer


def validate_network(net: Network) -> list[str]:
    """Return a list of human-readable violation descriptors (empty iff valid)."""
    violations: list[str] = []

    seen_ids: set[int] = set()
    for n in net.nodes:
        if n.id in seen_ids:
            violations.append(f"node {n.id}: duplicate node id")
        seen_ids.add(n.id)
        if n.layer is Layer.ORIGIN and n.region is None:
            violations.append(f"node {n.id}: origin node without region")

    if not (net.safety_threshold >= 0.0):
        violations.append(f"network: safety threshold {net.safety_threshold} is negative or NaN")

    by_id = {n.id: n for n in net.nodes}
    seen_triples: set[tuple[int, int, ArcKind]] = set()
    for ai, a in enumerate(net.arcs):
        label = f"arc {ai} ({a.tail}->{a.head}, {a.kind.value})"
        tail = by_id.get(a.tail)
        head = by_id.get(a.head)
        if tail is None or head is None:
            violations.append(f"{label}: endpoint references unknown node")
            continue

        triple = (a.tail, a.head, a.kind)
        if triple in seen_triples:
            violations.append(f"{label}: duplicate (tail, head, kind) arc")
        seen_triples.add(triple)

        if head.layer is Layer.ORIGIN:
            violations.append(f"{label}: arc into an origin-layer node")
        if tail.layer is Layer.DESTINATION:
            violations.append(f"{label}: arc out of a destination-layer node")

        if tail.layer is head.layer:
            expected = INTRA_KIND.get(tail.layer)
            if a.kind is ArcKind.SWITCH:
                violations.append(f"{label}: switch arc inside layer {tail.layer.value}")
            elif expected is None:
                violations.append(f"{label}: layer {tail.layer.value} has no internal arcs")
            elif a.kind is not expected:
                violations.append(f"{label}: kind does not match layer {tail.layer.value}")
        else:
            if a.kind is not ArcKind.SWITCH:
                violations.append(f"{label}: cross-layer arc must have kind switch")
            elif (tail.layer, head.layer) not in SWITCH_PAIRS:
                violations.append(
                    f"{label}: layer pair {tail.layer.value}->{head.layer.value} not in the admissible switch set"
                )

        if not (a.time_min >= 0.0):
            violations.append(f"{label}: negative travel time")
        if not (a.cost >= 0.0):
            violations.append(f"{label}: negative cost")

        if a.kind is ArcKind.BIKE:
            if a.unsafety is None:
                violations.append(f"{label}: bike arc without unsafety score")
            elif not (a.unsafety >= 0.0):
                violations.append(f"{label}: negative unsafety")
        elif a.unsafety is not None:
            violations.append(f"{label}: unsafety on a non-bike arc")

        if a.capacity_users_min is not None:
            if a.kind is not ArcKind.TRANSIT:
                violations.append(f"{label}: capacity_users_min on a non-transit arc")
            elif not (a.capacity_users_min >= 0.0):
                violations.append(f"{label}: negative transit capacity")

        if a.flow_cap_veh_min is not None:
            if a.kind is not ArcKind.ROAD:
                violations.append(f"{label}: flow_cap_veh_min on a non-road arc")
            elif not (a.flow_cap_veh_min >= 0.0):
                violations.append(f"{label}: negative road flow cap")

    return violations


def prune_unsafe_bike_arcs(net: Network) -> Network:
    """Drop bike arcs whose unsafety exceeds the network threshold (idempotent)."""
    s_max = net.safety_threshold
    kept = tuple(
        a
        for a in net.arcs
        if not (a.kind is ArcKind.BIKE and a.unsafety is not None and a.unsafety > s_max)
    )
    if len(kept) == len(net.arcs):
        return net
    return replace(net, arcs=kept)


def reachable_arc_set(
    net: Network, origin: int, destination: int, allow_bike: bool = True
) -> set[int]:
    """Arc ids usable by one demand: forward-reachable from its origin and
    backward-reachable from its destination.

    Arcs leaving other origins or entering other destinations are excluded;
    with ``allow_bike=False`` every arc incident to a bike-layer node is
    excluded as well (bike-incapable riders can never conserve flow there).

    Raises DisconnectedDemand when no origin->destination route remains.
    """
    by_id = net.node_by_id
    o_node = by_id.get(origin)
    d_node = by_id.get(destination)
    if o_node is None or o_node.layer is not Layer.ORIGIN:
        raise ConfigError(f"origin {origin} is not an origin-layer node")
    if d_node is None or d_node.layer is not Layer.DESTINATION:
        raise ConfigError(f"destination {destination} is not a destination-layer node")

    def allowed(a: Arc) -> bool:
        tail = by_id[a.tail]
        head = by_id[a.head]
        if not allow_bike and (tail.layer is Layer.BIKE or head.layer is Layer.BIKE):
            return False
        if tail.layer is Layer.ORIGIN and a.tail != origin:
            return False
        if head.layer is Layer.DESTINATION and a.head != destination:
            return False
        return True

    arcs = net.arcs
    fwd: set[int] = {origin}
    queue = deque([origin])
    while queue:
        v = queue.popleft()
        for ai in net.out_arcs.get(v, ()):
            a = arcs[ai]
            if allowed(a) and a.head not in fwd:
                fwd.add(a.head)
                queue.append(a.head)

    bwd: set[int] = {destination}
    queue = deque([destination])
    while queue:
        v = queue.popleft()
        for ai in net.in_arcs.get(v, ()):
            a = arcs[ai]
            if allowed(a) and a.tail not in bwd:
                bwd.add(a.tail)
                queue.append(a.tail)

    result = {
        ai
        for ai, a in enumerate(arcs)
        if allowed(a) and a.tail in fwd and a.head in bwd
    }
    if destination not in fwd or not result:
        raise DisconnectedDemand(
            f"no route from origin {origin} to destination {destination}"
            + ("" if allow_bike else " without the bike layer")
        )
    return result


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

_NODE_KEYS = {"id", "layer", "x", "y", "region"}
_NODE_REQUIRED = {"id", "layer", "x", "y"}
_ARC_KEYS = {"tail", "head", "kind", "time_min", "cost", "unsafety", "capacity_users_min", "flow_cap_veh_min"}
_ARC_REQUIRED = {"tail", "head", "kind", "time_min", "cost"}
_TOP_KEYS = {"safety_threshold", "nodes", "arcs"}


def _require_number(doc: Mapping, key: str, where: str) -> float:
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{where}: field '{key}' must be a number, got {v!r}")
    return float(v)


def _require_int(doc: Mapping, key: str, where: str) -> int:
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{where}: field '{key}' must be an integer, got {v!r}")
    return v


def network_from_doc(doc: Mapping) -> Network:
    if not isinstance(doc, Mapping):
        raise SchemaError("network document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"network document: unknown fields {sorted(unknown)}")
    for key in _TOP_KEYS:
        if key not in doc:
            raise SchemaError(f"network document: missing field '{key}'")
    threshold = _require_number(doc, "safety_threshold", "network")

    nodes = []
    if not isinstance(doc["nodes"], list):
        raise SchemaError("network document: 'nodes' must be a list")
    for i, nd in enumerate(doc["nodes"]):
        where = f"nodes[{i}]"
        if not isinstance(nd, Mapping):
            raise SchemaError(f"{where}: must be an object")
        unknown = set(nd) - _NODE_KEYS
        if unknown:
            raise SchemaError(f"{where}: unknown fields {sorted(unknown)}")
        missing = _NODE_REQUIRED - set(nd)
        if missing:
            raise SchemaError(f"{where}: missing fields {sorted(missing)}")
        try:
            layer = Layer(nd["layer"])
        except ValueError:
            raise SchemaError(f"{where}: unknown layer {nd['layer']!r}") from None
        region = None
        if "region" in nd:
            region = _require_int(nd, "region", where)
        nodes.append(
            Node(
                id=_require_int(nd, "id", where),
                layer=layer,
                x=_require_number(nd, "x", where),
                y=_require_number(nd, "y", where),
                region=region,
            )
        )

    arcs = []
    if not isinstance(doc["arcs"], list):
        raise SchemaError("network document: 'arcs' must be a list")
    for i, ad in enumerate(doc["arcs"]):
        where = f"arcs[{i}]"
        if not isinstance(ad, Mapping):
            raise SchemaError(f"{where}: must be an object")
        unknown = set(ad) - _ARC_KEYS
        if unknown:
            raise SchemaError(f"{where}: unknown fields {sorted(unknown)}")
        missing = _ARC_REQUIRED - set(ad)
        if missing:
            raise SchemaError(f"{where}: missing fields {sorted(missing)}")
        try:
            kind = ArcKind(ad["kind"])
        except ValueError:
            raise SchemaError(f"{where}: unknown arc kind {ad['kind']!r}") from None
        arcs.append(
            Arc(
                tail=_require_int(ad, "tail", where),
                head=_require_int(ad, "head", where),
                kind=kind,
                time_min=_require_number(ad, "time_min", where),
                cost=_require_number(ad, "cost", where),
                unsafety=_require_number(ad, "unsafety", where) if "unsafety" in ad else None,
                capacity_users_min=(
                    _require_number(ad, "capacity_users_min", where)
                    if "capacity_users_min" in ad
                    else None
                ),
                flow_cap_veh_min=(
                    _require_number(ad, "flow_cap_veh_min", where)
                    if "flow_cap_veh_min" in ad
                    else None
                ),
            )
        )

    return Network(nodes=tuple(nodes), arcs=tuple(arcs), safety_threshold=threshold)


def network_to_doc(net: Network) -> dict:
    nodes = []
    for n in net.nodes:
        nd: dict = {"id": n.id, "layer": n.layer.value, "x": n.x, "y": n.y}
        if n.region is not None:
            nd["region"] = n.region
        nodes.append(nd)
    arcs = []
    for a in net.arcs:
        ad: dict = {
            "tail": a.tail,
            "head": a.head,
            "kind": a.kind.value,
            "time_min": a.time_min,
            "cost": a.cost,
        }
        if a.unsafety is not None:
            ad["unsafety"] = a.unsafety
        if a.capacity_users_min is not None:
            ad["capacity_users_min"] = a.capacity_users_min
        if a.flow_cap_veh_min is not None:
            ad["flow_cap_veh_min"] = a.flow_cap_veh_min
        arcs.append(ad)
    return {"safety_threshold": net.safety_threshold, "nodes": nodes, "arcs": arcs}


def load_network(path) -> Network:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read network file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"network file {path} is not valid JSON: {exc}") from exc
    return network_from_doc(doc)


def save_network(net: Network, path) -> None:
    from . import _json

    _json.dump_path(network_to_doc(net), path)
