import numpy as np
import pytest

from equiflow.assembler import FarePolicy, ObjectiveKind, apply_fare_policy
from equiflow.demand import Demand, DemandSet, Region
from equiflow.netmodel import Arc, ArcKind, Layer, Network, Node, prune_unsafe_bike_arcs
from equiflow.scenarios import GridCitySpec, ScenarioConfig, generate_grid_city


def make_node(nid, layer, x=0.0, y=0.0, region=None):
    return Node(id=nid, layer=layer, x=x, y=y, region=region)


@pytest.fixture
def chain_instance():
    """O -> W1 -> W2 -> D, a single walking route (three arcs)."""
    nodes = (
        make_node(0, Layer.ORIGIN, region=0),
        make_node(1, Layer.WALK, x=0.0),
        make_node(2, Layer.WALK, x=100.0),
        make_node(3, Layer.DESTINATION, x=100.0),
    )
    arcs = (
        Arc(0, 1, ArcKind.SWITCH, 0.0),
        Arc(1, 2, ArcKind.WALK, 12.0),
        Arc(2, 3, ArcKind.SWITCH, 0.0),
    )
    net = Network(nodes=nodes, arcs=arcs, safety_threshold=1.0)
    dem = DemandSet(
        regions=(Region(id=0, population=100.0, budget=5.0),),
        demands=(Demand(id=0, origin=0, destination=3, rate=1.0, region=0, bike_capable=True),),
        operating_window_min=1440.0,
    )
    return net, dem


def two_route_network(road_cost=3.0, return_cost=0.0, road_cap=5.0):
    """Walk 30 min for free vs a 10 min AMoD leg costing `road_cost`."""
    nodes = (
        make_node(0, Layer.ORIGIN, region=0),
        make_node(1, Layer.WALK, x=0.0),
        make_node(2, Layer.WALK, x=100.0),
        make_node(3, Layer.ROAD, x=0.0),
        make_node(4, Layer.ROAD, x=100.0),
        make_node(5, Layer.DESTINATION, x=100.0),
    )
    arcs = (
        Arc(0, 1, ArcKind.SWITCH, 0.0),
        Arc(1, 2, ArcKind.WALK, 30.0),
        Arc(2, 5, ArcKind.SWITCH, 0.0),
        Arc(1, 3, ArcKind.SWITCH, 0.0),
        Arc(3, 4, ArcKind.ROAD, 10.0, cost=road_cost, flow_cap_veh_min=road_cap),
        Arc(4, 3, ArcKind.ROAD, 10.0, cost=return_cost, flow_cap_veh_min=road_cap),
        Arc(4, 5, ArcKind.SWITCH, 0.0),
    )
    return Network(nodes=nodes, arcs=arcs, safety_threshold=1.0)


@pytest.fixture
def two_route_instance():
    """The hand-derived budget LP: optimal split is half walk, half AMoD."""
    net = two_route_network()
    dem = DemandSet(
        regions=(Region(id=0, population=100.0, budget=1.5),),
        demands=(Demand(id=0, origin=0, destination=5, rate=1.0, region=0, bike_capable=True),),
        operating_window_min=1440.0,
    )
    return net, dem


def base_config(**kw) -> ScenarioConfig:
    return ScenarioConfig(**kw)


# ---------------------------------------------------------------------------
# Tiny generated instances, sized for the brute-force oracle
# ---------------------------------------------------------------------------

TINY_PRESETS = [
    GridCitySpec(rows=2, cols=1, regions=1, demand_count=1, include_bike=True,
                 include_transit=True, transit_lines=1, bike_incapable_share=0.0),
    GridCitySpec(rows=2, cols=1, regions=1, demand_count=1, include_bike=True,
                 include_transit=True, transit_lines=1, bike_incapable_share=0.3),
    GridCitySpec(rows=2, cols=1, regions=1, demand_count=1, include_bike=True,
                 include_transit=False, bike_incapable_share=0.5),
    GridCitySpec(rows=2, cols=1, regions=1, demand_count=2, include_bike=False,
                 include_transit=False, bike_incapable_share=0.0),
    GridCitySpec(rows=3, cols=1, regions=1, demand_count=1, include_bike=False,
                 include_transit=False, bike_incapable_share=0.0),
    GridCitySpec(rows=2, cols=1, regions=1, demand_count=1, include_bike=False,
                 include_transit=True, transit_lines=1, bike_incapable_share=0.0),
]


def tiny_instances(count: int, t_suffs=(4.0, 6.0, 20.0)):
    """Deterministic stream of oracle-eligible (net, dem, cfg) triples."""
    out = []
    k = 0
    seed = 0
    while len(out) < count:
        spec = TINY_PRESETS[k % len(TINY_PRESETS)]
        net, dem = generate_grid_city(spec, seed=seed)
        cfg = ScenarioConfig(n_amod_max=60.0, t_suff=t_suffs[k % len(t_suffs)])
        working = prune_unsafe_bike_arcs(apply_fare_policy(net, FarePolicy.NOMINAL))
        out.append((working, dem, cfg))
        k += 1
        if k % len(TINY_PRESETS) == 0:
            seed += 1
    return out


def reconstruct_arc_flows(assignment, demand_id):
    recon: dict[int, float] = {}
    for p in assignment.paths.get(demand_id, ()):
        for ai in p.arcs:
            recon[ai] = recon.get(ai, 0.0) + p.share
    for cyc in assignment.cycles.get(demand_id, ()):
        for ai in cyc.arcs:
            recon[ai] = recon.get(ai, 0.0) + cyc.flow
    return recon


def conservation_residual(net, dem, flows) -> float:
    worst = 0.0
    for d in dem.demands:
        balance: dict[int, float] = {}
        for ai, v in flows.demand_flows.get(d.id, {}).items():
            a = net.arcs[ai]
            balance[a.tail] = balance.get(a.tail, 0.0) - v
            balance[a.head] = balance.get(a.head, 0.0) + v
        balance[d.origin] = balance.get(d.origin, 0.0) + d.rate
        balance[d.destination] = balance.get(d.destination, 0.0) - d.rate
        worst = max(worst, max((abs(v) for v in balance.values()), default=0.0))
    # vehicle balance
    balance = {}
    road = {ai for ai, a in enumerate(net.arcs) if a.kind is ArcKind.ROAD}
    for ai in road:
        a = net.arcs[ai]
        total = flows.rebalancing.get(ai, 0.0) + sum(
            flows.demand_flows.get(d.id, {}).get(ai, 0.0) for d in dem.demands
        )
        balance[a.tail] = balance.get(a.tail, 0.0) - total
        balance[a.head] = balance.get(a.head, 0.0) + total
    worst = max(worst, max((abs(v) for v in balance.values()), default=0.0))
    return worst
