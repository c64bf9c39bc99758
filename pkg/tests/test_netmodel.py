import math

import pytest

from equiflow.errors import DisconnectedDemand, SchemaError
from equiflow.netmodel import (
    Arc,
    ArcKind,
    Layer,
    Network,
    Node,
    network_from_doc,
    network_to_doc,
    prune_unsafe_bike_arcs,
    reachable_arc_set,
    validate_network,
)

from conftest import make_node


def net_of(nodes, arcs, threshold=1.0):
    return Network(nodes=tuple(nodes), arcs=tuple(arcs), safety_threshold=threshold)


class TestValidate:
    def test_switch_origin_to_destination_rejected(self):
        net = net_of(
            [make_node(0, Layer.ORIGIN, region=0), make_node(1, Layer.DESTINATION)],
            [Arc(0, 1, ArcKind.SWITCH, 1.0)],
        )
        violations = validate_network(net)
        assert len(violations) == 1
        assert "not in the admissible switch set" in violations[0]

    def test_valid_chain_is_clean(self, chain_instance):
        net, _ = chain_instance
        assert validate_network(net) == []

    def test_negative_travel_time(self, chain_instance):
        net, _ = chain_instance
        bad = net_of(net.nodes, list(net.arcs) + [Arc(1, 2, ArcKind.WALK, -1.0)])
        violations = validate_network(bad)
        assert any("negative travel time" in v for v in violations)

    def test_duplicate_arc_triple(self, chain_instance):
        net, _ = chain_instance
        bad = net_of(net.nodes, list(net.arcs) + [Arc(1, 2, ArcKind.WALK, 5.0)])
        assert any("duplicate" in v for v in validate_network(bad))

    def test_origin_in_and_destination_out(self):
        net = net_of(
            [
                make_node(0, Layer.ORIGIN, region=0),
                make_node(1, Layer.WALK),
                make_node(2, Layer.DESTINATION),
            ],
            [Arc(1, 0, ArcKind.SWITCH, 0.0), Arc(2, 1, ArcKind.SWITCH, 0.0)],
        )
        violations = validate_network(net)
        assert any("into an origin-layer node" in v for v in violations)
        assert any("out of a destination-layer node" in v for v in violations)

    def test_intra_layer_kind_mismatch(self):
        net = net_of(
            [make_node(0, Layer.WALK), make_node(1, Layer.WALK)],
            [Arc(0, 1, ArcKind.BIKE, 1.0, unsafety=0.1)],
        )
        assert any("kind does not match layer" in v for v in validate_network(net))

    def test_attribute_placement(self):
        net = net_of(
            [make_node(0, Layer.WALK), make_node(1, Layer.WALK), make_node(2, Layer.BIKE)],
            [
                Arc(0, 1, ArcKind.WALK, 1.0, unsafety=0.5),
                Arc(0, 2, ArcKind.SWITCH, 1.0, capacity_users_min=3.0),
                Arc(2, 0, ArcKind.SWITCH, 1.0, flow_cap_veh_min=3.0),
            ],
        )
        violations = validate_network(net)
        assert any("unsafety on a non-bike arc" in v for v in violations)
        assert any("capacity_users_min on a non-transit arc" in v for v in violations)
        assert any("flow_cap_veh_min on a non-road arc" in v for v in violations)

    def test_bike_arc_requires_unsafety(self):
        net = net_of(
            [make_node(0, Layer.BIKE), make_node(1, Layer.BIKE)],
            [Arc(0, 1, ArcKind.BIKE, 1.0)],
        )
        assert any("without unsafety" in v for v in validate_network(net))

    def test_origin_requires_region(self):
        net = net_of([make_node(0, Layer.ORIGIN)], [])
        assert any("origin node without region" in v for v in validate_network(net))


def bike_pair_net(threshold):
    nodes = [
        make_node(0, Layer.BIKE),
        make_node(1, Layer.BIKE),
        make_node(2, Layer.WALK),
        make_node(3, Layer.WALK),
    ]
    arcs = [
        Arc(0, 1, ArcKind.BIKE, 2.0, unsafety=0.2),
        Arc(1, 0, ArcKind.BIKE, 2.0, unsafety=0.9),
        Arc(2, 3, ArcKind.WALK, 5.0),
    ]
    return net_of(nodes, arcs, threshold)


class TestPrune:
    def test_threshold_filter(self):
        pruned = prune_unsafe_bike_arcs(bike_pair_net(0.5))
        kinds = [(a.kind, a.unsafety) for a in pruned.arcs]
        assert (ArcKind.BIKE, 0.2) in kinds
        assert all(u != 0.9 for _, u in kinds)
        assert len(pruned.arcs) == 2

    def test_infinite_threshold_is_identity(self):
        net = bike_pair_net(math.inf)
        assert prune_unsafe_bike_arcs(net) is net

    def test_no_bike_arcs_is_identity(self, chain_instance):
        net, _ = chain_instance
        assert prune_unsafe_bike_arcs(net) is net

    def test_idempotent_and_monotone(self):
        import numpy as np

        rng = np.random.default_rng(5)
        for _ in range(10):
            s1, s2 = sorted(rng.uniform(0.0, 1.0, size=2))
            n1 = prune_unsafe_bike_arcs(bike_pair_net(s1))
            n2 = prune_unsafe_bike_arcs(bike_pair_net(s2))
            assert prune_unsafe_bike_arcs(n1).arcs == n1.arcs
            kept1 = {(a.tail, a.head) for a in n1.arcs}
            kept2 = {(a.tail, a.head) for a in n2.arcs}
            assert kept1 <= kept2


class TestReachable:
    def test_dangling_arc_excluded(self):
        nodes = [
            make_node(0, Layer.ORIGIN, region=0),
            make_node(1, Layer.WALK),
            make_node(2, Layer.WALK),
            make_node(3, Layer.DESTINATION),
            make_node(4, Layer.WALK),
        ]
        arcs = [
            Arc(0, 1, ArcKind.SWITCH, 0.0),
            Arc(1, 2, ArcKind.WALK, 1.0),
            Arc(2, 3, ArcKind.SWITCH, 0.0),
            Arc(2, 4, ArcKind.WALK, 1.0),  # dangling: no way back out
        ]
        reach = reachable_arc_set(net_of(nodes, arcs), 0, 3)
        assert reach == {0, 1, 2}

    def test_bike_only_route_disconnects_incapable(self):
        nodes = [
            make_node(0, Layer.ORIGIN, region=0),
            make_node(1, Layer.WALK),
            make_node(2, Layer.BIKE),
            make_node(3, Layer.BIKE),
            make_node(4, Layer.WALK),
            make_node(5, Layer.DESTINATION),
        ]
        arcs = [
            Arc(0, 1, ArcKind.SWITCH, 0.0),
            Arc(1, 2, ArcKind.SWITCH, 1.0),
            Arc(2, 3, ArcKind.BIKE, 2.0, unsafety=0.1),
            Arc(3, 4, ArcKind.SWITCH, 1.0),
            Arc(4, 5, ArcKind.SWITCH, 0.0),
        ]
        net = net_of(nodes, arcs)
        assert len(reachable_arc_set(net, 0, 5, allow_bike=True)) == 5
        with pytest.raises(DisconnectedDemand):
            reachable_arc_set(net, 0, 5, allow_bike=False)

    def test_parallel_routes_union(self):
        nodes = [
            make_node(0, Layer.ORIGIN, region=0),
            make_node(1, Layer.WALK),
            make_node(2, Layer.WALK),
            make_node(3, Layer.WALK),
            make_node(4, Layer.DESTINATION),
        ]
        arcs = [
            Arc(0, 1, ArcKind.SWITCH, 0.0),
            Arc(1, 2, ArcKind.WALK, 10.0),
            Arc(1, 3, ArcKind.WALK, 4.0),
            Arc(3, 2, ArcKind.WALK, 4.0),
            Arc(2, 4, ArcKind.SWITCH, 0.0),
        ]
        reach = reachable_arc_set(net_of(nodes, arcs), 0, 4)
        assert reach == {0, 1, 2, 3, 4}

    def test_excludes_other_origins_and_destinations(self, two_route_instance):
        net, _ = two_route_instance
        other_origin = make_node(90, Layer.ORIGIN, region=0)
        other_dest = make_node(91, Layer.DESTINATION)
        arcs = list(net.arcs) + [
            Arc(90, 1, ArcKind.SWITCH, 0.0),
            Arc(2, 91, ArcKind.SWITCH, 0.0),
        ]
        bigger = net_of(list(net.nodes) + [other_origin, other_dest], arcs)
        reach = reachable_arc_set(bigger, 0, 5)
        assert len(net.arcs) + 1 not in reach and len(net.arcs) not in reach
        assert reach == set(range(len(net.arcs)))

    def test_subset_of_arcs_property(self, two_route_instance):
        net, _ = two_route_instance
        reach = reachable_arc_set(net, 0, 5)
        assert reach <= set(range(len(net.arcs)))


class TestFileFormat:
    def test_round_trip(self, two_route_instance):
        net, _ = two_route_instance
        doc = network_to_doc(net)
        again = network_from_doc(doc)
        assert again == net

    def test_unknown_field_rejected(self, chain_instance):
        net, _ = chain_instance
        doc = network_to_doc(net)
        doc["nodes"][0]["color"] = "red"
        with pytest.raises(SchemaError, match="unknown fields"):
            network_from_doc(doc)
        doc2 = network_to_doc(net)
        doc2["extra"] = 1
        with pytest.raises(SchemaError, match="unknown fields"):
            network_from_doc(doc2)

    def test_missing_and_bad_types(self, chain_instance):
        net, _ = chain_instance
        doc = network_to_doc(net)
        del doc["safety_threshold"]
        with pytest.raises(SchemaError, match="missing field"):
            network_from_doc(doc)
        doc = network_to_doc(net)
        doc["arcs"][0]["time_min"] = "fast"
        with pytest.raises(SchemaError, match="must be a number"):
            network_from_doc(doc)
        doc = network_to_doc(net)
        doc["nodes"][0]["layer"] = "hover"
        with pytest.raises(SchemaError, match="unknown layer"):
            network_from_doc(doc)
