from dataclasses import replace

import pytest

from equiflow.assembler import FlowSolution, ObjectiveKind, assemble, extract_flows
from equiflow.errors import ConservationViolation
from equiflow.paths import decompose, path_extraction_rule, write_paths_csv
from equiflow.solver import SolveSettings, solve
from conftest import base_config, reconstruct_arc_flows, tiny_instances

TIGHT = SolveSettings(feas_tol=1e-9, gap_tol=1e-10)


def manual_flows(demand_flows, kind=ObjectiveKind.UTIL_EFF):
    return FlowSolution(
        objective_kind=kind,
        status="optimal",
        objective=0.0,
        gap=None,
        iterations=0,
        demand_flows=demand_flows,
        rebalancing={},
        slacks={},
    )


class TestDecompose:
    def test_single_path_chain(self, chain_instance):
        net, dem = chain_instance
        flows = manual_flows({0: {0: 1.0, 1: 1.0, 2: 1.0}})
        assignment = decompose(flows, net, dem)
        assert len(assignment.paths[0]) == 1
        p = assignment.paths[0][0]
        assert p.share == pytest.approx(1.0)
        assert p.nodes == (0, 1, 2, 3)
        assert p.time_min == pytest.approx(12.0)
        assert p.mode_set == ("walk",)
        assert p.dominant_mode == "walk"
        assert assignment.cycles[0] == []

    def test_two_route_split(self, two_route_instance):
        net, dem = two_route_instance
        p = assemble(net, dem, base_config(), ObjectiveKind.UTIL_EFF)
        r = solve(p, TIGHT)
        flows = extract_flows(p, r)
        assignment = decompose(flows, net, dem, solver_tol=1e-9)
        shares = sorted((round(x.time_min, 6), x.share) for x in assignment.paths[0])
        assert shares[0][0] == pytest.approx(10.0)
        assert shares[0][1] == pytest.approx(0.5, abs=1e-8)
        assert shares[1][0] == pytest.approx(30.0)
        assert shares[1][1] == pytest.approx(0.5, abs=1e-8)
        # shortest-first extraction: times non-decreasing
        times = [x.time_min for x in assignment.paths[0]]
        assert times == sorted(times)
        # AMoD route is dominated by the road leg
        assert assignment.paths[0][0].dominant_mode == "road"
        assert assignment.paths[0][0].mode_set == ("road",)

    def test_flow_weighted_mean_time_identity(self, two_route_instance):
        net, dem = two_route_instance
        p = assemble(net, dem, base_config(), ObjectiveKind.UTIL_EFF)
        r = solve(p, TIGHT)
        flows = extract_flows(p, r)
        assignment = decompose(flows, net, dem, solver_tol=1e-9)
        d = dem.demands[0]
        mean_from_paths = sum(x.share * x.time_min for x in assignment.paths[0]) / d.rate
        mean_from_flows = (
            sum(net.arcs[a].time_min * v for a, v in flows.demand_flows[0].items()) / d.rate
        )
        assert mean_from_paths == pytest.approx(mean_from_flows, abs=1e-9)

    def test_cycle_reported_not_dropped(self, chain_instance):
        net, dem = chain_instance
        # add a 2-cycle of walk arcs next to the path and load it with flow
        from equiflow.netmodel import Arc, ArcKind

        arcs = list(net.arcs) + [Arc(2, 1, ArcKind.WALK, 7.0)]
        net2 = replace(net, arcs=tuple(arcs))
        flows = manual_flows({0: {0: 1.0, 1: 1.4, 2: 1.0, 3: 0.4}})
        assignment = decompose(flows, net2, dem)
        assert sum(p.share for p in assignment.paths[0]) == pytest.approx(1.0, abs=1e-9)
        assert len(assignment.cycles[0]) == 1
        cyc = assignment.cycles[0][0]
        assert cyc.flow == pytest.approx(0.4, abs=1e-9)
        assert set(cyc.nodes) == {1, 2}

    def test_conservation_violation_raises(self, chain_instance):
        net, dem = chain_instance
        flows = manual_flows({0: {0: 1.0, 1: 0.2, 2: 1.0}})
        with pytest.raises(ConservationViolation):
            decompose(flows, net, dem, solver_tol=1e-8)

    def test_reconstruction_property(self):
        for working, dem, cfg in tiny_instances(5):
            for kind in (ObjectiveKind.UTIL_EFF, ObjectiveKind.COMM_SUFF):
                p = assemble(working, dem, cfg, kind)
                r = solve(p, TIGHT)
                flows = extract_flows(p, r)
                assignment = decompose(flows, working, dem, solver_tol=1e-9)
                for d in dem.demands:
                    recon = reconstruct_arc_flows(assignment, d.id)
                    orig = {a: v for a, v in flows.demand_flows[d.id].items() if v > 1e-9}
                    keys = set(recon) | set(orig)
                    worst = max(abs(recon.get(a, 0.0) - orig.get(a, 0.0)) for a in keys)
                    assert worst <= 1e-8
                    assert sum(x.share for x in assignment.paths[d.id]) == pytest.approx(
                        d.rate, abs=1e-9
                    )

    def test_no_positive_time_cycles_at_optimum(self):
        for working, dem, cfg in tiny_instances(5):
            p = assemble(working, dem, cfg, ObjectiveKind.UTIL_EFF)
            r = solve(p, TIGHT)
            assignment = decompose(extract_flows(p, r), working, dem, solver_tol=1e-9)
            for cycles in assignment.cycles.values():
                for cyc in cycles:
                    assert cyc.flow * cyc.time_min <= 1e-6


class TestExtractionRule:
    def test_min_time_first_and_ties(self, two_route_instance):
        net, _ = two_route_instance
        residual = {0: 1.0, 1: 0.5, 2: 1.0, 3: 0.5, 4: 0.5, 6: 0.5}
        arcs = path_extraction_rule(net, residual, 0, 5)
        assert arcs == [0, 3, 4, 6]  # the 10-minute route wins
        # tie: make both routes 30 min; lexicographically smaller node sequence wins
        net2 = replace(
            net,
            arcs=tuple(
                replace(a, time_min=30.0) if i == 4 else a for i, a in enumerate(net.arcs)
            ),
        )
        arcs = path_extraction_rule(net2, residual, 0, 5)
        nodes = [net2.arcs[a].tail for a in arcs] + [5]
        assert nodes == [0, 1, 2, 5]  # (0,1,2,5) < (0,1,3,4,5)

    def test_bottleneck_zeroed(self, two_route_instance):
        net, dem = two_route_instance
        flows = manual_flows({0: {0: 1.0, 1: 0.4, 2: 0.4, 3: 0.6, 4: 0.6, 6: 0.6}})
        assignment = decompose(flows, net, dem)
        first = assignment.paths[0][0]
        assert first.share == pytest.approx(0.6, abs=1e-12)

    def test_no_path_returns_none(self, chain_instance):
        net, _ = chain_instance
        assert path_extraction_rule(net, {}, 0, 3) is None


def test_paths_csv_format(tmp_path, two_route_instance):
    net, dem = two_route_instance
    p = assemble(net, dem, base_config(), ObjectiveKind.UTIL_EFF)
    r = solve(p, TIGHT)
    assignment = decompose(extract_flows(p, r), net, dem, solver_tol=1e-9)
    out = tmp_path / "paths.csv"
    write_paths_csv(assignment, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "demand,path_index,share_users_min,time_min,cost,mode_set,nodes"
    assert len(lines) == 3
    assert ">" in lines[1]
