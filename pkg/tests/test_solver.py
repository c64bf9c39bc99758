import os
import sys
import textwrap
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from equiflow.assembler import (
    ObjectiveKind,
    StandardProblem,
    assemble,
    extract_flows,
)
from equiflow.errors import BackendError, ConfigError
from equiflow.netmodel import Arc, ArcKind, Layer, Network
from equiflow.demand import Demand, DemandSet, Region
from equiflow.solver import SolveSettings, SolveStatus, dummy_index, solve
from conftest import base_config, make_node, tiny_instances

TIGHT = SolveSettings(feas_tol=1e-9, gap_tol=1e-10)


def standard(Qd, q, A_eq, b_eq, A_in, b_in, kind=ObjectiveKind.UTIL_EFF):
    n = len(q)
    return StandardProblem(
        Q=sp.diags(Qd, format="csr") if np.any(Qd) else sp.csr_matrix((n, n)),
        q=np.asarray(q, float),
        A_eq=sp.csr_matrix(np.asarray(A_eq, float).reshape(-1, n)),
        b_eq=np.asarray(b_eq, float),
        A_in=sp.csr_matrix(np.asarray(A_in, float).reshape(-1, n)),
        b_in=np.asarray(b_in, float),
        index=dummy_index(n),
        objective_kind=kind,
        eq_tags=[("eq", str(i)) for i in range(len(b_eq))],
        in_tags=[("in", str(i)) for i in range(len(b_in))],
    )


class TestEmbedded:
    def test_one_variable_bound(self):
        p = standard(np.zeros(1), [1.0], np.zeros((0, 1)), [], [[-1.0]], [-3.0])
        r = solve(p)
        assert r.status is SolveStatus.OPTIMAL
        assert r.x[0] == pytest.approx(3.0, abs=1e-6)
        assert r.objective == pytest.approx(3.0, abs=1e-6)

    def test_two_route_budget_instance(self, two_route_instance):
        net, dem = two_route_instance
        cfg = base_config()
        p = assemble(net, dem, cfg, ObjectiveKind.UTIL_EFF)
        r = solve(p, TIGHT)
        assert r.status is SolveStatus.OPTIMAL
        flows = extract_flows(p, r)
        amod = flows.demand_flows[0][4]
        walk = flows.demand_flows[0][1]
        assert amod == pytest.approx(0.5, abs=1e-7)
        assert walk == pytest.approx(0.5, abs=1e-7)
        total_time = sum(net.arcs[a].time_min * v for a, v in flows.demand_flows[0].items())
        assert total_time == pytest.approx(20.0, abs=1e-6)
        # budget binds: cost exactly 1.5
        cost = sum(net.arcs[a].cost * v for a, v in flows.demand_flows[0].items())
        assert cost == pytest.approx(1.5, abs=1e-7)

    def test_two_route_without_budget(self, two_route_instance):
        net, dem = two_route_instance
        p = assemble(net, dem, base_config(budget_enabled=False), ObjectiveKind.UTIL_EFF)
        r = solve(p, TIGHT)
        flows = extract_flows(p, r)
        assert flows.demand_flows[0][4] == pytest.approx(1.0, abs=1e-7)
        total_time = sum(net.arcs[a].time_min * v for a, v in flows.demand_flows[0].items())
        assert total_time == pytest.approx(10.0, abs=1e-6)

    def test_infeasible_transit_bottleneck(self):
        nodes = (
            make_node(0, Layer.ORIGIN, region=0),
            make_node(1, Layer.TRANSIT),
            make_node(2, Layer.TRANSIT),
            make_node(3, Layer.DESTINATION),
        )
        arcs = (
            Arc(0, 1, ArcKind.SWITCH, 1.0),
            Arc(1, 2, ArcKind.TRANSIT, 5.0, capacity_users_min=0.1),
            Arc(2, 3, ArcKind.SWITCH, 1.0),
        )
        net = Network(nodes=nodes, arcs=arcs, safety_threshold=1.0)
        dem = DemandSet(
            regions=(Region(0, 10.0, 100.0),),
            demands=(Demand(0, 0, 3, 1.0, 0, True),),
            operating_window_min=1440.0,
        )
        p = assemble(net, dem, base_config(), ObjectiveKind.UTIL_EFF)
        r = solve(p)
        assert r.status is SolveStatus.INFEASIBLE
        assert r.diagnosis is not None

    def test_unknown_backend_rejected(self):
        p = standard(np.zeros(1), [1.0], np.zeros((0, 1)), [], [[-1.0]], [-3.0])
        with pytest.raises(ConfigError):
            solve(p, SolveSettings(backend="quantum"))

    def test_nondiagonal_q_rejected(self):
        Q = sp.csr_matrix(np.array([[1.0, 0.5], [0.5, 1.0]]))
        p = standard(np.zeros(2), [1.0, 1.0], np.zeros((0, 2)), [], [[-1.0, 0.0]], [-1.0])
        p.Q = Q
        with pytest.raises(ConfigError, match="diagonal"):
            solve(p)

    def test_bit_stable_repeat(self, two_route_instance):
        net, dem = two_route_instance
        p = assemble(net, dem, base_config(), ObjectiveKind.COMM_SUFF)
        r1 = solve(p, TIGHT)
        r2 = solve(p, TIGHT)
        assert r1.x.tobytes() == r2.x.tobytes()
        assert r1.objective == r2.objective


class TestProperties:
    def test_relaxation_monotonicity(self):
        for working, dem, cfg in tiny_instances(3):
            base = solve(assemble(working, dem, cfg, ObjectiveKind.UTIL_EFF), TIGHT)
            assert base.status is SolveStatus.OPTIMAL
            # budget family removed
            nb = solve(
                assemble(working, dem, replace(cfg, budget_enabled=False), ObjectiveKind.UTIL_EFF),
                TIGHT,
            )
            assert nb.objective <= base.objective + 1e-6 * (1 + abs(base.objective))
            # fleet loosened
            nf = solve(
                assemble(working, dem, replace(cfg, n_amod_max=cfg.n_amod_max * 10), ObjectiveKind.UTIL_EFF),
                TIGHT,
            )
            assert nf.objective <= base.objective + 1e-6 * (1 + abs(base.objective))
            # road and transit caps removed
            uncapped = replace(
                working,
                arcs=tuple(
                    replace(a, flow_cap_veh_min=None) if a.kind is ArcKind.ROAD
                    else replace(a, capacity_users_min=None) if a.kind is ArcKind.TRANSIT
                    else a
                    for a in working.arcs
                ),
            )
            nc = solve(assemble(uncapped, dem, cfg, ObjectiveKind.UTIL_EFF), TIGHT)
            assert nc.objective <= base.objective + 1e-6 * (1 + abs(base.objective))

    def test_time_scaling_exact(self):
        for working, dem, cfg in tiny_instances(3):
            cfg = replace(cfg, n_amod_max=float("inf"))
            base = solve(assemble(working, dem, cfg, ObjectiveKind.UTIL_EFF), TIGHT)
            for k in (2.0, 0.5):
                scaled_net = replace(
                    working,
                    arcs=tuple(replace(a, time_min=a.time_min * k) for a in working.arcs),
                )
                scaled = solve(assemble(scaled_net, dem, cfg, ObjectiveKind.UTIL_EFF), TIGHT)
                assert scaled.objective == pytest.approx(k * base.objective, rel=1e-8)

    def test_time_scaling_with_jointly_scaled_fleet(self):
        working, dem, cfg = tiny_instances(1)[0]
        cfg = replace(cfg, n_amod_max=2.0)  # make the fleet row bind
        base = solve(assemble(working, dem, cfg, ObjectiveKind.UTIL_EFF), TIGHT)
        k = 3.0
        scaled_net = replace(
            working, arcs=tuple(replace(a, time_min=a.time_min * k) for a in working.arcs)
        )
        scaled = solve(
            assemble(scaled_net, dem, replace(cfg, n_amod_max=cfg.n_amod_max * k), ObjectiveKind.UTIL_EFF),
            TIGHT,
        )
        assert scaled.objective == pytest.approx(k * base.objective, rel=1e-8)

    def test_qp_losslessness(self):
        for working, dem, cfg in tiny_instances(6):
            p = assemble(working, dem, cfg, ObjectiveKind.COMM_SUFF)
            r = solve(p, TIGHT)
            assert r.status is SolveStatus.OPTIMAL
            flows = extract_flows(p, r)
            for d in dem.demands:
                mean_time = (
                    sum(working.arcs[a].time_min * v for a, v in flows.demand_flows[d.id].items())
                    / d.rate
                )
                expected = max(0.0, mean_time - cfg.t_suff)
                assert flows.slacks[d.id] == pytest.approx(expected, abs=1e-6)


class TestExternalBackend:
    SCRIPT = textwrap.dedent(
        """
        import sys
        import numpy as np
        from equiflow.assembler import StandardProblem, ObjectiveKind, parse_problem_triplets
        from equiflow.solver import SolveSettings, dummy_index, solve

        triplet = input().strip()
        sidecar = input().strip()
        data = parse_problem_triplets(triplet)
        problem = StandardProblem(
            Q=data["Q"], q=data["q"], A_eq=data["A_eq"], b_eq=data["b_eq"],
            A_in=data["A_in"], b_in=data["b_in"], index=dummy_index(data["n"]),
            objective_kind=ObjectiveKind(data["objective"]), eq_tags=[], in_tags=[],
        )
        result = solve(problem, SolveSettings(feas_tol=1e-9, gap_tol=1e-10))
        print(result.status.value)
        print(" ".join(f"{v:.17g}" for v in result.x))
        """
    )

    def test_round_trip_matches_embedded(self, two_route_instance, tmp_path):
        net, dem = two_route_instance
        p = assemble(net, dem, base_config(), ObjectiveKind.UTIL_EFF)
        script = tmp_path / "backend.py"
        script.write_text(self.SCRIPT)
        settings = SolveSettings(
            backend="external", external_command=(sys.executable, str(script))
        )
        r_ext = solve(p, settings)
        r_emb = solve(p, TIGHT)
        assert r_ext.status is SolveStatus.OPTIMAL
        assert r_ext.objective == pytest.approx(r_emb.objective, rel=1e-8)

    def test_broken_backend_reports(self, two_route_instance, tmp_path):
        net, dem = two_route_instance
        p = assemble(net, dem, base_config(), ObjectiveKind.UTIL_EFF)
        script = tmp_path / "broken.py"
        script.write_text("import sys; sys.exit(7)\n")
        settings = SolveSettings(
            backend="external", external_command=(sys.executable, str(script))
        )
        with pytest.raises(BackendError, match="exited with 7"):
            solve(p, settings)

    def test_garbage_vector_rejected(self, two_route_instance, tmp_path):
        net, dem = two_route_instance
        p = assemble(net, dem, base_config(), ObjectiveKind.UTIL_EFF)
        script = tmp_path / "garbage.py"
        script.write_text("input(); input(); print('optimal'); print('1 2 3')\n")
        settings = SolveSettings(
            backend="external", external_command=(sys.executable, str(script))
        )
        with pytest.raises(BackendError, match="values"):
            solve(p, settings)
