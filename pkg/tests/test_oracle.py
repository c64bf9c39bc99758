import time
from dataclasses import replace

import numpy as np
import pytest

from equiflow.assembler import ObjectiveKind, assemble
from equiflow.errors import TooLarge
from equiflow.oracle import (
    _dense_simplex,
    _enumerate_vertices,
    _linear_cost,
    _path_form,
    brute_force_oracle,
    enumerate_simple_paths,
)
from equiflow.solver import SolveSettings, SolveStatus, solve
from conftest import base_config, tiny_instances

TIGHT = SolveSettings(feas_tol=1e-9, gap_tol=1e-10)


class TestPathEnumeration:
    def test_two_route_paths(self, two_route_instance):
        net, dem = two_route_instance
        paths = enumerate_simple_paths(net, 0, 5, True, 12)
        times = sorted(p.time for p in paths)
        assert times == [10.0, 30.0]

    def test_max_paths_guard(self, two_route_instance):
        net, _ = two_route_instance
        with pytest.raises(TooLarge):
            enumerate_simple_paths(net, 0, 5, True, 1)

    def test_single_path_objective(self, chain_instance):
        net, dem = chain_instance
        value = brute_force_oracle(net, dem, base_config(), ObjectiveKind.UTIL_EFF)
        assert value == pytest.approx(12.0, abs=1e-9)  # rate 1.0 * 12 min


class TestHandInstance:
    def test_budget_lp_value(self, two_route_instance):
        net, dem = two_route_instance
        cfg = base_config(gamma_reb=0.0)
        assert brute_force_oracle(net, dem, cfg, ObjectiveKind.UTIL_EFF) == pytest.approx(
            20.0, abs=1e-8
        )

    def test_budget_lp_with_rebalancing_term(self, two_route_instance):
        net, dem = two_route_instance
        cfg = base_config(gamma_reb=1e-3)
        # the AMoD leg forces 0.5 veh/min of empty return flow on the 10 min arc
        assert brute_force_oracle(net, dem, cfg, ObjectiveKind.UTIL_EFF) == pytest.approx(
            20.005, abs=1e-6
        )

    def test_enumeration_and_simplex_agree(self, two_route_instance):
        net, dem = two_route_instance
        cfg = base_config()
        cols, _, E, e, A, b = _path_form(net, dem, cfg, 12, 8)
        c = _linear_cost(cols, net, cfg)
        V = _enumerate_vertices(E, e, A, b, 400_000)
        by_enum = float(np.min(V @ c))
        by_simplex = _dense_simplex(c, E, e, A, b)
        assert by_enum == pytest.approx(by_simplex, rel=1e-9)


class TestCrossCheck:
    def test_oracle_matches_solver_both_objectives(self):
        instances = tiny_instances(8)
        for working, dem, cfg in instances:
            for kind in (ObjectiveKind.UTIL_EFF, ObjectiveKind.COMM_SUFF):
                r = solve(assemble(working, dem, cfg, kind), TIGHT)
                assert r.status is SolveStatus.OPTIMAL
                want = brute_force_oracle(working, dem, cfg, kind)
                assert abs(r.objective - want) <= 1e-5 * (1 + abs(want)), (
                    kind,
                    r.objective,
                    want,
                )

    def test_oracle_rejects_oversized(self, two_route_instance):
        net, dem = two_route_instance
        with pytest.raises(TooLarge):
            brute_force_oracle(net, dem, base_config(), ObjectiveKind.UTIL_EFF, max_road_arcs=1)
