"""Brute-force cross-check for the embedded solver.

Reformulates tiny instances over path-flow variables (one variable per simple
origin-destination path per demand, plus per-road-arc rebalancing variables)
and solves them by methods that share nothing with the interior-point code:
exhaustive enumeration of active-constraint vertices, a dense two-phase
simplex when the combinatorics outgrow exhaustive enumeration, and, for the
quadratic objective, simplex-projected accelerated gradient over the
enumerated vertex hull with a Frank-Wolfe gap certificate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .assembler import ObjectiveKind
from .demand import DemandSet
from .errors import InfeasibleStructure, TooLarge
from .netmodel import ArcKind, Layer, Network

_FEAS_TOL = 1e-8
_QP_TOL = 1e-6


@dataclass
class _Path:
    nodes: tuple[int, ...]
    arcs: tuple[int, ...]
    time: float
    cost: float


def enumerate_simple_paths(
    net: Network, origin: int, destination: int, allow_bike: bool, max_paths: int
) -> list[_Path]:
    """All node-simple origin->destination paths, in depth-first arc-id order."""
    by_id = net.node_by_id

    def usable(ai: int) -> bool:
        a = net.arcs[ai]
        tail, head = by_id[a.tail], by_id[a.head]
        if not allow_bike and (tail.layer is Layer.BIKE or head.layer is Layer.BIKE):
            return False
        if tail.layer is Layer.ORIGIN and a.tail != origin:
            return False
        if head.layer is Layer.DESTINATION and a.head != destination:
            return False
        return True

    # Backward reachability prune so dead-end branches are not explored.
    reaches_d = {destination}
    frontier = [destination]
    while frontier:
        v = frontier.pop()
        for ai in net.in_arcs.get(v, ()):
            a = net.arcs[ai]
            if usable(ai) and a.tail not in reaches_d:
                reaches_d.add(a.tail)
                frontier.append(a.tail)

    paths: list[_Path] = []
    node_stack = [origin]
    arc_stack: list[int] = []
    visited = {origin}

    def dfs(v: int) -> None:
        if v == destination:
            time = sum(net.arcs[ai].time_min for ai in arc_stack)
            cost = sum(net.arcs[ai].cost for ai in arc_stack)
            paths.append(_Path(tuple(node_stack), tuple(arc_stack), time, cost))
            if len(paths) > max_paths:
                raise TooLarge(
                    f"more than {max_paths} simple paths from {origin} to {destination}"
                )
            return
        for ai in net.out_arcs.get(v, ()):
            a = net.arcs[ai]
            if not usable(ai) or a.head in visited or a.head not in reaches_d:
                continue
            visited.add(a.head)
            node_stack.append(a.head)
            arc_stack.append(ai)
            dfs(a.head)
            visited.discard(a.head)
            node_stack.pop()
            arc_stack.pop()

    dfs(origin)
    return paths


def _path_form(net: Network, dem: DemandSet, cfg, max_paths: int, max_road_arcs: int):
    """Build the dense path-variable formulation shared by both objectives."""
    arcs = net.arcs
    road_arcs = [ai for ai, a in enumerate(arcs) if a.kind is ArcKind.ROAD]
    if len(road_arcs) > max_road_arcs:
        raise TooLarge(f"{len(road_arcs)} road arcs exceed the oracle bound {max_road_arcs}")

    paths_by_demand: dict[int, list[_Path]] = {}
    for d in dem.demands:
        ps = enumerate_simple_paths(net, d.origin, d.destination, d.bike_capable, max_paths)
        if not ps:
            raise InfeasibleStructure(f"demand {d.id} has no origin->destination path")
        paths_by_demand[d.id] = ps

    cols: list[tuple] = []  # ("path", demand id, _Path) | ("reb", arc id)
    for d in dem.demands:
        for p in paths_by_demand[d.id]:
            cols.append(("path", d.id, p))
    reb_offset = len(cols)
    for ai in road_arcs:
        cols.append(("reb", ai))
    n = len(cols)

    # Equalities: demand totals, then road-node vehicle balance with one
    # redundant row per connected road component dropped.
    E_rows: list[np.ndarray] = []
    e_rhs: list[float] = []
    for k, d in enumerate(dem.demands):
        row = np.zeros(n)
        for j, col in enumerate(cols):
            if col[0] == "path" and col[1] == d.id:
                row[j] = 1.0
        E_rows.append(row)
        e_rhs.append(d.rate)

    road_nodes = sorted(
        {arcs[ai].tail for ai in road_arcs} | {arcs[ai].head for ai in road_arcs}
    )
    parent = {v: v for v in road_nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for ai in road_arcs:
        ra, rb = find(arcs[ai].tail), find(arcs[ai].head)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    drop = {max(v for v in road_nodes if find(v) == comp) for comp in {find(v) for v in road_nodes}}
    for v in road_nodes:
        if v in drop:
            continue
        row = np.zeros(n)
        for j, col in enumerate(cols):
            if col[0] == "reb":
                a = arcs[col[1]]
                row[j] += (1.0 if a.head == v else 0.0) - (1.0 if a.tail == v else 0.0)
            else:
                for ai in col[2].arcs:
                    a = arcs[ai]
                    if a.kind is ArcKind.ROAD:
                        row[j] += (1.0 if a.head == v else 0.0) - (1.0 if a.tail == v else 0.0)
        E_rows.append(row)
        e_rhs.append(0.0)

    A_rows: list[np.ndarray] = []
    b_rhs: list[float] = []
    if road_arcs and math.isfinite(cfg.n_amod_max):
        row = np.zeros(n)
        for j, col in enumerate(cols):
            if col[0] == "reb":
                row[j] = arcs[col[1]].time_min
            else:
                row[j] = sum(arcs[ai].time_min for ai in col[2].arcs if arcs[ai].kind is ArcKind.ROAD)
        A_rows.append(row)
        b_rhs.append(float(cfg.n_amod_max))
    if cfg.budget_enabled:
        for d in dem.demands:
            row = np.zeros(n)
            for j, col in enumerate(cols):
                if col[0] == "path" and col[1] == d.id:
                    row[j] = col[2].cost
            A_rows.append(row)
            b_rhs.append(dem.region_by_id[d.region].budget * d.rate)
    for ai in road_arcs:
        cap = arcs[ai].flow_cap_veh_min
        if cap is None or not math.isfinite(cap):
            continue
        row = np.zeros(n)
        for j, col in enumerate(cols):
            if col[0] == "reb" and col[1] == ai:
                row[j] = 1.0
            elif col[0] == "path" and ai in col[2].arcs:
                row[j] = 1.0
        A_rows.append(row)
        b_rhs.append(cap)
    for ai, a in enumerate(arcs):
        if a.kind is not ArcKind.TRANSIT or a.capacity_users_min is None:
            continue
        if not math.isfinite(a.capacity_users_min):
            continue
        row = np.zeros(n)
        for j, col in enumerate(cols):
            if col[0] == "path" and ai in col[2].arcs:
                row[j] = 1.0
        A_rows.append(row)
        b_rhs.append(a.capacity_users_min)

    E = np.array(E_rows).reshape(-1, n)
    A = np.array(A_rows).reshape(-1, n)
    return cols, reb_offset, E, np.array(e_rhs), A, np.array(b_rhs)


def _linear_cost(cols, net: Network, cfg) -> np.ndarray:
    c = np.zeros(len(cols))
    for j, col in enumerate(cols):
        if col[0] == "path":
            c[j] = col[2].time
        else:
            c[j] = cfg.gamma_reb * net.arcs[col[1]].time_min
    return c


def _enumerate_vertices(E, e, A, b, max_combos: int) -> np.ndarray:
    """All basic feasible points: equalities plus every choice of n - rank(E)
    active inequality/bound rows, batch-solved and feasibility-filtered."""
    me, n = E.shape
    k = n - me
    cand = np.vstack([A, -np.eye(n)]) if A.size else -np.eye(n)
    cand_rhs = np.concatenate([b, np.zeros(n)]) if A.size else np.zeros(n)
    ncand = cand.shape[0]
    if k < 0 or (k > 0 and math.comb(ncand, k) > max_combos):
        raise TooLarge(
            f"vertex enumeration needs C({ncand},{k}) systems, over the {max_combos} budget"
        )
    scale = 1.0 + max(float(np.max(np.abs(e))) if e.size else 0.0, float(np.max(np.abs(b))) if b.size else 0.0)
    tol = _FEAS_TOL * scale

    verts: list[np.ndarray] = []
    combos = itertools.combinations(range(ncand), k)
    chunk = 20000
    while True:
        batch = list(itertools.islice(combos, chunk))
        if not batch:
            break
        idx = np.array(batch, dtype=int).reshape(len(batch), k)
        mats = np.empty((len(batch), n, n))
        mats[:, :me, :] = E
        if k:
            mats[:, me:, :] = cand[idx]
        rhs = np.empty((len(batch), n))
        rhs[:, :me] = e
        if k:
            rhs[:, me:] = cand_rhs[idx]
        sign, _ = np.linalg.slogdet(mats)
        ok = sign != 0
        if not np.any(ok):
            continue
        sols = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
        good = np.all(np.isfinite(sols), axis=1)
        good &= np.max(np.abs(E @ sols.T - e[:, None]), axis=0) <= tol if me else good
        if A.size:
            good &= np.max(A @ sols.T - b[:, None], axis=0) <= tol
        good &= np.min(sols, axis=1) >= -tol
        # numerically awful bases: verify the active system itself
        resid = np.max(np.abs(np.einsum("bij,bj->bi", mats[ok], sols) - rhs[ok]), axis=1)
        good &= resid <= tol
        for v in sols[good]:
            verts.append(np.maximum(v, 0.0))
    if not verts:
        raise InfeasibleStructure("oracle: no feasible vertex found")
    V = np.array(verts)
    # dedupe on a rounded key, keeping first occurrences (deterministic)
    _, keep = np.unique(np.round(V / scale, 9), axis=0, return_index=True)
    return V[np.sort(keep)]


def _dense_simplex(c, E, e, A, b) -> float:
    """Two-phase tableau simplex with Bland's rule; returns the optimal value."""
    me, n = E.shape
    mi = A.shape[0]
    # slacks for inequalities, then artificials for every row
    Aall = np.vstack([E, A]) if mi else E.copy()
    ball = np.concatenate([e, b]) if mi else e.copy()
    nslack = mi
    total = np.hstack([Aall, np.zeros((me + mi, nslack))])
    for i in range(mi):
        total[me + i, n + i] = 1.0
    neg = ball < 0
    total[neg] *= -1.0
    ball = np.where(neg, -ball, ball)
    m = me + mi
    nart = m
    T = np.hstack([total, np.eye(m)])
    basis = list(range(n + nslack, n + nslack + nart))
    nv = n + nslack + nart

    def pivot(T, bvec, basis, costs, banned):
        it_guard = 0
        while True:
            it_guard += 1
            if it_guard > 20000:
                raise TooLarge("simplex iteration guard tripped")
            lam = np.zeros(m)
            cb = costs[basis]
            # reduced costs via B^-T done implicitly: tableau form keeps T reduced
            red = costs - cb @ T
            red[banned] = np.inf
            enter = -1
            for j in range(nv):  # Bland: first negative
                if red[j] < -1e-10:
                    enter = j
                    break
            if enter < 0:
                return None
            col = T[:, enter]
            ratios = np.where(col > 1e-12, bvec / np.where(col > 1e-12, col, 1.0), np.inf)
            if not np.any(np.isfinite(ratios)):
                return "unbounded"
            leave = -1
            best = np.inf
            for i in range(m):  # Bland: smallest basis index among ties
                if not np.isfinite(ratios[i]):
                    continue
                if ratios[i] < best - 1e-15 or (
                    abs(ratios[i] - best) <= 1e-15 and leave >= 0 and basis[i] < basis[leave]
                ):
                    best = ratios[i]
                    leave = i
            piv = T[leave, enter]
            T[leave] /= piv
            bvec[leave] /= piv
            for i in range(m):
                if i != leave and abs(T[i, enter]) > 1e-14:
                    f = T[i, enter]
                    T[i] -= f * T[leave]
                    bvec[i] -= f * bvec[leave]
            basis[leave] = enter

    bvec = ball.copy()
    phase1 = np.zeros(nv)
    phase1[n + nslack :] = 1.0
    # reduce tableau to canonical form for the artificial basis (already identity)
    res = pivot(T, bvec, basis, phase1, banned=np.zeros(nv, dtype=bool))
    art_val = float(phase1[basis] @ bvec)
    if res == "unbounded" or art_val > 1e-7 * (1.0 + np.max(np.abs(ball), initial=0.0)):
        raise InfeasibleStructure("oracle simplex: phase 1 infeasible")
    phase2 = np.zeros(nv)
    phase2[:n] = c
    banned = np.zeros(nv, dtype=bool)
    banned[n + nslack :] = True
    res = pivot(T, bvec, basis, phase2, banned)
    if res == "unbounded":
        raise TooLarge("oracle simplex: unbounded phase 2")
    return float(phase2[basis] @ bvec)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _minimize_over_hull(V, fun, grad, tol_rel, max_iter=200000):
    """FISTA on the vertex-weight simplex with a Frank-Wolfe gap certificate."""
    K = V.shape[0]
    lam = np.full(K, 1.0 / K)
    x = lam
    zm = lam
    t = 1.0
    L = 1.0
    fx = fun(x @ V)
    for it in range(max_iter):
        vz = zm @ V
        gz = V @ grad(vz)
        fz = fun(vz)
        while True:
            cand = _project_simplex(zm - gz / L)
            diff = cand - zm
            f_cand = fun(cand @ V)
            if f_cand <= fz + gz @ diff + 0.5 * L * float(diff @ diff) + 1e-15:
                break
            L *= 2.0
            if L > 1e18:
                break
        x_new = cand
        f_new = fun(x_new @ V)
        if f_new > fx:  # adaptive restart
            zm = x
            t = 1.0
            f_new, x_new = fx, x
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            zm = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x, fx = x_new, f_new
        if it % 25 == 0 or it == max_iter - 1:
            v = x @ V
            g = grad(v)
            gap = float(g @ v - np.min(V @ g))
            if gap <= tol_rel * (1.0 + abs(fx)):
                return fx
        L = max(L / 2.0, 1e-8)
    v = x @ V
    g = grad(v)
    gap = float(g @ v - np.min(V @ g))
    if gap <= 10 * tol_rel * (1.0 + abs(fx)):
        return fx
    raise TooLarge(f"hull refinement did not certify the tolerance (gap {gap:.3e})")


def brute_force_oracle(
    net: Network,
    dem: DemandSet,
    cfg,
    kind: ObjectiveKind,
    max_paths: int = 12,
    max_road_arcs: int = 8,
    max_combos: int = 400_000,
) -> float:
    """Optimal objective of the path-flow reformulation (expects the same
    validated/pruned/fare-adjusted network that `assemble` receives)."""
    kind = ObjectiveKind(kind)
    cols, reb_offset, E, e, A, b = _path_form(net, dem, cfg, max_paths, max_road_arcs)
    c = _linear_cost(cols, net, cfg)

    if kind is ObjectiveKind.UTIL_EFF:
        me, n = E.shape
        ncand = A.shape[0] + n
        if n - me >= 0 and math.comb(ncand, n - me) <= max_combos:
            V = _enumerate_vertices(E, e, A, b, max_combos)
            return float(np.min(V @ c))
        return _dense_simplex(c, E, e, A, b)

    # Sufficiency QP over the vertex hull: needs a bounded feasible set.
    for j, col in enumerate(cols[reb_offset:], start=reb_offset):
        a = net.arcs[col[1]]
        capped = a.flow_cap_veh_min is not None and math.isfinite(a.flow_cap_veh_min)
        in_fleet = math.isfinite(cfg.n_amod_max) and a.time_min > 0
        if not (capped or in_fleet):
            raise TooLarge("oracle QP needs bounded rebalancing (road caps or a finite fleet)")
    V = _enumerate_vertices(E, e, A, b, max_combos)

    n_pop = dem.total_population
    rate_by_region = {rid: sum(d.rate for d in ds) for rid, ds in dem.demands_by_region.items()}
    weights = []
    times = []
    for d in dem.demands:
        n_r = dem.region_by_id[d.region].population
        weights.append(n_r * d.rate / (n_pop * rate_by_region[d.region]))
        row = np.zeros(len(cols))
        for j, col in enumerate(cols):
            if col[0] == "path" and col[1] == d.id:
                row[j] = col[2].time / d.rate
        times.append(row)
    Wm = np.array(weights)
    Tm = np.array(times)
    t_suff = float(cfg.t_suff)
    gamma_t = float(cfg.gamma_time)

    def fun(v: np.ndarray) -> float:
        eps = np.maximum(Tm @ v - t_suff, 0.0)
        return float(Wm @ (eps * eps) + gamma_t * (c @ v))

    def grad(v: np.ndarray) -> np.ndarray:
        eps = np.maximum(Tm @ v - t_suff, 0.0)
        return Tm.T @ (2.0 * Wm * eps) + gamma_t * c

    return _minimize_over_hull(V, fun, grad, _QP_TOL)
