"""LP/QP solver behind a uniform contract.

The embedded algorithm is a Mehrotra predictor-corrector primal-dual interior
point method on the standard form

    min 1/2 u'Hu + c'u   s.t.   G u = h,  u >= 0

obtained by appending one slack per inequality row. H is diagonal for every
problem this package assembles, so each Newton step reduces to normal
equations M = G W G' with diagonal W; M is factorized with CHOLMOD when
cvxopt is present, sparse LU otherwise, and dense Cholesky for small systems.
Equality rows the assembler marked as implied (one per commodity, inherent to
node-arc incidence) are dropped from the reduced system so M stays positive
definite; every Newton step is refined against the exact KKT system.

An optional external backend runs any command that speaks the triplet-file
protocol (paths on stdin, status line plus solution vector on stdout).
"""

from __future__ import annotations

import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembler import StandardProblem, VariableIndex
from .errors import BackendError, ConfigError

try:  # pragma: no cover - exercised only when cvxopt is installed
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix

    _HAVE_CHOLMOD = True
except Exception:  # pragma: no cover
    _HAVE_CHOLMOD = False


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class SolveSettings:
    feas_tol: float = 1e-8
    gap_tol: float | None = None  # None -> 1e-8 for LPs, 1e-6 for QPs
    max_iter: int = 200
    backend: str = "embedded"  # "embedded" | "external"
    external_command: tuple[str, ...] | None = None
    dense_limit: int = 600  # use dense Cholesky when the row count is below this
    verbose: bool = False

    def __post_init__(self):
        if self.feas_tol <= 0 or (self.gap_tol is not None and self.gap_tol <= 0):
            raise ConfigError("solver tolerances must be positive")
        if self.max_iter <= 0:
            raise ConfigError("max_iter must be positive")

    def resolved_gap_tol(self, is_qp: bool) -> float:
        if self.gap_tol is not None:
            return self.gap_tol
        return 1e-6 if is_qp else 1e-8


@dataclass
class SolveResult:
    status: SolveStatus
    x: np.ndarray
    objective: float
    gap: float | None
    iterations: int
    wall_time_s: float
    primal_infeas: float = 0.0
    dual_infeas: float = 0.0
    diagnosis: str | None = None
    log: str = ""


def dummy_index(n: int) -> VariableIndex:
    """Index for hand-built standard-form problems (tests, backends)."""
    return VariableIndex(flow={}, rebalance={}, slack={}, arcs_by_demand={}, n=n)


# ---------------------------------------------------------------------------
# Normal-equation factorizations
# ---------------------------------------------------------------------------


class _DenseFactor:
    def __init__(self, M: np.ndarray):
        import scipy.linalg as sla

        self._cf = sla.cho_factor(M, lower=True, check_finite=False)
        self._sla = sla

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._sla.cho_solve(self._cf, b, check_finite=False)


class _SpluFactor:
    def __init__(self, M: sp.csc_matrix):
        self._lu = spla.splu(M)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(b)


class _CholmodFactor:
    """CHOLMOD LL' factorization with the symbolic analysis, fill-reducing
    order and triplet index arrays cached across interior-point iterations
    (the pattern of G W G' does not depend on W)."""

    def __init__(self, order: np.ndarray | None):
        self._order = order
        self._symbolic = None
        self._key = None
        self._I = None
        self._J = None

    def factor(self, M_lower: sp.csc_matrix) -> None:
        m = M_lower.shape[0]
        coo = M_lower.tocoo()
        key = (m, coo.nnz)
        if self._symbolic is None or key != self._key:
            self._I = _cvx_matrix(coo.row.astype(np.int64).reshape(-1, 1))
            self._J = _cvx_matrix(coo.col.astype(np.int64).reshape(-1, 1))
            X = _cvx_spmatrix(_cvx_matrix(coo.data.reshape(-1, 1)), self._I, self._J, (m, m))
            if self._order is not None:
                self._symbolic = _cholmod.symbolic(X, p=_cvx_matrix(self._order.reshape(-1, 1)))
            else:
                self._symbolic = _cholmod.symbolic(X)
            self._key = key
        else:
            X = _cvx_spmatrix(_cvx_matrix(coo.data.reshape(-1, 1)), self._I, self._J, (m, m))
        _cholmod.numeric(X, self._symbolic)

    def solve(self, b: np.ndarray) -> np.ndarray:
        rhs = _cvx_matrix(b.reshape(-1, 1))
        _cholmod.solve(self._symbolic, rhs)
        return np.asarray(rhs).ravel()


# Step heuristics (Mehrotra + Gondzio): boundary fraction, centering exponent,
# corrector budget per iteration, and starting-point shape.
_ALPHA0 = 0.99995
_SIGMA_POW = 3
_MAX_CORRECTORS = 3
_START_CLIP = 0.1
_START_MU = 1e-4


class _KKTSolver:
    """Newton-system solver via the normal equations M = G W G' with diagonal
    W = 1/(H + Z/U). Structurally redundant rows were removed upstream, so M
    is positive definite and factors without regularization; solves are still
    refined against the exact KKT system because the normal equations amplify
    roundoff once W spans many orders of magnitude."""

    def __init__(self, G: sp.csr_matrix, settings: SolveSettings, order_rank=None):
        self.G = G.tocsr()
        self.GT = self.G.T.tocsr()
        self.m, self.N = G.shape
        self.dense = self.m <= settings.dense_limit
        order = None
        if order_rank is not None and not self.dense:
            order = np.argsort(np.asarray(order_rank), kind="stable").astype(np.int64)
        self._cholmod = _CholmodFactor(order) if (_HAVE_CHOLMOD and not self.dense) else None
        # fixed union pattern so the cached symbolic analysis stays valid
        self._pattern = None
        if not self.dense:
            Gb = self.G.copy()
            Gb.data = np.ones_like(Gb.data)
            P = (Gb @ Gb.T).tocsr()
            P.sort_indices()
            P.data[:] = 0.0
            self._pattern = P
        self._fact = None
        self.W: np.ndarray | None = None

    def factor(self, W: np.ndarray) -> None:
        self.W = W
        Gw = self.G.multiply(W)
        M = (Gw @ self.GT).tocsr()
        if self.dense:
            Md = M.toarray()
            diag_max = max(1.0, float(np.max(np.abs(np.diag(Md)))) if self.m else 1.0)
            delta = 0.0
            for _ in range(6):
                try:
                    self._fact = _DenseFactor(Md + delta * np.eye(self.m) if delta else Md)
                    return
                except Exception:
                    delta = 1e-14 * diag_max if delta == 0.0 else delta * 1e4
            raise _FactorizationError("dense Cholesky failed")
        M = (M + self._pattern).tocsr()
        M.sort_indices()
        diag_max = max(1.0, float(np.max(M.diagonal()))) if self.m else 1.0
        delta = 0.0
        for _ in range(6):
            Mreg = (M + delta * sp.identity(self.m, format="csr")).tocsr() if delta else M
            try:
                if self._cholmod is not None:
                    self._cholmod.factor(sp.tril(Mreg.tocsc(), format="csc"))
                    self._fact = self._cholmod
                else:
                    self._fact = _SpluFactor(Mreg.tocsc())
                return
            except Exception:
                delta = 1e-13 * diag_max if delta == 0.0 else delta * 1e4
        raise _FactorizationError("sparse factorization failed")

    def _solve_once(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rhs = self.G @ (self.W * r1) - r2
        dy = self._fact.solve(rhs)
        du = self.W * (r1 - self.GT @ dy)
        return du, dy

    def solve(self, r1: np.ndarray, r2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve (H+D) du + G' dy = r1,  G du = r2 with W = 1/(H+D).

        Iterative refinement against the exact system corrects the roundoff
        the normal equations amplify when W spans many orders of magnitude."""
        if self.m == 0:
            return self.W * r1, np.zeros(0)
        du, dy = self._solve_once(r1, r2)
        scale1 = 1.0 + np.max(np.abs(r1))
        scale2 = 1.0 + np.max(np.abs(r2))
        best = None
        for _ in range(8):
            res1 = r1 - du / self.W - self.GT @ dy
            res2 = r2 - self.G @ du
            err = max(np.max(np.abs(res1)) / scale1, np.max(np.abs(res2)) / scale2)
            if not np.isfinite(err):
                err = np.inf
            if err <= 1e-14:
                return du, dy
            stalled = best is not None and err >= 0.7 * best[0]
            if best is None or err < best[0]:
                best = (err, du, dy)
            if stalled:
                break
            ddu, ddy = self._solve_once(res1, res2)
            du = du + ddu
            dy = dy + ddy
        if best is None:
            return du, dy
        return best[1], best[2]


class _FactorizationError(Exception):
    pass


# ---------------------------------------------------------------------------
# Mehrotra predictor-corrector
# ---------------------------------------------------------------------------


def _step_length(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _standard_form(problem: StandardProblem):
    n = problem.n
    m_in = problem.A_in.shape[0]
    H = np.zeros(n + m_in)
    H[:n] = problem.Q.diagonal()
    c = np.concatenate([problem.q, np.zeros(m_in)])
    # Drop equality rows the assembler proved redundant: the normal equations
    # are then strictly positive definite. The rows stay in the problem (and
    # in the final feasibility check); they are implied by the kept ones.
    A_eq = problem.A_eq
    b_eq = problem.b_eq
    eq_tags = list(problem.eq_tags)
    redundant = problem.meta.get("redundant_eq_rows") or []
    if redundant:
        keep = np.ones(A_eq.shape[0], dtype=bool)
        keep[np.asarray(redundant, dtype=int)] = False
        A_eq = A_eq[keep]
        b_eq = b_eq[keep]
        eq_tags = [t for t, k in zip(eq_tags, keep) if k]
    G = sp.bmat(
        [
            [A_eq, None],
            [problem.A_in, sp.identity(m_in, format="csr") if m_in else None],
        ],
        format="csr",
    )
    if G is None:  # both blocks empty
        G = sp.csr_matrix((0, n + m_in))
    h = np.concatenate([b_eq, problem.b_in])
    tags = eq_tags + list(problem.in_tags)
    return H, c, G, h, n, tags


_FAMILY_ORDER = {
    "conservation": 0,  # + demand id: column-disjoint blocks first
    "road-cap": 1_000_000,
    "transit-cap": 1_100_000,
    "amod-balance": 1_200_000,
    "slack": 1_300_000,
    "budget": 1_400_000,  # wide rows last
    "fleet": 1_500_000,
}


def _elimination_rank(tags: list[tuple[str, str]]) -> np.ndarray | None:
    """Fill-reducing elimination hint for the normal equations: per-commodity
    conservation blocks first, then capacity rows, with the widest linking
    rows (budgets, fleet) last."""
    rank = np.empty(len(tags))
    try:
        for i, (family, detail) in enumerate(tags):
            base = _FAMILY_ORDER.get(family)
            if base is None:
                return None  # unknown structure: let the factorization decide
            if family == "conservation":
                base += int(detail.split(",", 1)[0].split("=", 1)[1])
            rank[i] = base
    except (ValueError, IndexError):
        return None
    return rank


def _verify_q_diagonal(problem: StandardProblem) -> None:
    Q = problem.Q.tocoo()
    if Q.nnz and np.any(Q.row != Q.col):
        raise ConfigError("embedded solver supports diagonal quadratic terms only")
    if np.any(Q.diagonal() < 0):
        raise ConfigError("quadratic term must be positive semidefinite")


def solve(problem: StandardProblem, settings: SolveSettings | None = None) -> SolveResult:
    settings = settings or SolveSettings()
    if settings.backend == "external":
        return _solve_external(problem, settings)
    if settings.backend != "embedded":
        raise ConfigError(f"unknown solver backend {settings.backend!r}")
    return _solve_embedded(problem, settings)


def _solve_embedded(problem: StandardProblem, settings: SolveSettings) -> SolveResult:
    t0 = time.monotonic()
    _verify_q_diagonal(problem)
    H, c, G, h, n_orig, tags = _standard_form(problem)
    N = H.shape[0]
    is_qp = bool(np.any(H > 0))
    gap_tol = settings.resolved_gap_tol(is_qp)
    feas_tol = settings.feas_tol
    h_scale = 1.0 + (float(np.max(np.abs(h))) if h.size else 0.0)
    c_scale = 1.0 + (float(np.max(np.abs(c))) if c.size else 0.0)
    log_lines: list[str] = []

    kkt = _KKTSolver(G, settings, order_rank=_elimination_rank(tags))

    def finish(status, u, gap_rel, it, diagnosis=None):
        x = u[:n_orig].copy()
        obj = problem.objective_value(x)
        eqr = problem.A_eq @ x - problem.b_eq
        inr = problem.A_in @ x - problem.b_in
        p_inf = max(
            float(np.max(np.abs(eqr))) if eqr.size else 0.0,
            float(np.max(inr)) if inr.size else 0.0,
            float(np.max(-x)) if x.size else 0.0,
        )
        return SolveResult(
            status=status,
            x=x,
            objective=obj,
            gap=gap_rel,
            iterations=it,
            wall_time_s=time.monotonic() - t0,
            primal_infeas=p_inf,
            dual_infeas=float(np.max(np.abs(H * u + c + G.T @ y - z))) if N else 0.0,
            diagnosis=diagnosis,
            log="\n".join(log_lines),
        )

    # Starting point: least-norm primal and least-squares duals, clipped away
    # from the boundary (clipping keeps G u ~ h where the least-norm solution
    # is already positive, unlike a uniform Mehrotra shift), then the dual
    # side is inflated so complementarity does not start degenerate.
    try:
        kkt.factor(1.0 / (H + 1.0))
        u, _ = kkt.solve(np.zeros(N), h)
        _, y = kkt.solve(-c, np.zeros(G.shape[0]))
        z = c + H * u + G.T @ y
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
            raise _FactorizationError("non-finite starting point")
        su = float(np.quantile(np.abs(u), 0.9)) + 1e-2
        sz = float(np.quantile(np.abs(z), 0.9)) + 1e-2
        u = np.maximum(u, _START_CLIP * su)
        z = np.maximum(z, _START_CLIP * sz)
        mu_floor = _START_MU * max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
        mu_now = float(u @ z) / max(N, 1)
        if mu_now < mu_floor:
            z = z * (mu_floor / mu_now)
    except _FactorizationError:
        u = np.ones(N)
        z = np.ones(N)
        y = np.zeros(G.shape[0])

    mu0 = float(u @ z) / max(N, 1)
    tiny_steps = 0
    stall = 0
    status = SolveStatus.ITERATION_LIMIT
    diagnosis = None
    it = 0
    best = (np.inf, u, y, z, None)  # (score, iterates..., gap_rel)

    for it in range(settings.max_iter + 1):
        r_d = H * u + c + G.T @ y - z
        r_p = G @ u - h
        gap = float(u @ z)
        mu = gap / max(N, 1)
        pobj = float(0.5 * (u @ (H * u)) + c @ u)
        rp_rel = (float(np.max(np.abs(r_p))) if r_p.size else 0.0) / h_scale
        rd_rel = float(np.max(np.abs(r_d))) / c_scale if N else 0.0
        gap_rel = gap / (1.0 + abs(pobj))
        log_lines.append(
            f"it={it} mu={mu:.3e} rp={rp_rel:.3e} rd={rd_rel:.3e} gap={gap_rel:.3e} obj={pobj:.9e}"
        )
        if settings.verbose:  # pragma: no cover
            print(log_lines[-1])

        if not (np.isfinite(mu) and np.isfinite(pobj) and np.isfinite(rp_rel) and np.isfinite(rd_rel)):
            _, u, y, z, gap_rel = best
            return finish(SolveStatus.NUMERICAL_FAILURE, np.maximum(u, 0), gap_rel, it)
        score = max(rp_rel, rd_rel, gap_rel)
        if score < best[0]:
            stall = 0
            best = (score, u.copy(), y.copy(), z.copy(), gap_rel)
        else:
            stall += 1
        if rp_rel <= feas_tol and rd_rel <= feas_tol and gap_rel <= gap_tol:
            status = SolveStatus.OPTIMAL
            return finish(status, u, gap_rel, it)
        if pobj < -1e13 * c_scale:
            return finish(SolveStatus.UNBOUNDED, u, gap_rel, it)

        # Farkas-style infeasibility heuristic on the diverging duals.
        if it >= 5 and rp_rel > 10 * feas_tol and G.shape[0]:
            ynorm = float(np.max(np.abs(y)))
            if ynorm > 0:
                for sign in (1.0, -1.0):
                    yn = sign * y / ynorm
                    s = G.T @ yn
                    if float(np.max(s)) <= 1e-7 and float(h @ yn) > 1e-6 * h_scale:
                        diagnosis = _diagnose(yn, tags)
                        return finish(SolveStatus.INFEASIBLE, u, gap_rel, it, diagnosis)
            if ynorm > 1e13 * h_scale or float(np.max(z)) > 1e13 * c_scale:
                diagnosis = _diagnose(y, tags)
                return finish(SolveStatus.INFEASIBLE, u, gap_rel, it, diagnosis)

        # Double precision exhausted: stop polishing an already-stagnant point.
        if it == settings.max_iter or tiny_steps >= 5 or stall >= 15:
            break

        with np.errstate(all="ignore"):
            W = np.minimum(u / (H * u + z), 1e16)
            W = np.where(np.isfinite(W) & (W > 0), W, 1e16)
            try:
                kkt.factor(W)
            except _FactorizationError:
                break

            # Affine scaling (predictor) direction.
            du_a, dy_a = kkt.solve(-r_d - z, -r_p)
            dz_a = -z - (z / u) * du_a
            ap_aff = min(1.0, _step_length(u, du_a))
            ad_aff = min(1.0, _step_length(z, dz_a))
            mu_aff = float((u + ap_aff * du_a) @ (z + ad_aff * dz_a)) / max(N, 1)
            sigma = min(max((mu_aff / mu) ** _SIGMA_POW if mu > 0 else 0.0, 1e-10), 1.0 - 1e-10)

            # Corrector with centering.
            comp = (sigma * mu - du_a * dz_a) / u
            du_c, dy_c = kkt.solve(-r_d - z + comp, -r_p)
            dz_c = -z + comp - (z / u) * du_c
            if not (
                np.all(np.isfinite(du_c)) and np.all(np.isfinite(dy_c)) and np.all(np.isfinite(dz_c))
            ):
                break

            alpha0 = min(_ALPHA0, max(0.99, 1.0 - 0.1 * mu))

            def steps(du_, dz_):
                a_p = min(1.0, alpha0 * _step_length(u, du_))
                a_d = min(1.0, alpha0 * _step_length(z, dz_))
                return (a_p, a_d)

            ap, ad = steps(du_c, dz_c)
            # Multiple centrality correctors: extra cheap solves against the
            # current factorization that push outlier complementarity products
            # toward the center, lengthening the step.
            for _ in range(_MAX_CORRECTORS):
                if min(ap, ad) > 0.95:
                    break
                ap_t = min(1.0, 1.5 * ap + 0.3)
                ad_t = min(1.0, 1.5 * ad + 0.3)
                compl = (u + ap_t * du_c) * (z + ad_t * dz_c)
                target = np.clip(compl, 0.1 * sigma * mu, 10.0 * sigma * mu) - compl
                if np.max(np.abs(target)) <= 1e-14 * mu:
                    break
                ddu, ddy = kkt.solve(target / u, np.zeros(G.shape[0]))
                ddz = (target - z * ddu) / u
                du_n = du_c + ddu
                dy_n = dy_c + ddy
                dz_n = dz_c + ddz
                ap_n, ad_n = steps(du_n, dz_n)
                if ap_n + ad_n < ap + ad + 0.02:
                    break
                du_c, dy_c, dz_c = du_n, dy_n, dz_n
                ap, ad = ap_n, ad_n

        if min(ap, ad) < 1e-12:
            tiny_steps += 1
        else:
            tiny_steps = 0
        u = u + ap * du_c
        y = y + ad * dy_c
        z = z + ad * dz_c
        u = np.maximum(u, 1e-300)
        z = np.maximum(z, 1e-300)

    # Ran out of iterations (or stalled): report the best iterate seen.
    if np.isfinite(best[0]):
        _, u, y, z, gap_rel = best
        r_p = G @ u - h
        r_d = H * u + c + G.T @ y - z
        rp_rel = (float(np.max(np.abs(r_p))) if r_p.size else 0.0) / h_scale
        rd_rel = float(np.max(np.abs(r_d))) / c_scale if N else 0.0
        if rp_rel <= feas_tol and rd_rel <= feas_tol and gap_rel <= gap_tol:
            return finish(SolveStatus.OPTIMAL, u, gap_rel, it)
    if rp_rel > 100 * feas_tol and mu < 1e-4 * mu0:
        diagnosis = _diagnose(y, tags)
        return finish(SolveStatus.INFEASIBLE, u, gap_rel, it, diagnosis)
    return finish(status, u, gap_rel, it)


def _diagnose(y: np.ndarray, tags: list[tuple[str, str]]) -> str | None:
    if not len(y) or not tags:
        return None
    i = int(np.argmax(np.abs(y)))
    if i >= len(tags):
        return None
    family, detail = tags[i]
    return f"{family}[{detail}]" if detail else family


# ---------------------------------------------------------------------------
# External backend adapter
# ---------------------------------------------------------------------------

_STATUS_TOKENS = {
    "optimal": SolveStatus.OPTIMAL,
    "infeasible": SolveStatus.INFEASIBLE,
    "unbounded": SolveStatus.UNBOUNDED,
    "iteration-limit": SolveStatus.ITERATION_LIMIT,
    "numerical-failure": SolveStatus.NUMERICAL_FAILURE,
}


def _solve_external(problem: StandardProblem, settings: SolveSettings) -> SolveResult:
    """Protocol: the backend command receives the triplet-file path and the
    index-sidecar path, one per line, on stdin. It prints a status token on
    the first stdout line and, for optimal runs, the whitespace-separated
    primal vector on the following line(s). Exit code 0 means the problem
    file was parsed; any other exit code is a backend error.
    """
    from .assembler import export_problem

    if not settings.external_command:
        raise ConfigError("backend 'external' requires external_command")
    t0 = time.monotonic()
    tmpdir = tempfile.mkdtemp(prefix="equiflow-backend-")
    try:
        triplet = os.path.join(tmpdir, "problem.triplets")
        sidecar = os.path.join(tmpdir, "problem.index.json")
        export_problem(problem, triplet, sidecar)
        proc = subprocess.run(
            list(settings.external_command),
            input=f"{triplet}\n{sidecar}\n",
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            raise BackendError(
                f"external backend exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        tokens = proc.stdout.split()
        if not tokens:
            raise BackendError("external backend produced no output")
        status_token = tokens[0].lower()
        if status_token not in _STATUS_TOKENS:
            raise BackendError(f"external backend returned unknown status {status_token!r}")
        status = _STATUS_TOKENS[status_token]
        x = np.zeros(problem.n)
        if status is SolveStatus.OPTIMAL:
            values = tokens[1:]
            if len(values) != problem.n:
                raise BackendError(
                    f"external backend returned {len(values)} values, expected {problem.n}"
                )
            x = np.array([float(v) for v in values])
        eqr = problem.A_eq @ x - problem.b_eq
        inr = problem.A_in @ x - problem.b_in
        p_inf = max(
            float(np.max(np.abs(eqr))) if eqr.size else 0.0,
            float(np.max(inr)) if inr.size else 0.0,
            float(np.max(-x)) if x.size else 0.0,
        )
        return SolveResult(
            status=status,
            x=x,
            objective=problem.objective_value(x),
            gap=None,
            iterations=0,
            wall_time_s=time.monotonic() - t0,
            primal_infeas=p_inf,
            log=f"external backend: {' '.join(settings.external_command)}",
        )
    finally:
        shutil.rmtree(tmpdir, ignore_errors=True)
