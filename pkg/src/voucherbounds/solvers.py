"""Linear and quadratic program solvers behind the bound and test machinery.

Two LP backends share one contract: a dense two-phase revised simplex with
Bland's anti-cycling rule (the reference implementation, bit-deterministic),
and scipy's HiGHS interface (the default for larger systems).  The quadratic
solver handles the least-squares-over-polyhedron form of the test statistic
with an operator-splitting (ADMM) iteration plus an active-set polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEASIBILITY_TOL = 1e-8
REDUCED_COST_TOL = 1e-9
ZERO_RESIDUAL_TOL = 1e-9


class NumericalFailure(RuntimeError):
    """A solver exceeded its iteration budget or lost numerical control."""


class NonConvergence(NumericalFailure):
    """The quadratic solver hit its iteration cap without converging."""


def _as_dense(matrix) -> np.ndarray:
    if matrix is None:
        return np.zeros((0, 0))
    if sp.issparse(matrix):
        return matrix.toarray()
    return np.asarray(matrix, dtype=float)


def _empty(n_cols: int) -> np.ndarray:
    return np.zeros((0, n_cols))


@dataclass(frozen=True)
class LinearProgram:
    """min/max ``objective @ x`` subject to equality and <= rows and box bounds."""

    objective: np.ndarray
    a_eq: object = None
    b_eq: np.ndarray | None = None
    a_ub: object = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sense: str = "min"

    def __post_init__(self) -> None:
        c = np.asarray(self.objective, dtype=float)
        n = c.size
        object.__setattr__(self, "objective", c)
        a_eq = self.a_eq if self.a_eq is not None and _n_rows(self.a_eq) else None
        a_ub = self.a_ub if self.a_ub is not None and _n_rows(self.a_ub) else None
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "a_ub", a_ub)
        object.__setattr__(self, "b_eq", None if a_eq is None else np.asarray(self.b_eq, dtype=float))
        object.__setattr__(self, "b_ub", None if a_ub is None else np.asarray(self.b_ub, dtype=float))
        lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        for mat, vec, name in ((a_eq, self.b_eq, "eq"), (a_ub, self.b_ub, "ub")):
            if mat is not None:
                if mat.shape[1] != n or vec.shape != (mat.shape[0],):
                    raise ValueError(f"inconsistent {name} block dimensions")
        if not np.all(np.isfinite(c)):
            raise ValueError("objective coefficients must be finite")

    @property
    def n_vars(self) -> int:
        return self.objective.size


def _n_rows(matrix) -> int:
    return matrix.shape[0]


@dataclass(frozen=True)
class LpSolution:
    status: str
    value: float | None
    x: np.ndarray | None
    iterations: int = 0
    duals: np.ndarray | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(lp: LinearProgram, backend: str = "highs") -> LpSolution:
    """Solve a linear program; deterministic for a fixed backend and input.

    ``backend='highs'`` routes through scipy, ``backend='simplex'`` uses the
    in-package dense revised simplex with Bland's rule.
    """
    if backend == "highs":
        return _solve_highs(lp)
    if backend == "simplex":
        return _solve_simplex(lp)
    raise ValueError(f"unknown LP backend {backend!r}")


def _solve_highs(lp: LinearProgram) -> LpSolution:
    sign = 1.0 if lp.sense == "min" else -1.0
    bounds = [
        (None if not math.isfinite(lo) else lo, None if not math.isfinite(hi) else hi)
        for lo, hi in zip(lp.lower, lp.upper)
    ]
    res = linprog(
        sign * lp.objective,
        A_ub=lp.a_ub,
        b_ub=lp.b_ub,
        A_eq=lp.a_eq,
        b_eq=lp.b_eq,
        bounds=bounds,
        method="highs",
    )
    iterations = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return LpSolution(INFEASIBLE, None, None, iterations)
    if res.status == 3:
        return LpSolution(UNBOUNDED, None, None, iterations)
    if res.status != 0:
        raise NumericalFailure(f"HiGHS failed: {res.message}")
    duals = []
    if lp.a_eq is not None:
        duals.append(sign * np.asarray(res.eqlin.marginals))
    if lp.a_ub is not None:
        duals.append(sign * np.asarray(res.ineqlin.marginals))
    return LpSolution(
        OPTIMAL,
        sign * float(res.fun),
        np.asarray(res.x),
        iterations,
        np.concatenate(duals) if duals else np.zeros(0),
    )


# ---------------------------------------------------------------------------
# Dense two-phase revised simplex with Bland's rule and bounded variables.
# ---------------------------------------------------------------------------


def _solve_simplex(lp: LinearProgram) -> LpSolution:
    sign = 1.0 if lp.sense == "min" else -1.0
    n = lp.n_vars
    a_eq = _as_dense(lp.a_eq) if lp.a_eq is not None else _empty(n)
    a_ub = _as_dense(lp.a_ub) if lp.a_ub is not None else _empty(n)
    b_eq = lp.b_eq if lp.b_eq is not None else np.zeros(0)
    b_ub = lp.b_ub if lp.b_ub is not None else np.zeros(0)

    n_eq, n_ub = a_eq.shape[0], a_ub.shape[0]
    m = n_eq + n_ub
    # standard form: [A_eq 0; A_ub I] [x; s] = [b_eq; b_ub], slacks s >= 0
    a = np.zeros((m, n + n_ub))
    a[:n_eq, :n] = a_eq
    a[n_eq:, :n] = a_ub
    a[n_eq:, n:] = np.eye(n_ub)
    b = np.concatenate([b_eq, b_ub])
    lower = np.concatenate([lp.lower, np.zeros(n_ub)])
    upper = np.concatenate([lp.upper, np.full(n_ub, np.inf)])
    cost = np.concatenate([sign * lp.objective, np.zeros(n_ub)])

    tableau = _SimplexState(a, b, lower, upper)
    max_iter = 10 * (m + a.shape[1]) ** 2 + 100

    infeas = tableau.run_phase1(max_iter)
    if infeas > FEASIBILITY_TOL:
        return LpSolution(INFEASIBLE, None, None, tableau.iterations)
    status = tableau.run_phase2(cost, max_iter)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, None, None, tableau.iterations)
    x_full = tableau.solution()
    value = float(cost @ x_full)
    duals = tableau.duals(cost)
    return LpSolution(OPTIMAL, sign * value, x_full[:n], tableau.iterations, duals)


class _SimplexState:
    """Bounded-variable simplex over A x = b with artificial columns."""

    def __init__(self, a: np.ndarray, b: np.ndarray, lower: np.ndarray, upper: np.ndarray):
        m, n = a.shape
        self.m, self.n = m, n
        # nonbasic start values: nearest finite bound, else 0
        start = np.where(np.isfinite(lower), lower, np.where(np.isfinite(upper), upper, 0.0))
        residual = b - a @ start
        art_sign = np.where(residual >= 0, 1.0, -1.0)
        self.a = np.hstack([a, np.diag(art_sign)])
        self.lower = np.concatenate([lower, np.zeros(m)])
        self.upper = np.concatenate([upper, np.full(m, np.inf)])
        self.values = np.concatenate([start, np.abs(residual)])
        self.basis = list(range(n, n + m))
        self.in_basis = np.zeros(n + m, dtype=bool)
        self.in_basis[self.basis] = True
        self.iterations = 0
        self.n_art = m

    def _solve_basis(self, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        basis_mat = self.a[:, self.basis]
        try:
            return np.linalg.solve(basis_mat.T if transpose else basis_mat, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular simplex basis") from exc

    def _iterate(self, cost: np.ndarray, max_iter: int, allow_unbounded: bool) -> str:
        n_total = self.a.shape[1]
        while True:
            self.iterations += 1
            if self.iterations > max_iter:
                raise NumericalFailure(
                    f"simplex exceeded the iteration cap ({max_iter})"
                )
            y = self._solve_basis(cost[self.basis], transpose=True)
            entering = -1
            direction = 0.0
            for j in range(n_total):
                if self.in_basis[j] or self.lower[j] == self.upper[j]:
                    continue
                d_j = cost[j] - y @ self.a[:, j]
                at_lower = self.values[j] <= self.lower[j] + FEASIBILITY_TOL
                at_upper = self.values[j] >= self.upper[j] - FEASIBILITY_TOL
                free = not np.isfinite(self.lower[j]) and not np.isfinite(self.upper[j])
                if (at_lower or free) and d_j < -REDUCED_COST_TOL:
                    entering, direction = j, 1.0
                    break  # Bland: first eligible index
                if (at_upper or free) and d_j > REDUCED_COST_TOL:
                    entering, direction = j, -1.0
                    break
            if entering < 0:
                return OPTIMAL

            w = self._solve_basis(self.a[:, entering])
            # entering moves by t >= 0 times `direction`; basics move by -t*direction*w
            t_best = np.inf
            leaving_pos = -1
            leaving_bound = 0.0
            for i, var in enumerate(self.basis):
                delta = -direction * w[i]
                if delta < -FEASIBILITY_TOL:  # basic decreases toward its lower bound
                    bound = self.lower[var]
                    if np.isfinite(bound):
                        t = (self.values[var] - bound) / -delta
                    else:
                        continue
                    new_bound = bound
                elif delta > FEASIBILITY_TOL:  # basic increases toward its upper bound
                    bound = self.upper[var]
                    if np.isfinite(bound):
                        t = (bound - self.values[var]) / delta
                    else:
                        continue
                    new_bound = bound
                else:
                    continue
                t = max(t, 0.0)
                if t < t_best - 1e-12 or (
                    abs(t - t_best) <= 1e-12 and (leaving_pos < 0 or var < self.basis[leaving_pos])
                ):
                    t_best, leaving_pos, leaving_bound = t, i, new_bound

            span = self.upper[entering] - self.lower[entering]
            bound_flip = np.isfinite(span) and span < t_best
            if bound_flip:
                t_best = span
            if not np.isfinite(t_best):
                if allow_unbounded:
                    return UNBOUNDED
                raise NumericalFailure("phase-1 ratio test found no blocking bound")

            self.values[entering] += direction * t_best
            if bound_flip:  # snap exactly onto the opposite bound
                self.values[entering] = (
                    self.upper[entering] if direction > 0 else self.lower[entering]
                )
            for i, var in enumerate(self.basis):
                self.values[var] -= direction * t_best * w[i]
            if not bound_flip:
                leaving = self.basis[leaving_pos]
                self.values[leaving] = leaving_bound
                self.basis[leaving_pos] = entering
                self.in_basis[leaving] = False
                self.in_basis[entering] = True

    def run_phase1(self, max_iter: int) -> float:
        cost = np.zeros(self.a.shape[1])
        cost[self.n :] = 1.0
        self._iterate(cost, max_iter, allow_unbounded=False)
        return float(self.values[self.n :].sum())

    def run_phase2(self, structural_cost: np.ndarray, max_iter: int) -> str:
        # pin artificials at zero; they may linger in the basis on redundant rows
        self.upper[self.n :] = 0.0
        self.values[self.n :] = np.maximum(self.values[self.n :], 0.0)
        cost = np.concatenate([structural_cost, np.zeros(self.n_art)])
        return self._iterate(cost, max_iter, allow_unbounded=True)

    def solution(self) -> np.ndarray:
        return self.values[: self.n].copy()

    def duals(self, structural_cost: np.ndarray) -> np.ndarray:
        cost = np.concatenate([structural_cost, np.zeros(self.n_art)])
        return self._solve_basis(cost[self.basis], transpose=True)


# ---------------------------------------------------------------------------
# Quadratic programs: least squares over a polyhedron via operator splitting.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadraticProgram:
    """min ``||target - design @ x||^2`` over a polyhedron with box bounds."""

    target: np.ndarray
    design: object
    a_eq: object = None
    b_eq: np.ndarray | None = None
    a_ub: object = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    @property
    def n_vars(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class QpSolution:
    status: str
    value: float | None
    x: np.ndarray | None
    iterations: int
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


class AdmmWorkspace:
    """Reusable splitting solver for a family of least-squares QPs.

    The constraint matrix and its KKT factorization are fixed at
    construction; each :meth:`solve` call may change the least-squares
    target and the row bounds (the equality/inequality pattern must not
    change, since the penalty vector depends on it).
    """

    def __init__(
        self,
        design,
        row_matrix,
        row_lower: np.ndarray,
        row_upper: np.ndarray,
        *,
        sigma: float = 1e-6,
        relaxation: float = 1.6,
        rho0: float = 0.1,
        eps_abs: float = 1e-8,
        eps_rel: float = 1e-8,
        max_iter: int = 50_000,
    ):
        self.design = sp.csr_matrix(design) if not sp.issparse(design) else design.tocsr()
        m_mat = sp.csc_matrix(row_matrix) if not sp.issparse(row_matrix) else row_matrix.tocsc()
        self.rows = m_mat
        self.rows_t = m_mat.T.tocsc()
        self.row_lower = np.asarray(row_lower, dtype=float)
        self.row_upper = np.asarray(row_upper, dtype=float)
        self.n = self.design.shape[1]
        self.m = m_mat.shape[0]
        self.sigma = sigma
        self.relaxation = relaxation
        self.eps_abs = eps_abs
        self.eps_rel = eps_rel
        self.max_iter = max_iter

        equality = np.isclose(self.row_lower, self.row_upper)
        self._rho_pattern = np.where(equality, 1e3, 1.0)
        p_mat = 2.0 * (self.design.T @ self.design)
        self.p_mat = sp.csc_matrix(p_mat)
        self._set_rho(rho0)

    def _set_rho(self, rho_scalar: float) -> None:
        self.rho_scalar = rho_scalar
        self.rho = self._rho_pattern * rho_scalar
        self.rho_inv = 1.0 / self.rho
        kkt = sp.bmat(
            [
                [self.p_mat + self.sigma * sp.eye(self.n), self.rows_t],
                [self.rows, -sp.diags(self.rho_inv)],
            ],
            format="csc",
        )
        self.kkt = spla.splu(kkt)

    def solve(
        self,
        target: np.ndarray,
        row_lower: np.ndarray | None = None,
        row_upper: np.ndarray | None = None,
        warm: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    ) -> QpSolution:
        lo = self.row_lower if row_lower is None else np.asarray(row_lower, dtype=float)
        hi = self.row_upper if row_upper is None else np.asarray(row_upper, dtype=float)
        target = np.asarray(target, dtype=float)
        q = -2.0 * (self.design.T @ target)

        if warm is None:
            x = np.zeros(self.n)
            z = np.clip(np.zeros(self.m), lo, hi)
            y = np.zeros(self.m)
        else:
            x, z, y = (v.copy() for v in warm)

        alpha = self.relaxation
        rows, rows_t, p_mat = self.rows, self.rows_t, self.p_mat
        status = None
        iteration = 0
        r_prim = r_dual = float("nan")
        for iteration in range(1, self.max_iter + 1):
            rho, rho_inv = self.rho, self.rho_inv
            rhs = np.concatenate([self.sigma * x - q, z - rho_inv * y])
            sol = self.kkt.solve(rhs)
            x_tilde, nu = sol[: self.n], sol[self.n :]
            z_tilde = z + rho_inv * (nu - y)
            x_prev, z_prev, y_prev = x, z, y
            x = alpha * x_tilde + (1 - alpha) * x_prev
            z_relaxed = alpha * z_tilde + (1 - alpha) * z_prev
            z = np.clip(z_relaxed + rho_inv * y_prev, lo, hi)
            y = y_prev + rho * (z_relaxed - z)

            if iteration % 25 == 0 or iteration == self.max_iter:
                mx = rows @ x
                px = p_mat @ x
                mty = rows_t @ y
                r_prim = float(np.max(np.abs(mx - z))) if self.m else 0.0
                r_dual = float(np.max(np.abs(px + q + mty)))
                prim_scale = max(np.max(np.abs(mx), initial=0.0), np.max(np.abs(z), initial=0.0))
                dual_scale = max(
                    np.max(np.abs(px), initial=0.0),
                    np.max(np.abs(mty), initial=0.0),
                    np.max(np.abs(q), initial=0.0),
                )
                if r_prim <= self.eps_abs + self.eps_rel * prim_scale and (
                    r_dual <= self.eps_abs + self.eps_rel * dual_scale
                ):
                    status = OPTIMAL
                    break
                dy = y - y_prev
                if self._certifies_infeasible(dy, lo, hi):
                    return QpSolution(INFEASIBLE, None, None, iteration)
                # deterministic residual-balancing rho update (refactorizes)
                ratio = (r_prim / max(prim_scale, 1e-12)) / max(
                    r_dual / max(dual_scale, 1e-12), 1e-16
                )
                scale = math.sqrt(ratio)
                if scale > 5.0 or scale < 0.2:
                    new_rho = min(max(self.rho_scalar * scale, 1e-6), 1e6)
                    if new_rho != self.rho_scalar:
                        self._set_rho(new_rho)

        polished = self._polish(x, y, q, lo, hi)
        if polished is not None:
            x = polished
            status = OPTIMAL
        if status != OPTIMAL:
            raise NonConvergence(
                f"splitting QP did not converge in {self.max_iter} iterations"
            )
        value = self._objective(x, target)
        return QpSolution(OPTIMAL, value, x, iteration, float(r_prim), float(r_dual))

    def _objective(self, x: np.ndarray, target: np.ndarray) -> float:
        residual = target - self.design @ x
        if residual.size and np.max(np.abs(residual)) <= ZERO_RESIDUAL_TOL:
            return 0.0
        return float(residual @ residual)

    def _certifies_infeasible(self, dy: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> bool:
        norm = np.max(np.abs(dy), initial=0.0)
        if norm <= 1e-12:
            return False
        dy = dy / norm
        if np.max(np.abs(self.rows_t @ dy), initial=0.0) > 1e-10:
            return False
        pos = dy > 1e-12
        neg = dy < -1e-12
        if np.any(pos & ~np.isfinite(hi)) or np.any(neg & ~np.isfinite(lo)):
            return False
        support = hi[pos] @ dy[pos] + lo[neg] @ dy[neg]
        return bool(support < -1e-10)

    def _polish(
        self, x: np.ndarray, y: np.ndarray, q: np.ndarray, lo: np.ndarray, hi: np.ndarray
    ) -> np.ndarray | None:
        mx = self.rows @ x
        active_lo = (y < -1e-10) | (np.abs(mx - lo) < 1e-7)
        active_hi = (y > 1e-10) | (np.abs(mx - hi) < 1e-7)
        active_lo &= np.isfinite(lo)
        active_hi &= np.isfinite(hi) & ~active_lo
        active = active_lo | active_hi
        if not np.any(active):
            rows_act = _empty(self.n)
            rhs_act = np.zeros(0)
        else:
            rows_act = _as_dense(self.rows[np.flatnonzero(active)])
            rhs_act = np.where(active_lo, lo, hi)[active]
        k = rows_act.shape[0]
        p_dense = _as_dense(self.p_mat)
        kkt = np.block([[p_dense, rows_act.T], [rows_act, np.zeros((k, k))]])
        rhs = np.concatenate([-q, rhs_act])
        try:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        except np.linalg.LinAlgError:
            return None
        x_pol = sol[: self.n]
        mx_pol = self.rows @ x_pol
        tol = 1e-7
        if np.any(mx_pol < lo - tol) or np.any(mx_pol > hi + tol):
            return None
        return x_pol


def _qp_rows(qp: QuadraticProgram) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    n = qp.n_vars
    blocks = []
    lowers: list[np.ndarray] = []
    uppers: list[np.ndarray] = []
    if qp.a_eq is not None and _n_rows(qp.a_eq):
        blocks.append(sp.csr_matrix(qp.a_eq))
        b = np.asarray(qp.b_eq, dtype=float)
        lowers.append(b)
        uppers.append(b)
    if qp.a_ub is not None and _n_rows(qp.a_ub):
        blocks.append(sp.csr_matrix(qp.a_ub))
        b = np.asarray(qp.b_ub, dtype=float)
        lowers.append(np.full(b.size, -np.inf))
        uppers.append(b)
    lower = np.full(n, -np.inf) if qp.lower is None else np.asarray(qp.lower, dtype=float)
    upper = np.full(n, np.inf) if qp.upper is None else np.asarray(qp.upper, dtype=float)
    bounded = np.flatnonzero(np.isfinite(lower) | np.isfinite(upper))
    if bounded.size:
        eye = sp.eye(n, format="csr")
        blocks.append(eye[bounded])
        lowers.append(lower[bounded])
        uppers.append(upper[bounded])
    if not blocks:
        return sp.csr_matrix((0, n)), np.zeros(0), np.zeros(0)
    return sp.vstack(blocks, format="csr"), np.concatenate(lowers), np.concatenate(uppers)


def solve_qp(qp: QuadraticProgram, **admm_options) -> QpSolution:
    """One-shot interface over :class:`AdmmWorkspace`."""
    rows, lo, hi = _qp_rows(qp)
    workspace = AdmmWorkspace(qp.design, rows, lo, hi, **admm_options)
    return workspace.solve(np.asarray(qp.target, dtype=float))


# ---------------------------------------------------------------------------
# Constraint-system container shared by the bound builders and inference.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintSystem:
    """A bound program's constraints, split into estimated and deterministic blocks.

    ``a_data @ x = b_data`` pins variables at observed shares (the block
    whose right-hand side is estimated); ``a_eq``/``a_ub`` and the box
    bounds are deterministic.  ``b_data`` follows the canonical moment
    order: shares without the voucher for every alternative, then shares
    with it.
    """

    a_data: object
    b_data: np.ndarray
    a_eq: object
    b_eq: np.ndarray
    a_ub: object
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.a_data.shape[1]

    def lp(self, objective: np.ndarray, sense: str) -> LinearProgram:
        a_eq_parts = [m for m in (self.a_data, self.a_eq) if _n_rows(m)]
        b_eq_parts = [v for v in (self.b_data, self.b_eq) if v.size]
        stack = sp.vstack if any(sp.issparse(m) for m in a_eq_parts) else np.vstack
        return LinearProgram(
            objective=objective,
            a_eq=stack(a_eq_parts) if a_eq_parts else None,
            b_eq=np.concatenate(b_eq_parts) if b_eq_parts else None,
            a_ub=self.a_ub if _n_rows(self.a_ub) else None,
            b_ub=self.b_ub if _n_rows(self.a_ub) else None,
            lower=self.lower,
            upper=self.upper,
            sense=sense,
        )

    def deterministic_rows(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """All non-estimated restrictions as interval rows (for the QP solver)."""
        qp = QuadraticProgram(
            target=np.zeros(_n_rows(self.a_data)),
            design=sp.csr_matrix(self.a_data),
            a_eq=self.a_eq if _n_rows(self.a_eq) else None,
            b_eq=self.b_eq,
            a_ub=self.a_ub if _n_rows(self.a_ub) else None,
            b_ub=self.b_ub,
            lower=self.lower,
            upper=self.upper,
        )
        return _qp_rows(qp)

    def with_data(self, b_data: np.ndarray) -> "ConstraintSystem":
        return ConstraintSystem(
            self.a_data, np.asarray(b_data, dtype=float),
            self.a_eq, self.b_eq, self.a_ub, self.b_ub, self.lower, self.upper,
        )


# ---------------------------------------------------------------------------
# Fixed-format MPS emission for external cross-checking.
# ---------------------------------------------------------------------------


def write_mps(lp: LinearProgram, stream: IO[str], name: str = "BOUNDLP") -> None:
    """Write the program in fixed MPS format (OBJSENSE extension for max)."""
    a_eq = _as_dense(lp.a_eq) if lp.a_eq is not None else _empty(lp.n_vars)
    a_ub = _as_dense(lp.a_ub) if lp.a_ub is not None else _empty(lp.n_vars)
    b_eq = lp.b_eq if lp.b_eq is not None else np.zeros(0)
    b_ub = lp.b_ub if lp.b_ub is not None else np.zeros(0)
    rows = [("E", f"EQ{i:06d}", a_eq[i], b_eq[i]) for i in range(a_eq.shape[0])]
    rows += [("L", f"UB{i:06d}", a_ub[i], b_ub[i]) for i in range(a_ub.shape[0])]

    stream.write(f"NAME          {name}\n")
    if lp.sense == "max":
        stream.write("OBJSENSE\n    MAX\n")
    stream.write("ROWS\n N  COST\n")
    for kind, label, _, _ in rows:
        stream.write(f" {kind}  {label}\n")
    stream.write("COLUMNS\n")
    for j in range(lp.n_vars):
        col = f"X{j:06d}"
        if lp.objective[j] != 0.0:
            stream.write(f"    {col}  COST  {lp.objective[j]:.17g}\n")
        for _, label, coeffs, _ in rows:
            if coeffs[j] != 0.0:
                stream.write(f"    {col}  {label}  {coeffs[j]:.17g}\n")
    stream.write("RHS\n")
    for _, label, _, rhs in rows:
        if rhs != 0.0:
            stream.write(f"    RHS  {label}  {rhs:.17g}\n")
    stream.write("BOUNDS\n")
    for j in range(lp.n_vars):
        col = f"X{j:06d}"
        lo, hi = lp.lower[j], lp.upper[j]
        if not math.isfinite(lo) and not math.isfinite(hi):
            stream.write(f" FR BND  {col}\n")
            continue
        if math.isfinite(lo):
            stream.write(f" LO BND  {col}  {lo:.17g}\n")
        else:
            stream.write(f" MI BND  {col}\n")
        if math.isfinite(hi):
            stream.write(f" UP BND  {col}  {hi:.17g}\n")
    stream.write("ENDATA\n")
