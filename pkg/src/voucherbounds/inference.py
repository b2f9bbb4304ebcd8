"""Recentered subsampling: test statistics, confidence intervals, p-values.

Every bound program shares one structure: the deterministic shape and
logic rows, plus data rows whose right-hand side is the estimated share
vector.  The test statistic for a hypothesized parameter value is the
scaled least-squares distance between the empirical shares and the share
vectors attainable by demand systems satisfying the deterministic rows and
the hypothesized value; critical values come from the same statistic on
subsamples, recentered at the full-sample fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import baseline, parametric
from .model import EnrollmentShares, ProgramConfig, WelfareTarget
from .parametric import ParametricSpec
from .solvers import (
    INFEASIBLE,
    OPTIMAL,
    AdmmWorkspace,
    ConstraintSystem,
    LinearProgram,
    solve_lp,
)


@dataclass(frozen=True)
class MicroData:
    """Individual observations: voucher arm, chosen alternative, weight."""

    voucher: np.ndarray
    choice: np.ndarray
    weight: np.ndarray

    def __post_init__(self) -> None:
        voucher = np.asarray(self.voucher, dtype=np.int8)
        choice = np.asarray(self.choice, dtype=np.int64)
        weight = np.asarray(self.weight, dtype=float)
        if not (voucher.shape == choice.shape == weight.shape):
            raise ValueError("voucher, choice and weight must have equal length")
        if voucher.size == 0 or not {0, 1} >= set(np.unique(voucher).tolist()):
            raise ValueError("voucher must be 0/1 with at least one observation")
        if 0 not in voucher or 1 not in voucher:
            raise ValueError("both voucher arms must be present")
        if np.any(weight < 0) or not np.all(np.isfinite(weight)):
            raise ValueError("weights must be finite and nonnegative")
        for name, arr in (("voucher", voucher), ("choice", choice), ("weight", weight)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.voucher.size

    def canonical_order(self) -> np.ndarray:
        """Row order invariant to input permutation (sampling indexes this)."""
        return np.lexsort((self.weight, self.choice, self.voucher))

    def moment_vector(self, n_alternatives: int, use_weights: bool = True) -> np.ndarray:
        """Stacked within-arm shares: alternatives without the voucher, then with."""
        w = self.weight if use_weights else np.ones(len(self))
        parts = []
        for arm in (0, 1):
            mask = self.voucher == arm
            total = w[mask].sum()
            if total <= 0:
                raise ValueError(f"arm {arm} has no weight")
            counts = np.bincount(self.choice[mask], weights=w[mask], minlength=n_alternatives)
            parts.append(counts / total)
        return np.concatenate(parts)


def shares_from_microdata(
    data: MicroData, config: ProgramConfig, use_weights: bool = True
) -> EnrollmentShares:
    n_alt = len(config.alternatives)
    vector = data.moment_vector(n_alt, use_weights)
    return EnrollmentShares(
        labels=config.alternatives,
        share_without=vector[:n_alt],
        share_with=vector[n_alt:],
        n_without=int((data.voucher == 0).sum()),
        n_with=int((data.voucher == 1).sum()),
    )


def subsample_size(n: int, n_alternatives: int) -> int:
    """The 8 * sqrt(N) rule, clipped to [alternatives, N - 1]."""
    raw = int(round(8.0 * math.sqrt(n)))
    return max(min(raw, n - 1), min(n_alternatives + 2, n - 1))


@dataclass(frozen=True)
class InferenceConfig:
    """Tuning for subsampling inference; defaults follow the reported analysis."""

    alpha: float = 0.05
    n_subsamples: int = 200
    theta_grid: tuple[float, float, float] | None = None  # lo, hi, step
    grid_step: float | None = None
    seed: int = 0
    use_weights: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.n_subsamples < 1:
            raise ValueError("n_subsamples must be positive")
        if self.theta_grid is not None and self.theta_grid[2] <= 0:
            raise ValueError("theta grid step must be positive")


class StatisticSolver:
    """Shared splitting workspace for one system's family of test statistics.

    The KKT factorization depends only on the constraint rows (including a
    normalized objective row when test inversion is requested), so one
    instance serves the full-sample statistic and every recentered
    subsample statistic at every hypothesized value.
    """

    def __init__(self, system: ConstraintSystem, objective: np.ndarray | None = None):
        rows, lo, hi = system.deterministic_rows()
        self.system = system
        self.objective = objective
        self.theta_scale = 1.0
        if objective is not None:
            self.theta_scale = max(float(np.max(np.abs(objective))), 1e-12)
            row = sp.csr_matrix(objective[None, :] / self.theta_scale)
            rows = sp.vstack([rows, row], format="csr")
            lo = np.concatenate([lo, [0.0]])
            hi = np.concatenate([hi, [0.0]])
        self.base_lo = lo
        self.base_hi = hi
        self.workspace = AdmmWorkspace(sp.csr_matrix(system.a_data), rows, lo, hi)
        self._warm = None

    def minimum(self, target: np.ndarray, theta0: float | None = None):
        """(least-squares minimum, argmin); infinity when theta0 is unattainable."""
        if (theta0 is None) != (self.objective is None):
            raise ValueError("theta0 must be supplied exactly when an objective row exists")
        lo = hi = None
        if theta0 is not None:
            lo = self.base_lo.copy()
            hi = self.base_hi.copy()
            lo[-1] = hi[-1] = theta0 / self.theta_scale
        sol = self.workspace.solve(target, lo, hi, warm=self._warm)
        if sol.status == INFEASIBLE:
            return math.inf, None
        self._warm = (sol.x, self.workspace.rows @ sol.x, np.zeros(self.workspace.m))
        return sol.value, sol.x


def test_statistic(
    data: MicroData,
    system: ConstraintSystem,
    objective: np.ndarray | None = None,
    theta0: float | None = None,
    use_weights: bool = True,
    solver: StatisticSolver | None = None,
) -> tuple[float, np.ndarray | None]:
    """N times the constrained least-squares distance, plus the argmin.

    With ``theta0`` given the argmin must also attain the hypothesized
    parameter value; an unattainable value yields an infinite statistic.
    """
    solver = solver or StatisticSolver(system, objective)
    n_alt = system.a_data.shape[0] // 2
    b_hat = data.moment_vector(n_alt, use_weights)
    value, x = solver.minimum(b_hat, theta0)
    return len(data) * value, x


def draw_subsample(data: MicroData, size: int, seed, order: np.ndarray) -> np.ndarray:
    """Deterministic without-replacement draw over the canonical row order,
    redrawn (same stream) until both arms are represented."""
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        picked = order[rng.choice(len(data), size=size, replace=False)]
        arms = data.voucher[picked]
        if 0 in arms and 1 in arms:
            return picked
    raise RuntimeError("could not draw a subsample containing both arms")


def subsample_statistics(
    data: MicroData,
    system: ConstraintSystem,
    nu_hat: np.ndarray,
    cfg: InferenceConfig,
    objective: np.ndarray | None = None,
    theta0: float | None = None,
    solver: StatisticSolver | None = None,
    subsample_moments: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """The recentered subsample statistics, one per subsample draw."""
    solver = solver or StatisticSolver(system, objective)
    n_alt = system.a_data.shape[0] // 2
    n = len(data)
    n_s = subsample_size(n, n_alt)
    b_hat = data.moment_vector(n_alt, cfg.use_weights)
    recenter = sp.csr_matrix(system.a_data) @ nu_hat - b_hat
    if subsample_moments is None:
        subsample_moments = precompute_subsample_moments(data, cfg, n_alt)
    stats = np.empty(cfg.n_subsamples)
    for l, b_sub in enumerate(subsample_moments):
        value, _ = solver.minimum(b_sub + recenter, theta0)
        stats[l] = n_s * value
    return stats


def precompute_subsample_moments(
    data: MicroData, cfg: InferenceConfig, n_alternatives: int
) -> list[np.ndarray]:
    order = data.canonical_order()
    n_s = subsample_size(len(data), n_alternatives)
    moments = []
    for l in range(cfg.n_subsamples):
        picked = draw_subsample(data, n_s, (cfg.seed, l), order)
        sub = MicroData(data.voucher[picked], data.choice[picked], data.weight[picked])
        moments.append(sub.moment_vector(n_alternatives, cfg.use_weights))
    return moments


def critical_value(stats: np.ndarray, alpha: float) -> float:
    """Upper order statistic at index ceil((1 - alpha) * B) of the sorted draws."""
    rank = math.ceil((1 - alpha) * stats.size)
    rank = min(max(rank, 1), stats.size)
    return float(np.sort(stats)[rank - 1])


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float | None
    upper: float | None
    is_empty: bool
    alpha: float
    n_subsamples: int
    subsample_n: int
    seed: int
    grid: np.ndarray = field(repr=False, default=None)
    accepted: np.ndarray = field(repr=False, default=None)
    bound_result: baseline.BoundResult | None = None


def _build_problem(target, shares, config, spec, policy):
    if spec is None:
        problem = baseline.build_problem(target, shares, config, policy)
    else:
        problem = parametric.build_problem(spec, target, shares, config)
    return problem.system, problem.objective


def _objective_range(system: ConstraintSystem, objective: np.ndarray, backend: str):
    """Attainable parameter range over the deterministic rows alone."""
    values = []
    for sense in ("min", "max"):
        lp = LinearProgram(
            objective=objective,
            a_eq=system.a_eq if system.a_eq.shape[0] else None,
            b_eq=system.b_eq if system.a_eq.shape[0] else None,
            a_ub=system.a_ub if system.a_ub.shape[0] else None,
            b_ub=system.b_ub if system.a_ub.shape[0] else None,
            lower=system.lower,
            upper=system.upper,
            sense=sense,
        )
        res = solve_lp(lp, backend)
        if res.status != OPTIMAL:
            values.append(-math.inf if sense == "min" else math.inf)
        else:
            values.append(res.value)
    return values[0], values[1]


def confidence_interval(
    data: MicroData,
    target: WelfareTarget,
    config: ProgramConfig,
    cfg: InferenceConfig = InferenceConfig(),
    spec: ParametricSpec | None = None,
    policy: baseline.ShapePolicy = baseline.DEFAULT_POLICY,
    backend: str = "highs",
) -> ConfidenceInterval:
    """Test-inversion confidence interval for one welfare target.

    Hypothesized values are accepted when the scaled least-squares statistic
    does not exceed the empirical (1 - alpha)-quantile of the recentered
    subsample statistics; values the deterministic restrictions cannot attain
    at any demand system are rejected outright.
    """
    shares = shares_from_microdata(data, config, cfg.use_weights)
    system, objective = _build_problem(target, shares, config, spec, policy)
    estimate = baseline._interval(system, objective, backend)

    if cfg.theta_grid is not None:
        lo, hi, step = cfg.theta_grid
    else:
        if estimate is None:
            raise ValueError(
                "the specification is rejected at the observed shares; "
                "provide an explicit theta_grid or run the specification test"
            )
        tau = float(target.resolve_tau(config))
        step = cfg.grid_step if cfg.grid_step is not None else max(float(config.tau_sq) / 300.0, 1e-9)
        pad = max(tau / 2.0, 10.0 * step)
        lo, hi = estimate[0].value - pad, estimate[1].value + pad
    grid = np.arange(lo, hi + step / 2, step)

    feasible_lo, feasible_hi = _objective_range(system, objective, backend)
    solver = StatisticSolver(system, objective)
    n_alt = system.a_data.shape[0] // 2
    moments = precompute_subsample_moments(data, cfg, n_alt)
    n = len(data)
    n_s = subsample_size(n, n_alt)
    b_hat = data.moment_vector(n_alt, cfg.use_weights)
    a_data = sp.csr_matrix(system.a_data)

    accepted = np.zeros(grid.size, dtype=bool)
    for i, theta0 in enumerate(grid):
        if theta0 < feasible_lo - 1e-9 or theta0 > feasible_hi + 1e-9:
            continue
        if estimate is not None and estimate[0].value - 1e-9 <= theta0 <= estimate[1].value + 1e-9:
            # the empirical shares are attainable jointly with this value, so
            # the statistic is exactly zero and can never exceed the critical
            # value (subsample statistics are nonnegative)
            accepted[i] = True
            continue
        value, nu_hat = solver.minimum(b_hat, float(theta0))
        if not math.isfinite(value):
            continue
        ts = n * value
        recenter = a_data @ nu_hat - b_hat
        stats = np.empty(cfg.n_subsamples)
        for l, b_sub in enumerate(moments):
            sub_value, _ = solver.minimum(b_sub + recenter, float(theta0))
            stats[l] = n_s * sub_value
        accepted[i] = ts <= critical_value(stats, cfg.alpha)

    if not accepted.any():
        return ConfidenceInterval(
            None, None, True, cfg.alpha, cfg.n_subsamples, n_s, cfg.seed, grid, accepted,
            None if estimate is None else _as_bound_result(estimate),
        )
    kept = grid[accepted]
    return ConfidenceInterval(
        float(kept.min()), float(kept.max()), False,
        cfg.alpha, cfg.n_subsamples, n_s, cfg.seed, grid, accepted,
        None if estimate is None else _as_bound_result(estimate),
    )


def _as_bound_result(pair) -> baseline.BoundResult:
    low, high = pair
    return baseline.BoundResult(status="feasible", lower=float(low.value), upper=float(high.value))


@dataclass(frozen=True)
class SpecificationTest:
    p_value: float
    statistic: float
    subsample_statistics: np.ndarray
    subsample_n: int
    n_subsamples: int
    seed: int


def specification_pvalue(
    data: MicroData,
    config: ProgramConfig,
    cfg: InferenceConfig = InferenceConfig(),
    spec: ParametricSpec | None = None,
    policy: baseline.ShapePolicy = baseline.DEFAULT_POLICY,
) -> SpecificationTest:
    """Share of recentered subsample statistics at least as large as the
    full-sample statistic, for the no-parameter-restriction null."""
    shares = shares_from_microdata(data, config, cfg.use_weights)
    target = WelfareTarget("AC")  # any target: the objective row is not used
    system, _ = _build_problem(target, shares, config, spec, policy)
    solver = StatisticSolver(system, None)
    ts, nu_hat = test_statistic(data, system, use_weights=cfg.use_weights, solver=solver)
    stats = subsample_statistics(data, system, nu_hat, cfg, solver=solver)
    p_value = float(np.mean(stats >= ts))
    n_alt = system.a_data.shape[0] // 2
    return SpecificationTest(
        p_value=p_value,
        statistic=float(ts),
        subsample_statistics=stats,
        subsample_n=subsample_size(len(data), n_alt),
        n_subsamples=cfg.n_subsamples,
        seed=cfg.seed,
    )
