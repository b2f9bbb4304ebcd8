"""Nonparametric bound programs over piecewise-constant demand cells.

Demand restricted only by probability logic, weak-substitutes monotonicity
and the two observed share vectors is, for bound purposes, fully captured
by one demand level per alternative per reduced cell.  This module builds
that linear system (an outer relaxation: dropping shape rows can only widen
the interval) and the linear objectives for every welfare target, then
solves for the bound interval.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .model import (
    EnrollmentShares,
    ProgramConfig,
    WelfareTarget,
    breakpoints,
    cost_schedule,
)
from .partition import (
    Box,
    CellIndex,
    Point,
    PricePartition,
    build_partition,
    reduced_cells,
    removal_box,
    _strictly_above,
)
from .solvers import (
    INFEASIBLE,
    UNBOUNDED,
    ConstraintSystem,
    LpSolution,
    solve_lp,
)


@dataclass(frozen=True)
class ShapePolicy:
    """Which index families back the pairwise monotonicity rows.

    The complete family is exponential in the number of equal coordinates;
    ``default`` keeps the empty set, every singleton and the full set --
    any subset still yields a valid outer set.  ``full`` enumerates all
    subsets and refuses beyond ``max_full`` equal coordinates.
    """

    mode: str = "default"
    max_full: int = 12

    def subsets(self, equal_alternatives: tuple[int, ...]):
        if self.mode == "default":
            yield frozenset()
            for alt in equal_alternatives:
                yield frozenset((alt,))
            if len(equal_alternatives) > 1:
                yield frozenset(equal_alternatives)
        elif self.mode == "full":
            if len(equal_alternatives) > self.max_full:
                raise ValueError(
                    f"full shape enumeration limited to {self.max_full} equal coordinates"
                )
            for r in range(len(equal_alternatives) + 1):
                for combo in itertools.combinations(equal_alternatives, r):
                    yield frozenset(combo)
        else:
            raise ValueError(f"unknown shape policy {self.mode!r}")


DEFAULT_POLICY = ShapePolicy()


@dataclass(frozen=True)
class BetaLayout:
    """Flat variable order: alternative-major over the reduced cells."""

    index: CellIndex
    n_alternatives: int

    def position(self, alternative: int, cell: int) -> int:
        return alternative * len(self.index) + cell

    @property
    def dimension(self) -> int:
        return self.n_alternatives * len(self.index)


@dataclass(frozen=True)
class BoundResult:
    """A bound interval, or the verdict that the specification is rejected."""

    status: str  # "feasible" | "infeasible"
    lower: float | None = None
    upper: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.status == "feasible":
            if self.lower is None or self.upper is None:
                raise ValueError("feasible bounds need both endpoints")
            if self.lower > self.upper + 1e-6:
                raise ValueError(f"crossed bounds: [{self.lower}, {self.upper}]")

    @property
    def is_feasible(self) -> bool:
        return self.status == "feasible"


@dataclass(frozen=True)
class BoundProblem:
    """Assembled ingredients for one target: reusable by bounds and inference."""

    config: ProgramConfig
    partition: PricePartition
    index: CellIndex
    layout: BetaLayout
    system: ConstraintSystem
    objective: np.ndarray


def _pair_relations(a: Box, b: Box) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(coords where b strictly above a, coords equal); exhaustive by validation."""
    above, equal = [], []
    for j, (pa, pb) in enumerate(zip(a.projections, b.projections)):
        if pa == pb:
            equal.append(j)
        elif _strictly_above(pb, pa):
            above.append(j)
    return tuple(above), tuple(equal)


def build_constraints(
    index: CellIndex,
    shares: EnrollmentShares,
    policy: ShapePolicy = DEFAULT_POLICY,
) -> ConstraintSystem:
    """Unit-box, sum-to-one, pairwise-shape and data-pinning rows.

    For each ordered cell pair (w, w') the shape family states that demand
    summed over the schools priced strictly higher in w' plus any
    policy-selected subset of the unchanged alternatives is weakly larger
    at w than at w'.
    """
    config = index.partition.config
    n_alt = len(config.alternatives)
    layout = BetaLayout(index, n_alt)
    d = layout.dimension
    cells = index.cells

    # sum-to-one per cell
    eq_rows, eq_cols, eq_vals = [], [], []
    for w in range(len(cells)):
        for alt in range(n_alt):
            eq_rows.append(w)
            eq_cols.append(layout.position(alt, w))
            eq_vals.append(1.0)
    a_eq = sp.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(cells), d))
    b_eq = np.ones(len(cells))

    # data rows pin the two observed cells, canonical moment order
    w0 = index.position(Box(tuple(Point(p) for p in config.base_prices)))
    w1 = index.position(Box(tuple(Point(p) for p in config.prices_at(config.tau_sq))))
    data_rows, data_cols = [], []
    for r, (cell, _) in enumerate([(w0, 0)] * n_alt + [(w1, 1)] * n_alt):
        data_rows.append(r)
        data_cols.append(layout.position(r % n_alt, cell))
    a_data = sp.csr_matrix((np.ones(2 * n_alt), (data_rows, data_cols)), shape=(2 * n_alt, d))
    b_data = shares.vector

    # pairwise shape rows
    ub_rows: list[int] = []
    ub_cols: list[int] = []
    ub_vals: list[float] = []
    seen: set[tuple[int, int, frozenset[int]]] = set()
    row = 0
    all_alts = frozenset(range(n_alt))
    for iw, w_box in enumerate(cells):
        for iv, v_box in enumerate(cells):
            if iw == iv:
                continue
            above, equal = _pair_relations(w_box, v_box)
            above_alts = frozenset(2 + j for j in above)
            equal_alts = (0, 1) + tuple(2 + j for j in equal)
            for extra in policy.subsets(equal_alts):
                s = above_alts | extra
                if not s or s == all_alts:
                    continue
                key = (iw, iv, s)
                if key in seen:
                    continue
                seen.add(key)
                # sum_{a in s} beta[a, v] - beta[a, w] <= 0
                for alt in s:
                    ub_rows += [row, row]
                    ub_cols += [layout.position(alt, iv), layout.position(alt, iw)]
                    ub_vals += [1.0, -1.0]
                row += 1
    a_ub = sp.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(row, d))
    b_ub = np.zeros(row)

    return ConstraintSystem(
        a_data=a_data,
        b_data=b_data,
        a_eq=a_eq,
        b_eq=b_eq,
        a_ub=a_ub,
        b_ub=b_ub,
        lower=np.zeros(d),
        upper=np.ones(d),
    )


def _benefit_coefficients(
    partition: PricePartition, index: CellIndex, layout: BetaLayout, tau: Fraction
) -> np.ndarray:
    """Willingness-to-pay integral as per-variable weights on the tau path."""
    config = partition.config
    n_schools = config.n_schools
    coeffs = np.zeros(layout.dimension)
    for element in partition.elements:
        for tag in element.path_tags:
            if tag.tau != tau:
                continue
            width = float(tag.a_hi - tag.a_lo)
            cell = index.position(element.box)
            for school in range(tag.segment, n_schools):
                coeffs[layout.position(2 + school, cell)] += width
    return coeffs


def _benefit_coefficients_removed(
    partition: PricePartition, index: CellIndex, layout: BetaLayout
) -> np.ndarray:
    """Removal variant: below the removal cutoff the integrand runs over the
    pinned-price copies of the path cells and only the surviving schools."""
    config = partition.config
    tau = partition.tau_sq
    removed = index.removed_count
    n_schools = config.n_schools
    j_tau, coarse = breakpoints(config, tau)
    cutoff = coarse[removed + 1] if removed <= j_tau else tau
    coeffs = np.zeros(layout.dimension)
    for element in partition.elements:
        for tag in element.path_tags:
            if tag.tau != tau:
                continue
            width = float(tag.a_hi - tag.a_lo)
            if tag.a_hi <= cutoff:
                cell = index.position(removal_box(config, element.box, removed))
                start = removed
            else:
                cell = index.position(element.box)
                start = tag.segment
            for school in range(start, n_schools):
                coeffs[layout.position(2 + school, cell)] += width
    return coeffs


def _cost_coefficients(
    partition: PricePartition,
    index: CellIndex,
    layout: BetaLayout,
    tau: Fraction,
    kappa: Fraction | None = None,
) -> np.ndarray:
    config = partition.config
    coeffs = np.zeros(layout.dimension)
    if kappa is None:
        cell_tau = index.position(Box(tuple(Point(p) for p in config.prices_at(tau))))
        cost_tau = cost_schedule(config, tau)
    else:
        cell_tau = index.position(Box(tuple(Point(p) for p in config.prices_removed(kappa))))
        cost_tau = cost_schedule(config, tau, kappa)
    cell_0 = index.position(Box(tuple(Point(p) for p in config.base_prices)))
    cost_0 = cost_schedule(config, 0)
    for alt in range(len(config.alternatives)):
        coeffs[layout.position(alt, cell_tau)] += cost_tau[alt]
        coeffs[layout.position(alt, cell_0)] -= cost_0[alt]
    return coeffs


def build_objective(
    partition: PricePartition,
    index: CellIndex,
    target: WelfareTarget,
    config: ProgramConfig,
) -> np.ndarray:
    """Linear objective over the beta layout for any welfare target."""
    layout = BetaLayout(index, len(config.alternatives))
    tau = target.resolve_tau(config)

    def level(kind: str, at_tau: Fraction) -> np.ndarray:
        if kind == "AB":
            return _benefit_coefficients(partition, index, layout, at_tau)
        if kind == "AC":
            return _cost_coefficients(partition, index, layout, at_tau)
        return level("AB", at_tau) - level("AC", at_tau)

    if target.is_removal:
        if target.base_kind == "AB":
            return _benefit_coefficients_removed(partition, index, layout)
        if target.base_kind == "AC":
            return _cost_coefficients(partition, index, layout, tau, target.kappa)
        return _benefit_coefficients_removed(partition, index, layout) - _cost_coefficients(
            partition, index, layout, tau, target.kappa
        )
    if target.is_delta:
        return level(target.base_kind, tau) - level(target.base_kind, config.tau_sq)
    return level(target.base_kind, tau)


def build_problem(
    target: WelfareTarget,
    shares: EnrollmentShares,
    config: ProgramConfig,
    policy: ShapePolicy = DEFAULT_POLICY,
) -> BoundProblem:
    """Partition, reduce, constrain and weigh: everything one target needs."""
    tau = target.resolve_tau(config)
    tau_c = tau if tau != config.tau_sq else None
    partition = build_partition(config, config.tau_sq, tau_c)
    index = reduced_cells(partition, target.kappa)
    system = build_constraints(index, shares, policy)
    objective = build_objective(partition, index, target, config)
    layout = BetaLayout(index, len(config.alternatives))
    return BoundProblem(config, partition, index, layout, system, objective)


def _interval(
    system: ConstraintSystem, objective: np.ndarray, backend: str
) -> tuple[LpSolution, LpSolution] | None:
    low = solve_lp(system.lp(objective, "min"), backend)
    if low.status == INFEASIBLE:
        return None
    high = solve_lp(system.lp(objective, "max"), backend)
    return low, high


def bounds(
    target: WelfareTarget,
    shares: EnrollmentShares,
    config: ProgramConfig,
    policy: ShapePolicy = DEFAULT_POLICY,
    backend: str = "highs",
) -> BoundResult:
    """Sharp-outer bound interval for ``target`` under the baseline restrictions.

    An infeasible program means the monotone-demand model cannot rationalize
    the observed shares: the specification is rejected rather than bounded.
    """
    problem = build_problem(target, shares, config, policy)
    pair = _interval(problem.system, problem.objective, backend)
    if pair is None:
        return BoundResult(status="infeasible", diagnostics={"backend": backend})
    low, high = pair
    lower = -np.inf if low.status == UNBOUNDED else low.value
    upper = np.inf if high.status == UNBOUNDED else high.value
    return BoundResult(
        status="feasible",
        lower=float(lower) + 0.0,  # normalizes negative zero
        upper=float(upper) + 0.0,
        diagnostics={
            "backend": backend,
            "iterations": (low.iterations, high.iterations),
            "cells": len(problem.index),
            "shape_rows": problem.system.a_ub.shape[0],
        },
    )
