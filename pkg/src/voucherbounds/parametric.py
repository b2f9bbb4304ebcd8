"""Polynomial demand families: grid-relaxed bound programs.

Three nested families parameterize demand in prices: own-price differences
against the government alternative ("O"), additively separable polynomials
in every school's price ("AS"), and bivariate own-versus-other polynomials
("NS").  Logical, shape and adding-up restrictions are imposed on an
equidistant per-school price grid (an outer relaxation of imposing them
everywhere), data restrictions at the two observed price vectors, and the
welfare objectives are exact polynomial integrals along the subsidy path.

Prices are rescaled to units of the largest tuition before exponentiation
so every grid value lies in [0, 1]; benefit objectives are scaled back to
dollars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import (
    EnrollmentShares,
    ProgramConfig,
    WelfareTarget,
    breakpoints,
    cost_schedule,
)
from .baseline import BoundResult, _interval
from .solvers import ConstraintSystem, UNBOUNDED

FAMILIES = ("O", "AS", "NS")


class UnsupportedCombination(ValueError):
    """The requested family/target combination is not defined."""


@dataclass(frozen=True)
class ParametricSpec:
    """Family, polynomial degree and restriction-grid density."""

    family: str
    degree: int = 1
    grid_points: int = 4

    def __post_init__(self) -> None:
        family = str(self.family).upper()
        if family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        object.__setattr__(self, "family", family)
        if self.degree < 1:
            raise ValueError("degree must be at least 1")
        if self.grid_points < 1:
            raise ValueError("grid_points must be at least 1")


@dataclass(frozen=True)
class AlphaLayout:
    """Flat order of the polynomial coefficients.

    Separable families store (alternative, school, power) blocks.  The
    nonseparable family keeps the separable blocks for g and n and a
    (school, other school, own power, other power) block per voucher
    school.
    """

    family: str
    n_schools: int
    degree: int

    @property
    def n_alternatives(self) -> int:
        return self.n_schools + 2

    @property
    def dimension(self) -> int:
        j, k1 = self.n_schools, self.degree + 1
        if self.family in ("O", "AS"):
            return self.n_alternatives * j * k1
        return 2 * j * k1 + j * (j - 1) * k1 * k1

    def separable(self, alternative: int, school: int, power: int) -> int:
        k1 = self.degree + 1
        if self.family == "NS" and alternative >= 2:
            raise UnsupportedCombination("voucher alternatives are pairwise in NS")
        return (alternative * self.n_schools + school) * k1 + power

    def pairwise(self, school: int, other: int, own_power: int, other_power: int) -> int:
        if self.family != "NS":
            raise UnsupportedCombination("pairwise coefficients exist only in NS")
        k1 = self.degree + 1
        base = 2 * self.n_schools * k1
        rank = other if other < school else other - 1
        block = (self.n_schools - 1) * k1 * k1
        return base + school * block + (rank * k1 + own_power) * k1 + other_power


def price_grid(config: ProgramConfig, grid_points: int) -> tuple[tuple[Fraction, ...], ...]:
    """Equidistant per-school restriction grids {0, p/L, ..., p} (exact money)."""
    if grid_points < 1:
        raise ValueError("grid_points must be at least 1")
    grids = []
    for p in config.base_prices:
        if p == 0:
            grids.append((Fraction(0),))
        else:
            grids.append(tuple(p * l / grid_points for l in range(grid_points + 1)))
    return tuple(grids)


def poly_segment_integral(p_base: float, power: int, a_lo: float, a_hi: float) -> float:
    """Integral of (p_base + a)^power over [a_lo, a_hi]."""
    if a_lo > a_hi:
        raise ValueError("a_lo must not exceed a_hi")
    k1 = power + 1
    return ((p_base + a_hi) ** k1 - (p_base + a_lo) ** k1) / k1


def bipoly_segment_integral(
    p1: float, k1: int, p2: float, k2: int, a_lo: float, a_hi: float
) -> float:
    """Integral of (p1 + a)^k1 (p2 + a)^k2 over [a_lo, a_hi] via binomial expansion."""
    if a_lo > a_hi:
        raise ValueError("a_lo must not exceed a_hi")
    total = 0.0
    for l1 in range(k1 + 1):
        for l2 in range(k2 + 1):
            degree = l1 + l2 + 1
            total += (
                math.comb(k1, l1)
                * math.comb(k2, l2)
                * p1 ** (k1 - l1)
                * p2 ** (k2 - l2)
                * (a_hi**degree - a_lo**degree)
                / degree
            )
    return total


@dataclass(frozen=True)
class _Scaled:
    """Float views of the exact quantities, in units of the largest tuition."""

    scale: float
    base: np.ndarray                # scaled p(0)
    grids: tuple[tuple[float, ...], ...]

    @classmethod
    def build(cls, config: ProgramConfig, grid_points: int) -> "_Scaled":
        scale = float(max(config.base_prices)) or 1.0
        grids = tuple(
            tuple(float(g) / scale for g in school_grid)
            for school_grid in price_grid(config, grid_points)
        )
        base = np.array([float(p) for p in config.base_prices]) / scale
        return cls(scale=scale, base=base, grids=grids)

    def prices_at(self, config: ProgramConfig, tau: Fraction) -> np.ndarray:
        return np.array([float(p) for p in config.prices_at(tau)]) / self.scale

    def prices_removed(self, config: ProgramConfig, kappa: Fraction) -> np.ndarray:
        return np.array([float(p) for p in config.prices_removed(kappa)]) / self.scale

    def segments(self, config: ProgramConfig, tau: Fraction) -> tuple[int, list[float]]:
        j_tau, coarse = breakpoints(config, tau)
        return j_tau, [float(a) / self.scale for a in coarse]


def build_constraints(
    spec: ParametricSpec, config: ProgramConfig, shares: EnrollmentShares
) -> ConstraintSystem:
    """The grid-relaxed restriction set for the chosen family.

    Nonnegativity is imposed at each own-price grid level with other prices
    at their lowest point, adding-up at the lowest corner plus per-axis
    increment rows, monotone cross-price responses between consecutive grid
    points, and the two observed share vectors as data equalities; the
    own-price family adds invariance of the demand gap against ``g`` to
    other schools' prices.
    """
    j = config.n_schools
    if spec.family == "NS" and j < 2:
        raise UnsupportedCombination("the nonseparable family needs at least two schools")
    layout = AlphaLayout(spec.family, j, spec.degree)
    scaled = _Scaled.build(config, spec.grid_points)
    k_rng = range(spec.degree + 1)
    n_alt = layout.n_alternatives
    d = layout.dimension
    grids = scaled.grids
    base_pt = [g[0] for g in grids]

    eq_rows: list[np.ndarray] = []
    eq_rhs: list[float] = []
    ge_rows: list[np.ndarray] = []  # rows with row @ x >= 0

    def sep_fill(row: np.ndarray, alt: int, school: int, values) -> None:
        for k in k_rng:
            row[layout.separable(alt, school, k)] += values[k]

    def pair_fill(row: np.ndarray, school: int, other: int, own_vals, other_vals) -> None:
        for kj in k_rng:
            for km in k_rng:
                row[layout.pairwise(school, other, kj, km)] += own_vals[kj] * other_vals[km]

    def powers(x: float) -> list[float]:
        return [x**k for k in k_rng]

    def demand_row(alt: int, prices: np.ndarray) -> np.ndarray:
        """Coefficients expressing q_alt at a price vector."""
        row = np.zeros(d)
        if spec.family in ("O", "AS") or alt < 2:
            for m in range(j):
                sep_fill(row, alt, m, powers(prices[m]))
        else:
            school = alt - 2
            for m in range(j):
                if m != school:
                    pair_fill(row, school, m, powers(prices[school]), powers(prices[m]))
        return row

    base_powers = [powers(b) for b in base_pt]

    # nonnegativity of each voucher school's demand along its own grid,
    # other prices at their lowest grid point
    for school in range(j):
        alt = school + 2
        for level in grids[school]:
            row = np.zeros(d)
            if spec.family in ("O", "AS"):
                sep_fill(row, alt, school, powers(level))
                for m in range(j):
                    if m != school:
                        sep_fill(row, alt, m, base_powers[m])
            else:
                for m in range(j):
                    if m != school:
                        pair_fill(row, school, m, powers(level), base_powers[m])
            ge_rows.append(row)

    # nonnegativity of g and n at the lowest corner
    corner = np.array(base_pt)
    for alt in (0, 1):
        ge_rows.append(demand_row(alt, corner))

    # adding-up: one corner equality plus per-axis increment invariance
    row = np.zeros(d)
    for alt in range(n_alt):
        row += demand_row(alt, corner)
    eq_rows.append(row)
    eq_rhs.append(1.0)

    for school in range(j):
        grid = grids[school]
        for lo, hi in zip(grid, grid[1:]):
            deltas = [hi**k - lo**k for k in k_rng]
            row = np.zeros(d)
            for alt in (0, 1):
                sep_fill(row, alt, school, deltas)
            if spec.family in ("O", "AS"):
                for alt in range(2, n_alt):
                    sep_fill(row, alt, school, deltas)
            else:
                for other in range(j):
                    if other == school:
                        continue
                    pair_fill(row, school, other, deltas, base_powers[other])
                    pair_fill(row, other, school, base_powers[other], deltas)
            eq_rows.append(row)
            eq_rhs.append(0.0)

    # pairwise blocks: simultaneous two-axis moves must also leave the total
    # unchanged (the separable blocks have no cross terms)
    if spec.family == "NS":
        for s1 in range(j):
            for s2 in range(s1 + 1, j):
                for lo1, hi1 in zip(grids[s1], grids[s1][1:]):
                    d1 = [hi1**k - lo1**k for k in k_rng]
                    for lo2, hi2 in zip(grids[s2], grids[s2][1:]):
                        d2 = [hi2**k - lo2**k for k in k_rng]
                        row = np.zeros(d)
                        pair_fill(row, s1, s2, d1, d2)
                        pair_fill(row, s2, s1, d2, d1)
                        eq_rows.append(row)
                        eq_rhs.append(0.0)

    # cross-price monotonicity between consecutive grid points
    for school in range(j):
        grid = grids[school]
        for lo, hi in zip(grid, grid[1:]):
            deltas = [hi**k - lo**k for k in k_rng]
            for alt in range(n_alt):
                if alt - 2 == school:
                    continue
                if spec.family in ("O", "AS") or alt < 2:
                    row = np.zeros(d)
                    sep_fill(row, alt, school, deltas)
                    ge_rows.append(row)
                else:
                    other_school = alt - 2
                    for l_own, own_level in enumerate(grids[other_school]):
                        row = np.zeros(d)
                        pair_fill(row, other_school, school, powers(own_level), deltas)
                        ge_rows.append(row)

    # own-price family: the demand gap against g cannot move with other prices
    if spec.family == "O":
        for alt in range(1, n_alt):
            own = alt - 2 if alt >= 2 else None
            for school in range(j):
                if school == own:
                    continue
                grid = grids[school]
                for lo, hi in zip(grid, grid[1:]):
                    deltas = [hi**k - lo**k for k in k_rng]
                    row = np.zeros(d)
                    sep_fill(row, alt, school, deltas)
                    sep_fill(row, 0, school, [-v for v in deltas])
                    eq_rows.append(row)
                    eq_rhs.append(0.0)

    # data rows, canonical moment order
    data = []
    for prices in (scaled.prices_at(config, Fraction(0)), scaled.prices_at(config, config.tau_sq)):
        for alt in range(n_alt):
            data.append(demand_row(alt, prices))
    a_data = np.vstack(data)

    a_ub = -np.vstack(ge_rows) if ge_rows else np.zeros((0, d))
    return ConstraintSystem(
        a_data=a_data,
        b_data=shares.vector,
        a_eq=np.vstack(eq_rows),
        b_eq=np.array(eq_rhs),
        a_ub=a_ub,
        b_ub=np.zeros(a_ub.shape[0]),
        lower=np.full(d, -np.inf),
        upper=np.full(d, np.inf),
    )


def _benefit_objective(
    spec: ParametricSpec,
    config: ProgramConfig,
    scaled: _Scaled,
    tau: Fraction,
    removed: int = 0,
) -> np.ndarray:
    """Exact path integral of the covered demand mass, in dollars.

    With ``removed`` schools pinned at base prices, the integral runs over
    the surviving schools up to the first surviving breakpoint and then
    follows the ordinary segments.
    """
    layout = AlphaLayout(spec.family, config.n_schools, spec.degree)
    k_rng = range(spec.degree + 1)
    j = config.n_schools
    coeffs = np.zeros(layout.dimension)
    j_tau, seg = scaled.segments(config, tau)
    p_tau = scaled.prices_at(config, tau)
    p_base = scaled.base

    def add_separable(alt: int, m: int, values) -> None:
        for k in k_rng:
            coeffs[layout.separable(alt, m, k)] += values[k]

    def add_pairwise(school: int, m: int, own_vals, other_vals) -> None:
        for kj in k_rng:
            for km in k_rng:
                coeffs[layout.pairwise(school, m, kj, km)] += own_vals[kj] * other_vals[km]

    def accumulate(school: int, m: int, fixed_below: int, a_lo: float, a_hi: float) -> None:
        """Contribution of coefficient block (school, m) on one segment."""
        alt = school + 2
        if spec.family in ("O", "AS"):
            if m < fixed_below:
                width = a_hi - a_lo
                add_separable(alt, m, [p_base[m] ** k * width for k in k_rng])
            else:
                add_separable(
                    alt, m, [poly_segment_integral(p_tau[m], k, a_lo, a_hi) for k in k_rng]
                )
        else:
            if m == school:
                return
            if m < fixed_below:
                own = [poly_segment_integral(p_tau[school], k, a_lo, a_hi) for k in k_rng]
                add_pairwise(school, m, own, [p_base[m] ** k for k in k_rng])
            else:
                for kj in k_rng:
                    for km in k_rng:
                        coeffs[layout.pairwise(school, m, kj, km)] += bipoly_segment_integral(
                            p_tau[school], kj, p_tau[m], km, a_lo, a_hi
                        )

    if removed:
        cutoff = seg[removed + 1] if removed <= j_tau else seg[-1]
        if cutoff > 0:
            for school in range(removed, j):
                for m in range(j):
                    accumulate(school, m, removed, 0.0, cutoff)
        start = removed + 1
    else:
        start = 0
    for l in range(start, j_tau + 1):
        a_lo, a_hi = seg[l], seg[l + 1]
        if a_hi <= a_lo:
            continue
        for school in range(l, j):
            for m in range(j):
                accumulate(school, m, l, a_lo, a_hi)
    return coeffs * scaled.scale


def _cost_objective(
    spec: ParametricSpec,
    config: ProgramConfig,
    scaled: _Scaled,
    tau: Fraction,
    kappa: Fraction | None = None,
) -> np.ndarray:
    layout = AlphaLayout(spec.family, config.n_schools, spec.degree)
    k_rng = range(spec.degree + 1)
    j = config.n_schools
    coeffs = np.zeros(layout.dimension)
    if kappa is None:
        p_tau = scaled.prices_at(config, tau)
        cost_tau = cost_schedule(config, tau)
    else:
        p_tau = scaled.prices_removed(config, kappa)
        cost_tau = cost_schedule(config, tau, kappa)
    p0 = scaled.base
    cost_0 = cost_schedule(config, 0)

    for alt in range(layout.n_alternatives):
        if spec.family in ("O", "AS") or alt < 2:
            for m in range(j):
                for k in k_rng:
                    coeffs[layout.separable(alt, m, k)] += (
                        cost_tau[alt] * p_tau[m] ** k - cost_0[alt] * p0[m] ** k
                    )
        else:
            school = alt - 2
            for m in range(j):
                if m == school:
                    continue
                for kj in k_rng:
                    for km in k_rng:
                        coeffs[layout.pairwise(school, m, kj, km)] += (
                            cost_tau[alt] * p_tau[school] ** kj * p_tau[m] ** km
                            - cost_0[alt] * p0[school] ** kj * p0[m] ** km
                        )
    return coeffs


def build_objective(
    spec: ParametricSpec, target: WelfareTarget, config: ProgramConfig
) -> np.ndarray:
    """Objective vector over the coefficient layout for any welfare target."""
    if config.n_schools < 2 and spec.family == "NS":
        raise UnsupportedCombination("the nonseparable family needs at least two schools")
    scaled = _Scaled.build(config, spec.grid_points)
    tau = target.resolve_tau(config)

    def level(kind: str, at_tau: Fraction, removed: int, kappa: Fraction | None) -> np.ndarray:
        if kind == "AB":
            return _benefit_objective(spec, config, scaled, at_tau, removed)
        if kind == "AC":
            return _cost_objective(spec, config, scaled, at_tau, kappa)
        return level("AB", at_tau, removed, kappa) - level("AC", at_tau, removed, kappa)

    if target.is_removal:
        removed = config.removed_count(target.kappa)
        return level(target.base_kind, tau, removed, target.kappa)
    if target.is_delta:
        return level(target.base_kind, tau, 0, None) - level(target.base_kind, config.tau_sq, 0, None)
    return level(target.base_kind, tau, 0, None)


@dataclass(frozen=True)
class ParametricProblem:
    config: ProgramConfig
    spec: ParametricSpec
    layout: AlphaLayout
    system: ConstraintSystem
    objective: np.ndarray


def build_problem(
    spec: ParametricSpec,
    target: WelfareTarget,
    shares: EnrollmentShares,
    config: ProgramConfig,
) -> ParametricProblem:
    system = build_constraints(spec, config, shares)
    objective = build_objective(spec, target, config)
    layout = AlphaLayout(spec.family, config.n_schools, spec.degree)
    return ParametricProblem(config, spec, layout, system, objective)


def bounds(
    spec: ParametricSpec,
    target: WelfareTarget,
    shares: EnrollmentShares,
    config: ProgramConfig,
    backend: str = "highs",
) -> BoundResult:
    """Bound interval for ``target`` under the polynomial family ``spec``.

    Infeasibility is a specification rejection: no demand function in the
    family matches the observed shares under the grid restrictions.
    """
    problem = build_problem(spec, target, shares, config)
    pair = _interval(problem.system, problem.objective, backend)
    if pair is None:
        return BoundResult(status="infeasible", diagnostics={"backend": backend, "family": spec.family})
    low, high = pair
    lower = -np.inf if low.status == UNBOUNDED else low.value
    upper = np.inf if high.status == UNBOUNDED else high.value
    return BoundResult(
        status="feasible",
        lower=float(lower) + 0.0,  # normalizes negative zero
        upper=float(upper) + 0.0,
        diagnostics={
            "backend": backend,
            "family": spec.family,
            "degree": spec.degree,
            "iterations": (low.iterations, high.iterations),
        },
    )
