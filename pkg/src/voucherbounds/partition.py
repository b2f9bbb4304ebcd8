"""Finite partition of the price set traced out by the subsidy paths.

Every welfare parameter depends on demand only along the curves
``a -> min(p(0), p(tau) + a)`` for the voucher amounts involved, plus the
finitely many price vectors pinned by data.  This module computes the
breakpoint closure that splits those curves into segments whose coordinate
projections are pairwise equal-or-disjoint, and derives the reduced cell
index over which the piecewise-constant demand variables live.

All arithmetic is exact (:class:`fractions.Fraction`): the equal-or-disjoint
validation is an exact comparison, never a tolerance check.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple

from .model import MoneyLike, ProgramConfig, as_money, breakpoints


class InternalInvariantViolation(AssertionError):
    """The partition algorithm produced an inconsistent structure (a bug)."""


class Point(NamedTuple):
    """A single price on one coordinate."""

    value: Fraction


class OpenInterval(NamedTuple):
    """An open price interval (lo, hi) on one coordinate, lo < hi."""

    lo: Fraction
    hi: Fraction


Projection = Point | OpenInterval


def _strictly_above(a: Projection, b: Projection) -> bool:
    """True when every price in ``a`` strictly exceeds every price in ``b``."""
    a_min = a.value if isinstance(a, Point) else a.lo
    b_max = b.value if isinstance(b, Point) else b.hi
    if isinstance(a, Point) and isinstance(b, Point):
        return a_min > b_max
    # An open endpoint may touch: (2, 3) lies strictly above both {2} and (1, 2).
    return a_min >= b_max


def projections_comparable(a: Projection, b: Projection) -> bool:
    """The equal-or-disjoint requirement for a pair of coordinate projections."""
    return a == b or _strictly_above(a, b) or _strictly_above(b, a)


@dataclass(frozen=True)
class Box:
    """A product of per-coordinate projections; a cell of the price partition."""

    projections: tuple[Projection, ...]

    def sort_key(self) -> tuple:
        return tuple(
            (p.value, p.value) if isinstance(p, Point) else (p.lo, p.hi)
            for p in self.projections
        )

    @property
    def is_singleton(self) -> bool:
        return all(isinstance(p, Point) for p in self.projections)

    def contains(self, point: Iterable[Fraction]) -> bool:
        for proj, x in zip(self.projections, point):
            if isinstance(proj, Point):
                if x != proj.value:
                    return False
            elif not (proj.lo < x < proj.hi):
                return False
        return True


class PathTag(NamedTuple):
    """Where a cell came from: the path at ``tau``, parameter interval (a_lo, a_hi).

    ``segment`` is the index l of the enclosing coarse breakpoint segment
    (a_l, a_{l+1}); the willingness-to-pay integrand over this cell sums
    demand for schools l+1..J.
    """

    tau: Fraction
    segment: int
    a_lo: Fraction
    a_hi: Fraction


@dataclass(frozen=True)
class PartitionElement:
    box: Box
    path_tags: tuple[PathTag, ...]
    vertex_taus: tuple[Fraction, ...]


@dataclass(frozen=True)
class PricePartition:
    """The validated partition, with provenance tags for objective assembly."""

    config: ProgramConfig
    tau_sq: Fraction
    tau_c: Fraction | None
    elements: tuple[PartitionElement, ...]

    @property
    def taus(self) -> tuple[Fraction, ...]:
        if self.tau_c is None or self.tau_c == self.tau_sq:
            return (self.tau_sq,)
        return (self.tau_sq, self.tau_c)

    def vertex_box(self, tau: MoneyLike) -> Box:
        """The singleton cell {p(tau)} for tau in {0, tau_sq, tau_c}."""
        prices = self.config.prices_at(tau)
        box = Box(tuple(Point(p) for p in prices))
        for element in self.elements:
            if element.box == box:
                return box
        raise KeyError(f"no singleton cell at tau={tau}")


def breakpoint_closure(
    config: ProgramConfig,
    tau_sq: MoneyLike,
    tau_c: MoneyLike | None = None,
) -> dict[Fraction, tuple[Fraction, ...]]:
    """Fixed point of the cross-path breakpoint exchange.

    Starting from the coarse breakpoints of each path, repeatedly map each
    newly added point ``a`` of one path through
    ``min(p_j(0), a + p_j(tau')) - p_j(tau)`` for every school ``j`` and add
    the results to the other path, until both sets stabilize.  Candidates
    outside the open range (0, tau) parameterize empty sub-intervals and are
    discarded.
    """
    taus = [as_money(tau_sq)]
    if tau_c is not None:
        t_c = as_money(tau_c)
        if t_c != taus[0]:
            taus.append(t_c)
    base = config.base_prices
    prices = {t: config.prices_at(t) for t in taus}
    points: dict[Fraction, set[Fraction]] = {
        t: set(breakpoints(config, t)[1]) for t in taus
    }
    fresh = {t: set(points[t]) for t in taus}

    guard = 0
    while any(fresh[t] for t in taus) and len(taus) == 2:
        guard += 1
        if guard > 10_000:
            raise InternalInvariantViolation("breakpoint closure failed to terminate")
        added: dict[Fraction, set[Fraction]] = {t: set() for t in taus}
        for tau, other in ((taus[0], taus[1]), (taus[1], taus[0])):
            for a in fresh[other]:
                for j in range(config.n_schools):
                    candidate = min(base[j], a + prices[other][j]) - prices[tau][j]
                    if Fraction(0) < candidate < tau and candidate not in points[tau]:
                        added[tau].add(candidate)
        for t in taus:
            points[t] |= added[t]
        fresh = added

    return {t: tuple(sorted(points[t])) for t in taus}


def _path_box(
    config: ProgramConfig, tau: Fraction, a_lo: Fraction, a_hi: Fraction
) -> Box:
    """Coordinate image of ``a -> min(p(0), p(tau) + a)`` over open (a_lo, a_hi)."""
    projections: list[Projection] = []
    for p0, pt in zip(config.base_prices, config.prices_at(tau)):
        clamp = p0 - pt  # = min(tau, p0); always a closure point of this path
        if a_lo >= clamp:
            projections.append(Point(p0))
        else:
            if a_hi > clamp:
                raise InternalInvariantViolation(
                    f"segment ({a_lo}, {a_hi}) straddles the clamp point {clamp}"
                )
            projections.append(OpenInterval(pt + a_lo, pt + a_hi))
    return Box(tuple(projections))


def _coarse_segment(coarse: tuple[Fraction, ...], a_lo: Fraction, a_hi: Fraction) -> int:
    """Index l of the positive-width coarse segment [a_l, a_{l+1}] containing (a_lo, a_hi)."""
    for l in range(len(coarse) - 1):
        if coarse[l] < coarse[l + 1] and coarse[l] <= a_lo and a_hi <= coarse[l + 1]:
            return l
    raise InternalInvariantViolation(
        f"refined segment ({a_lo}, {a_hi}) not inside any coarse segment {coarse}"
    )


def build_partition(
    config: ProgramConfig,
    tau_sq: MoneyLike | None = None,
    tau_c: MoneyLike | None = None,
) -> PricePartition:
    """Partition the subsidy-path price set into equal-or-disjoint cells.

    Emits one open cell per consecutive closure-breakpoint pair on each path
    plus the singleton cells {p(0)}, {p(tau_sq)} and, when a counterfactual
    amount is given, {p(tau_c)}.  Identical cells arising on both paths (or
    collapsing onto a singleton) are merged with their provenance tags
    combined.  The pairwise equal-or-disjoint property is validated exactly
    before returning.
    """
    t_sq = config.tau_sq if tau_sq is None else as_money(tau_sq)
    t_c = None if tau_c is None else as_money(tau_c)
    closure = breakpoint_closure(config, t_sq, t_c)

    merged: dict[Box, tuple[list[PathTag], list[Fraction]]] = {}

    def _add(box: Box, tag: PathTag | None, vertex: Fraction | None) -> None:
        tags, vertices = merged.setdefault(box, ([], []))
        if tag is not None:
            tags.append(tag)
        if vertex is not None and vertex not in vertices:
            vertices.append(vertex)

    for tau, refined in closure.items():
        coarse = breakpoints(config, tau)[1]
        for a_lo, a_hi in zip(refined, refined[1:]):
            segment = _coarse_segment(coarse, a_lo, a_hi)
            box = _path_box(config, tau, a_lo, a_hi)
            _add(box, PathTag(tau, segment, a_lo, a_hi), None)

    vertex_taus = [Fraction(0), t_sq] + ([t_c] if t_c is not None else [])
    for tau in vertex_taus:
        box = Box(tuple(Point(p) for p in config.prices_at(tau)))
        _add(box, None, tau)

    elements = tuple(
        PartitionElement(box, tuple(tags), tuple(vertices))
        for box, (tags, vertices) in sorted(merged.items(), key=lambda kv: kv[0].sort_key())
    )

    validate_overlap([e.box for e in elements])
    return PricePartition(config=config, tau_sq=t_sq, tau_c=t_c, elements=elements)


def validate_overlap(boxes: Iterable[Box]) -> None:
    """Exact pairwise equal-or-disjoint check on every coordinate."""
    boxes = list(boxes)
    for i, a in enumerate(boxes):
        for b in boxes[i + 1 :]:
            for j, (pa, pb) in enumerate(zip(a.projections, b.projections)):
                if not projections_comparable(pa, pb):
                    raise InternalInvariantViolation(
                        f"coordinate {j} projections {pa} and {pb} partially overlap"
                    )


@dataclass(frozen=True)
class CellIndex:
    """Stable variable index over the reduced cells (optionally removal-extended).

    ``cells`` lists the deduplicated boxes in canonical order; ``kappa`` and
    ``removed_count`` record the removal extension when present.
    """

    partition: PricePartition
    cells: tuple[Box, ...]
    kappa: Fraction | None = None
    removed_count: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "_lookup", {box: i for i, box in enumerate(self.cells)})

    def position(self, box: Box) -> int:
        try:
            return self._lookup[box]  # type: ignore[attr-defined]
        except KeyError:
            raise MissingBox(f"cell not indexed: {box}") from None

    def __len__(self) -> int:
        return len(self.cells)


class MissingBox(KeyError):
    """An objective referenced a cell absent from the index (a partition bug)."""


def removal_box(config: ProgramConfig, box: Box, removed: int) -> Box:
    """Pin the first ``removed`` coordinates of a path cell at their base prices."""
    base = config.base_prices
    return Box(
        tuple(
            Point(base[j]) if j < removed else proj
            for j, proj in enumerate(box.projections)
        )
    )


def reduced_cells(
    partition: PricePartition, kappa: MoneyLike | None = None
) -> CellIndex:
    """The reduced cell list: partition cells, plus removal-adjusted cells.

    With ``kappa`` given, every cell of the status-quo path whose parameter
    interval lies below the removal cutoff contributes a copy with the
    removed coordinates pinned at their base prices, and the singleton at
    the removal-adjusted price vector is appended.  Deduplicated, canonical
    order, exact overlap validation.
    """
    config = partition.config
    boxes = {element.box for element in partition.elements}

    k = None if kappa is None else as_money(kappa)
    removed = 0
    if k is not None:
        removed = config.removed_count(k)
        if removed:
            j_tau, coarse = breakpoints(config, partition.tau_sq)
            # a_{j_removed + 1}: the parameter level up to which the removal
            # reshapes the willingness-to-pay integrand.
            cutoff = coarse[removed + 1] if removed <= j_tau else partition.tau_sq
            for element in partition.elements:
                for tag in element.path_tags:
                    if tag.tau == partition.tau_sq and tag.a_hi <= cutoff:
                        boxes.add(removal_box(config, element.box, removed))
            boxes.add(Box(tuple(Point(p) for p in config.prices_removed(k))))

    cells = tuple(sorted(boxes, key=Box.sort_key))
    validate_overlap(cells)
    return CellIndex(partition=partition, cells=cells, kappa=k, removed_count=removed)
