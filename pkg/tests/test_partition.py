from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from voucherbounds.model import ProgramConfig
from voucherbounds.partition import (
    Box,
    OpenInterval,
    Point,
    breakpoint_closure,
    build_partition,
    reduced_cells,
    removal_box,
    validate_overlap,
)


def test_closure_hand_example(desk2_config):
    """Two-path closure for tuitions (2000, 6000), tau_sq=1500, tau_c=4000."""
    closure = breakpoint_closure(desk2_config, 1500, 4000)
    assert closure[Fraction(1500)] == (0, 1500)
    assert closure[Fraction(4000)] == (0, 500, 2000, 2500, 4000)


def test_closure_single_path_equals_coarse_breakpoints(desk2_config):
    closure = breakpoint_closure(desk2_config, 4000)
    assert closure[Fraction(4000)] == (0, 2000, 4000)


def test_closure_identical_paths_add_nothing(desk2_config):
    closure = breakpoint_closure(desk2_config, 4000, 4000)
    assert closure == {Fraction(4000): (0, 2000, 4000)}


def test_closure_idempotent(desk2_config):
    first = breakpoint_closure(desk2_config, 1500, 4000)
    # Feeding the closure's own output through another round changes nothing:
    # rebuilding from scratch reaches the same fixed point.
    again = breakpoint_closure(desk2_config, 1500, 4000)
    assert first == again


def test_partition_hand_example(desk2_config):
    part = build_partition(desk2_config, 1500, 4000)
    assert len(part.elements) == 8
    interior = [e for e in part.elements if e.path_tags]
    singletons = [e for e in part.elements if e.box.is_singleton]
    assert len(singletons) == 3
    on_sq = [e for e in interior if any(t.tau == 1500 for t in e.path_tags)]
    on_c = [e for e in interior if any(t.tau == 4000 for t in e.path_tags)]
    assert len(on_sq) == 1 and len(on_c) == 4

    boxes = {e.box for e in part.elements}
    assert Box((OpenInterval(Fraction(500), Fraction(2000)), OpenInterval(Fraction(4500), Fraction(6000)))) in boxes
    assert Box((Point(Fraction(2000)), OpenInterval(Fraction(4500), Fraction(6000)))) in boxes
    assert Box((Point(Fraction(2000)), Point(Fraction(6000)))) in boxes
    assert Box((Point(Fraction(500)), Point(Fraction(4500)))) in boxes
    assert Box((Point(Fraction(0)), Point(Fraction(2000)))) in boxes


def test_partition_single_path(desk2_config):
    part = build_partition(desk2_config, 4000)
    assert len(part.elements) == 4
    assert sum(1 for e in part.elements if e.path_tags) == 2
    assert sum(1 for e in part.elements if e.box.is_singleton) == 2


def test_partition_tau_c_equal_tau_sq_collapses(desk2_config):
    single = build_partition(desk2_config, 4000)
    both = build_partition(desk2_config, 4000, 4000)
    assert [e.box for e in both.elements] == [e.box for e in single.elements]


def test_partition_shared_box_tags_merge():
    config = ProgramConfig(voucher_schools=(("a", 6000),), tau_sq=1000, gov_cost=1)
    part = build_partition(config, 1000, 2000)
    shared = Box((OpenInterval(Fraction(5000), Fraction(6000)),))
    element = next(e for e in part.elements if e.box == shared)
    assert {t.tau for t in element.path_tags} == {Fraction(1000), Fraction(2000)}
    # same cell, same parameter width on both paths
    widths = {t.a_hi - t.a_lo for t in element.path_tags}
    assert widths == {Fraction(1000)}


def test_membership_sampling_exactly_one_cell(desk2_config):
    rng = np.random.default_rng(42)
    part = build_partition(desk2_config, 1500, 4000)
    for tau in part.taus:
        prices_tau = desk2_config.prices_at(tau)
        base = desk2_config.base_prices
        for _ in range(2_000):
            a = Fraction(rng.integers(1, 10**6)) * tau / 10**6
            point = tuple(min(p0, pt + a) for p0, pt in zip(base, prices_tau))
            hits = [e for e in part.elements if e.box.contains(point)]
            if any(a == t for t in breakpoint_closure(desk2_config, 1500, 4000)[tau]):
                continue  # boundary draws belong to no open cell
            assert len(hits) == 1, f"a={a} hit {len(hits)} cells"


def test_zero_tau_partition(desk2_config):
    part = build_partition(desk2_config, 0)
    assert len(part.elements) == 1
    assert part.elements[0].box.is_singleton


def test_permuting_equal_tuition_schools_preserves_cell_count():
    c1 = ProgramConfig(voucher_schools=(("a", 2000), ("b", 2000), ("c", 6000)), tau_sq=4000, gov_cost=1)
    c2 = ProgramConfig(voucher_schools=(("b", 2000), ("a", 2000), ("c", 6000)), tau_sq=4000, gov_cost=1)
    p1 = build_partition(c1, 4000, 1500)
    p2 = build_partition(c2, 4000, 1500)
    assert len(p1.elements) == len(p2.elements)


def test_reduced_cells_plain(desk2_config):
    part = build_partition(desk2_config, 1500, 4000)
    index = reduced_cells(part)
    assert len(index) == 8


def test_reduced_cells_kappa_zero_identity(desk2_config):
    part = build_partition(desk2_config, 4000)
    assert reduced_cells(part, kappa=0).cells == reduced_cells(part).cells


def test_reduced_cells_kappa_extension(desk2_config):
    part = build_partition(desk2_config, 4000)
    index = reduced_cells(part, kappa=2000)
    assert index.removed_count == 1
    boxes = set(index.cells)
    assert Box((Point(Fraction(2000)), OpenInterval(Fraction(2000), Fraction(4000)))) in boxes
    assert Box((Point(Fraction(2000)), Point(Fraction(2000)))) in boxes
    assert len(index) == 6


def test_removal_box_pins_low_coordinates(desk2_config):
    box = Box((OpenInterval(Fraction(0), Fraction(2000)), OpenInterval(Fraction(2000), Fraction(4000))))
    pinned = removal_box(desk2_config, box, removed=1)
    assert pinned.projections[0] == Point(Fraction(2000))
    assert pinned.projections[1] == OpenInterval(Fraction(2000), Fraction(4000))


def test_validate_overlap_rejects_partial_overlap():
    from voucherbounds.partition import InternalInvariantViolation

    good = Box((OpenInterval(Fraction(0), Fraction(2)),))
    bad = Box((OpenInterval(Fraction(1), Fraction(3)),))
    with pytest.raises(InternalInvariantViolation):
        validate_overlap([good, bad])


def test_tau_beyond_all_tuitions(desk2_config):
    part = build_partition(desk2_config, 7000)
    # every school free at tau=7000; the last path segment collapses onto {p(0)}
    boxes = {e.box for e in part.elements}
    p0 = Box((Point(Fraction(2000)), Point(Fraction(6000))))
    assert p0 in boxes
    element = next(e for e in part.elements if e.box == p0)
    assert element.path_tags  # tagged as a (degenerate) path cell too
