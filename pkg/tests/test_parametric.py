from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from voucherbounds.model import (
    EnrollmentShares,
    ProgramConfig,
    WelfareTarget,
    average_cost_direct,
    breakpoints,
)
from voucherbounds.parametric import (
    AlphaLayout,
    ParametricSpec,
    UnsupportedCombination,
    bipoly_segment_integral,
    bounds,
    build_objective,
    poly_segment_integral,
    price_grid,
)


def o_feasible_shares(config: ProgramConfig, rng: np.random.Generator) -> EnrollmentShares:
    """Shares generated by a demand system inside the own-price (O) family."""
    j = config.n_schools
    slopes = -rng.uniform(0.01, 0.05, size=j)      # own-price gap slopes, in t units
    levels = rng.uniform(0.05, 0.1, size=j)
    alpha_n = rng.uniform(-0.02, 0.02)

    def q(t: np.ndarray) -> np.ndarray:
        gaps = levels + slopes * t
        qg = (1.0 - alpha_n - gaps.sum()) / (j + 2)
        return np.concatenate([[qg, qg + alpha_n], qg + gaps])

    base = np.array([float(p) for p in config.base_prices])
    t0 = np.ones(j)
    t1 = np.array([float(p) for p in config.prices_at(config.tau_sq)]) / base
    return EnrollmentShares(
        labels=config.alternatives,
        share_without=q(t0),
        share_with=q(t1),
        n_without=700,
        n_with=1100,
    )


def test_price_grid(desk2_config):
    grids = price_grid(desk2_config, 4)
    assert grids[0] == (0, 500, 1000, 1500, 2000)
    assert grids[1] == (0, 1500, 3000, 4500, 6000)
    assert price_grid(desk2_config, 1)[0] == (0, 2000)


def test_price_grid_degenerate_school():
    config = ProgramConfig(voucher_schools=(("free", 0), ("s", 1000)), tau_sq=500, gov_cost=1)
    assert price_grid(config, 4)[0] == (0,)


def test_poly_segment_integral():
    assert poly_segment_integral(2000.0, 1, 0.0, 2000.0) == pytest.approx(6_000_000.0)
    assert poly_segment_integral(5.0, 0, 1.0, 4.0) == pytest.approx(3.0)
    assert poly_segment_integral(5.0, 3, 2.0, 2.0) == 0.0


def test_bipoly_segment_integral():
    assert bipoly_segment_integral(1.0, 1, 2.0, 1, 0.0, 1.0) == pytest.approx(23 / 6)
    assert bipoly_segment_integral(3.0, 0, 9.0, 0, 1.0, 5.0) == pytest.approx(4.0)
    for k in range(4):
        assert bipoly_segment_integral(2.0, k, 7.0, 0, 0.5, 2.5) == pytest.approx(
            poly_segment_integral(2.0, k, 0.5, 2.5)
        )


def test_alpha_layout_dimensions():
    assert AlphaLayout("AS", 2, 1).dimension == 16
    assert AlphaLayout("AS", 3, 2).dimension == 5 * 3 * 3
    assert AlphaLayout("NS", 2, 1).dimension == 2 * (2 - 1) * 4 + 2 * 2 * 2
    layout = AlphaLayout("NS", 3, 2)
    assert layout.dimension == 3 * 2 * 9 + 2 * 3 * 3
    seen = set()
    for alt in (0, 1):
        for m in range(3):
            for k in range(3):
                seen.add(layout.separable(alt, m, k))
    for s in range(3):
        for o in range(3):
            if o == s:
                continue
            for kj in range(3):
                for km in range(3):
                    seen.add(layout.pairwise(s, o, kj, km))
    assert seen == set(range(layout.dimension))


def test_own_price_family_rejected_on_desk2(desk2_config, desk2_shares):
    # the n-vs-g demand gap must be price invariant; DESK-2 moves it
    for degree in (1, 2, 3):
        res = bounds(ParametricSpec("O", degree), WelfareTarget("AB"), desk2_shares, desk2_config)
        assert res.status == "infeasible"


def test_constant_demand_alpha_gives_1400(desk2_config):
    spec = ParametricSpec("AS", 1)
    layout = AlphaLayout("AS", 2, 1)
    objective = build_objective(spec, WelfareTarget("AB", tau=4000), desk2_config)
    alpha = np.zeros(layout.dimension)
    alpha[layout.separable(2, 0, 0)] = 0.3   # q_s1 constant 0.3
    alpha[layout.separable(3, 0, 0)] = 0.2   # q_s2 constant 0.2
    assert objective @ alpha == pytest.approx(1400.0)


def test_zero_tau_benefit_objective(desk2_config):
    objective = build_objective(ParametricSpec("AS", 2), WelfareTarget("AB", tau=0), desk2_config)
    assert np.all(objective == 0.0)


def test_ac_point_identified_across_families(desk2_config):
    rng = np.random.default_rng(2)
    shares = o_feasible_shares(desk2_config, rng)
    direct = average_cost_direct(shares, desk2_config)
    for family in ("O", "AS", "NS"):
        for degree in (1, 2):
            res = bounds(ParametricSpec(family, degree), WelfareTarget("AC"), shares, desk2_config)
            assert res.is_feasible, f"{family} K={degree} rejected"
            assert res.lower == pytest.approx(direct, abs=1e-6)
            assert res.upper == pytest.approx(direct, abs=1e-6)


def test_family_and_degree_nesting(desk2_config):
    rng = np.random.default_rng(4)
    shares = o_feasible_shares(desk2_config, rng)
    target = WelfareTarget("AB")
    results = {}
    for family in ("O", "AS", "NS"):
        for degree in (1, 2, 3):
            results[family, degree] = bounds(
                ParametricSpec(family, degree), target, shares, desk2_config
            )
    for degree in (1, 2, 3):
        o_res, as_res, ns_res = (results[f, degree] for f in ("O", "AS", "NS"))
        assert o_res.lower >= as_res.lower - 1e-6 and o_res.upper <= as_res.upper + 1e-6
        assert as_res.lower >= ns_res.lower - 1e-6 and as_res.upper <= ns_res.upper + 1e-6
    for family in ("O", "AS", "NS"):
        for degree in (1, 2):
            tight, loose = results[family, degree], results[family, degree + 1]
            assert tight.lower >= loose.lower - 1e-6
            assert tight.upper <= loose.upper + 1e-6


def test_grid_refinement_never_widens(desk2_config):
    rng = np.random.default_rng(6)
    shares = o_feasible_shares(desk2_config, rng)
    coarse = bounds(ParametricSpec("AS", 2, grid_points=2), WelfareTarget("AB"), shares, desk2_config)
    fine = bounds(ParametricSpec("AS", 2, grid_points=6), WelfareTarget("AB"), shares, desk2_config)
    assert fine.lower >= coarse.lower - 1e-6
    assert fine.upper <= coarse.upper + 1e-6


def test_ns_requires_two_schools():
    config = ProgramConfig(voucher_schools=(("only", 3000),), tau_sq=1000, gov_cost=1)
    shares = EnrollmentShares.from_mapping(
        config, without={"g": 0.8, "n": 0.1, "only": 0.1}, with_={"g": 0.6, "n": 0.1, "only": 0.3}
    )
    with pytest.raises(UnsupportedCombination):
        bounds(ParametricSpec("NS", 1), WelfareTarget("AB"), shares, config)


def _quadrature_benefit(config, spec, alpha, tau, n_points=4001):
    """Independent check: Riemann quadrature of the covered demand mass."""
    layout = AlphaLayout(spec.family, config.n_schools, spec.degree)
    scale = float(max(config.base_prices))
    base = np.array([float(p) for p in config.base_prices]) / scale
    p_tau = np.array([float(p) for p in config.prices_at(tau)]) / scale
    j_tau, coarse = breakpoints(config, tau)
    coarse = [float(a) / scale for a in coarse]
    j = config.n_schools

    def demand(alt, prices):
        total = 0.0
        if spec.family in ("O", "AS") or alt < 2:
            for m in range(j):
                for k in range(spec.degree + 1):
                    total += alpha[layout.separable(alt, m, k)] * prices[m] ** k
        else:
            s = alt - 2
            for m in range(j):
                if m == s:
                    continue
                for kj in range(spec.degree + 1):
                    for km in range(spec.degree + 1):
                        total += (
                            alpha[layout.pairwise(s, m, kj, km)]
                            * prices[s] ** kj
                            * prices[m] ** km
                        )
        return total

    total = 0.0
    for l in range(j_tau + 1):
        lo, hi = coarse[l], coarse[l + 1]
        if hi <= lo:
            continue
        grid = np.linspace(lo, hi, n_points)
        mids = (grid[:-1] + grid[1:]) / 2
        widths = np.diff(grid)
        for a, w in zip(mids, widths):
            prices = np.minimum(base, p_tau + a)
            total += w * sum(demand(2 + s, prices) for s in range(l, j))
    return total * scale


@pytest.mark.parametrize("family,degree", [("AS", 1), ("AS", 3), ("NS", 2)])
def test_benefit_objective_matches_quadrature(desk2_config, family, degree):
    spec = ParametricSpec(family, degree)
    layout = AlphaLayout(family, 2, degree)
    rng = np.random.default_rng(degree)
    for tau in (Fraction(1500), Fraction(4000), Fraction(7000)):
        objective = build_objective(spec, WelfareTarget("AB", tau=tau), desk2_config)
        for _ in range(5):
            alpha = rng.normal(size=layout.dimension)
            exact = objective @ alpha
            approx = _quadrature_benefit(desk2_config, spec, alpha, tau, n_points=2001)
            assert exact == pytest.approx(approx, rel=1e-5, abs=1e-4)


def test_removal_benefit_objective_zero_when_all_removed(desk2_config):
    objective = build_objective(
        ParametricSpec("AS", 1), WelfareTarget("ABk", kappa=6000), desk2_config
    )
    assert np.all(objective == 0.0)


def test_removal_kappa_zero_matches_plain(desk2_config):
    plain = build_objective(ParametricSpec("AS", 2), WelfareTarget("AB"), desk2_config)
    removed = build_objective(ParametricSpec("AS", 2), WelfareTarget("ABk", kappa=0), desk2_config)
    assert np.allclose(plain, removed)


def test_delta_objective_is_difference(desk2_config):
    spec = ParametricSpec("AS", 1)
    d_obj = build_objective(spec, WelfareTarget("dAB", tau=6000), desk2_config)
    hi = build_objective(spec, WelfareTarget("AB", tau=6000), desk2_config)
    sq = build_objective(spec, WelfareTarget("AB", tau=4000), desk2_config)
    assert np.allclose(d_obj, hi - sq)


def test_own_price_linear_single_school_point_identifies():
    """With one school and a linear own-price gap, demand is fully pinned by
    the two observed share vectors: the bound interval collapses to a point."""
    config = ProgramConfig(voucher_schools=(("only", 5000),), tau_sq=2000, gov_cost=4000)
    # demand system inside the O K=1 family, in price units of p(0)
    level, slope, alpha_n = 0.08, -0.05, -0.01

    def q(t: float) -> dict[str, float]:
        gap = level + slope * t
        qg = (1.0 - alpha_n - gap) / 3
        return {"g": qg, "n": qg + alpha_n, "only": qg + gap}

    shares = EnrollmentShares.from_mapping(config, without=q(1.0), with_=q(3000 / 5000))
    spec = ParametricSpec("O", 1)

    res = bounds(spec, WelfareTarget("AB"), shares, config)
    assert res.is_feasible
    assert res.upper - res.lower <= 1e-6

    # analytic value: AB = integral over [0, tau] of q_only(p - tau + a)
    import scipy.integrate as integrate

    value, _ = integrate.quad(lambda a: q((3000 + a) / 5000)["only"], 0, 2000)
    assert res.lower == pytest.approx(value, abs=1e-4)
