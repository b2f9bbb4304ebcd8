from __future__ import annotations

import numpy as np
import pytest

from voucherbounds.baseline import bounds, build_problem
from voucherbounds.inference import (
    InferenceConfig,
    MicroData,
    confidence_interval,
    shares_from_microdata,
    specification_pvalue,
    subsample_size,
    subsample_statistics,
    test_statistic as compute_statistic,
)
from voucherbounds.model import WelfareTarget
from voucherbounds.parametric import ParametricSpec
from voucherbounds.simulate import UtilityModel, simulate

L1 = UtilityModel(
    family="L1",
    school_effects=(0.8, -0.4),
    nonparticipating_effect=-1.2,
    price_coef_mean=4e-4,
)


@pytest.fixture(scope="module")
def desk2_micro(request):
    from voucherbounds.model import ProgramConfig

    config = ProgramConfig(
        voucher_schools=(("s1", 2000), ("s2", 6000)), tau_sq=4000, gov_cost=5000, admin_cost=200
    )
    data, _ = simulate(L1, 1_200, config, seed=31)
    return config, data


def test_subsample_size_rule():
    assert subsample_size(1600, 4) == 320
    assert subsample_size(25, 4) == 24
    assert subsample_size(9, 4) == 8


def test_microdata_validation():
    with pytest.raises(ValueError):
        MicroData(voucher=np.zeros(3, dtype=int), choice=np.zeros(3, dtype=int), weight=np.ones(3))
    with pytest.raises(ValueError):
        MicroData(voucher=np.array([0, 1]), choice=np.array([0, 1]), weight=np.array([1.0, -1.0]))


def test_statistic_zero_inside_bounds(desk2_micro):
    config, data = desk2_micro
    shares = shares_from_microdata(data, config)
    problem = build_problem(WelfareTarget("AB"), shares, config)
    est = bounds(WelfareTarget("AB"), shares, config)
    assert est.is_feasible
    theta0 = 0.5 * (est.lower + est.upper)
    ts, nu = compute_statistic(data, problem.system, problem.objective, theta0)
    assert ts == pytest.approx(0.0, abs=1e-6)
    assert nu is not None

    ts_spec, _ = compute_statistic(data, problem.system)
    assert ts_spec == pytest.approx(0.0, abs=1e-6)


def test_statistic_positive_outside_bounds(desk2_micro):
    config, data = desk2_micro
    shares = shares_from_microdata(data, config)
    problem = build_problem(WelfareTarget("AB"), shares, config)
    est = bounds(WelfareTarget("AB"), shares, config)
    ts, _ = compute_statistic(data, problem.system, problem.objective, est.upper + 10 * 4000.0)
    assert ts > 0


def test_subsample_statistics_deterministic(desk2_micro):
    config, data = desk2_micro
    shares = shares_from_microdata(data, config)
    problem = build_problem(WelfareTarget("AB"), shares, config)
    cfg = InferenceConfig(n_subsamples=20, seed=42)
    _, nu = compute_statistic(data, problem.system)
    a = subsample_statistics(data, problem.system, nu, cfg)
    b = subsample_statistics(data, problem.system, nu, cfg)
    assert np.array_equal(a, b)
    assert np.all(a >= 0)


def test_subsample_statistics_row_order_invariant(desk2_micro):
    config, data = desk2_micro
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(data))
    shuffled = MicroData(data.voucher[perm], data.choice[perm], data.weight[perm])
    shares = shares_from_microdata(data, config)
    problem = build_problem(WelfareTarget("AB"), shares, config)
    cfg = InferenceConfig(n_subsamples=10, seed=7)
    _, nu = compute_statistic(data, problem.system)
    a = subsample_statistics(data, problem.system, nu, cfg)
    b = subsample_statistics(shuffled, problem.system, nu, cfg)
    assert np.allclose(a, b, atol=1e-12)


def test_specification_pvalue_one_when_fit_is_exact(desk2_micro):
    config, data = desk2_micro
    cfg = InferenceConfig(n_subsamples=25, seed=3)
    result = specification_pvalue(data, config, cfg)
    assert result.statistic == pytest.approx(0.0, abs=1e-8)
    assert result.p_value == 1.0


def test_specification_pvalue_single_subsample_binary(desk2_micro):
    config, data = desk2_micro
    cfg = InferenceConfig(n_subsamples=1, seed=5)
    result = specification_pvalue(data, config, cfg)
    assert result.p_value in (0.0, 1.0)


def test_confidence_interval_covers_estimated_bounds(desk2_micro):
    config, data = desk2_micro
    shares = shares_from_microdata(data, config)
    est = bounds(WelfareTarget("AB"), shares, config)
    cfg = InferenceConfig(n_subsamples=40, seed=9, grid_step=200.0)
    ci = confidence_interval(data, WelfareTarget("AB"), config, cfg)
    assert not ci.is_empty
    assert ci.lower <= est.lower + 200.0
    assert ci.upper >= est.upper - 200.0
    # every grid point inside the estimated bounds is accepted
    inside = (ci.grid >= est.lower - 1e-9) & (ci.grid <= est.upper + 1e-9)
    assert np.all(ci.accepted[inside])


def test_confidence_interval_widens_as_alpha_shrinks(desk2_micro):
    config, data = desk2_micro
    wide = confidence_interval(
        data, WelfareTarget("AB"), config,
        InferenceConfig(alpha=0.005, n_subsamples=40, seed=11, grid_step=250.0),
    )
    narrow = confidence_interval(
        data, WelfareTarget("AB"), config,
        InferenceConfig(alpha=0.5, n_subsamples=40, seed=11, grid_step=250.0),
    )
    assert wide.lower <= narrow.lower + 1e-9
    assert wide.upper >= narrow.upper - 1e-9


def test_confidence_interval_deterministic(desk2_micro):
    config, data = desk2_micro
    cfg = InferenceConfig(n_subsamples=25, seed=13, grid_step=400.0)
    a = confidence_interval(data, WelfareTarget("AS"), config, cfg)
    b = confidence_interval(data, WelfareTarget("AS"), config, cfg)
    assert a.lower == b.lower and a.upper == b.upper


def test_confidence_interval_parametric_spec(desk2_micro):
    config, data = desk2_micro
    cfg = InferenceConfig(n_subsamples=25, seed=15, grid_step=200.0)
    ci = confidence_interval(data, WelfareTarget("AC"), config, cfg, spec=ParametricSpec("AS", 1))
    assert not ci.is_empty
    assert ci.lower is not None and ci.upper is not None


def test_recentered_statistic_zero_on_full_data_moments(desk2_micro):
    # a "subsample" equal to the full data recenters to the exact fit
    config, data = desk2_micro
    shares = shares_from_microdata(data, config)
    problem = build_problem(WelfareTarget("AB"), shares, config)
    ts, nu = compute_statistic(data, problem.system)
    assert ts == pytest.approx(0.0, abs=1e-8)
    cfg = InferenceConfig(n_subsamples=1, seed=0)
    full_moment = [data.moment_vector(4)]
    stats = subsample_statistics(data, problem.system, nu, cfg, subsample_moments=full_moment)
    assert stats[0] == pytest.approx(0.0, abs=1e-9)
