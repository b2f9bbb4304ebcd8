"""Confidence intervals and a specification test on microdata.

Simulates enrollment microdata from a logit population, then inverts the
recentered-subsampling test to get a confidence interval for the average
benefit, and computes a specification-test p-value for a family the data
cannot reject and one they can.
"""

import numpy as np

from voucherbounds import (
    InferenceConfig,
    ParametricSpec,
    ProgramConfig,
    WelfareTarget,
    confidence_interval,
    specification_pvalue,
)
from voucherbounds.inference import shares_from_microdata
from voucherbounds.simulate import UtilityModel, simulate, true_parameter

config = ProgramConfig(
    voucher_schools=(("little", 2000), ("stately", 6000)),
    tau_sq=4000,
    gov_cost=5000,
    admin_cost=200,
)
model = UtilityModel(
    family="L1",
    school_effects=(0.8, -0.4),
    nonparticipating_effect=-1.2,
    price_coef_mean=4e-4,
)

data, _ = simulate(model, 2_000, config, seed=12)
truth = true_parameter(model, WelfareTarget("AB"), config)
shares = shares_from_microdata(data, config)
print(f"simulated N={len(data)}; true average benefit {truth:.1f}")
print(f"empirical shares without voucher: {np.round(shares.share_without, 3)}")

cfg = InferenceConfig(alpha=0.05, n_subsamples=200, seed=12, grid_step=100.0)
ci = confidence_interval(data, WelfareTarget("AB"), config, cfg)
print(f"\n95% CI for AB: [{ci.lower:.0f}, {ci.upper:.0f}]  (subsample size {ci.subsample_n})")
print(f"estimated bounds: [{ci.bound_result.lower:.0f}, {ci.bound_result.upper:.0f}]")
print(f"truth covered: {ci.lower <= truth <= ci.upper}")

baseline_test = specification_pvalue(data, config, cfg)
own_price_test = specification_pvalue(data, config, cfg, spec=ParametricSpec("O", 1))
print(f"\nspecification p-values: baseline {baseline_test.p_value:.2f}, "
      f"own-price K=1 {own_price_test.p_value:.2f}")
print(
    "\nThe baseline restrictions fit the sampled shares exactly, so its"
    "\nstatistic is zero and the p-value is one.  The own-price family's"
    "\ninvariance requirement fails in this population, so its statistic is"
    "\nlarge and the recentered subsample draws rarely reach it."
)
