"""Sweeping counterfactual voucher amounts.

The observed shares pin demand at two price vectors only, yet they bound
the welfare effects of vouchers that were never offered.  This script
traces the bound envelopes of the benefit, cost and surplus levels and of
their differences against the status-quo amount, across a grid of
counterfactual amounts.
"""

import numpy as np

from voucherbounds import (
    EnrollmentShares,
    ParametricSpec,
    ProgramConfig,
    WelfareTarget,
    bounds,
)

config = ProgramConfig(
    voucher_schools=(("little", 2000), ("stately", 6000)),
    tau_sq=4000,
    gov_cost=5000,
    admin_cost=200,
)
shares = EnrollmentShares.from_mapping(
    config,
    without={"g": 0.90, "n": 0.02, "little": 0.05, "stately": 0.03},
    with_={"g": 0.30, "n": 0.01, "little": 0.40, "stately": 0.29},
)

taus = np.arange(1000, 8001, 1000)
spec = ParametricSpec("NS", 2)

print("nonseparable K=2 bounds by counterfactual amount")
print(f"{'tau':>6} {'AB':>22} {'AC':>22} {'dAS':>22}")
for tau in taus:
    row = [f"{tau:>6}"]
    for kind in ("AB", "AC", "dAS"):
        result = bounds(WelfareTarget(kind, tau=int(tau)), shares, config, spec=spec)
        row.append(f"[{result.lower:9.1f}, {result.upper:9.1f}]")
    print(" ".join(row))

print(
    "\nBenefits rise with the amount; the cost interval crosses zero where"
    "\nthe subsidy redirects enrollment from the costly government option to"
    "\ncheap participating schools.  At tau equal to the status-quo amount"
    "\nevery difference parameter collapses to [0, 0] by construction."
)

at_sq = bounds(WelfareTarget("dAB", tau=4000), shares, config, spec=spec)
print(f"\ndAB at the status-quo amount: [{at_sq.lower:.6f}, {at_sq.upper:.6f}]")
