"""Bounding the welfare effects of a subsidy at its status-quo amount.

A small program: two participating schools at $2,000 and $6,000 tuition, a
$4,000 voucher, $5,000 government-school cost and a $200 administrative
charge.  Enrollment shares are observed with and without the voucher; we
bound the average benefit (willingness to pay), the average government
cost, and their difference under the nonparametric baseline and under
polynomial demand families of increasing flexibility.
"""

import numpy as np

from voucherbounds import (
    EnrollmentShares,
    ParametricSpec,
    ProgramConfig,
    WelfareTarget,
    average_cost_direct,
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
    n_without=730,
    n_with=1090,
)

# The average cost at the status-quo amount needs no optimization at all:
# demand is observed at exactly the two price vectors it depends on.
print(f"direct average cost: {average_cost_direct(shares, config):8.1f}\n")

specs = [("nonparametric", None)] + [
    (f"{family} K={k}", ParametricSpec(family, k))
    for family in ("O", "AS", "NS")
    for k in (1, 2, 3)
]

header = f"{'specification':>15} " + "".join(f"{kind:>22}" for kind in ("AB", "AC", "AS"))
print(header)
print("-" * len(header))
for label, spec in specs:
    cells = []
    for kind in ("AB", "AC", "AS"):
        result = bounds(WelfareTarget(kind), shares, config, spec=spec)
        if result.is_feasible:
            cells.append(f"[{result.lower:8.1f}, {result.upper:8.1f}]")
        else:
            cells.append(f"{'rejected':>21}")
    print(f"{label:>15} " + " ".join(cells))

print(
    "\nThe own-price family is rejected: it forces the demand gap between the"
    "\nnon-participating and government groups to be price invariant, which"
    "\nthese shares contradict.  The additively separable and nonseparable"
    "\nfamilies nest each other, so their intervals widen with flexibility,"
    "\nand the nonparametric interval is widest of all.  The average cost row"
    "\nis a single point under every specification that survives."
)
