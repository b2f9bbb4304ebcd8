"""Partial-identification bounds and inference for price-subsidy welfare analysis."""

__version__ = "0.1.0"

from .baseline import BoundResult, ShapePolicy
from .baseline import bounds as baseline_bounds
from .inference import (
    ConfidenceInterval,
    InferenceConfig,
    MicroData,
    SpecificationTest,
    confidence_interval,
    specification_pvalue,
)
from .model import (
    EnrollmentShares,
    ProgramConfig,
    WelfareTarget,
    apply_voucher,
    average_cost_direct,
    breakpoints,
    cost_schedule,
)
from .parametric import ParametricSpec
from .parametric import bounds as parametric_bounds
from .partition import build_partition, reduced_cells
# note: the population simulator stays namespaced (voucherbounds.simulate.simulate)
# so the submodule name remains importable
from .simulate import DemandOracle, UtilityModel, fit_logit, true_parameter, wtp_bisection

__all__ = [
    "BoundResult",
    "ConfidenceInterval",
    "DemandOracle",
    "EnrollmentShares",
    "InferenceConfig",
    "MicroData",
    "ParametricSpec",
    "ProgramConfig",
    "ShapePolicy",
    "SpecificationTest",
    "UtilityModel",
    "WelfareTarget",
    "apply_voucher",
    "average_cost_direct",
    "baseline_bounds",
    "bounds",
    "breakpoints",
    "build_partition",
    "confidence_interval",
    "cost_schedule",
    "fit_logit",
    "parametric_bounds",
    "reduced_cells",
    "specification_pvalue",
    "true_parameter",
    "wtp_bisection",
]


def bounds(target, shares, config, spec=None, policy=None, backend="highs"):
    """Bound a welfare target under the baseline or a parametric family.

    Thin dispatcher: ``spec=None`` uses the nonparametric baseline program,
    otherwise the :class:`ParametricSpec` family.
    """
    from .baseline import DEFAULT_POLICY

    if spec is None:
        return baseline_bounds(target, shares, config, policy or DEFAULT_POLICY, backend)
    return parametric_bounds(spec, target, shares, config, backend)
