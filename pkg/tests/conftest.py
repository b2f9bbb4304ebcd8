from __future__ import annotations

import numpy as np
import pytest

from voucherbounds.model import EnrollmentShares, ProgramConfig


@pytest.fixture
def desk2_config() -> ProgramConfig:
    """Two-school desk fixture: tuitions (2000, 6000), voucher 4000."""
    return ProgramConfig(
        voucher_schools=(("s1", 2000), ("s2", 6000)),
        tau_sq=4000,
        gov_cost=5000,
        admin_cost=200,
    )


@pytest.fixture
def desk2_shares(desk2_config) -> EnrollmentShares:
    return EnrollmentShares.from_mapping(
        desk2_config,
        without={"g": 0.90, "n": 0.02, "s1": 0.05, "s2": 0.03},
        with_={"g": 0.30, "n": 0.01, "s1": 0.40, "s2": 0.29},
        n_without=730,
        n_with=1090,
    )


def _exact_decimal_simplex(vector: np.ndarray, scale: int = 10**6) -> np.ndarray:
    """Snap a probability vector onto the 1/scale grid, summing exactly to one."""
    counts = np.floor(np.asarray(vector) * scale).astype(int)
    counts[0] += scale - counts.sum()
    return counts / scale


def random_monotone_shares(config: ProgramConfig, rng: np.random.Generator) -> EnrollmentShares:
    """Draw shares consistent with demand rising for g/n and for the voucher
    sector when the subsidy lowers prices; exact six-decimal values."""
    j = config.n_schools
    with_v = rng.dirichlet(np.ones(j + 2))
    # move mass toward g and n for the no-voucher arm
    shift = rng.uniform(0.1, 0.5) * with_v[2:].sum()
    without = with_v.copy()
    without[2:] *= 1 - shift / max(with_v[2:].sum(), 1e-12)
    without[0] += shift * 0.9
    without[1] += shift * 0.1
    without /= without.sum()
    return EnrollmentShares(
        labels=config.alternatives,
        share_without=_exact_decimal_simplex(without),
        share_with=_exact_decimal_simplex(with_v),
        n_without=500,
        n_with=500,
    )
