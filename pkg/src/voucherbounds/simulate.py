"""Ground-truth machinery: random-utility populations and their welfare truth.

Populations draw additive random-utility models with Type I extreme value
taste shocks and (possibly heterogeneous) price coefficients.  Each
individual's willingness to pay for the subsidy solves an indifference
equation by bisection; the population average must match the closed-form
demand-integral representation, which this module also evaluates, giving
independent oracles for the bound machinery.  A Newton maximum-likelihood
fitter for the homogeneous-coefficient logit closes the loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .inference import MicroData
from .model import MoneyLike, ProgramConfig, WelfareTarget, as_money, breakpoints, cost_schedule

FAMILIES = ("L1", "ML1", "L2", "ML2", "quasilinear")

#: covariates entering the price coefficient: two indicators plus
#: income-quartile dummies (lowest quartile omitted)
COVARIATE_NAMES = ("married", "fulltime", "incq2", "incq3", "incq4")


class SeparationDetected(RuntimeError):
    """The likelihood has no interior maximum (a coefficient is unidentified)."""


class NonConvergence(RuntimeError):
    """Newton iterations exhausted before meeting the gradient tolerance."""


@dataclass(frozen=True)
class UtilityModel:
    """An additive random-utility model over the program's alternatives.

    Utilities are ``xi_j - gamma_i * price_j + eps_ij`` for participating
    schools, ``xi_n + eps_in`` for non-participating private and ``eps_ig``
    for government schools, with iid Type I extreme value shocks.  The
    price coefficient is ``gamma_i = price_coef_mean + loadings @ X_i +
    sd * v_i`` depending on the family; the quasilinear family pins it at
    one.  Draws with a nonpositive coefficient are rejected and redrawn.
    """

    family: str
    school_effects: tuple[float, ...]
    nonparticipating_effect: float = 0.0
    price_coef_mean: float = 1.0
    price_coef_loadings: tuple[float, ...] = (0.0,) * len(COVARIATE_NAMES)
    price_coef_sd: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.price_coef_sd < 0:
            raise ValueError("price_coef_sd must be nonnegative")
        if self.family in ("L1", "L2", "quasilinear") and self.price_coef_sd != 0:
            raise ValueError(f"{self.family} has no unobserved coefficient dispersion")
        if len(self.price_coef_loadings) != len(COVARIATE_NAMES):
            raise ValueError(f"price_coef_loadings must have length {len(COVARIATE_NAMES)}")
        object.__setattr__(self, "school_effects", tuple(float(x) for x in self.school_effects))
        object.__setattr__(self, "price_coef_loadings", tuple(float(x) for x in self.price_coef_loadings))

    @property
    def uses_covariates(self) -> bool:
        return self.family in ("L2", "ML2")

    def taste_levels(self, config: ProgramConfig) -> np.ndarray:
        if len(self.school_effects) != config.n_schools:
            raise ValueError("school_effects must match the config's school count")
        return np.concatenate([[0.0, self.nonparticipating_effect], self.school_effects])


@dataclass(frozen=True)
class Population:
    """Latent draws retained for the willingness-to-pay oracle."""

    gamma: np.ndarray       # realized price coefficients, all > 0
    taste: np.ndarray       # xi_j + eps_ij per alternative (price term excluded)
    covariates: np.ndarray  # n x len(COVARIATE_NAMES)

    def __len__(self) -> int:
        return self.gamma.size


def draw_covariates(rng: np.random.Generator, n: int) -> np.ndarray:
    married = rng.integers(0, 2, size=n)
    fulltime = rng.integers(0, 2, size=n)
    quartile = rng.integers(1, 5, size=n)
    return np.column_stack(
        [married, fulltime, quartile == 2, quartile == 3, quartile == 4]
    ).astype(float)


def _coefficient_means(model: UtilityModel, covariates: np.ndarray) -> np.ndarray:
    if model.family == "quasilinear":
        return np.ones(covariates.shape[0])
    means = np.full(covariates.shape[0], model.price_coef_mean)
    if model.uses_covariates:
        means = means + covariates @ np.array(model.price_coef_loadings)
    return means


def _draw_coefficients(
    model: UtilityModel, means: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    if model.price_coef_sd == 0:
        if np.any(means <= 0):
            raise ValueError("price coefficients must be positive for every covariate cell")
        return means.copy()
    gamma = means + model.price_coef_sd * rng.standard_normal(means.size)
    for _ in range(1000):
        bad = gamma <= 0
        if not bad.any():
            return gamma
        gamma[bad] = means[bad] + model.price_coef_sd * rng.standard_normal(int(bad.sum()))
    raise ValueError("rejection sampling of positive price coefficients failed")


def simulate(
    model: UtilityModel, n: int, config: ProgramConfig, seed: int = 0
) -> tuple[MicroData, Population]:
    """Draw a population, randomize the voucher and record utility-maximizing
    choices at the realized prices."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    covariates = (
        draw_covariates(rng, n) if model.uses_covariates else np.zeros((n, len(COVARIATE_NAMES)))
    )
    gamma = _draw_coefficients(model, _coefficient_means(model, covariates), rng)
    n_alt = len(config.alternatives)
    taste = rng.gumbel(size=(n, n_alt)) + model.taste_levels(config)
    voucher = rng.integers(0, 2, size=n)

    p0 = np.array([float(p) for p in config.base_prices])
    p1 = np.array([float(p) for p in config.prices_at(config.tau_sq)])
    prices = np.where(voucher[:, None] == 1, p1, p0)
    utility = taste.copy()
    utility[:, 2:] -= gamma[:, None] * prices
    choice = utility.argmax(axis=1)
    data = MicroData(voucher=voucher, choice=choice, weight=np.ones(n))
    return data, Population(gamma=gamma, taste=taste, covariates=covariates)


def wtp_bisection(
    population: Population,
    config: ProgramConfig,
    tau: MoneyLike,
    kappa: MoneyLike | None = None,
    iterations: int = 48,
) -> np.ndarray:
    """Per-individual willingness to pay for the subsidy, by bisection.

    Solves the indifference equation on [0, tau]; the removal variant prices
    the subsidy at the removal-adjusted vector.  Absolute accuracy is
    ``tau * 2**-iterations``, far inside the 1e-6 * tau contract.
    """
    t = as_money(tau)
    n = len(population)
    if t == 0:
        return np.zeros(n)
    if kappa is not None:
        p_sub = config.prices_removed(kappa, t)
    else:
        p_sub = config.prices_at(t)
    money_without = np.concatenate([[0.0, 0.0], [float(p) for p in config.base_prices]])
    money_with = np.concatenate([[0.0, 0.0], [float(p) for p in p_sub]])

    gamma = population.gamma[:, None]
    u_without = (population.taste - gamma * money_without).max(axis=1)
    base_with = population.taste - gamma * money_with

    lo = np.zeros(n)
    hi = np.full(n, float(t))
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        gap = (base_with - gamma * mid[:, None]).max(axis=1) - u_without
        take = gap >= 0
        lo = np.where(take, mid, lo)
        hi = np.where(take, hi, mid)
    return 0.5 * (lo + hi)


class DemandOracle:
    """Closed-form (or simulated-coefficient) demand for a utility model.

    Homogeneous and covariate-cell families mix finitely many logit systems
    exactly; mixed families integrate the coefficient by seeded Monte Carlo
    with the same positive-coefficient rejection used by :func:`simulate`.
    """

    def __init__(
        self,
        model: UtilityModel,
        config: ProgramConfig,
        draws: int = 100_000,
        seed: int = 0,
    ):
        self.config = config
        self.taste = model.taste_levels(config)
        rng = np.random.default_rng((seed, 1))
        if model.family in ("L1", "quasilinear"):
            means = _coefficient_means(model, np.zeros((1, len(COVARIATE_NAMES))))
            self.gamma = _draw_coefficients(model, means, rng)
            self.weights = np.ones(1)
        elif model.family == "L2":
            cells, weights = _covariate_cells()
            means = _coefficient_means(model, cells)
            self.gamma = _draw_coefficients(model, means, rng)
            self.weights = weights
        else:
            if model.family == "ML2":
                cells = draw_covariates(rng, draws)
            else:
                cells = np.zeros((draws, len(COVARIATE_NAMES)))
            means = _coefficient_means(model, cells)
            self.gamma = _draw_coefficients(model, means, rng)
            self.weights = np.full(draws, 1.0 / draws)

    def probabilities(self, prices: np.ndarray) -> np.ndarray:
        """Population demand vector at one price point."""
        util = self.taste[None, :] - np.outer(self.gamma, np.concatenate([[0.0, 0.0], prices]))
        util -= util.max(axis=1, keepdims=True)
        expu = np.exp(util)
        probs = expu / expu.sum(axis=1, keepdims=True)
        return self.weights @ probs

    def covered_mass(self, path_prices: np.ndarray, covered: np.ndarray) -> np.ndarray:
        """Probability mass on the covered schools at each path point.

        ``path_prices`` is (points, schools); ``covered`` a boolean mask of
        the schools whose demand counts at each point.  Blockwise over the
        coefficient draws to bound memory.
        """
        points = path_prices.shape[0]
        out = np.zeros(points)
        block = max(1, int(10_000_000 / max(points * path_prices.shape[1], 1)))
        for start in range(0, self.gamma.size, block):
            g = self.gamma[start : start + block, None, None]
            w = self.weights[start : start + block]
            school_util = self.taste[None, None, 2:] - g * path_prices[None, :, :]
            top = np.maximum(school_util.max(axis=2), self.taste[:2].max())
            expu = np.exp(school_util - top[:, :, None])
            denom = expu.sum(axis=2) + np.exp(self.taste[0] - top) + np.exp(self.taste[1] - top)
            numer = (expu * covered[None, :, :]).sum(axis=2)
            out += w @ (numer / denom)
        return out

    def expected_benefit_lse(self, tau: MoneyLike, kappa: MoneyLike | None = None) -> float:
        """Log-sum-exp closed form of the average willingness to pay,
        exact conditional on the price coefficient."""
        t = as_money(tau)
        config = self.config
        p_sub = config.prices_removed(kappa, t) if kappa is not None else config.prices_at(t)
        money0 = np.concatenate([[0.0, 0.0], [float(p) for p in config.base_prices]])
        money1 = np.concatenate([[0.0, 0.0], [float(p) for p in p_sub]])

        def lse(money: np.ndarray) -> np.ndarray:
            util = self.taste[None, :] - np.outer(self.gamma, money)
            top = util.max(axis=1)
            return top + np.log(np.exp(util - top[:, None]).sum(axis=1))

        benefit = (lse(money1) - lse(money0)) / self.gamma
        return float(self.weights @ benefit)


def _covariate_cells() -> tuple[np.ndarray, np.ndarray]:
    rows, weights = [], []
    for married, fulltime, quartile in product((0, 1), (0, 1), (1, 2, 3, 4)):
        rows.append([married, fulltime, quartile == 2, quartile == 3, quartile == 4])
        weights.append(0.5 * 0.5 * 0.25)
    return np.array(rows, dtype=float), np.array(weights)


def _benefit_integral(
    oracle: DemandOracle,
    config: ProgramConfig,
    tau,
    removed: int = 0,
    grid_points: int = 2_000,
) -> float:
    """Riemann midpoint evaluation of the demand-integral representation."""
    t = as_money(tau)
    if t == 0:
        return 0.0
    tau_f = float(t)
    p0 = np.array([float(p) for p in config.base_prices])
    p_t = np.array([float(p) for p in config.prices_at(t)])
    j = config.n_schools
    width = tau_f / grid_points
    mids = (np.arange(grid_points) + 0.5) * width

    if removed == 0:
        path = np.minimum(p0[None, :], p_t[None, :] + mids[:, None])
        covered = p0[None, :] >= mids[:, None]  # school j counts while p_j(0) > a
        return width * oracle.covered_mass(path, covered).sum()

    # removal variant: below the first surviving breakpoint the removed
    # schools sit at base prices and only survivors count
    j_tau, coarse = breakpoints(config, t)
    cutoff = float(coarse[removed + 1]) if removed <= j_tau else tau_f
    path = np.minimum(p0[None, :], p_t[None, :] + mids[:, None])
    in_region1 = mids < cutoff
    path[np.ix_(in_region1, np.arange(removed))] = p0[:removed]
    covered = p0[None, :] >= mids[:, None]
    covered[:, :removed] = False
    return width * oracle.covered_mass(path, covered).sum()


def true_parameter(
    model: UtilityModel,
    target: WelfareTarget,
    config: ProgramConfig,
    draws: int = 100_000,
    seed: int = 0,
    grid_points: int = 2_000,
    oracle: DemandOracle | None = None,
) -> float:
    """The welfare parameter's true value under the utility model.

    Benefits use the demand-integral representation on a fine midpoint
    grid; costs use demand evaluated at the two relevant price vectors.
    """
    oracle = oracle or DemandOracle(model, config, draws=draws, seed=seed)
    tau = target.resolve_tau(config)

    def benefit(at_tau, removed: int) -> float:
        return _benefit_integral(oracle, config, at_tau, removed, grid_points)

    def cost(at_tau, kappa) -> float:
        if kappa is None:
            q_with = oracle.probabilities(np.array([float(p) for p in config.prices_at(at_tau)]))
            c_with = cost_schedule(config, at_tau)
        else:
            q_with = oracle.probabilities(
                np.array([float(p) for p in config.prices_removed(kappa)])
            )
            c_with = cost_schedule(config, at_tau, kappa)
        q_without = oracle.probabilities(np.array([float(p) for p in config.base_prices]))
        return float(c_with @ q_with - cost_schedule(config, 0) @ q_without)

    def level(kind: str, at_tau, removed: int, kappa) -> float:
        if kind == "AB":
            return benefit(at_tau, removed)
        if kind == "AC":
            return cost(at_tau, kappa)
        return benefit(at_tau, removed) - cost(at_tau, kappa)

    if target.is_removal:
        removed = config.removed_count(target.kappa)
        return level(target.base_kind, tau, removed, target.kappa)
    if target.is_delta:
        return level(target.base_kind, tau, 0, None) - level(
            target.base_kind, config.tau_sq, 0, None
        )
    return level(target.base_kind, tau, 0, None)


# ---------------------------------------------------------------------------
# Homogeneous-coefficient logit maximum likelihood (Newton, analytic dense).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogitFit:
    nonparticipating_effect: float
    school_effects: tuple[float, ...]
    price_coef_mean: float
    price_coef_loadings: tuple[float, ...]
    log_likelihood: float
    gradient_norm: float
    iterations: int
    covariance: np.ndarray

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def fit_logit(
    data: MicroData,
    config: ProgramConfig,
    covariates: np.ndarray | None = None,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> LogitFit:
    """Conditional-logit MLE with analytic gradient and Hessian.

    Parameters are the non-participating and per-school effects (government
    normalized to zero) and the price coefficient, plus covariate
    interactions when ``covariates`` is given.  Raises
    :class:`SeparationDetected` when the likelihood is flat (for example
    with no price variation across voucher arms) and
    :class:`NonConvergence` past the iteration cap.
    """
    n = len(data)
    n_alt = len(config.alternatives)
    j = config.n_schools
    scale = float(max(config.base_prices)) or 1.0
    p0 = np.array([float(p) for p in config.base_prices]) / scale
    p1 = np.array([float(p) for p in config.prices_at(config.tau_sq)]) / scale
    prices = np.where(data.voucher[:, None] == 1, p1[None, :], p0[None, :])

    n_cov = 0 if covariates is None else covariates.shape[1]
    dim = 1 + j + 1 + n_cov
    # features per (row, alternative): school dummies, -price, -price * X
    features = np.zeros((n, n_alt, dim))
    features[:, 1, 0] = 1.0
    for s in range(j):
        features[:, 2 + s, 1 + s] = 1.0
        features[:, 2 + s, 1 + j] = -prices[:, s]
        if n_cov:
            features[:, 2 + s, 2 + j :] = -prices[:, s, None] * covariates
    weights = data.weight / data.weight.sum()
    chosen = features[np.arange(n), data.choice]

    theta = np.zeros(dim)
    loglik = -np.inf
    for iteration in range(1, max_iter + 1):
        util = features @ theta
        util -= util.max(axis=1, keepdims=True)
        expu = np.exp(util)
        probs = expu / expu.sum(axis=1, keepdims=True)
        mean_feat = np.einsum("na,nad->nd", probs, features)
        new_loglik = float(
            weights @ (np.take_along_axis(util, data.choice[:, None], axis=1).ravel()
                       - np.log(expu.sum(axis=1)))
        )
        gradient = weights @ (chosen - mean_feat)
        outer = np.einsum("na,nad,nae->nde", probs, features, features)
        hessian = -(
            np.einsum("n,nde->de", weights, outer)
            - np.einsum("n,nd,ne->de", weights, mean_feat, mean_feat)
        )
        grad_norm = float(np.max(np.abs(gradient)))
        if grad_norm < tol:
            break
        cond = np.linalg.cond(-hessian)
        if not np.isfinite(cond) or cond > 1e12:
            raise SeparationDetected(
                "flat likelihood: a coefficient is not identified "
                f"(Hessian condition {cond:.2e})"
            )
        step = np.linalg.solve(-hessian, gradient)
        # damped Newton: halve until the likelihood improves
        for _ in range(40):
            candidate = theta + step
            util_c = features @ candidate
            util_c -= util_c.max(axis=1, keepdims=True)
            cand_ll = float(
                weights @ (np.take_along_axis(util_c, data.choice[:, None], axis=1).ravel()
                           - np.log(np.exp(util_c).sum(axis=1)))
            )
            if cand_ll >= new_loglik - 1e-14:
                break
            step *= 0.5
        theta = theta + step
        loglik = new_loglik
    else:
        raise NonConvergence(f"logit MLE did not converge in {max_iter} iterations")

    covariance = np.linalg.inv(-hessian) / data.weight.sum()
    # unscale the price block
    price_scale = np.ones(dim)
    price_scale[1 + j :] = 1.0 / scale
    theta_out = theta * price_scale
    cov_out = covariance * np.outer(price_scale, price_scale)
    return LogitFit(
        nonparticipating_effect=float(theta_out[0]),
        school_effects=tuple(theta_out[1 : 1 + j]),
        price_coef_mean=float(theta_out[1 + j]),
        price_coef_loadings=tuple(theta_out[2 + j :]),
        log_likelihood=float(new_loglik),
        gradient_norm=grad_norm,
        iterations=iteration,
        covariance=cov_out,
    )
