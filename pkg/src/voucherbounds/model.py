"""Core domain types and closed-form welfare accounting for a price subsidy.

A program offers a voucher of amount ``tau`` that reduces the price of each
participating school ``j`` from its base tuition to ``max(0, p_j(0) - tau)``.
Individuals choose among government schools (pooled as alternative ``g``),
non-participating private schools (pooled as ``n``) and the participating
schools.  Everything downstream -- partitions, bound programs, oracles --
works off the types and helpers defined here.

Money is kept as exact :class:`fractions.Fraction` values (decimal inputs
convert exactly) so that breakpoint and partition arithmetic can use exact
equality; optimization layers convert to floats at matrix-build time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Mapping, Union

import numpy as np

MoneyLike = Union[int, float, str, Decimal, Fraction]

#: Welfare parameters: levels at a voucher amount, differences against the
#: status-quo amount, and levels when schools with tuition <= kappa are
#: removed from the program.
LEVEL_KINDS = ("AB", "AC", "AS")
DELTA_KINDS = ("dAB", "dAC", "dAS")
REMOVAL_KINDS = ("ABk", "ACk", "ASk")
TARGET_KINDS = LEVEL_KINDS + DELTA_KINDS + REMOVAL_KINDS


def as_money(value: MoneyLike) -> Fraction:
    """Convert a money amount to an exact nonnegative-capable Fraction.

    Floats go through their shortest decimal representation, so ``0.1``
    becomes exactly 1/10 rather than the binary float value.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a money amount")
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"money amount must be finite, got {value!r}")
        return Fraction(Decimal(repr(value)))
    if isinstance(value, (str, Decimal)):
        try:
            return Fraction(Decimal(value))
        except InvalidOperation as exc:
            raise ValueError(f"not a money amount: {value!r}") from exc
    raise TypeError(f"cannot interpret {type(value).__name__} as money")


def round_to_step(value: Fraction, step: Fraction) -> Fraction:
    """Round to the nearest multiple of ``step``, ties away from zero (half-up).

    ``step == 0`` disables rounding.
    """
    if step == 0:
        return value
    quotient = value / step
    return Fraction(math.floor(quotient + Fraction(1, 2))) * step


@dataclass(frozen=True)
class ProgramConfig:
    """The subsidy program being analyzed.

    Parameters
    ----------
    voucher_schools : sequence of (school_id, base_tuition)
        Participating schools with their pre-subsidy tuition, sorted by
        nondecreasing tuition (ties allowed).
    tau_sq : money
        Status-quo voucher amount, the one at which enrollment is observed.
    gov_cost : money
        Cost the government bears per government-school enrollee.
    admin_cost : money
        Per-recipient administrative cost charged whenever the voucher
        amount is positive.
    extra_offset : money
        Homogeneous non-tuition cost the voucher may also offset; effective
        base prices become ``tuition + extra_offset`` (applied before
        rounding).
    rounding_step : money
        Tuition rounding granularity; 0 disables rounding.
    """

    voucher_schools: tuple[tuple[str, Fraction], ...]
    tau_sq: Fraction
    gov_cost: Fraction
    admin_cost: Fraction = Fraction(0)
    extra_offset: Fraction = Fraction(0)
    rounding_step: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        schools = tuple((str(sid), as_money(t)) for sid, t in self.voucher_schools)
        object.__setattr__(self, "voucher_schools", schools)
        for name in ("tau_sq", "gov_cost", "admin_cost", "extra_offset", "rounding_step"):
            object.__setattr__(self, name, as_money(getattr(self, name)))
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not schools:
            raise ValueError("at least one participating school is required")
        seen: set[str] = set()
        for sid, tuition in schools:
            if tuition < 0:
                raise ValueError(f"tuition of {sid!r} must be nonnegative")
            if sid in seen:
                raise ValueError(f"duplicate school id {sid!r}")
            seen.add(sid)
        tuitions = [t for _, t in schools]
        if any(a > b for a, b in zip(tuitions, tuitions[1:])):
            raise ValueError("voucher_schools must be sorted by nondecreasing tuition")

    # -- derived structure ------------------------------------------------

    @property
    def n_schools(self) -> int:
        return len(self.voucher_schools)

    @property
    def school_ids(self) -> tuple[str, ...]:
        return tuple(sid for sid, _ in self.voucher_schools)

    @property
    def alternatives(self) -> tuple[str, ...]:
        """Demand indices in canonical order: g, n, then schools by tuition."""
        return ("g", "n") + self.school_ids

    @property
    def base_prices(self) -> tuple[Fraction, ...]:
        """Effective pre-subsidy prices: offset-adjusted then rounded."""
        return tuple(
            round_to_step(t + self.extra_offset, self.rounding_step)
            for _, t in self.voucher_schools
        )

    def prices_at(self, tau: MoneyLike) -> tuple[Fraction, ...]:
        """Exact price vector ``p(tau)`` with ``p_j = max(0, p_j(0) - tau)``."""
        t = as_money(tau)
        if t < 0:
            raise ValueError("voucher amount must be nonnegative")
        return tuple(max(Fraction(0), p - t) for p in self.base_prices)

    def removed_count(self, kappa: MoneyLike) -> int:
        """Number of schools removed when tuition at most ``kappa`` leaves the program."""
        k = as_money(kappa)
        return sum(1 for p in self.base_prices if p <= k)

    def prices_removed(self, kappa: MoneyLike, tau: MoneyLike | None = None) -> tuple[Fraction, ...]:
        """Price vector when schools with tuition <= kappa no longer accept the voucher."""
        t = self.tau_sq if tau is None else as_money(tau)
        j_removed = self.removed_count(kappa)
        subsidized = self.prices_at(t)
        return tuple(
            base if j < j_removed else cut
            for j, (base, cut) in enumerate(zip(self.base_prices, subsidized))
        )


def apply_voucher(config: ProgramConfig, tau: MoneyLike) -> np.ndarray:
    """Post-subsidy prices ``max(0, p_j(0) - tau)`` as a float vector."""
    return np.array([float(p) for p in config.prices_at(tau)])


def breakpoints(config: ProgramConfig, tau: MoneyLike) -> tuple[int, tuple[Fraction, ...]]:
    """Integration breakpoints for the willingness-to-pay integral at ``tau``.

    Returns ``(j_tau, a)`` where ``j_tau`` is the number of schools with
    tuition strictly below ``tau`` and ``a = (0, p_1(0), ..., p_{j_tau}(0),
    tau)``.  Ties with ``tau`` count as not below; duplicate tuitions give
    zero-width segments that integrate to zero.
    """
    t = as_money(tau)
    if t < 0:
        raise ValueError("voucher amount must be nonnegative")
    below = [p for p in config.base_prices if p < t]
    return len(below), (Fraction(0), *below, t)


def cost_schedule(
    config: ProgramConfig, tau: MoneyLike, kappa: MoneyLike | None = None
) -> np.ndarray:
    """Per-alternative government cost vector ``c_j(tau)``.

    ``g`` costs ``gov_cost``; ``n`` costs 0; a participating school costs the
    voucher amount actually spent, ``min(p_j(0), tau)``, plus the
    administrative cost when ``tau > 0``.  With ``kappa`` given, schools
    removed from the program (tuition <= kappa) cost 0.
    """
    t = as_money(tau)
    admin = config.admin_cost if t > 0 else Fraction(0)
    costs = [config.gov_cost, Fraction(0)]
    j_removed = config.removed_count(kappa) if kappa is not None else 0
    for j, p in enumerate(config.base_prices):
        if j < j_removed:
            costs.append(Fraction(0))
        else:
            costs.append(min(p, t) + admin)
    return np.array([float(c) for c in costs])


@dataclass(frozen=True)
class EnrollmentShares:
    """Observed enrollment shares at the two price regimes.

    ``share_without[j]`` and ``share_with[j]`` are the shares choosing
    alternative ``j`` (canonical order: g, n, schools) among non-recipients
    and recipients respectively; ``n_without`` / ``n_with`` are the arm
    sample sizes.
    """

    labels: tuple[str, ...]
    share_without: np.ndarray
    share_with: np.ndarray
    n_without: int = 0
    n_with: int = 0

    def __post_init__(self) -> None:
        without = np.asarray(self.share_without, dtype=float).copy()
        with_ = np.asarray(self.share_with, dtype=float).copy()
        if without.shape != (len(self.labels),) or with_.shape != (len(self.labels),):
            raise ValueError("share vectors must match the label list")
        for name, vec in (("share_without", without), ("share_with", with_)):
            if np.any(vec < -1e-12) or np.any(vec > 1 + 1e-12):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            if abs(vec.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to one (got {vec.sum():.12f})")
        without.flags.writeable = False
        with_.flags.writeable = False
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "share_without", without)
        object.__setattr__(self, "share_with", with_)

    @classmethod
    def from_mapping(
        cls,
        config: ProgramConfig,
        without: Mapping[str, float],
        with_: Mapping[str, float],
        n_without: int = 0,
        n_with: int = 0,
    ) -> "EnrollmentShares":
        labels = config.alternatives
        missing = set(labels) ^ (set(without) | set(with_))
        if set(without) != set(labels) or set(with_) != set(labels):
            raise ValueError(f"share mappings must cover exactly {labels}, mismatch: {sorted(missing)}")
        return cls(
            labels=labels,
            share_without=np.array([without[k] for k in labels], dtype=float),
            share_with=np.array([with_[k] for k in labels], dtype=float),
            n_without=n_without,
            n_with=n_with,
        )

    @property
    def vector(self) -> np.ndarray:
        """Stacked data-moment vector: shares without the voucher, then with."""
        return np.concatenate([self.share_without, self.share_with])

    @property
    def n_total(self) -> int:
        return self.n_without + self.n_with


@dataclass(frozen=True)
class WelfareTarget:
    """A welfare parameter to bound: which kind, at which voucher amount.

    ``kind`` is one of ``AB``/``AC``/``AS`` (levels at ``tau``),
    ``dAB``/``dAC``/``dAS`` (level at ``tau`` minus level at the status-quo
    amount) or ``ABk``/``ACk``/``ASk`` (levels at the status-quo amount with
    schools of tuition <= ``kappa`` removed).
    """

    kind: str
    tau: Fraction | None = None
    kappa: Fraction | None = None

    def __post_init__(self) -> None:
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; expected one of {TARGET_KINDS}")
        if self.is_removal != (self.kappa is not None):
            raise ValueError("kappa must be given exactly for the removal kinds ABk/ACk/ASk")
        object.__setattr__(self, "tau", None if self.tau is None else as_money(self.tau))
        object.__setattr__(self, "kappa", None if self.kappa is None else as_money(self.kappa))
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError("kappa must be nonnegative")

    @property
    def base_kind(self) -> str:
        return self.kind.lstrip("d").rstrip("k")

    @property
    def is_delta(self) -> bool:
        return self.kind in DELTA_KINDS

    @property
    def is_removal(self) -> bool:
        return self.kind in REMOVAL_KINDS

    def resolve_tau(self, config: ProgramConfig) -> Fraction:
        """The voucher amount the parameter is evaluated at."""
        if self.is_removal:
            if self.tau is not None and self.tau != config.tau_sq:
                raise ValueError("removal parameters are evaluated at the status-quo amount")
            return config.tau_sq
        if self.tau is None:
            return config.tau_sq
        return self.tau


def average_cost_direct(
    shares: EnrollmentShares,
    config: ProgramConfig,
    tau: MoneyLike | None = None,
    kappa: MoneyLike | None = None,
) -> float:
    """Average government cost evaluated directly on observed shares.

    Valid only at the status-quo amount, the single voucher level at which
    demand is observed.  ``kappa`` is allowed for oracle use where the
    ``share_with`` vector is known to be demand at the removal-adjusted
    prices; observed data never satisfies that, so bound modules handle
    removal parameters instead.
    """
    t = config.tau_sq if tau is None else as_money(tau)
    if t != config.tau_sq:
        raise ValueError(
            f"demand is observed only at the status-quo amount {config.tau_sq}; got tau={t}"
        )
    c_with = cost_schedule(config, t, kappa)
    c_without = cost_schedule(config, 0)
    return float(c_with @ shares.share_with - c_without @ shares.share_without)
