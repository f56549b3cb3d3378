"""Closed-form utilities and extra-fee bounds for users and storage providers.

Every function here is pure and works on exact fractions; nothing rounds.

Symbols used in names:

* ``P``  - profit a user derives from having the file stored
* ``SF`` - storage fee, ``SC`` - provider's storage cost
* ``EF`` - extra fee paid on top of the discounted storage fee
* ``I_u``/``I_c``/``I_deploy`` - interaction and deployment costs
* ``N``  - holders of a file, ``n`` - holders that opted for dedup
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .money import ZERO, MoneyLike, money


class Role(str, Enum):
    USER = "user"
    CSP = "csp"


@dataclass(frozen=True)
class EconParams:
    profit_P: Fraction
    storage_fee_SF: Fraction
    extra_fee_EF: Fraction = ZERO
    storage_cost_SC: Fraction = ZERO
    access_fee_AF: Fraction = ZERO
    cost_user_I: Fraction = ZERO
    cost_csp_I: Fraction = ZERO
    cost_deploy_I: Fraction = ZERO
    waive_first_uploader_ef: bool = False

    def __post_init__(self):
        for f in fields(self):
            if f.name == "waive_first_uploader_ef":
                continue
            v = money(getattr(self, f.name))
            object.__setattr__(self, f.name, v)
            if v < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.storage_fee_SF <= self.storage_cost_SC:
            raise ValueError(
                "storage_fee_SF must exceed storage_cost_SC "
                f"({self.storage_fee_SF} <= {self.storage_cost_SC})"
            )

    @classmethod
    def unchecked(cls, **values) -> "EconParams":
        """Build params without the SF > SC check (for loss-making what-ifs)."""
        obj = object.__new__(cls)
        defaults = {f.name: f.default for f in fields(cls)}
        defaults.update(values)
        for name, v in defaults.items():
            if name != "waive_first_uploader_ef":
                v = money(v)
            object.__setattr__(obj, name, v)
        return obj

    @classmethod
    def reference(cls, ef_fraction: MoneyLike = 0, **overrides) -> "EconParams":
        """The reference experiment settings (P=2.165, SF=0.165, SC=0.1, AF=0.1)."""
        sf = Fraction("0.165")
        values = dict(
            profit_P=Fraction("2.165"),
            storage_fee_SF=sf,
            storage_cost_SC=Fraction("0.1"),
            access_fee_AF=Fraction("0.1"),
            extra_fee_EF=money(ef_fraction) * sf,
        )
        values.update(overrides)
        return cls(**values)

    def with_ef(self, ef: MoneyLike) -> "EconParams":
        return _replace(self, extra_fee_EF=money(ef))

    def scaled(self, factor: MoneyLike) -> "EconParams":
        """Per-file params for a file ``factor`` units long (SF, SC, EF scale)."""
        k = money(factor)
        return _replace(
            self,
            storage_fee_SF=self.storage_fee_SF * k,
            storage_cost_SC=self.storage_cost_SC * k,
            extra_fee_EF=self.extra_fee_EF * k,
        )


def _replace(p: EconParams, **changes) -> EconParams:
    if p.storage_fee_SF > p.storage_cost_SC:
        return replace(p, **changes)
    values = {f.name: getattr(p, f.name) for f in fields(p)}
    values.update(changes)
    return EconParams.unchecked(**values)


@dataclass(frozen=True)
class PricingFunction:
    """Linear auxiliary pricing ``price(|d|) = per_unit_fee * |d|``."""

    per_unit_fee: Fraction

    def __post_init__(self):
        object.__setattr__(self, "per_unit_fee", money(self.per_unit_fee))
        if self.per_unit_fee < 0:
            raise ValueError("per_unit_fee must be >= 0")

    def price(self, size: int) -> Fraction:
        if size < 0:
            raise ValueError("size must be >= 0")
        return self.per_unit_fee * size


@dataclass(frozen=True)
class PopulationState:
    total_holders_N: int
    dedup_rate_n: int

    def __post_init__(self):
        if not 1 <= self.dedup_rate_n <= self.total_holders_N:
            raise ValueError(
                f"need 1 <= n <= N, got n={self.dedup_rate_n}, N={self.total_holders_N}"
            )


@dataclass(frozen=True)
class UtilityReport:
    u_user_no_dedup: Fraction
    u_user_dedup: Fraction
    u_csp_no_dedup: Fraction
    u_csp_dedup: Fraction
    u_csp_inter: Fraction


def _check_n(n: int) -> None:
    if n < 1:
        raise ValueError(f"dedup rate must be >= 1, got {n}")


def utility_user_no_dedup(p: EconParams) -> Fraction:
    return p.profit_P - p.storage_fee_SF


def utility_user_dedup(p: EconParams, n: int) -> Fraction:
    _check_n(n)
    return p.profit_P - p.storage_fee_SF / n - p.extra_fee_EF - p.cost_user_I


def average_user_utility(p: EconParams, N: int, n: int) -> Fraction:
    """Mean utility over ``N`` holders of one file when ``n`` of them dedup.

    The ``N - n`` others store their own copy at full fee.  With
    ``p.waive_first_uploader_ef`` the first dedup uploader pays no EF.
    """
    state = PopulationState(N, n)
    dedup_total = n * utility_user_dedup(p, n)
    if p.waive_first_uploader_ef:
        dedup_total += p.extra_fee_EF
    plain_total = (state.total_holders_N - n) * utility_user_no_dedup(p)
    return (dedup_total + plain_total) / N


def utility_csp_no_dedup(p: EconParams, holders: Iterable[tuple[int, int]]) -> Fraction:
    """Sum over files of ``N_d * (SF*|d| - SC*|d|)``; ``holders`` is (N_d, |d|)."""
    total = ZERO
    for N, size in holders:
        if N < 1:
            raise ValueError("every file needs at least one holder")
        total += N * (p.storage_fee_SF * size - p.storage_cost_SC * size)
    return total


def utility_csp_dedup(p: EconParams, states: Sequence[PopulationState]) -> Fraction:
    margin = p.storage_fee_SF - p.storage_cost_SC
    total = ZERO
    for s in states:
        total += (s.total_holders_N - s.dedup_rate_n + 1) * margin
        total += s.dedup_rate_n * p.extra_fee_EF
        total -= s.total_holders_N * p.cost_csp_I
    if p.waive_first_uploader_ef:
        total -= len(states) * p.extra_fee_EF
    return total - p.cost_deploy_I


def utility_csp_inter(base: MoneyLike, af_in: MoneyLike, af_out: MoneyLike) -> Fraction:
    af_in, af_out = money(af_in), money(af_out)
    if af_in < 0 or af_out < 0:
        raise ValueError("access-fee flows must be >= 0")
    return money(base) + af_in - af_out


def utility_report(
    p: EconParams, state: PopulationState, af_in: MoneyLike = 0, af_out: MoneyLike = 0
) -> UtilityReport:
    u_csp1 = utility_csp_dedup(p, [state])
    return UtilityReport(
        u_user_no_dedup=utility_user_no_dedup(p),
        u_user_dedup=utility_user_dedup(p, state.dedup_rate_n),
        u_csp_no_dedup=utility_csp_no_dedup(p, [(state.total_holders_N, 1)]),
        u_csp_dedup=u_csp1,
        u_csp_inter=utility_csp_inter(u_csp1, af_in, af_out),
    )


# -- extra-fee bounds ------------------------------------------------------


def min_extra_fee(p: EconParams, n: int, cost_aware: bool = False) -> Fraction:
    """Smallest EF keeping the provider at least as well off as without dedup."""
    _check_n(n)
    bound = Fraction(n - 1, n) * (p.storage_fee_SF - p.storage_cost_SC)
    if cost_aware:
        bound += n * p.cost_csp_I + p.cost_deploy_I
    return bound


def max_extra_fee(p: EconParams, n: int, cost_aware: bool = False) -> Fraction:
    """Largest EF keeping a user at least as well off as without dedup."""
    _check_n(n)
    bound = Fraction(n - 1, n) * p.storage_fee_SF
    if cost_aware:
        bound += p.cost_user_I
    return bound


def extra_fee_interval(
    p: EconParams, n: int, cost_aware: bool = False
) -> Optional[tuple[Fraction, Fraction]]:
    """``(min, max)`` admissible EF, or ``None`` when the interval is empty."""
    lo = min_extra_fee(p, n, cost_aware)
    hi = max_extra_fee(p, n, cost_aware)
    if lo > hi:
        return None
    return lo, hi


def ic_check(p: EconParams, n: int, role: Role | str) -> tuple[bool, Fraction]:
    """Incentive compatibility for ``role`` at dedup rate ``n``.

    Returns ``(U1 - U0 >= 0, U1 - U0)``.  The provider side is evaluated for
    a single file whose ``n`` holders all dedup.
    """
    role = Role(role)
    _check_n(n)
    if role is Role.USER:
        margin = utility_user_dedup(p, n) - utility_user_no_dedup(p)
    else:
        margin = utility_csp_dedup(p, [PopulationState(n, n)]) - utility_csp_no_dedup(
            p, [(n, 1)]
        )
    return margin >= 0, margin


def ir_check(p: EconParams, n: int, role: Role | str) -> bool:
    role = Role(role)
    _check_n(n)
    if role is Role.USER:
        return utility_user_dedup(p, n) >= 0
    return utility_csp_dedup(p, [PopulationState(n, n)]) >= 0
