"""Experiment runners: utility surfaces, dataset-driven multi-provider runs,
and the uniform-payment sweep.

Analytic numbers come from :mod:`dedupchain.economics`; every runner also has
a ledger-simulated counterpart on small inputs so the closed forms can be
checked against what the contracts actually move.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Iterable, Optional, Sequence

import numpy as np

from ..crypto import FileObject, pipeline
from ..economics import (
    EconParams,
    PopulationState,
    average_user_utility,
    utility_csp_dedup,
    utility_csp_no_dedup,
    utility_user_no_dedup,
)
from ..money import ZERO, MoneyLike, money, quantize_down, to_decimal_str
from .driver import World
from .popcon import PopconRecord

EF_FRACTIONS = tuple(Fraction(i, 10) for i in range(1, 6))
N_FRACTIONS = (Fraction(1, 10), Fraction(1, 2), Fraction(9, 10), Fraction(1))
USER_COUNTS = tuple(range(10, 101, 10))

EXPERIMENT1_COLUMNS = ("ef_fraction", "n_fraction", "users", "u_user0", "u_user1", "u_csp0", "u_csp1")
EXPERIMENT2_COLUMNS = ("csp", "u0", "u1", "u2", "af_in", "af_out")


def _cell(v) -> str:
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator)
        text = to_decimal_str(v, 10).rstrip("0")
        return text.rstrip(".")
    return str(v)


@dataclass
class ExperimentResult:
    columns: tuple
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def as_dicts(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]


# -- experiment 1 -----------------------------------------------------------


def grid_params(base: EconParams, ef_fraction: Fraction,
                ef_quantum: Optional[Fraction] = None) -> EconParams:
    """``base`` with EF set to ``ef_fraction`` of SF, optionally truncated to a quantum."""
    ef = ef_fraction * base.storage_fee_SF
    if ef_quantum is not None:
        ef = quantize_down(ef, ef_quantum)
    return base.with_ef(ef)


def experiment1(
    params: Optional[EconParams] = None,
    ef_fractions: Sequence[MoneyLike] = EF_FRACTIONS,
    n_fractions: Sequence[MoneyLike] = N_FRACTIONS,
    users: Iterable[int] = USER_COUNTS,
    ef_quantum: Optional[MoneyLike] = None,
) -> ExperimentResult:
    """Average user utility and provider utility over the (EF, n/N, N) grid.

    One file is held by ``N`` users of which ``n = n_fraction * N`` dedup;
    the rest store their own copy at the full fee.
    """
    base = params or EconParams.reference()
    quantum = None if ef_quantum is None else money(ef_quantum)
    users = list(users)
    result = ExperimentResult(EXPERIMENT1_COLUMNS)
    for ef_f in map(money, ef_fractions):
        p = grid_params(base, ef_f, quantum)
        u0 = utility_user_no_dedup(p)
        for n_f in map(money, n_fractions):
            for N in users:
                n = n_f * N
                if n.denominator != 1 or n < 1:
                    raise ValueError(f"n_fraction {n_f} of {N} users is not a whole count >= 1")
                n = int(n)
                result.rows.append((
                    ef_f, n_f, N, u0,
                    average_user_utility(p, N, n),
                    utility_csp_no_dedup(p, [(N, 1)]),
                    utility_csp_dedup(p, [PopulationState(N, n)]),
                ))
    return result


@dataclass(frozen=True)
class SimulatedPoint:
    users: int
    dedup: int
    avg_user_utility: Fraction
    csp_utility: Fraction


def simulate_experiment1_point(params: EconParams, N: int, n: int, seed: int = 0) -> SimulatedPoint:
    """Run one grid cell on the ledger.

    ``n`` users upload the same file through the contract; the other
    ``N - n`` pay the full storage fee directly for a private copy.  User
    utility is ``P`` plus the user's balance change; provider utility is its
    balance change minus storage cost for every copy it keeps.
    """
    if params.waive_first_uploader_ef:
        raise ValueError("the contract charges every uploader EF; simulate with the waiver off")
    world = World.build(params, seed=seed, audit=False, record_trace=False)
    ledger = world.ledger
    csp = world.csp
    csp_start = ledger.balance(csp.address)
    d = FileObject(b"experiment-1 shared file")
    users = []
    for i in range(N):
        user = world.add_user(f"u{i}")
        users.append((user, ledger.balance(user.address)))
        if i < n:
            user.user_store(d)
        else:
            ledger.transfer(user.address, csp.address, params.storage_fee_SF)
    world.settle()
    ledger.check_conservation()
    total = sum((params.profit_P + ledger.balance(u.address) - b for u, b in users), ZERO)
    copies = csp.stored_copies(pipeline(d)[2]) + (N - n)
    csp_u = ledger.balance(csp.address) - csp_start - copies * params.storage_cost_SC
    return SimulatedPoint(N, n, total / N, csp_u)


def load_reference(name: str) -> dict:
    """Reference curve values keyed by (ef_fraction, series, users)."""
    path = resources.files("dedupchain.data.reference") / f"{name}.csv"
    rows = [l for l in path.read_text(encoding="utf-8").splitlines() if l and not l.startswith("#")]
    out = {}
    for row in csv.DictReader(rows):
        series = row["series"]
        key = (Fraction(row["ef_fraction"]), series if series == "no_dedup" else Fraction(series),
               int(row["users"]))
        out[key] = Fraction(row["value"])
    return out


@dataclass(frozen=True)
class ReferenceDelta:
    ef_fraction: Fraction
    series: object
    users: int
    expected: Fraction
    computed: Fraction

    @property
    def delta(self) -> Fraction:
        return abs(self.computed - self.expected)


def compare_to_reference(result: ExperimentResult) -> dict[str, list[ReferenceDelta]]:
    """Pair every reference point with the corresponding computed value."""
    computed_user, computed_csp = {}, {}
    for r in result.as_dicts():
        ef, nf, N = r["ef_fraction"], r["n_fraction"], r["users"]
        computed_user[(ef, nf, N)] = r["u_user1"]
        computed_user[(ef, "no_dedup", N)] = r["u_user0"]
        computed_csp[(ef, nf, N)] = r["u_csp1"]
        computed_csp[(ef, "no_dedup", N)] = r["u_csp0"]
    out = {}
    for name, computed in (("user_utility", computed_user), ("csp_utility", computed_csp)):
        deltas = []
        for key, expected in sorted(load_reference(name).items(), key=lambda kv: str(kv[0])):
            if key in computed:
                deltas.append(ReferenceDelta(*key, expected, computed[key]))
        out[name] = deltas
    return out


# -- experiment 2 -------------------------------------------------------------------


def _median_size(dataset: Sequence[PopconRecord]) -> Fraction:
    sizes = sorted(r.size_bytes for r in dataset)
    mid = len(sizes) // 2
    if len(sizes) % 2:
        return Fraction(sizes[mid])
    return Fraction(sizes[mid - 1] + sizes[mid], 2)


def assign_requests(dataset: Sequence[PopconRecord], csp_count: int, mode: str = "round_robin",
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-package request counts at each provider, and each package's first provider.

    Requests are numbered in dataset order (all installations of the first
    package, then the next, ...).  ``round_robin`` sends request ``r`` to
    provider ``r mod csp_count``; ``random`` draws providers from a seeded
    generator.
    """
    inst = np.array([r.inst for r in dataset], dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(inst)[:-1]))
    if mode == "round_robin":
        c = np.arange(csp_count)
        full = inst // csp_count
        rem = inst % csp_count
        offset = (c[None, :] - starts[:, None]) % csp_count
        counts = full[:, None] + (offset < rem[:, None])
        first = starts % csp_count
    elif mode == "random":
        rng = np.random.default_rng(seed)
        picks = rng.integers(0, csp_count, size=int(inst.sum()))
        counts = np.zeros((len(dataset), csp_count), dtype=np.int64)
        first = np.empty(len(dataset), dtype=np.int64)
        for i, (s, n) in enumerate(zip(starts, inst)):
            counts[i] = np.bincount(picks[s:s + n], minlength=csp_count)
            first[i] = picks[s]
    else:
        raise ValueError(f"unknown assignment mode {mode!r}")
    return counts.astype(np.int64), first.astype(np.int64)


def experiment2(
    dataset: Sequence[PopconRecord],
    csp_count: int = 5,
    params: Optional[EconParams] = None,
    ef_fraction: MoneyLike = Fraction(2, 5),
    assignment: str = "round_robin",
    seed: int = 0,
) -> ExperimentResult:
    """Per-provider utilities without dedup, with isolated dedup, and with shared dedup.

    Each package is one file; its fees scale with size so the median package
    pays the base SF, and EF is ``ef_fraction`` of each file's SF.  Every
    holder dedups (n = N).

    * ``u0``: every request stores its own copy.
    * ``u1``: each provider dedups only among its own requests.
    * ``u2``: a package is stored once, by the provider that saw it first;
      requests at other providers are served through the registry and cost
      the requesting provider the access fee AF, received by the storer.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if csp_count < 1:
        raise ValueError("csp_count must be >= 1")
    base = params or EconParams.reference()
    base = base.with_ef(money(ef_fraction) * base.storage_fee_SF)
    median = _median_size(dataset)
    counts, first = assign_requests(dataset, csp_count, assignment, seed)
    I_c, I_dep, AF = base.cost_csp_I, base.cost_deploy_I, base.access_fee_AF

    u0 = [ZERO] * csp_count
    u1 = [-I_dep] * csp_count
    u2 = [-I_dep] * csp_count
    af_in = [ZERO] * csp_count
    af_out = [ZERO] * csp_count
    for i, rec in enumerate(dataset):
        p = base.scaled(Fraction(rec.size_bytes) / median)
        margin = p.storage_fee_SF - p.storage_cost_SC
        owner = int(first[i])
        for c in range(csp_count):
            n_c = int(counts[i, c])
            if not n_c:
                continue
            u0[c] += n_c * margin
            u1[c] += margin + n_c * p.extra_fee_EF - n_c * I_c
            if c != owner:
                af_out[c] += n_c * AF
                af_in[owner] += n_c * AF
        u2[owner] += margin + rec.inst * (p.extra_fee_EF - I_c)
    result = ExperimentResult(EXPERIMENT2_COLUMNS)
    for c in range(csp_count):
        result.rows.append((f"c{c + 1}", u0[c], u1[c], u2[c] + af_in[c] - af_out[c], af_in[c], af_out[c]))
    return result


def interaction_cost_bound(dataset: Sequence[PopconRecord], csp_count: int,
                           params: EconParams, assignment: str = "round_robin",
                           seed: int = 0) -> list[Fraction]:
    """Per-provider total interaction costs (the slack allowed between u1 and u0)."""
    counts, _ = assign_requests(dataset, csp_count, assignment, seed)
    per = counts.sum(axis=0)
    return [int(per[c]) * params.cost_csp_I + params.cost_deploy_I for c in range(csp_count)]


@dataclass(frozen=True)
class OrderingCheck:
    csp: str
    u2_ge_u1: bool
    u1_ge_u0: bool

    @property
    def ok(self) -> bool:
        return self.u2_ge_u1 and self.u1_ge_u0


def ordering(result: ExperimentResult, slack: Sequence[Fraction]) -> list[OrderingCheck]:
    out = []
    for row, eps in zip(result.as_dicts(), slack):
        out.append(OrderingCheck(row["csp"], row["u2"] >= row["u1"], row["u1"] >= row["u0"] - eps))
    return out


def simulate_experiment2(
    dataset: Sequence[PopconRecord],
    csp_count: int = 5,
    params: Optional[EconParams] = None,
    ef_fraction: MoneyLike = Fraction(2, 5),
    seed: int = 0,
) -> ExperimentResult:
    """Shared-dedup column of :func:`experiment2` measured on the ledger.

    Every request is a fresh honest user at its round-robin provider.
    Returns rows with ``u2`` (balance change minus storage cost) and the
    access-fee flows; ``u0``/``u1`` are left at zero.  Quadratic in the
    largest package's installation count, so meant for small fixtures.
    """
    base = params or EconParams.reference()
    base = base.with_ef(money(ef_fraction) * base.storage_fee_SF)
    median = _median_size(dataset)
    unit = base.scaled(1 / median)
    total_requests = sum(r.inst for r in dataset)
    max_fee = (unit.storage_fee_SF + unit.extra_fee_EF) * max(r.size_bytes for r in dataset)
    world = World.build(unit, csp_count=csp_count, interconnected=True, ef_per_unit=True,
                        af_reserve=base.access_fee_AF * total_requests, seed=seed,
                        user_funding=max_fee + unit.cost_user_I + 1,
                        audit=False, record_trace=False)
    ledger = world.ledger
    start = [ledger.balance(c.address) + world.contract(i).af_reserve
             for i, c in enumerate(world.csps)]
    r = 0
    for rec in dataset:
        d = FileObject(f"package:{rec.package}".encode())
        for _ in range(rec.inst):
            user = world.add_user(f"req{r}", csp_index=r % csp_count)
            user.user_store(d, rec.size_bytes)
            r += 1
    world.settle()
    ledger.check_conservation()
    result = ExperimentResult(EXPERIMENT2_COLUMNS)
    for c, actor in enumerate(world.csps):
        contract = world.contract(c)
        stored_cost = sum(
            (unit.storage_cost_SC * contract.utab[tag].size for tag in actor.objects), ZERO
        )
        delta = ledger.balance(actor.address) + contract.af_reserve - start[c]
        af_in = af_out = ZERO
        for other in world.csps:
            oc = ledger.contract(other.contract)
            for x in oc.cross.values():
                if x.state.value in ("active", "inactive"):
                    if x.remote_csp == actor.address:
                        af_in += x.af
                    if other is actor:
                        af_out += x.af
        result.rows.append((f"c{c + 1}", ZERO, ZERO, delta - stored_cost, af_in, af_out))
    return result


# -- uniform payments ---------------------------------------------------------


@dataclass(frozen=True)
class SweepStep:
    m: int
    target: Fraction
    max_deviation: Fraction
    csp_residual: Fraction


@dataclass
class SweepReport:
    integer_mode: bool
    steps: list

    @property
    def max_deviation(self) -> Fraction:
        return max((s.max_deviation for s in self.steps), default=ZERO)

    def ok(self, tolerance: MoneyLike = 0) -> bool:
        return self.max_deviation <= money(tolerance)


def uniform_payments_sweep(
    m_max: int = 100,
    integer_mode: bool = False,
    storage_fee: MoneyLike = Fraction(33, 200),
    extra_fee: MoneyLike = Fraction(33, 2000),
    size: int = 1,
) -> SweepReport:
    """Upload one file ``m_max`` times and check net spend after each upload.

    After the ``m``-th upload every holder's net expenditure (balance lost)
    must be ``SF*|d|/m + EF``.  ``csp_residual`` is what the provider received
    beyond ``SF*|d| + m*EF``; it absorbs any integer rounding.
    """
    sf, ef = money(storage_fee), money(extra_fee)
    params = EconParams(profit_P=0, storage_fee_SF=sf, extra_fee_EF=ef)
    funding = sf * size + ef + 1
    world = World.build(params, integer_mode=integer_mode, user_funding=funding,
                        audit=False, record_trace=False)
    ledger = world.ledger
    csp = world.csp
    csp_start = ledger.balance(csp.address)
    d = FileObject(b"uniform payments")
    owners = []
    steps = []
    full = sf * size
    for m in range(1, m_max + 1):
        user = world.add_user(f"u{m}")
        up = user.user_store(d, size)
        if not up.receipts[-1].accepted:
            raise RuntimeError(f"upload {m} failed: {up.receipts[-1].reason}")
        owners.append(user)
        target = full / m + ef
        worst = max(abs(funding - ledger.balance(u.address) - target) for u in owners)
        residual = ledger.balance(csp.address) - csp_start - (full + m * ef)
        steps.append(SweepStep(m, target, worst, residual))
    ledger.check_conservation()
    return SweepReport(integer_mode, steps)
