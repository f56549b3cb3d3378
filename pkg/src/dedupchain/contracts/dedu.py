"""The per-provider dedup contract.

One instance is deployed by each storage provider.  Users request storage
for a tag, receive a fee quote that depends on how many holders the tag
already has, pay into escrow, and the payment is released only once both the
provider and the user have confirmed.  When a later uploader confirms, the
discount it enjoyed is paid for by redistributing its fee (minus the extra
fee) among the earlier holders, so every holder converges to the same net
price.

When mounted under a root registry the contract also acts as a pass-through
for users whose tag lives at another provider (see ``fn_request``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

from ..crypto import Tag
from ..ledger import Context, Contract, require
from ..money import ZERO, fmt, is_integral, money, nonneg


class RequestState(str, Enum):
    WAIT_FOR_PAY = "WaitForPay"
    WAIT_FOR_CSP_CONF = "WaitForCSPConf"
    WAIT_FOR_CLI_CONF = "WaitForCliConf"
    ACTIVE = "Active"
    INACTIVE = "Inactive"
    REFUNDED = "Refunded"
    CLAIMED = "Claimed"

    @property
    def terminal(self) -> bool:
        return self in (RequestState.INACTIVE, RequestState.REFUNDED, RequestState.CLAIMED)


#: every accepted transition of a single request
TRANSITIONS = frozenset({
    (RequestState.WAIT_FOR_PAY, RequestState.WAIT_FOR_CSP_CONF),
    (RequestState.WAIT_FOR_PAY, RequestState.CLAIMED),
    (RequestState.WAIT_FOR_CSP_CONF, RequestState.WAIT_FOR_CLI_CONF),
    (RequestState.WAIT_FOR_CSP_CONF, RequestState.REFUNDED),
    (RequestState.WAIT_FOR_CLI_CONF, RequestState.ACTIVE),
    (RequestState.WAIT_FOR_CLI_CONF, RequestState.REFUNDED),
    (RequestState.ACTIVE, RequestState.INACTIVE),
})


class CrossState(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    INACTIVE = "inactive"
    REFUNDED = "refunded"
    CLAIMED = "claimed"

    @property
    def terminated(self) -> bool:
        return self is not CrossState.PENDING


@dataclass
class ContractConfig:
    SF: Fraction = ZERO
    EF: Fraction = ZERO
    k: int = 0
    deposit_required: Fraction = ZERO
    AF: Fraction = ZERO


@dataclass
class RequestRecord:
    ID: str
    req_num: int
    size: int
    tau_sub: int
    tau_p: int
    tau_c1: int
    tau_c2: int
    pay: Fraction
    deposit: Fraction
    state: RequestState = RequestState.WAIT_FOR_PAY
    paid: Fraction = ZERO
    net: Fraction = ZERO
    origin: Optional[str] = None
    tag: Optional[Tag] = None

    def held(self) -> Fraction:
        """Funds this record currently keeps in escrow."""
        if self.state is RequestState.WAIT_FOR_PAY:
            return self.deposit
        if self.state in (RequestState.WAIT_FOR_CSP_CONF, RequestState.WAIT_FOR_CLI_CONF):
            return self.paid
        return ZERO


@dataclass
class TagRow:
    size: int
    num_req: int = 0
    c_pay: Fraction = ZERO
    requests: dict = field(default_factory=dict)

    def active_count(self, before: Optional[int] = None) -> int:
        return sum(
            1 for r in self.requests.values()
            if r.state is RequestState.ACTIVE and (before is None or r.req_num < before)
        )


@dataclass
class CrossRecord:
    """Local handle for a user whose data sits behind another provider's contract."""

    user: str
    tag: Tag
    req_num: int
    remote: str
    remote_csp: str
    remote_req: int
    pay: Fraction
    af: Fraction
    state: CrossState = CrossState.PENDING


@dataclass(frozen=True)
class Quote:
    tag: Tag
    req_num: int
    pay: Fraction
    SF: Fraction
    size: int
    tau_p: int
    tau_c1: int
    tau_c2: int
    csp: str
    contract: str
    EF: Fraction = ZERO
    remote: bool = False
    storage_contract: str = ""
    storage_req: int = -1

    @property
    def full_price(self) -> Fraction:
        return self.SF * self.size + self.EF

    @property
    def is_first_upload(self) -> bool:
        """Full price means nobody holds the file: send the file, not a proof."""
        return self.pay == self.full_price


def water_fill(nets: list[int], amount: int) -> list[int]:
    """Split an integer ``amount`` so the largest balances come down first.

    Returns per-index payouts summing to ``amount``.  Ties go to the lowest
    index, which keeps every resulting balance within one unit of the others
    whenever they started that way.
    """
    n = len(nets)
    if amount < 0:
        raise ValueError("amount must be >= 0")
    if amount and not n:
        raise ValueError("nobody to pay")
    final = list(nets)
    order = sorted(range(n), key=lambda i: (-nets[i], i))
    remaining = amount
    group = 0
    while remaining:
        level = final[order[0]]
        while group < n and final[order[group]] == level:
            group += 1
        members = sorted(order[:group])
        if group < n:
            step = level - final[order[group]]
            if remaining >= step * group:
                for i in members:
                    final[i] -= step
                remaining -= step * group
                continue
        q, r = divmod(remaining, group)
        for pos, i in enumerate(members):
            final[i] -= q + (1 if pos < r else 0)
        remaining = 0
    return [a - b for a, b in zip(nets, final)]


class DeduContract(Contract):
    """Per-provider fee escrow and dedup bookkeeping.

    ``integer_mode`` restricts amounts to whole units: quotes become
    ``floor(SF*|d|/m) + EF`` and redistribution uses :func:`water_fill`.
    ``ef_per_unit`` charges the extra fee per unit of size, like SF, instead
    of once per request.
    """

    kind = "dedu"

    def __init__(self, *, integer_mode: bool = False, root: Optional[str] = None,
                 ef_per_unit: bool = False):
        super().__init__()
        self.integer_mode = integer_mode
        self.ef_per_unit = ef_per_unit
        self.root = root
        self.config = ContractConfig()
        self.utab: dict[Tag, TagRow] = {}
        self.cross: dict[tuple, CrossRecord] = {}
        self.cross_by_remote: dict[tuple, tuple] = {}
        self.af_reserve = ZERO
        self.af_earmarked = ZERO

    @property
    def csp(self) -> Optional[str]:
        return self.owner

    # -- helpers ---------------------------------------------------------------

    def _ef(self, size: int) -> Fraction:
        return self.config.EF * size if self.ef_per_unit else self.config.EF

    def _fee(self, size: int, holders: int) -> Fraction:
        """Fee for the ``holders``-th holder of a ``size``-unit file."""
        full = self.config.SF * size
        share = full // holders if self.integer_mode else full / holders
        return money(share) + self._ef(size)

    def _record(self, tag: Tag, req_num: int) -> RequestRecord:
        row = self.utab.get(tag)
        require(row is not None, "unknown tag")
        rec = row.requests.get(req_num)
        require(rec is not None, "unknown request")
        return rec

    def _caller_is_owner_of(self, ctx: Context, rec: RequestRecord) -> None:
        if rec.origin is None:
            require(ctx.sender == rec.ID, "sender is not the requester")
        else:
            require(ctx.sender == rec.origin, "remote request must be driven by its origin contract")

    def _move_state(self, ctx: Context, rec: RequestRecord, new: RequestState) -> None:
        assert (rec.state, new) in TRANSITIONS, (rec.state, new)
        ctx.assign(rec, "state", new)
        ctx.emit("state", tag=rec.tag, reqNum=rec.req_num, state=new.value)

    def _notify_origin(self, ctx: Context, tag: Tag, rec: RequestRecord, outcome: CrossState) -> None:
        if rec.origin is not None:
            ctx.call(rec.origin, "crossClosed", tag, rec.req_num, outcome.value)

    def quote_for(self, tag: Tag, rec: RequestRecord) -> Quote:
        return Quote(tag, rec.req_num, rec.pay, self.config.SF, rec.size, rec.tau_p,
                     rec.tau_c1, rec.tau_c2, self.owner, self.address, self._ef(rec.size),
                     storage_contract=self.address, storage_req=rec.req_num)

    # -- provider functionalities -----------------------------------------------

    def fn_create(self, ctx: Context, s_pay, e_pay, interval, deposit=0) -> None:
        require(ctx.sender == self.owner, "only the provider may configure the contract")
        require(isinstance(interval, int) and interval >= 1, "interval must be >= 1")
        sf, ef, dep = nonneg(s_pay, "SF"), nonneg(e_pay, "EF"), nonneg(deposit, "deposit")
        if self.integer_mode:
            require(all(is_integral(v) for v in (sf, ef, dep)), "integer mode needs whole units")
        af = self.config.AF
        ctx.assign(self, "config", ContractConfig(sf, ef, interval, dep, af))
        ctx.emit("create", SF=sf, EF=ef, k=interval, deposit=dep)

    def fn_setAccessFee(self, ctx: Context, af) -> None:
        require(ctx.sender == self.owner, "only the provider may set the access fee")
        c = self.config
        ctx.assign(self, "config", ContractConfig(c.SF, c.EF, c.k, c.deposit_required, nonneg(af)))

    def fn_depositAF(self, ctx: Context) -> None:
        require(ctx.sender == self.owner, "only the provider funds the access-fee reserve")
        ctx.assign(self, "af_reserve", self.af_reserve + ctx.value)

    def fn_withdrawAF(self, ctx: Context, amount) -> None:
        require(ctx.sender == self.owner, "only the provider may withdraw")
        amount = nonneg(amount)
        require(amount <= self.af_reserve - self.af_earmarked, "reserve is committed")
        ctx.assign(self, "af_reserve", self.af_reserve - amount)
        ctx.transfer(self.owner, amount)

    def fn_cspConf(self, ctx: Context, tag: Tag, req_num: int) -> None:
        require(ctx.sender == self.owner, "only the provider confirms")
        rec = self._record(tag, req_num)
        require(ctx.tau <= rec.tau_c1, "confirmation deadline passed")
        require(rec.state is RequestState.WAIT_FOR_CSP_CONF, "request is not awaiting provider confirmation")
        self._move_state(ctx, rec, RequestState.WAIT_FOR_CLI_CONF)

    def fn_claim(self, ctx: Context, tag: Tag, req_num: int) -> None:
        require(ctx.sender == self.owner, "only the provider claims deposits")
        rec = self._record(tag, req_num)
        require(ctx.tau > rec.tau_p, "payment window still open")
        require(rec.state is RequestState.WAIT_FOR_PAY, "nothing to claim")
        ctx.transfer(self.owner, rec.deposit)
        self._move_state(ctx, rec, RequestState.CLAIMED)
        self._notify_origin(ctx, tag, rec, CrossState.CLAIMED)

    # -- user functionalities ------------------------------------------------------

    def fn_request(self, ctx: Context, tag: Tag, size: int) -> Quote:
        require(self.config.k >= 1, "contract not configured")
        require(isinstance(size, int) and size >= 1, "size must be a positive count")
        require(ctx.value >= self.config.deposit_required, "insufficient deposit")
        row = self.utab.get(tag)
        if row is not None:
            require(row.size == size, "size does not match the stored file")
        if self.root is not None and (row is None or not row.active_count()):
            found = ctx.call(self.root, "getTag", tag)
            if found is not None and found.dedu_contract != self.address:
                return self._cross_request(ctx, tag, size, found)
        return self._local_request(ctx, tag, size, ctx.sender, None, ctx.value)

    def _local_request(self, ctx: Context, tag: Tag, size: int, user: str,
                       origin: Optional[str], deposit: Fraction) -> Quote:
        row = self.utab.get(tag)
        if row is None:
            row = TagRow(size)
            ctx.put(self.utab, tag, row)
        pay = row.c_pay if row.active_count() else self._fee(size, 1)
        num = row.num_req
        k = self.config.k
        rec = RequestRecord(user, num, size, ctx.tau, ctx.tau + k, ctx.tau + 2 * k,
                            ctx.tau + 3 * k, pay, deposit, origin=origin, tag=tag)
        ctx.put(row.requests, num, rec)
        ctx.assign(row, "c_pay", pay)
        ctx.assign(row, "num_req", num + 1)
        q = self.quote_for(tag, rec)
        ctx.emit("pay", tag=tag, SF=self.config.SF, pay=pay, reqNum=num, tau_p=rec.tau_p,
                 tau_c1=rec.tau_c1, tau_c2=rec.tau_c2, user=user)
        return q

    def _cross_request(self, ctx: Context, tag: Tag, size: int, found) -> Quote:
        af = self.config.AF
        require(self.af_reserve - self.af_earmarked >= af, "access-fee reserve exhausted")
        remote_q: Quote = ctx.call(found.dedu_contract, "remoteRequest", tag, size, ctx.sender,
                                   value=ctx.value)
        row = self.utab.get(tag)
        if row is None:
            row = TagRow(size)
            ctx.put(self.utab, tag, row)
        num = row.num_req
        ctx.assign(row, "num_req", num + 1)
        x = CrossRecord(ctx.sender, tag, num, found.dedu_contract, found.csp, remote_q.req_num,
                        remote_q.pay, af)
        ctx.put(self.cross, (tag, num), x)
        ctx.put(self.cross_by_remote, (found.dedu_contract, tag, remote_q.req_num), (tag, num))
        ctx.assign(self, "af_earmarked", self.af_earmarked + af)
        ctx.emit("crossRequest", tag=tag, reqNum=num, remote=found.dedu_contract,
                 remoteReqNum=remote_q.req_num, pay=remote_q.pay, user=ctx.sender)
        return Quote(tag, num, remote_q.pay, remote_q.SF, size, remote_q.tau_p, remote_q.tau_c1,
                     remote_q.tau_c2, found.csp, self.address, remote_q.EF, remote=True,
                     storage_contract=found.dedu_contract, storage_req=remote_q.req_num)

    def _cross(self, ctx: Context, tag: Tag, req_num: int) -> Optional[CrossRecord]:
        x = self.cross.get((tag, req_num))
        if x is not None:
            require(ctx.sender == x.user, "sender is not the requester")
        return x

    def fn_pay(self, ctx: Context, tag: Tag, req_num: int) -> None:
        x = self._cross(ctx, tag, req_num)
        if x is not None:
            require(x.state is CrossState.PENDING, "cross request already terminated")
            ctx.call(x.remote, "remotePay", tag, x.remote_req, value=ctx.value)
            return
        rec = self._record(tag, req_num)
        require(rec.origin is None, "remote request must be driven by its origin contract")
        self._pay(ctx, rec)

    def _pay(self, ctx: Context, rec: RequestRecord) -> None:
        self._caller_is_owner_of(ctx, rec)
        require(ctx.tau <= rec.tau_p, "payment deadline passed")
        require(rec.state is RequestState.WAIT_FOR_PAY, "request is not awaiting payment")
        require(ctx.value == rec.pay, "payment must equal the quoted fee")
        ctx.assign(rec, "paid", ctx.value)
        ctx.assign(rec, "net", ctx.value)
        ctx.transfer(rec.ID, rec.deposit)
        self._move_state(ctx, rec, RequestState.WAIT_FOR_CSP_CONF)

    def fn_usrConf(self, ctx: Context, tag: Tag, req_num: int) -> None:
        x = self._cross(ctx, tag, req_num)
        if x is not None:
            require(x.state is CrossState.PENDING, "cross request already terminated")
            ctx.call(x.remote, "remoteUsrConf", tag, x.remote_req)
            require(self.cross[(tag, req_num)].state is CrossState.ACTIVE, "remote side did not settle")
            return
        rec = self._record(tag, req_num)
        require(rec.origin is None, "remote request must be driven by its origin contract")
        self._usr_conf(ctx, tag, rec)

    def _usr_conf(self, ctx: Context, tag: Tag, rec: RequestRecord) -> None:
        self._caller_is_owner_of(ctx, rec)
        require(ctx.tau <= rec.tau_c2, "confirmation deadline passed")
        require(rec.state is RequestState.WAIT_FOR_CLI_CONF, "request is not awaiting user confirmation")
        row = self.utab[tag]
        priors = [r for r in row.requests.values()
                  if r.req_num < rec.req_num and r.state is RequestState.ACTIVE]
        if not priors:
            ctx.transfer(self.owner, rec.paid)
        else:
            ef = self._ef(rec.size)
            rem = rec.paid - ef
            require(rem >= 0, "paid amount below the extra fee")
            ctx.transfer(self.owner, ef)
            if self.integer_mode:
                shares = water_fill([int(r.net) for r in priors], int(rem))
                shares = [Fraction(s) for s in shares]
            else:
                shares = [rem / len(priors)] * len(priors)
            for r, s in zip(priors, shares):
                ctx.transfer(r.ID, s)
                ctx.assign(r, "net", r.net - s)
            ctx.emit("redistribute", tag=tag, reqNum=rec.req_num, rem=rem,
                     shares={r.req_num: s for r, s in zip(priors, shares)})
        ctx.assign(row, "c_pay", self._fee(row.size, len(priors) + 2))
        self._move_state(ctx, rec, RequestState.ACTIVE)
        if rec.origin is None and not priors and self.root is not None:
            if ctx.call(self.root, "getTag", tag) is None:
                ctx.call(self.root, "setTag", tag)
        self._notify_origin(ctx, tag, rec, CrossState.ACTIVE)

    def fn_refund(self, ctx: Context, tag: Tag, req_num: int) -> None:
        x = self._cross(ctx, tag, req_num)
        if x is not None:
            require(x.state is CrossState.PENDING, "cross request already terminated")
            ctx.call(x.remote, "remoteRefund", tag, x.remote_req)
            return
        rec = self._record(tag, req_num)
        require(rec.origin is None, "remote request must be driven by its origin contract")
        self._refund(ctx, tag, rec)

    def _refund(self, ctx: Context, tag: Tag, rec: RequestRecord) -> None:
        self._caller_is_owner_of(ctx, rec)
        late_csp = ctx.tau > rec.tau_c1 and rec.state is RequestState.WAIT_FOR_CSP_CONF
        late_user = ctx.tau > rec.tau_c2 and rec.state is RequestState.WAIT_FOR_CLI_CONF
        require(late_csp or late_user, "refund conditions not met")
        ctx.transfer(rec.ID, rec.paid)
        ctx.assign(rec, "net", ZERO)
        self._move_state(ctx, rec, RequestState.REFUNDED)
        self._notify_origin(ctx, tag, rec, CrossState.REFUNDED)

    def fn_deLink(self, ctx: Context, tag: Tag, req_num: int) -> None:
        x = self._cross(ctx, tag, req_num)
        if x is not None:
            require(x.state is CrossState.ACTIVE, "no active link to release")
            ctx.call(x.remote, "remoteDeLink", tag, x.remote_req)
            ctx.assign(x, "state", CrossState.INACTIVE)
            return
        rec = self._record(tag, req_num)
        require(rec.origin is None, "remote request must be driven by its origin contract")
        self._delink(ctx, tag, rec)

    def _delink(self, ctx: Context, tag: Tag, rec: RequestRecord) -> None:
        self._caller_is_owner_of(ctx, rec)
        require(rec.state is RequestState.ACTIVE, "request is not active")
        self._move_state(ctx, rec, RequestState.INACTIVE)

    # -- contract-to-contract functionalities -----------------------------------------

    def _require_peer(self, ctx: Context) -> None:
        require(self.root is not None, "not part of a registry")
        require(ctx.ledger.is_contract(ctx.sender), "caller is not a contract")
        require(ctx.call(self.root, "isRegistered", ctx.sender), "caller is not registered")

    def fn_remoteRequest(self, ctx: Context, tag: Tag, size: int, user: str) -> Quote:
        self._require_peer(ctx)
        require(self.config.k >= 1, "contract not configured")
        require(ctx.value >= self.config.deposit_required, "insufficient deposit")
        row = self.utab.get(tag)
        require(row is None or row.size == size, "size does not match the stored file")
        return self._local_request(ctx, tag, size, user, ctx.sender, ctx.value)

    def fn_remotePay(self, ctx: Context, tag: Tag, req_num: int) -> None:
        self._pay(ctx, self._record(tag, req_num))

    def fn_remoteUsrConf(self, ctx: Context, tag: Tag, req_num: int) -> None:
        self._usr_conf(ctx, tag, self._record(tag, req_num))

    def fn_remoteRefund(self, ctx: Context, tag: Tag, req_num: int) -> None:
        self._refund(ctx, tag, self._record(tag, req_num))

    def fn_remoteDeLink(self, ctx: Context, tag: Tag, req_num: int) -> None:
        self._delink(ctx, tag, self._record(tag, req_num))

    def fn_crossClosed(self, ctx: Context, tag: Tag, remote_req: int, outcome: str) -> None:
        """Callback from the storing contract when a forwarded request ends."""
        key = self.cross_by_remote.get((ctx.sender, tag, remote_req))
        require(key is not None, "unknown cross request")
        x = self.cross[key]
        require(x.state is CrossState.PENDING, "cross request already terminated")
        outcome = CrossState(outcome)
        ctx.assign(self, "af_earmarked", self.af_earmarked - x.af)
        if outcome is CrossState.ACTIVE:
            ctx.assign(self, "af_reserve", self.af_reserve - x.af)
            ctx.transfer(x.remote_csp, x.af)
            ctx.emit("accessFee", tag=tag, reqNum=x.req_num, to=x.remote_csp, amount=x.af)
        ctx.assign(x, "state", outcome)

    # -- views -------------------------------------------------------------------

    def record(self, tag: Tag, req_num: int) -> Optional[RequestRecord]:
        row = self.utab.get(tag)
        return None if row is None else row.requests.get(req_num)

    def cross_record(self, tag: Tag, req_num: int) -> Optional[CrossRecord]:
        return self.cross.get((tag, req_num))

    def active_holders(self, tag: Tag) -> list[str]:
        row = self.utab.get(tag)
        if row is None:
            return []
        return [r.ID for r in row.requests.values() if r.state is RequestState.ACTIVE]

    def cpay_audit(self, tag: Tag) -> tuple[Fraction, Fraction]:
        """(stored next-quote, quote recomputed from the live holder count)."""
        row = self.utab.get(tag)
        if row is None:
            raise KeyError(tag)
        live = row.active_count()
        return row.c_pay, self._fee(row.size, live + 1)

    def escrow_expected(self) -> Fraction:
        """What the escrow must hold: open request funds plus the access-fee reserve."""
        total = self.af_reserve
        for row in self.utab.values():
            total += sum((r.held() for r in row.requests.values()), ZERO)
        return total

    def snapshot(self) -> dict:
        c = self.config
        return {
            "config": {"SF": fmt(c.SF), "EF": fmt(c.EF), "k": c.k,
                       "deposit": fmt(c.deposit_required), "AF": fmt(c.AF)},
            "af_reserve": fmt(self.af_reserve),
            "utab": {
                tag.hex: {
                    "size": row.size, "numReq": row.num_req, "cPay": fmt(row.c_pay),
                    "requests": {
                        str(n): {
                            "ID": r.ID, "tau": [r.tau_sub, r.tau_p, r.tau_c1, r.tau_c2],
                            "state": r.state.value, "pay": fmt(r.pay), "paid": fmt(r.paid),
                            "deposit": fmt(r.deposit), "net": fmt(r.net), "origin": r.origin,
                        }
                        for n, r in sorted(row.requests.items())
                    },
                }
                for tag, row in sorted(self.utab.items(), key=lambda kv: kv[0].hex)
            },
            "cross": {
                f"{tag.hex}:{n}": {"user": x.user, "remote": x.remote, "remoteReqNum": x.remote_req,
                                    "pay": fmt(x.pay), "AF": fmt(x.af), "state": x.state.value}
                for (tag, n), x in sorted(self.cross.items(), key=lambda kv: (kv[0][0].hex, kv[0][1]))
            },
        }

