"""A deterministic, single-threaded stand-in for a smart-contract chain.

The ledger owns every balance (plain accounts, contract escrows and the
miner sink) and a logical block clock ``tau``.  Messages are dispatched one at
a time; each runs its contract transition inside a journal so that a rejection
anywhere, including inside a nested contract-to-contract call, restores every
balance and every piece of contract state it touched.

Money is only ever moved, never created or destroyed after funding, so the
sum of all balances equals the total ever minted.  That is checked after each
dispatch when ``audit`` is on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Optional

from .money import ZERO, MoneyLike, fmt, money, nonneg


class LedgerError(Exception):
    pass


class InsufficientFunds(LedgerError):
    pass


class ConservationError(LedgerError):
    pass


class Rejected(Exception):
    """Raised by contract code to abort the current message."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def require(cond: Any, reason: str) -> None:
    if not cond:
        raise Rejected(reason)


@dataclass
class CostSchedule:
    """Interaction costs, paid by the sender to the miner sink on every dispatch.

    ``per_call`` maps functionality names to a cost; anything else costs
    ``default``.  Costs are charged even when the message is rejected.
    """

    per_call: dict = field(default_factory=dict)
    default: Fraction = ZERO
    deploy: Fraction = ZERO

    def __post_init__(self):
        self.per_call = {k: nonneg(v, f"cost of {k}") for k, v in self.per_call.items()}
        self.default = nonneg(self.default, "default cost")
        self.deploy = nonneg(self.deploy, "deploy cost")

    def cost_of(self, fn: str) -> Fraction:
        return self.per_call.get(fn, self.default)

    @classmethod
    def per_request(
        cls, user: MoneyLike = 0, csp: MoneyLike = 0, deploy: MoneyLike = 0
    ) -> "CostSchedule":
        """Charge ``user`` once per storage request and ``csp`` once per confirmation.

        With this schedule an honest upload costs its user exactly ``I_u`` and
        the provider exactly ``I_c``, matching the utility formulas.
        """
        return cls(per_call={"request": user, "cspConf": csp}, deploy=deploy)

    @property
    def is_zero(self) -> bool:
        return not any(self.per_call.values()) and not self.default and not self.deploy


@dataclass(frozen=True)
class Message:
    sender: str
    target: str
    fn: str
    args: tuple = ()
    value: Fraction = ZERO


@dataclass
class Receipt:
    accepted: bool
    tau: int
    fn: str
    reason: Optional[str] = None
    result: Any = None
    events: list = field(default_factory=list)
    deltas: dict = field(default_factory=dict)
    cost: Fraction = ZERO

    def __bool__(self) -> bool:
        return self.accepted


class Contract:
    """Base class for contract state machines mounted on a :class:`Ledger`.

    Public functionalities are methods named ``fn_<name>``; they receive a
    :class:`Context` followed by the message arguments.  All state mutation
    must go through the context (``ctx.assign``, ``ctx.put``, ``ctx.append``)
    so it can be rolled back.
    """

    kind = "contract"

    def __init__(self):
        self.address: Optional[str] = None
        self.owner: Optional[str] = None

    def init(self, ctx: "Context") -> None:
        pass

    def has_function(self, fn: str) -> bool:
        return callable(getattr(self, f"fn_{fn}", None))

    def snapshot(self) -> Any:
        """JSON-friendly view of the contract state."""
        return {}


class Context:
    """Execution context of one contract invocation."""

    def __init__(self, ledger: "Ledger", contract: Contract, sender: str, value: Fraction,
                 journal: list, events: list):
        self.ledger = ledger
        self.contract = contract
        self.sender = sender
        self.value = value
        self._journal = journal
        self._events = events

    @property
    def tau(self) -> int:
        return self.ledger.tau

    @property
    def this(self) -> str:
        return self.contract.address

    def balance(self, address: Optional[str] = None) -> Fraction:
        return self.ledger.balance(address or self.this)

    def transfer(self, to: str, amount: MoneyLike) -> None:
        """Pay ``amount`` out of this contract's escrow."""
        self.ledger._move(self.this, to, money(amount), self._journal)

    def call(self, target: str, fn: str, *args, value: MoneyLike = 0) -> Any:
        """Synchronous contract-to-contract message within the same dispatch."""
        return self.ledger._invoke(
            self.this, target, fn, args, money(value), self._journal, self._events
        )

    def emit(self, name: str, **data) -> None:
        self._events.append({"contract": self.this, "event": name, **data})

    # journaled mutation helpers
    def assign(self, obj: Any, attr: str, value: Any) -> None:
        old = getattr(obj, attr)
        self._journal.append(lambda: setattr(obj, attr, old))
        setattr(obj, attr, value)

    def put(self, mapping: dict, key: Any, value: Any) -> None:
        if key in mapping:
            old = mapping[key]
            self._journal.append(lambda: mapping.__setitem__(key, old))
        else:
            self._journal.append(lambda: mapping.pop(key))
        mapping[key] = value

    def append(self, seq: list, item: Any) -> None:
        self._journal.append(seq.pop)
        seq.append(item)

    def on_rollback(self, undo: Callable[[], None]) -> None:
        self._journal.append(undo)


def render(value: Any) -> Any:
    """Deterministic JSON-compatible rendering of trace payloads."""
    if isinstance(value, Fraction):
        return fmt(value)
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if hasattr(value, "hex") and isinstance(getattr(value, "hex"), str):
        return value.hex
    if isinstance(value, dict):
        return {str(render(k)): render(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [render(v) for v in value]
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return str(value)


class Ledger:
    MINER_SINK_LABEL = "miner-sink"

    def __init__(self, costs: Optional[CostSchedule] = None, *, step: int = 1,
                 start: int = 0, seed: str = "ledger", audit: bool = True,
                 record_trace: bool = True):
        if step < 1:
            raise ValueError("step must be >= 1")
        self.costs = costs or CostSchedule()
        self.step = step
        self.tau = start
        self.seed = seed
        self.audit = audit
        self.record_trace = record_trace
        self._balances: dict[str, Fraction] = {}
        self._contracts: dict[str, Contract] = {}
        self.labels: dict[str, str] = {}
        self._counter = 0
        self.minted = ZERO
        self.trace: list[dict] = []
        self._pending_deltas: list = []
        self.miner_sink = self.create_account(0, label=self.MINER_SINK_LABEL)

    # -- accounts ---------------------------------------------------------

    def _fresh_address(self) -> str:
        self._counter += 1
        h = hashlib.sha256(f"{self.seed}:{self._counter}".encode()).hexdigest()
        return "0x" + h[:40]

    def create_account(self, initial: MoneyLike = 0, label: Optional[str] = None) -> str:
        amount = nonneg(initial, "initial balance")
        addr = self._fresh_address()
        self._balances[addr] = amount
        self.minted += amount
        if label:
            self.labels[addr] = label
        return addr

    def fund(self, address: str, amount: MoneyLike) -> None:
        """Mint extra funds into an existing account (scenario setup only)."""
        amount = nonneg(amount)
        self._require_account(address)
        self._balances[address] += amount
        self.minted += amount

    def balance(self, address: str) -> Fraction:
        self._require_account(address)
        return self._balances[address]

    def balances(self) -> dict[str, Fraction]:
        return dict(self._balances)

    def name(self, address: str) -> str:
        return self.labels.get(address, address)

    def exists(self, address: str) -> bool:
        return address in self._balances

    def _require_account(self, address: str) -> None:
        if address not in self._balances:
            raise LedgerError(f"unknown address {address}")

    def total(self) -> Fraction:
        return sum(self._balances.values(), ZERO)

    def check_conservation(self) -> None:
        total = self.total()
        if total != self.minted:
            raise ConservationError(f"total {total} != minted {self.minted}")
        neg = [a for a, b in self._balances.items() if b < 0]
        if neg:
            raise ConservationError(f"negative balances: {neg}")

    # -- contracts --------------------------------------------------------

    def contract(self, address: str) -> Contract:
        try:
            return self._contracts[address]
        except KeyError:
            raise LedgerError(f"no contract at {address}") from None

    def is_contract(self, address: str) -> bool:
        return address in self._contracts

    def deploy(self, contract: Contract, deployer: str, label: Optional[str] = None) -> str:
        self._require_account(deployer)
        cost = self.costs.deploy
        if self._balances[deployer] < cost:
            raise InsufficientFunds("deployer cannot cover the deployment cost")
        self.tau += self.step
        self._pending_deltas = []
        journal: list = []
        events: list = []
        self._move(deployer, self.miner_sink, cost, journal)
        addr = self.create_account(0, label=label or contract.kind)
        contract.address = addr
        contract.owner = deployer
        self._contracts[addr] = contract
        contract.init(Context(self, contract, deployer, ZERO, journal, events))
        deltas = self._deltas_from(self._pending_deltas)
        self._pending_deltas = []
        self._log(Message(deployer, addr, "deploy"), True, None, events, deltas, cost)
        return addr

    # -- clock --------------------------------------------------------------

    def now(self) -> int:
        return self.tau

    def advance(self, steps: int) -> None:
        if steps < 0:
            raise ValueError("time only moves forward")
        self.tau += steps

    # -- dispatch -------------------------------------------------------------

    def _move(self, src: str, dst: str, amount: Fraction, journal: list) -> None:
        if amount < 0:
            raise Rejected("negative transfer")
        if not amount:
            return
        if dst not in self._balances:
            raise Rejected(f"unknown recipient {dst}")
        if self._balances[src] < amount:
            raise Rejected(f"insufficient balance at {self.name(src)}")
        b = self._balances
        b[src] -= amount
        b[dst] += amount

        def undo(src=src, dst=dst, amount=amount):
            b[src] += amount
            b[dst] -= amount
            self._pending_deltas.append((dst, src, amount))

        journal.append(undo)
        self._pending_deltas.append((src, dst, amount))

    @staticmethod
    def _deltas_from(moves: Iterable[tuple]) -> dict:
        out: dict[str, Fraction] = {}
        for src, dst, amount in moves:
            out[src] = out.get(src, ZERO) - amount
            out[dst] = out.get(dst, ZERO) + amount
        return {a: d for a, d in out.items() if d}

    def _invoke(self, sender: str, target: str, fn: str, args: tuple, value: Fraction,
                journal: list, events: list) -> Any:
        contract = self._contracts.get(target)
        if contract is None:
            if fn == "transfer" and target in self._balances:
                self._move(sender, target, value, journal)
                return None
            raise Rejected(f"unknown target {target}")
        method = getattr(contract, f"fn_{fn}", None)
        if not callable(method):
            raise Rejected(f"unknown functionality {fn}")
        self._move(sender, target, value, journal)
        ctx = Context(self, contract, sender, value, journal, events)
        return method(ctx, *args)

    def dispatch(self, m: Message) -> Receipt:
        """Execute one message atomically and return its receipt."""
        self.tau += self.step
        value = nonneg(m.value, "attached value")
        cost = self.costs.cost_of(m.fn)
        self._pending_deltas = []
        if m.sender not in self._balances:
            return self._finish(m, False, "unknown sender", None, [], ZERO)
        if self._balances[m.sender] < value + cost:
            return self._finish(m, False, "insufficient funds", None, [], ZERO)
        if cost:
            self._balances[m.sender] -= cost
            self._balances[self.miner_sink] += cost
            self._pending_deltas.append((m.sender, self.miner_sink, cost))
        journal: list = []
        events: list = []
        try:
            result = self._invoke(m.sender, m.target, m.fn, m.args, value, journal, events)
        except Exception as exc:  # any failure inside a transition reverts it
            for undo in reversed(journal):
                undo()
            reason = exc.reason if isinstance(exc, Rejected) else f"{type(exc).__name__}: {exc}"
            return self._finish(m, False, reason, None, [], cost)
        return self._finish(m, True, None, result, events, cost)

    def send(self, sender: str, target: str, fn: str, *args, value: MoneyLike = 0) -> Receipt:
        return self.dispatch(Message(sender, target, fn, tuple(args), money(value)))

    def transfer(self, sender: str, to: str, amount: MoneyLike) -> Receipt:
        return self.send(sender, to, "transfer", value=amount)

    def _finish(self, m: Message, accepted: bool, reason: Optional[str], result: Any,
                events: list, cost: Fraction) -> Receipt:
        deltas = self._deltas_from(self._pending_deltas)
        self._pending_deltas = []
        if self.audit:
            self.check_conservation()
        self._log(m, accepted, reason, events, deltas, cost)
        return Receipt(accepted, self.tau, m.fn, reason, result, events, deltas, cost)

    # -- trace -------------------------------------------------------------------

    def _log(self, m: Message, accepted: bool, reason: Optional[str], events: list,
             deltas: dict, cost: Fraction) -> None:
        if not self.record_trace:
            return
        self.trace.append({
            "kind": "tx",
            "tau": self.tau,
            "sender": self.name(m.sender),
            "target": self.name(m.target),
            "fn": m.fn,
            "args": self._relabel(render(list(m.args))),
            "value": fmt(money(m.value)),
            "outcome": "accepted" if accepted else "rejected",
            "reason": reason,
            "cost": fmt(cost),
            "deltas": {self.name(a): fmt(d) for a, d in sorted(deltas.items(), key=lambda kv: self.name(kv[0]))},
            "events": self._relabel(render(events)),
        })

    def _relabel(self, value: Any) -> Any:
        if isinstance(value, str):
            return self.labels.get(value, value)
        if isinstance(value, list):
            return [self._relabel(v) for v in value]
        if isinstance(value, dict):
            return {k: self._relabel(v) for k, v in value.items()}
        return value

    def note(self, kind: str, sender: str, receiver: str, **payload) -> None:
        """Record an off-chain message in the same trace."""
        if not self.record_trace:
            return
        self.trace.append({
            "kind": kind,
            "tau": self.tau,
            "sender": self.name(sender),
            "receiver": self.name(receiver),
            **self._relabel(render(payload)),
        })

    def trace_lines(self) -> str:
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.trace)
