"""Assembling ledgers, contracts and actors into runnable worlds."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..actors import Channel, CSPActor, Policy, Upload, UserActor
from ..contracts import DeduContract, RootRegistry
from ..crypto import FileObject
from ..economics import EconParams
from ..ledger import CostSchedule, Ledger
from ..money import MoneyLike, money

DEFAULT_INTERVAL = 10


@dataclass
class World:
    """A ledger with one or more providers, their contracts, and users."""

    ledger: Ledger
    channel: Channel
    params: EconParams
    interval: int
    csps: list = field(default_factory=list)
    root: Optional[str] = None
    users: dict = field(default_factory=dict)
    user_funding: Fraction = Fraction(0)

    @classmethod
    def build(
        cls,
        params: EconParams,
        *,
        csp_count: int = 1,
        interconnected: bool = False,
        interval: int = DEFAULT_INTERVAL,
        deposit: MoneyLike = 0,
        csp_policies: Optional[list] = None,
        csp_funding: MoneyLike = 0,
        af_reserve: MoneyLike = 0,
        user_funding: Optional[MoneyLike] = None,
        integer_mode: bool = False,
        ef_per_unit: bool = False,
        sf_per_unit: Optional[MoneyLike] = None,
        charge_costs: bool = True,
        seed: int = 0,
        start: int = 0,
        audit: bool = True,
        record_trace: bool = True,
        labels: Optional[list] = None,
    ) -> "World":
        """Deploy ``csp_count`` configured dedup contracts.

        With ``interconnected`` a root registry is deployed first and every
        contract registers with it.  ``sf_per_unit`` overrides the per-unit
        storage fee written into the contracts (defaults to ``params.SF``).
        """
        if csp_count < 1:
            raise ValueError("need at least one provider")
        costs = None
        if charge_costs:
            costs = CostSchedule.per_request(params.cost_user_I, params.cost_csp_I,
                                             params.cost_deploy_I)
        ledger = Ledger(costs, start=start, seed=f"world-{seed}", audit=audit,
                        record_trace=record_trace)
        world = cls(ledger, Channel(ledger), params, interval)
        world.user_funding = money(user_funding) if user_funding is not None else params.profit_P
        policies = csp_policies or [Policy.HONEST] * csp_count
        labels = labels or (["csp"] if csp_count == 1 else [f"c{i + 1}" for i in range(csp_count)])
        deploy_budget = params.cost_deploy_I * 2 + params.cost_csp_I
        if interconnected:
            operator = ledger.create_account(params.cost_deploy_I, label="registry-operator")
            world.root = ledger.deploy(RootRegistry(), operator, label="root")
        sf = params.storage_fee_SF if sf_per_unit is None else money(sf_per_unit)
        for i in range(csp_count):
            addr = ledger.create_account(money(csp_funding) + money(af_reserve) + deploy_budget,
                                         label=labels[i])
            contract = DeduContract(integer_mode=integer_mode, root=world.root,
                                    ef_per_unit=ef_per_unit)
            caddr = ledger.deploy(contract, addr, label=f"dedu-{labels[i]}")
            ledger.send(addr, caddr, "create", sf, params.extra_fee_EF, interval, money(deposit))
            if interconnected:
                ledger.send(addr, caddr, "setAccessFee", params.access_fee_AF)
                ledger.send(addr, world.root, "register", caddr, labels[i])
                if money(af_reserve):
                    ledger.send(addr, caddr, "depositAF", value=af_reserve)
            actor = CSPActor(ledger, world.channel, addr, caddr, policies[i],
                             rng=random.Random(f"{seed}:{labels[i]}"))
            world.csps.append(actor)
        return world

    @property
    def csp(self) -> CSPActor:
        return self.csps[0]

    def contract(self, index: int = 0) -> DeduContract:
        return self.ledger.contract(self.csps[index].contract)

    def add_user(self, name: str, policy: Policy = Policy.HONEST, csp_index: int = 0,
                 funding: Optional[MoneyLike] = None) -> UserActor:
        if name in self.users:
            raise ValueError(f"duplicate user {name}")
        amount = self.user_funding if funding is None else money(funding)
        addr = self.ledger.create_account(amount, label=name)
        user = UserActor(self.ledger, self.channel, addr, self.csps[csp_index].contract, policy)
        self.users[name] = user
        return user

    def settle(self) -> None:
        """Let every deadline pass and give all actors a chance to react."""
        self.ledger.advance(3 * self.interval + 1)
        self.tick()

    def tick(self) -> None:
        for csp in self.csps:
            csp.csp_serve()
        for user in self.users.values():
            user.tick()
        for csp in self.csps:
            csp.csp_serve()


def honest_upload(world: World, name: str, d: FileObject, size: int = 1, csp_index: int = 0,
                  policy: Policy = Policy.HONEST) -> Upload:
    """Create a user and run one upload through the protocol."""
    user = world.add_user(name, policy=policy, csp_index=csp_index)
    return user.user_store(d, size)
