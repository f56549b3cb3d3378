from dataclasses import dataclass
from fractions import Fraction as F

import pytest

from dedupchain.contracts import DeduContract
from dedupchain.crypto import FileObject, pipeline
from dedupchain.economics import EconParams
from dedupchain.ledger import Ledger

SF = F("0.165")
EF = F("0.0165")
SC = F("0.1")


@pytest.fixture
def reference():
    return EconParams.reference()


@dataclass
class Bare:
    """A ledger with one configured dedup contract and funded users, no actors."""

    ledger: Ledger
    csp: str
    contract: str
    users: list

    @property
    def c(self) -> DeduContract:
        return self.ledger.contract(self.contract)

    def request(self, user, tag, size=1, deposit=0):
        return self.ledger.send(user, self.contract, "request", tag, size, value=deposit)

    def pay(self, user, tag, req_num, amount):
        return self.ledger.send(user, self.contract, "pay", tag, req_num, value=amount)

    def csp_conf(self, tag, req_num):
        return self.ledger.send(self.csp, self.contract, "cspConf", tag, req_num)

    def usr_conf(self, user, tag, req_num):
        return self.ledger.send(user, self.contract, "usrConf", tag, req_num)

    def upload(self, user, tag, size=1, deposit=0):
        """Full honest upload; returns the request receipt's quote."""
        r = self.request(user, tag, size, deposit)
        assert r.accepted, r.reason
        q = r.result
        assert self.pay(user, tag, q.req_num, q.pay).accepted
        assert self.csp_conf(tag, q.req_num).accepted
        assert self.usr_conf(user, tag, q.req_num).accepted
        return q


def make_bare(users=3, funding=10, sf=SF, ef=EF, k=10, deposit=0, start=0,
              integer_mode=False, costs=None):
    ledger = Ledger(costs, start=start)
    csp = ledger.create_account(1, label="csp")
    caddr = ledger.deploy(DeduContract(integer_mode=integer_mode), csp, label="dedu")
    r = ledger.send(csp, caddr, "create", sf, ef, k, deposit)
    assert r.accepted, r.reason
    us = [ledger.create_account(funding, label=f"u{i}") for i in range(users)]
    return Bare(ledger, csp, caddr, us)


@pytest.fixture
def bare():
    return make_bare()


@pytest.fixture
def tag():
    return pipeline(FileObject(b"shared file"))[2]
