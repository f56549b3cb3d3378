"""Off-chain participants: users uploading files and the providers serving them.

Actors talk to contracts through ledger messages and to each other through a
:class:`Channel`, an in-process message bus that delivers synchronously and
records every message into the ledger trace.  Each actor carries a
:class:`Policy`; anything other than ``HONEST`` withholds or corrupts one step
of the protocol so that each branch of the fairness case tree can be
exercised.  Deviant actors only ever withhold or corrupt their own messages;
they cannot forge contract state.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

from .contracts.dedu import DeduContract, Quote, RequestRecord, RequestState
from .crypto import (
    Ciphertext,
    ChallengeBook,
    ConvergentKey,
    FileObject,
    IntegrityError,
    PopChallenge,
    PopProof,
    StaleChallengeError,
    Tag,
    ce_decrypt,
    ce_tag,
    pipeline,
    pop_prove,
)
from .ledger import Ledger, Receipt


class Policy(str, Enum):
    HONEST = "Honest"
    ABORT_AFTER_QUOTE = "AbortAfterQuote"
    SEND_WRONG_FILE = "SendWrongFile"
    SEND_WRONG_POP = "SendWrongPoP"
    SEND_NOTHING = "SendNothing"
    NO_CSP_CONF = "NoCSPConf"
    NO_LINK = "NoLink"
    NO_USR_CONF = "NoUsrConf"
    NO_USR_CONF_AFTER_LINK = "NoUsrConfAfterLink"


USER_POLICIES = frozenset({
    Policy.HONEST, Policy.ABORT_AFTER_QUOTE, Policy.SEND_WRONG_FILE, Policy.SEND_WRONG_POP,
    Policy.SEND_NOTHING, Policy.NO_USR_CONF, Policy.NO_USR_CONF_AFTER_LINK,
})
CSP_POLICIES = frozenset({Policy.HONEST, Policy.NO_CSP_CONF, Policy.NO_LINK})

#: which leaf of the fairness case tree each deviation lands in
CASE_OF = {
    Policy.ABORT_AFTER_QUOTE: "2",
    Policy.SEND_WRONG_FILE: "1.2",
    Policy.SEND_WRONG_POP: "1.4",
    Policy.SEND_NOTHING: "1.5",
    Policy.NO_CSP_CONF: "1.1.2",
    Policy.NO_LINK: "1.1.1.2",
    Policy.NO_USR_CONF: "1.1.1.1.2",
    Policy.NO_USR_CONF_AFTER_LINK: "T5",
}


class Outcome(str, Enum):
    STORED = "stored"
    REFUNDED = "refunded"
    DEPOSIT_LOST = "deposit_lost"
    ABORTED = "aborted"
    REJECTED = "rejected"
    PENDING = "pending"


class NonTerminalError(ValueError):
    """Fairness was asked about a request that has not finished."""


@dataclass
class FileLink:
    handle: str
    tag: Tag
    req_num: int
    user: str
    active: bool = True


def _summary(value: Any) -> Any:
    if isinstance(value, Ciphertext):
        return "ct:" + hashlib.sha256(value.data).hexdigest()[:16]
    if isinstance(value, PopProof):
        return value.digest.hex()
    if isinstance(value, PopChallenge):
        return value.nonce.hex()
    if isinstance(value, FileLink):
        return value.handle
    return value


class Channel:
    """Synchronous off-chain message bus between actors."""

    def __init__(self, ledger: Ledger):
        self.ledger = ledger
        self.actors: dict[str, Any] = {}

    def attach(self, actor: Any) -> None:
        self.actors[actor.address] = actor

    def send(self, sender: str, receiver: str, kind: str, **payload) -> Any:
        self.ledger.note(kind, sender, receiver, **{k: _summary(v) for k, v in payload.items()})
        actor = self.actors.get(receiver)
        handler = getattr(actor, f"on_{kind}", None)
        if handler is None:
            return None
        return handler(sender, **payload)

    def ask(self, sender: str, receiver: str, kind: str, **payload) -> Any:
        """Like :meth:`send` but unrecorded; used for read-only probes."""
        handler = getattr(self.actors.get(receiver), f"on_{kind}", None)
        return None if handler is None else handler(sender, **payload)


@dataclass
class Upload:
    """A user's view of one storage request."""

    file: FileObject
    key: ConvergentKey
    ciphertext: Ciphertext
    tag: Tag
    contract: str
    quote: Optional[Quote] = None
    link: Optional[FileLink] = None
    link_verified: bool = False
    receipts: list = field(default_factory=list)

    @property
    def req_num(self) -> int:
        return self.quote.req_num

    @property
    def csp(self) -> str:
        return self.quote.csp


def storing_record(ledger: Ledger, up: Upload) -> Optional[RequestRecord]:
    """The record that holds this upload's funds (remote for cross requests)."""
    if up.quote is None:
        return None
    c: DeduContract = ledger.contract(up.quote.storage_contract)
    return c.record(up.tag, up.quote.storage_req)


def upload_outcome(ledger: Ledger, up: Upload) -> Outcome:
    if up.quote is None:
        return Outcome.REJECTED
    rec = storing_record(ledger, up)
    state = rec.state
    if state in (RequestState.ACTIVE, RequestState.INACTIVE):
        return Outcome.STORED
    if state is RequestState.REFUNDED:
        return Outcome.REFUNDED
    if state is RequestState.CLAIMED:
        return Outcome.DEPOSIT_LOST
    if state is RequestState.WAIT_FOR_PAY and ledger.tau > rec.tau_p:
        return Outcome.ABORTED
    return Outcome.PENDING


class UserActor:
    def __init__(self, ledger: Ledger, channel: Channel, address: str, contract: str,
                 policy: Policy = Policy.HONEST):
        if policy not in USER_POLICIES:
            raise ValueError(f"{policy} is not a user behaviour")
        self.ledger = ledger
        self.channel = channel
        self.address = address
        self.contract = contract
        self.policy = Policy(policy)
        self.uploads: list[Upload] = []
        self.links: dict[Tag, FileLink] = {}
        channel.attach(self)

    def _send(self, fn: str, *args, value=0) -> Receipt:
        return self.ledger.send(self.address, self.contract, fn, *args, value=value)

    def _contract(self) -> DeduContract:
        return self.ledger.contract(self.contract)

    def user_store(self, d: FileObject, size: int = 1) -> Upload:
        """Run the upload protocol as far as it goes synchronously.

        ``size`` is ``|d|`` in pricing units.  Steps that depend on deadlines
        (refunds, claims) happen later in :meth:`tick`.
        """
        k, c, tag = pipeline(d)
        up = Upload(d, k, c, tag, self.contract)
        self.uploads.append(up)
        deposit = self._contract().config.deposit_required
        r = self._send("request", tag, size, value=deposit)
        up.receipts.append(r)
        if not r.accepted:
            return up
        q: Quote = r.result
        up.quote = q
        if self.policy is Policy.ABORT_AFTER_QUOTE:
            return up
        r = self._send("pay", tag, q.req_num, value=q.pay)
        up.receipts.append(r)
        if not r.accepted:
            return up
        self._deliver(up)
        return up

    def _deliver(self, up: Upload) -> None:
        q = up.quote
        if self.policy is Policy.SEND_NOTHING:
            return
        decoy = pipeline(FileObject(up.file.data + b"\x00decoy"))[1]
        if q.is_first_upload and self.policy is not Policy.SEND_WRONG_POP:
            ct = decoy if self.policy is Policy.SEND_WRONG_FILE else up.ciphertext
            self.channel.send(self.address, q.csp, "file", tag=up.tag, req_num=q.storage_req,
                              ciphertext=ct)
            return
        ch = self.channel.send(self.address, q.csp, "challenge", tag=up.tag, req_num=q.storage_req)
        if ch is None:
            return
        source = decoy if self.policy in (Policy.SEND_WRONG_POP, Policy.SEND_WRONG_FILE) else up.ciphertext
        self.channel.send(self.address, q.csp, "proof", tag=up.tag, req_num=q.storage_req,
                          challenge=ch, proof=pop_prove(ch, source))

    def _find(self, tag: Tag, storage_req: int) -> Optional[Upload]:
        for up in self.uploads:
            if up.quote and up.tag == tag and up.quote.storage_req == storage_req:
                return up
        return None

    def verify_link(self, up: Upload, link: FileLink) -> bool:
        """Resolve the link at the provider and check it yields this file."""
        ct = self.channel.send(self.address, up.csp, "resolve", link=link)
        if not isinstance(ct, Ciphertext) or ce_tag(ct) != up.tag:
            return False
        try:
            ce_decrypt(up.key, ct)
        except IntegrityError:
            return False
        return True

    def on_link(self, sender: str, tag: Tag, req_num: int, link: FileLink) -> None:
        up = self._find(tag, req_num)
        if up is None or sender != up.csp:
            return
        rec = storing_record(self.ledger, up)
        if rec.state is not RequestState.WAIT_FOR_CLI_CONF:
            return
        if not self.verify_link(up, link):
            return
        up.link = link
        up.link_verified = True
        self.links[tag] = link
        if self.policy in (Policy.NO_USR_CONF, Policy.NO_USR_CONF_AFTER_LINK):
            return
        up.receipts.append(self._send("usrConf", tag, up.req_num))

    def tick(self) -> None:
        """Act on passed deadlines: reclaim fees that were never released."""
        for up in self.uploads:
            rec = storing_record(self.ledger, up)
            if rec is None:
                continue
            late_csp = rec.state is RequestState.WAIT_FOR_CSP_CONF and self.ledger.tau > rec.tau_c1
            late_usr = rec.state is RequestState.WAIT_FOR_CLI_CONF and self.ledger.tau > rec.tau_c2
            if late_csp or late_usr:
                up.receipts.append(self._send("refund", up.tag, up.req_num))

    def user_delink(self, tag: Tag) -> Receipt:
        up = next((u for u in self.uploads if u.tag == tag and self.holds_active_link(u)), None)
        if up is None:
            raise ValueError("no active link for this tag")
        r = self._send("deLink", tag, up.req_num)
        up.receipts.append(r)
        if r.accepted:
            self.channel.send(self.address, up.csp, "deLink", tag=tag, req_num=up.quote.storage_req,
                              link=up.link)
        return r

    def holds_active_link(self, up: Upload) -> bool:
        """Whether the verified link for ``up`` still resolves to the file."""
        if not (up.link and up.link_verified):
            return False
        ct = self.channel.ask(self.address, up.csp, "resolve", link=up.link)
        return isinstance(ct, Ciphertext) and ce_tag(ct) == up.tag


@dataclass
class StoredObject:
    ciphertext: Ciphertext
    owners: set = field(default_factory=set)


class CSPActor:
    def __init__(self, ledger: Ledger, channel: Channel, address: str, contract: str,
                 policy: Policy = Policy.HONEST, rng: Optional[random.Random] = None):
        if policy not in CSP_POLICIES:
            raise ValueError(f"{policy} is not a provider behaviour")
        self.ledger = ledger
        self.channel = channel
        self.address = address
        self.contract = contract
        self.policy = Policy(policy)
        self.rng = rng or random.Random(0)
        self.book = ChallengeBook(self.rng)
        self.objects: dict[Tag, StoredObject] = {}
        self.links: dict[str, FileLink] = {}
        self.discarded: list[tuple] = []
        channel.attach(self)

    def _contract(self) -> DeduContract:
        return self.ledger.contract(self.contract)

    def _paid(self, sender: str, tag: Tag, req_num: int) -> bool:
        rec = self._contract().record(tag, req_num)
        return (rec is not None and rec.ID == sender and rec.state is RequestState.WAIT_FOR_CSP_CONF
                and rec.paid == rec.pay)

    def _discard(self, sender: str, tag: Tag, req_num: int, why: str) -> None:
        self.discarded.append((sender, tag, req_num, why))
        self.ledger.note("discard", self.address, sender, tag=tag, req_num=req_num, reason=why)

    def on_file(self, sender: str, tag: Tag, req_num: int, ciphertext: Ciphertext) -> None:
        if not self._paid(sender, tag, req_num):
            return self._discard(sender, tag, req_num, "unpaid")
        if ce_tag(ciphertext) != tag:
            return self._discard(sender, tag, req_num, "file does not match tag")
        self._confirm_and_link(sender, tag, req_num, ciphertext)

    def on_challenge(self, sender: str, tag: Tag, req_num: int) -> Optional[PopChallenge]:
        if tag not in self.objects:
            return None
        return self.book.issue((tag, req_num, sender))

    def on_proof(self, sender: str, tag: Tag, req_num: int, challenge: PopChallenge,
                 proof: PopProof) -> None:
        if not self._paid(sender, tag, req_num):
            return self._discard(sender, tag, req_num, "unpaid")
        obj = self.objects.get(tag)
        try:
            ok = obj is not None and self.book.verify((tag, req_num, sender), challenge, proof,
                                                       obj.ciphertext)
        except StaleChallengeError:
            ok = False
        if not ok:
            return self._discard(sender, tag, req_num, "bad proof of ownership")
        self._confirm_and_link(sender, tag, req_num, obj.ciphertext)

    def _confirm_and_link(self, user: str, tag: Tag, req_num: int, ct: Ciphertext) -> None:
        if self.policy is Policy.NO_CSP_CONF:
            return
        r = self.ledger.send(self.address, self.contract, "cspConf", tag, req_num)
        if not r.accepted:
            return
        obj = self.objects.setdefault(tag, StoredObject(ct))
        if self.policy is Policy.NO_LINK:
            return
        handle = hashlib.sha256(
            f"{self.address}|{tag.hex}|{req_num}|{user}|{self.rng.getrandbits(64)}".encode()
        ).hexdigest()
        link = FileLink(handle, tag, req_num, user)
        self.links[handle] = link
        obj.owners.add((user, req_num))
        self.channel.send(self.address, user, "link", tag=tag, req_num=req_num, link=replace(link))

    def on_resolve(self, sender: str, link: FileLink) -> Optional[Ciphertext]:
        known = self.links.get(link.handle)
        if known is None or not known.active or known.user != sender:
            return None
        obj = self.objects.get(known.tag)
        return None if obj is None else obj.ciphertext

    def _disable(self, link: FileLink) -> None:
        link.active = False
        obj = self.objects.get(link.tag)
        if obj is None:
            return
        obj.owners.discard((link.user, link.req_num))
        if not obj.owners and not self._contract().active_holders(link.tag):
            del self.objects[link.tag]
            self.ledger.note("remove", self.address, self.address, tag=link.tag)

    def on_deLink(self, sender: str, tag: Tag, req_num: int, link: FileLink) -> None:
        self.csp_handle_delink(sender, tag, req_num, link)

    def csp_handle_delink(self, sender: str, tag: Tag, req_num: int, link: FileLink) -> bool:
        rec = self._contract().record(tag, req_num)
        if rec is None or rec.ID != sender or rec.state is not RequestState.INACTIVE:
            return False
        known = self.links.get(link.handle)
        if known is None or known.user != sender:
            return False
        self._disable(known)
        return True

    def csp_serve(self) -> None:
        """Periodic duties: claim forfeited deposits, disable links never confirmed."""
        c = self._contract()
        tau = self.ledger.tau
        for tag, row in list(c.utab.items()):
            for rec in list(row.requests.values()):
                if rec.state is RequestState.WAIT_FOR_PAY and tau > rec.tau_p:
                    self.ledger.send(self.address, self.contract, "claim", tag, rec.req_num)
        for link in list(self.links.values()):
            if not link.active:
                continue
            rec = c.record(link.tag, link.req_num)
            if rec.state is RequestState.REFUNDED or (
                rec.state is RequestState.WAIT_FOR_CLI_CONF and tau > rec.tau_c2
            ):
                self._disable(link)

    def stored_copies(self, tag: Tag) -> int:
        return 1 if tag in self.objects else 0


def fairness_predicate(ledger: Ledger, user: UserActor, up: Upload) -> bool:
    """Fee released to the provider side iff the user holds a verified active link.

    The request must be finished: still-open states raise
    :class:`NonTerminalError`.
    """
    if up.quote is None:
        return not user.holds_active_link(up)
    rec = storing_record(ledger, up)
    if rec.state in (RequestState.WAIT_FOR_CSP_CONF, RequestState.WAIT_FOR_CLI_CONF):
        raise NonTerminalError(f"request {up.req_num} is still {rec.state.value}")
    if rec.state is RequestState.WAIT_FOR_PAY and ledger.tau <= rec.tau_p:
        raise NonTerminalError(f"request {up.req_num} can still be paid")
    if rec.state is RequestState.INACTIVE:
        # fee was released and the user later gave the link up voluntarily
        return not user.holds_active_link(up)
    released = rec.state is RequestState.ACTIVE
    return released == user.holds_active_link(up)
