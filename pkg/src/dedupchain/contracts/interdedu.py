"""Root registry shared by several providers' dedup contracts.

Providers register their dedup contract once.  A registered contract
publishes the tags it stores, and any registered contract can look a tag up
to find which provider already holds it.  The actual cross-provider request,
payment and access-fee settlement run between the two dedup contracts
(:class:`~dedupchain.contracts.dedu.DeduContract`); this contract is only the
index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from ..crypto import Tag
from ..ledger import Context, Contract, require


@dataclass(frozen=True)
class RegistryEntry:
    csp: str
    dedu_contract: str
    info: Any = None


@dataclass(frozen=True)
class TagFound:
    tag: Tag
    dedu_contract: str
    csp: str
    info: Any = None


class RootRegistry(Contract):
    kind = "root"

    def __init__(self):
        super().__init__()
        self.entries: dict[str, RegistryEntry] = {}
        self.by_contract: dict[str, RegistryEntry] = {}
        self.tags: dict[Tag, TagFound] = {}

    def fn_register(self, ctx: Context, dedu_contract: str, info: Any = None) -> None:
        require(ctx.sender not in self.entries, "provider already registered")
        require(dedu_contract not in self.by_contract, "contract already registered")
        require(ctx.ledger.is_contract(dedu_contract), "not a contract")
        require(ctx.ledger.contract(dedu_contract).owner == ctx.sender,
                "provider does not own that contract")
        entry = RegistryEntry(ctx.sender, dedu_contract, info)
        ctx.put(self.entries, ctx.sender, entry)
        ctx.put(self.by_contract, dedu_contract, entry)
        ctx.emit("register", csp=ctx.sender, contract=dedu_contract)

    def fn_setTag(self, ctx: Context, tag: Tag) -> None:
        entry = self.by_contract.get(ctx.sender)
        require(entry is not None, "caller is not a registered contract")
        require(tag not in self.tags, "tag already indexed")
        ctx.put(self.tags, tag, TagFound(tag, entry.dedu_contract, entry.csp, entry.info))
        ctx.emit("setTag", tag=tag, contract=entry.dedu_contract)

    def fn_getTag(self, ctx: Context, tag: Tag) -> Optional[TagFound]:
        """The holder of ``tag``, or ``None`` for the not-available answer."""
        require(ctx.sender in self.by_contract, "caller is not a registered contract")
        return self.tags.get(tag)

    def fn_isRegistered(self, ctx: Context, dedu_contract: str) -> bool:
        return dedu_contract in self.by_contract

    def lookup(self, tag: Tag) -> Optional[TagFound]:
        return self.tags.get(tag)

    def snapshot(self) -> dict:
        return {
            "entries": {e.csp: e.dedu_contract for e in self.entries.values()},
            "tags": {t.hex: f.dedu_contract for t, f in sorted(self.tags.items(), key=lambda kv: kv[0].hex)},
        }
