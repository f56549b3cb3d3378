"""A file stored at one provider is deduplicated by a user of another.

Run with ``python3 demos/two_providers.py``.  The second provider finds the
tag through the root registry, forwards the request, and pays the access fee
from its reserve.  The trace is printed at the end.
"""

from fractions import Fraction

from dedupchain.crypto import FileObject
from dedupchain.economics import EconParams
from dedupchain.harness.driver import World
from dedupchain.money import fmt


def main():
    params = EconParams.reference(Fraction(1, 10))
    world = World.build(params, csp_count=2, interconnected=True, af_reserve=1)
    pkg = FileObject(b"libexample_1.0_amd64.deb")

    first = world.add_user("ann", csp_index=1).user_store(pkg)
    print(f"ann at c2 pays {fmt(first.quote.pay)}; c2 stores the file and publishes the tag")

    ben = world.add_user("ben", csp_index=0)
    up = ben.user_store(pkg)
    x = world.contract(0).cross_record(up.tag, up.req_num)
    print(f"ben at c1 is quoted {fmt(up.quote.pay)} (remote={up.quote.remote})")
    print(f"c1 forwarded the request to c2 and paid AF={fmt(x.af)}; cross state {x.state.value}")
    for i, c in enumerate(world.csps):
        print(f"c{i + 1}: balance {fmt(world.ledger.balance(c.address))}, "
              f"reserve {fmt(world.contract(i).af_reserve)}, copies {c.stored_copies(up.tag)}")
    print()
    print(world.ledger.trace_lines(), end="")


if __name__ == "__main__":
    main()
