"""Three users store the same file with one provider, then one cheats.

Run with ``python3 demos/walkthrough.py``.  Prints each upload's quote, the
balances after every step, and the fairness verdict for each request.
"""

from fractions import Fraction

from dedupchain.actors import Policy, fairness_predicate, upload_outcome
from dedupchain.crypto import FileObject
from dedupchain.economics import EconParams
from dedupchain.harness.driver import World
from dedupchain.money import fmt


def show(world, title):
    print(f"-- {title} (tau={world.ledger.tau})")
    for name, user in world.users.items():
        print(f"   {name:<6} {fmt(world.ledger.balance(user.address))}")
    print(f"   {'csp':<6} {fmt(world.ledger.balance(world.csp.address))}")


def main():
    params = EconParams.reference(Fraction(1, 10))
    world = World.build(params, deposit=Fraction(1, 20))
    photo = FileObject(b"a photo everyone keeps")

    uploads = []
    for name in ("alice", "bob", "carol"):
        user = world.add_user(name)
        up = user.user_store(photo)
        uploads.append((user, up))
        print(f"{name} was quoted {fmt(up.quote.pay)} "
              f"({'first copy' if up.quote.is_first_upload else 'dedup'})")
        show(world, f"after {name}")

    # dave takes a quote and walks away; the deposit is forfeited
    dave = world.add_user("dave", Policy.ABORT_AFTER_QUOTE)
    uploads.append((dave, dave.user_store(photo)))
    # erin pays but sends a proof for the wrong file; she is refunded
    erin = world.add_user("erin", Policy.SEND_WRONG_POP)
    uploads.append((erin, erin.user_store(photo)))
    world.settle()
    show(world, "after every deadline")

    for user, up in uploads:
        name = world.ledger.labels[user.address]
        print(f"{name:<6} {upload_outcome(world.ledger, up).value:<13} "
              f"fair={fairness_predicate(world.ledger, user, up)}")
    print(f"physical copies held: {world.csp.stored_copies(uploads[0][1].tag)}")
    world.ledger.check_conservation()


if __name__ == "__main__":
    main()
