import hashlib
import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from dedupchain.crypto import (
    ChallengeBook, Ciphertext, FileObject, IntegrityError, StaleChallengeError, ce_decrypt,
    ce_encrypt, ce_keygen, ce_tag, pipeline, pop_challenge, pop_prove, pop_verify,
)

HELLO_TAG = "d9b62cf612d8c83a1b79b611e26b9170ff7e96043e32afc5c77bb660ad306c03"

files = st.binary(min_size=1, max_size=256).map(FileObject)


def test_length_bits():
    assert FileObject(b"abc").length_bits == 24


def test_keygen_deterministic_and_distinct():
    assert ce_keygen(FileObject(b"x")) == ce_keygen(FileObject(b"x"))
    assert ce_keygen(FileObject(b"\x00")) != ce_keygen(FileObject(b"\x01"))
    assert ce_keygen(FileObject(b"\x00")).key_bytes == hashlib.sha256(b"\x00").digest()


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        ce_keygen(FileObject(b""))
    with pytest.raises(ValueError):
        ce_decrypt(ce_keygen(FileObject(b"x")), Ciphertext(b""))


def test_keygen_speed_one_mib():
    d = FileObject(random.Random(0).randbytes(1 << 20))
    t = time.perf_counter()
    ce_keygen(d)
    assert time.perf_counter() - t < 0.05


def test_hello_golden_tag():
    # re-derived independently: sha256 of (plaintext XOR shake256 keystream)
    data = b"hello"
    key = hashlib.sha256(data).digest()
    stream = hashlib.shake_256(b"ce-stream" + key).digest(len(data))
    ct = bytes(a ^ b for a, b in zip(data, stream))
    assert hashlib.sha256(ct).hexdigest() == HELLO_TAG
    assert pipeline(FileObject(data))[2].hex == HELLO_TAG


@given(files)
def test_roundtrip_and_length(d):
    k, c, t = pipeline(d)
    assert len(c.data) == len(d.data)
    assert ce_decrypt(k, c) == d
    assert ce_encrypt(k, d) == c
    assert ce_tag(c) == t


@given(files)
def test_identical_plaintexts_share_tags(d):
    other_user_copy = FileObject(bytes(d.data))
    assert pipeline(d) == pipeline(other_user_copy)


def test_wrong_key_detected():
    k1, _, _ = pipeline(FileObject(b"first file"))
    _, c2, _ = pipeline(FileObject(b"other file"))
    with pytest.raises(IntegrityError):
        ce_decrypt(k1, c2)


def test_no_tag_collisions():
    rng = random.Random(1)
    tags = {pipeline(FileObject(rng.randbytes(32)))[2] for _ in range(10_000)}
    assert len(tags) == 10_000


class TestPoP:
    def test_honest_proof_verifies(self):
        _, c, _ = pipeline(FileObject(b"data"))
        ch = pop_challenge(random.Random(0))
        assert pop_verify(ch, pop_prove(ch, c), c)

    def test_tag_only_adversary_fails(self):
        rng = random.Random(7)
        for _ in range(1000):
            d = FileObject(rng.randbytes(24))
            _, c, t = pipeline(d)
            ch = pop_challenge(rng)
            # without the ciphertext the best an adversary can do is prove over what it has
            forged = pop_prove(ch, Ciphertext(t.digest))
            assert not pop_verify(ch, forged, c)

    def test_replay_under_new_challenge_fails(self):
        _, c, _ = pipeline(FileObject(b"data"))
        rng = random.Random(3)
        old, new = pop_challenge(rng), pop_challenge(rng)
        assert not pop_verify(new, pop_prove(old, c), c)

    def test_default_challenges_are_fresh(self):
        assert pop_challenge() != pop_challenge()

    def test_book_accepts_each_challenge_once(self):
        _, c, _ = pipeline(FileObject(b"data"))
        book = ChallengeBook(random.Random(0))
        ch = book.issue(("tag", 0))
        proof = pop_prove(ch, c)
        assert book.verify(("tag", 0), ch, proof, c)
        with pytest.raises(StaleChallengeError):
            book.verify(("tag", 0), ch, proof, c)

    def test_book_binds_context(self):
        _, c, _ = pipeline(FileObject(b"data"))
        book = ChallengeBook(random.Random(0))
        ch = book.issue(("tag", 0))
        with pytest.raises(StaleChallengeError):
            book.verify(("tag", 1), ch, pop_prove(ch, c), c)

    @settings(max_examples=50)
    @given(files, files)
    def test_proof_binds_ciphertext(self, d1, d2):
        c1, c2 = pipeline(d1)[1], pipeline(d2)[1]
        ch = pop_challenge(random.Random(0))
        assert pop_verify(ch, pop_prove(ch, c1), c2) == (c1 == c2)
