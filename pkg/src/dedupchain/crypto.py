"""Convergent encryption and proof-of-ownership.

One deterministic instantiation of the four-algorithm interface:

* key   = SHA-256(plaintext)
* ct    = plaintext XOR SHAKE-256(key) stream (length preserving)
* tag   = SHA-256(ct)
* proof = SHA-256(nonce || ct)

It is deliberately minimal.  It is not a vetted encryption scheme.
"""

from __future__ import annotations

import hashlib
import os
import random
from dataclasses import dataclass, field
from typing import Optional

DIGEST_SIZE = 32
NONCE_SIZE = 16


class IntegrityError(ValueError):
    """Decryption produced bytes that do not match the key they claim."""


class StaleChallengeError(ValueError):
    """A proof was presented against a challenge that is unknown or already spent."""


@dataclass(frozen=True)
class FileObject:
    data: bytes

    @property
    def length_bits(self) -> int:
        return 8 * len(self.data)

    @property
    def length_bytes(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class ConvergentKey:
    key_bytes: bytes


@dataclass(frozen=True)
class Ciphertext:
    data: bytes


@dataclass(frozen=True)
class Tag:
    digest: bytes

    @property
    def hex(self) -> str:
        return self.digest.hex()

    def __str__(self) -> str:
        return self.hex


@dataclass(frozen=True)
class PopChallenge:
    nonce: bytes


@dataclass(frozen=True)
class PopProof:
    digest: bytes


def _xor(data: bytes, stream: bytes) -> bytes:
    n = len(data)
    x = int.from_bytes(data, "big") ^ int.from_bytes(stream, "big")
    return x.to_bytes(n, "big")


def _keystream(key: ConvergentKey, n: int) -> bytes:
    return hashlib.shake_256(b"ce-stream" + key.key_bytes).digest(n)


def ce_keygen(d: FileObject) -> ConvergentKey:
    if not d.data:
        raise ValueError("cannot derive a key for an empty file")
    return ConvergentKey(hashlib.sha256(d.data).digest())


def ce_encrypt(k: ConvergentKey, d: FileObject) -> Ciphertext:
    if not d.data:
        raise ValueError("cannot encrypt an empty file")
    return Ciphertext(_xor(d.data, _keystream(k, len(d.data))))


def ce_decrypt(k: ConvergentKey, c: Ciphertext) -> FileObject:
    """Invert :func:`ce_encrypt`; raises :class:`IntegrityError` on a wrong key."""
    if not c.data:
        raise ValueError("empty ciphertext")
    d = FileObject(_xor(c.data, _keystream(k, len(c.data))))
    if ce_keygen(d) != k:
        raise IntegrityError("decrypted bytes do not match the convergent key")
    return d


def ce_tag(c: Ciphertext) -> Tag:
    return Tag(hashlib.sha256(c.data).digest())


def pipeline(d: FileObject) -> tuple[ConvergentKey, Ciphertext, Tag]:
    """keygen -> encrypt -> tag, the client-side preparation of a file."""
    k = ce_keygen(d)
    c = ce_encrypt(k, d)
    return k, c, ce_tag(c)


def pop_challenge(rng: Optional[random.Random] = None) -> PopChallenge:
    if rng is None:
        return PopChallenge(os.urandom(NONCE_SIZE))
    return PopChallenge(rng.getrandbits(8 * NONCE_SIZE).to_bytes(NONCE_SIZE, "big"))


def pop_prove(ch: PopChallenge, c: Ciphertext) -> PopProof:
    return PopProof(hashlib.sha256(ch.nonce + c.data).digest())


def pop_verify(ch: PopChallenge, proof: PopProof, stored_c: Ciphertext) -> bool:
    return proof == pop_prove(ch, stored_c)


@dataclass
class ChallengeBook:
    """Issues fresh challenges and accepts each exactly once.

    Challenges are bound to a context (tag, request number) so a proof made
    for one request cannot be replayed against another.
    """

    rng: Optional[random.Random] = None
    _open: dict = field(default_factory=dict)

    def issue(self, context) -> PopChallenge:
        ch = pop_challenge(self.rng)
        self._open[ch.nonce] = context
        return ch

    def verify(self, context, ch: PopChallenge, proof: PopProof, stored_c: Ciphertext) -> bool:
        if self._open.get(ch.nonce) != context:
            raise StaleChallengeError("unknown, reused, or foreign challenge")
        del self._open[ch.nonce]
        return pop_verify(ch, proof, stored_c)
