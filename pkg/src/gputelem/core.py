"""Shared primitives: salts, digests, hashing, and canonical field encoding.

Everything downstream (puzzle derivation, transcripts, wire records)
funnels through the helpers here so that byte layouts stay consistent
between the challenger and the worker.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

KAPPA = 256  # digest width in bits; all targets live in [0, 2**KAPPA)

SALT_LEN = 32
DIGEST_LEN = 32


def hash_bytes(data: bytes) -> bytes:
    """Unkeyed hash. SHA-256, 32 bytes out."""
    return hashlib.sha256(data).digest()


def keyed_hash(key: bytes, data: bytes) -> bytes:
    """Keyed hash. BLAKE2b-256 in keyed mode; key must fit in 64 bytes."""
    if len(key) > 64:
        key = hashlib.blake2b(key, digest_size=64).digest()
    return hashlib.blake2b(data, digest_size=32, key=key).digest()


def keyed_stream(key: bytes, nbytes: int, domain: bytes = b"") -> bytes:
    """Expand a key into ``nbytes`` of pseudorandom stream.

    Counter-mode keyed BLAKE2b with 64-byte output blocks.  Used where a
    digest has to be stretched over a large buffer (dataset blocks, XOR
    masks) without changing the 32-byte digest convention elsewhere.
    """
    if len(key) > 64:
        key = hashlib.blake2b(key, digest_size=64).digest()
    base = hashlib.blake2b(digest_size=64, key=key)
    base.update(domain)  # key and domain absorbed once; fork per counter
    out = bytearray()
    counter = 0
    while len(out) < nbytes:
        h = base.copy()
        h.update(counter.to_bytes(8, "big"))
        out += h.digest()
        counter += 1
    return bytes(out[:nbytes])


def encode_fields(*parts: bytes | int | str) -> bytes:
    """Length-prefixed serialization of heterogeneous fields.

    Each part becomes ``len(payload)`` as 4-byte big-endian followed by
    the payload.  Integers are encoded as minimal-width big-endian
    magnitude (negative values are rejected), strings as UTF-8.  This
    layout is what every hashed or signed record in the protocol uses,
    so both sides derive identical transcripts.
    """
    out = bytearray()
    for part in parts:
        if isinstance(part, int):
            if part < 0:
                raise ValueError("only non-negative integers are encodable")
            payload = part.to_bytes(max(1, (part.bit_length() + 7) // 8), "big")
        elif isinstance(part, str):
            payload = part.encode("utf-8")
        elif isinstance(part, (bytes, bytearray)):
            payload = bytes(part)
        else:
            raise TypeError(f"cannot encode field of type {type(part).__name__}")
        out += len(payload).to_bytes(4, "big")
        out += payload
    return bytes(out)


def digest_to_int(digest: bytes) -> int:
    """Interpret a digest as a big-endian unsigned integer."""
    return int.from_bytes(digest, "big")


def digest_below_target(digest: bytes, difficulty: int) -> bool:
    """Difficulty test: digest < 2**(KAPPA - difficulty).

    ``difficulty`` counts leading zero bits demanded of the digest; 0
    accepts everything, KAPPA accepts nothing but the zero digest's
    strict predecessors (i.e. nothing).
    """
    if not 0 <= difficulty <= KAPPA:
        raise ValueError(f"difficulty must lie in [0, {KAPPA}]")
    if len(digest) != DIGEST_LEN:
        raise ValueError(f"digest must be {DIGEST_LEN} bytes")
    return digest_to_int(digest) < (1 << (KAPPA - difficulty))


def generate_salt(rng: random.Random) -> bytes:
    """Draw a fresh 32-byte salt from the supplied RNG.

    Salt freshness is what resets the timing model between rounds, so
    the caller controls the RNG (seeded for replay, SystemRandom for
    production).
    """
    return rng.randbytes(SALT_LEN)


def issued_at_micros(issued_at: float) -> int:
    """Canonical microsecond stamp for a challenge issue time.

    Round-to-nearest, not truncation: the nearest-integer map survives
    a float division/multiplication round trip for any epoch below
    2**51 microseconds, so challenger and worker agree on the stamp
    after it crosses the wire as an integer.
    """
    return round(issued_at * 1e6)


@dataclass(frozen=True)
class Challenge:
    """One issued challenge.

    ``mode`` names the puzzle family ("pow", "vdf", "gemm", "residency").
    ``params`` carries the mode-specific parameter record already
    serialized to canonical text (see wire module); keeping it opaque
    here avoids circular imports.
    """

    session_id: bytes
    index: int
    mode: str
    salt: bytes
    issued_at: float
    params: dict = field(default_factory=dict)

    def transcript(self) -> bytes:
        """Canonical bytes bound into response digests for this challenge."""
        return encode_fields(
            self.session_id,
            self.index,
            self.mode,
            self.salt,
            issued_at_micros(self.issued_at),
        )


@dataclass(frozen=True)
class Response:
    """Worker's answer to one challenge: an opaque payload plus timing."""

    session_id: bytes
    index: int
    mode: str
    payload: dict
    solve_time: float

    def matches(self, challenge: Challenge) -> bool:
        return (
            self.session_id == challenge.session_id
            and self.index == challenge.index
            and self.mode == challenge.mode
        )


@dataclass(frozen=True)
class TimingSample:
    """One timing observation fed to the statistical tests.

    ``duration`` is wall time in seconds, ``valid`` records whether the
    accompanying solution verified.  Invalid samples are excluded from
    rate estimates but still counted, since a burst of garbage answers
    is itself a signal.
    """

    index: int
    mode: str
    duration: float
    valid: bool
    difficulty: int = 0
