"""Memory-hard proof of work.

Each attempt runs Argon2id over an incrementing nonce with the
challenge salt, then hashes the tag with SHA-256; a solution is a nonce
whose digest clears the difficulty target.  Attempts are geometric with
success probability 2**-d, so solve times are (discretely) exponential,
which is what the rate tests downstream assume.
"""

from __future__ import annotations

from dataclasses import dataclass

from cryptography.hazmat.primitives.kdf.argon2 import Argon2id

from .core import Challenge, digest_below_target, hash_bytes, issued_at_micros

NONCE_LEN = 8


@dataclass(frozen=True)
class PowParams:
    """Tunables for the Argon2id proof of work.

    difficulty: leading zero bits demanded of the final digest, in [0, 64].
    argon_memory_kib: memory cost per attempt; the knob that makes
        attempts expensive on machines without fast RAM.
    """

    difficulty: int = 12
    argon_passes: int = 1
    argon_lanes: int = 1
    argon_memory_kib: int = 1024

    def __post_init__(self) -> None:
        if not 0 <= self.difficulty <= 64:
            raise ValueError("difficulty must lie in [0, 64]")
        if self.argon_passes < 1 or self.argon_lanes < 1:
            raise ValueError("argon passes and lanes must be >= 1")
        # Argon2id requires memory >= 8 * lanes KiB
        if self.argon_memory_kib < 8 * self.argon_lanes:
            raise ValueError("argon memory must be >= 8 KiB per lane")


@dataclass(frozen=True)
class PowSolution:
    nonce: int
    digest: bytes
    attempts: int


def pow_hash(
    salt: bytes, session_id: bytes, issued_at: float, nonce: int, params: PowParams
) -> bytes:
    """Digest for one nonce attempt: SHA-256 of the Argon2id tag.

    The session id enters as the Argon2id secret and the issue
    timestamp as associated data, so tags cannot be precomputed before
    the challenge exists or replayed across sessions.
    """
    kdf = Argon2id(
        salt=salt,
        length=32,
        iterations=params.argon_passes,
        lanes=params.argon_lanes,
        memory_cost=params.argon_memory_kib,
        secret=session_id,
        ad=issued_at_micros(issued_at).to_bytes(8, "big"),
    )
    tag = kdf.derive(nonce.to_bytes(NONCE_LEN, "big"))
    return hash_bytes(tag)


def solve_pow(
    challenge: Challenge, params: PowParams, max_attempts: int | None = None
) -> PowSolution | None:
    """Scan nonces 0, 1, 2, ... until a digest clears the target.

    Returns None if ``max_attempts`` (default 2**(d+8), i.e. 256x the
    expected effort) is exhausted first; honest workers essentially
    never hit the cap, so a None from a live session is reportable.
    """
    if max_attempts is None:
        max_attempts = 1 << min(params.difficulty + 8, 62)
    target_check = digest_below_target
    for nonce in range(max_attempts):
        digest = pow_hash(
            challenge.salt, challenge.session_id, challenge.issued_at, nonce, params
        )
        if target_check(digest, params.difficulty):
            return PowSolution(nonce=nonce, digest=digest, attempts=nonce + 1)
    return None


def verify_pow(challenge: Challenge, solution: PowSolution, params: PowParams) -> bool:
    """Recompute the solution nonce's digest and check it against the target.

    Cost is a single Argon2id evaluation regardless of difficulty.
    """
    if solution.nonce < 0 or solution.nonce >= (1 << (8 * NONCE_LEN)):
        return False
    digest = pow_hash(
        challenge.salt, challenge.session_id, challenge.issued_at, solution.nonce, params
    )
    if digest != solution.digest:
        return False
    return digest_below_target(digest, params.difficulty)
