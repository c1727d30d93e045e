"""Sequential-squaring delay function over an RSA group of unknown order.

A worker that claims T sequential squarings must spend real wall time,
because squaring in Z_N* has no known shortcut without the factors of
N.  The succinct proof (Wesolowski-style) lets the challenger check the
claim with two small exponentiations instead of redoing the chain, and
many instances verify together through one batched congruence.

Group setup uses safe primes so the quadratic-residue subgroup has
prime-order structure; test fixtures keep the factorization around as a
trapdoor oracle (exponent reduction via the group exponent), which is
exactly the shortcut the construction denies to everyone else.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import encode_fields, hash_bytes

CHALLENGE_PRIME_BITS = 128

_PRODUCTION_BITS = (128, 512, 1024, 2048)


def _small_primes(limit: int) -> list[int]:
    sieve = bytearray([1]) * (limit + 1)
    sieve[0] = sieve[1] = 0
    for i in range(2, int(limit**0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(sieve[i * i :: i]))
    return [i for i, flag in enumerate(sieve) if flag]


_SIEVE_PRIMES = _small_primes(2048)
_MR_BASES = _SIEVE_PRIMES[:64]


def is_probable_prime(n: int, rounds: int = 64) -> bool:
    """Miller-Rabin with the first ``rounds`` primes as bases.

    Fixed bases keep the function deterministic, so hash-derived primes
    are reproducible across challenger and worker.  64 prime bases push
    the error bound far below anything the 128-bit soundness level of
    the proofs could notice.
    """
    if n < 2:
        return False
    for p in _SIEVE_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES[:rounds]:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_safe_prime(bits: int, rng: random.Random, max_tries: int = 2_000_000) -> int:
    """Find p = 2p' + 1 with both p and p' prime and p exactly ``bits`` bits.

    Draws p' with its top two bits set (so products of two such primes
    keep full width) and steps by 6: p' must be 5 mod 6, otherwise
    either p' or 2p' + 1 is divisible by 3.
    """
    if bits < 5:
        raise ValueError("safe primes this small do not exist as full-width pairs")
    half_bits = bits - 1
    # two forced MSBs keep N full-width; tiny fixture sizes get one so
    # the candidate pool is not a single residue class
    top = (1 << (half_bits - 1)) | (1 << (half_bits - 2)) if half_bits >= 8 else 1 << (half_bits - 1)
    for _ in range(max_tries):
        cand = rng.getrandbits(half_bits)
        cand |= top | 1
        cand += (5 - cand % 6) % 6
        for _ in range(4096):
            if cand.bit_length() > half_bits:
                break
            p = 2 * cand + 1
            # cheap sieve on both before any modexp
            ok = True
            for q in _SIEVE_PRIMES:
                if cand % q == 0 and cand != q:
                    ok = False
                    break
                if p % q == 0 and p != q:
                    ok = False
                    break
            if ok and is_probable_prime(cand) and is_probable_prime(p):
                return p
            cand += 6
    raise RuntimeError(f"safe-prime search exhausted after {max_tries} attempts")


@dataclass(frozen=True)
class GroupParams:
    """RSA group N = p*q of safe primes.

    ``trapdoor``, when present, is (p, q, p'*q'); p'*q' is the order of
    the quadratic-residue subgroup and 2*p'*q' the group exponent.  Only
    test fixtures carry it; production setup discards the factors.
    """

    modulus_N: int
    bit_length: int
    trapdoor: tuple[int, int, int] | None = None

    def __post_init__(self) -> None:
        if self.modulus_N < 15 or self.modulus_N % 2 == 0:
            raise ValueError("modulus must be an odd composite")
        if self.trapdoor is not None:
            p, q, order = self.trapdoor
            if p * q != self.modulus_N:
                raise ValueError("trapdoor factors do not multiply to N")
            if p == q:
                raise ValueError("factors must be distinct")
            p_half, q_half = (p - 1) // 2, (q - 1) // 2
            if p_half * q_half != order:
                raise ValueError("trapdoor order must equal p'q'")
            for value in (p, q, p_half, q_half):
                if not is_probable_prime(value):
                    raise ValueError("trapdoor factors must be safe primes")

    @property
    def group_exponent(self) -> int:
        """lcm(p-1, q-1) = 2p'q'; requires the trapdoor."""
        if self.trapdoor is None:
            raise ValueError("group exponent requires the trapdoor")
        return 2 * self.trapdoor[2]


@dataclass(frozen=True)
class VdfInstance:
    generator_g: int
    delay_T: int
    sid: bytes
    index_i: int


@dataclass(frozen=True)
class VdfProof:
    """Succinct evaluation proof: y = g^(2^T), pi = g^floor(2^T / q), r = 2^T mod q."""

    output_y: int
    pi: int
    remainder_r: int
    challenge_prime: int

    def __post_init__(self) -> None:
        if not 0 <= self.remainder_r < self.challenge_prime:
            raise ValueError("remainder out of range for the challenge prime")


def setup_group(
    bits: int, rng: random.Random, keep_trapdoor: bool = False
) -> GroupParams:
    """Generate N = p*q from two distinct safe primes of bits/2 each.

    Production sizes are 128 (test), 512, 1024, 2048; anything below 128
    is allowed as a fixture size and always implies brute-force-sized
    groups, so such moduli are only useful with keep_trapdoor.
    """
    if bits not in _PRODUCTION_BITS and not 12 <= bits < 128:
        raise ValueError(f"unsupported modulus size {bits}")
    half = bits // 2
    p = _random_safe_prime(half, rng)
    q = _random_safe_prime(half, rng)
    for _ in range(256):
        if q != p:
            break
        q = _random_safe_prime(half, rng)
    else:
        raise RuntimeError(f"could not find two distinct safe primes at {half} bits")
    n = p * q
    trapdoor = (p, q, ((p - 1) // 2) * ((q - 1) // 2)) if keep_trapdoor else None
    return GroupParams(modulus_N=n, bit_length=n.bit_length(), trapdoor=trapdoor)


def hash_to_qr(sid: bytes, index: int, modulus_n: int) -> int:
    """Map (sid, index) to a quadratic residue: square of a hash point.

    Returns (H(sid, index) mod N)^2 mod N.  Squaring guarantees QR
    membership; the degenerate outputs 0, 1 and N-1 are re-hashed with
    an appended counter so the generator never lands on a fixed point.
    """
    if modulus_n < 3:
        raise ValueError("modulus too small")
    counter = 0
    while True:
        if counter == 0:
            h = hash_bytes(encode_fields(sid, index))
        else:
            h = hash_bytes(encode_fields(sid, index, counter))
        g = pow(int.from_bytes(h, "big") % modulus_n, 2, modulus_n)
        if g not in (0, 1, modulus_n - 1):
            return g
        counter += 1


def derive_delay(sid: bytes, index: int, t_min: int, t_max: int) -> int:
    """Deterministic delay in [t_min, t_max] from the session transcript."""
    if not 1 <= t_min <= t_max:
        raise ValueError("need 1 <= t_min <= t_max")
    span = t_max - t_min + 1
    h = hash_bytes(encode_fields(sid, "delay", index))
    return t_min + int.from_bytes(h, "big") % span


def derive_instance(
    sid: bytes, index: int, modulus_n: int, t_min: int, t_max: int
) -> VdfInstance:
    """Bundle hash_to_qr and derive_delay into one instance record."""
    return VdfInstance(
        generator_g=hash_to_qr(sid, index, modulus_n),
        delay_T=derive_delay(sid, index, t_min, t_max),
        sid=sid,
        index_i=index,
    )


def eval(g: int, delay_t: int, modulus_n: int) -> int:  # noqa: A001 - contract name
    """y = g^(2^T) mod N by exactly T dependent squarings.

    This loop is the delay: each squaring consumes the previous result,
    so no amount of parallel hardware shortens the chain.
    """
    if not 2 <= g <= modulus_n - 1:
        raise ValueError("generator out of range")
    if delay_t < 0:
        raise ValueError("delay must be non-negative")
    y = g
    for _ in range(delay_t):
        y = y * y % modulus_n
    return y


def trapdoor_eval(g: int, delay_t: int, group: GroupParams) -> int:
    """Shortcut evaluation through the group exponent; test oracle only.

    Reduces 2^T modulo lambda(N) = 2p'q' before a single exponentiation.
    Agreement with eval() is the central correctness check for the whole
    module, and the speed gap is the sequentiality argument itself.
    """
    if group.trapdoor is None:
        raise ValueError("trapdoor_eval needs a group with the trapdoor retained")
    lam = group.group_exponent
    return pow(g, pow(2, delay_t, lam), group.modulus_N)


def hash_to_prime(transcript: bytes) -> int:
    """Smallest prime at or above the hash point, forced to 128 bits.

    The candidate is the low 128 bits of H(transcript || "prime") with
    the top bit set (so the prime always has full width), scanned upward
    over odd integers.
    """
    h = hash_bytes(transcript + b"prime")
    cand = int.from_bytes(h, "big") % (1 << CHALLENGE_PRIME_BITS)
    cand |= (1 << (CHALLENGE_PRIME_BITS - 1)) | 1
    while not is_probable_prime(cand):
        cand += 2
    return cand


def hash_to_prime_and_scalars(transcript: bytes, count: int) -> tuple[int, list[int]]:
    """Fiat-Shamir prime plus one 128-bit scalar per batch instance.

    Both sides derive these from the same transcript, so the batch
    coefficients are unpredictable to the prover before the outputs y_i
    are fixed, which is what makes the aggregated relation binding.
    """
    if count < 1:
        raise ValueError("need at least one scalar")
    prime = hash_to_prime(transcript)
    scalars = []
    for i in range(count):
        h = hash_bytes(transcript + b"alpha" + encode_fields(i))
        scalars.append(int.from_bytes(h, "big") % (1 << CHALLENGE_PRIME_BITS))
    return prime, scalars


def _instance_transcript(g: int, y: int, delay_t: int, modulus_n: int, sid: bytes) -> bytes:
    return encode_fields(g, y, delay_t, modulus_n, sid)


def batch_transcript(
    modulus_n: int, instances: list[VdfInstance], outputs: list[int], sid: bytes
) -> bytes:
    parts: list[bytes | int | str] = [modulus_n]
    for inst, y in zip(instances, outputs):
        parts.extend((inst.generator_g, y, inst.delay_T))
    parts.append(sid)
    return encode_fields(*parts)


def _pow_floor_div(g: int, delay_t: int, divisor: int, modulus_n: int) -> int:
    """g^floor(2^T / divisor) mod N without materializing 2^T.

    On-line long division: walking the T bits of 2^T left to right,
    each step doubles the running remainder and emits one quotient bit,
    which feeds a square-and-multiply accumulator.  Memory stays O(1)
    however large T gets.
    """
    result = 1
    rem = 1
    for _ in range(delay_t):
        rem <<= 1
        result = result * result % modulus_n
        if rem >= divisor:
            rem -= divisor
            result = result * g % modulus_n
    return result


def prove(
    g: int,
    delay_t: int,
    y: int,
    modulus_n: int,
    sid: bytes,
    challenge_prime: int | None = None,
) -> VdfProof:
    """Produce the succinct proof for y = g^(2^T) mod N.

    The challenge prime comes from the instance transcript unless a test
    supplies one explicitly.  Proving costs about T modular squarings on
    top of the evaluation, still sequential-time work for the prover.
    """
    if challenge_prime is None:
        challenge_prime = hash_to_prime(
            _instance_transcript(g, y, delay_t, modulus_n, sid)
        )
    pi = _pow_floor_div(g, delay_t, challenge_prime, modulus_n)
    r = pow(2, delay_t, challenge_prime)
    return VdfProof(
        output_y=y, pi=pi, remainder_r=r, challenge_prime=challenge_prime
    )


def verify(g: int, delay_t: int, proof: VdfProof, modulus_n: int, sid: bytes) -> bool:
    """Check pi^q * g^r == y (mod N) under the transcript-derived prime.

    Two small exponentiations replace the T-squaring chain; the prime is
    recomputed locally so a prover cannot pick a convenient one.
    """
    if not 1 <= proof.output_y <= modulus_n - 1:
        return False
    if not 1 <= proof.pi <= modulus_n - 1:
        return False
    if not 2 <= g <= modulus_n - 1 or delay_t < 0:
        return False
    expected_prime = hash_to_prime(
        _instance_transcript(g, proof.output_y, delay_t, modulus_n, sid)
    )
    if proof.challenge_prime != expected_prime:
        return False
    if proof.remainder_r != pow(2, delay_t, expected_prime):
        return False
    lhs = pow(proof.pi, expected_prime, modulus_n) * pow(g, proof.remainder_r, modulus_n)
    return lhs % modulus_n == proof.output_y


def prove_batch(
    instances: list[VdfInstance], outputs: list[int], modulus_n: int, sid: bytes
) -> list[VdfProof]:
    """Proofs for a batch sharing one transcript-wide challenge prime."""
    if len(instances) != len(outputs):
        raise ValueError("instances and outputs differ in length")
    prime, _ = hash_to_prime_and_scalars(
        batch_transcript(modulus_n, instances, outputs, sid), len(instances)
    )
    proofs = []
    for inst, y in zip(instances, outputs):
        pi = _pow_floor_div(inst.generator_g, inst.delay_T, prime, modulus_n)
        r = pow(2, inst.delay_T, prime)
        proofs.append(
            VdfProof(output_y=y, pi=pi, remainder_r=r, challenge_prime=prime)
        )
    return proofs


def batch_verify(
    instances: list[VdfInstance],
    proofs: list[VdfProof],
    modulus_n: int,
    sid: bytes,
) -> bool:
    """Verify C instances through one aggregated congruence.

    With transcript scalars alpha_i and shared prime q, checks

        (prod pi_i^alpha_i)^q * prod g_i^(alpha_i r_i) == prod y_i^alpha_i

    which holds exactly when every individual relation holds, up to the
    ~2^-128 chance of a forged batch slipping through the random
    coefficients.  Each r_i is also recomputed, so remainder tampering
    is caught deterministically.
    """
    if len(instances) != len(proofs):
        raise ValueError("instances and proofs differ in length")
    if not instances:
        raise ValueError("empty batch")
    outputs = [p.output_y for p in proofs]
    prime, scalars = hash_to_prime_and_scalars(
        batch_transcript(modulus_n, instances, outputs, sid), len(instances)
    )
    agg_pi = 1
    lhs_g = 1
    rhs = 1
    for inst, proof, alpha in zip(instances, proofs, scalars):
        if proof.challenge_prime != prime:
            return False
        if not 1 <= proof.output_y <= modulus_n - 1:
            return False
        if not 1 <= proof.pi <= modulus_n - 1:
            return False
        if proof.remainder_r != pow(2, inst.delay_T, prime):
            return False
        agg_pi = agg_pi * pow(proof.pi, alpha, modulus_n) % modulus_n
        lhs_g = lhs_g * pow(inst.generator_g, alpha * proof.remainder_r, modulus_n) % modulus_n
        rhs = rhs * pow(proof.output_y, alpha, modulus_n) % modulus_n
    lhs = pow(agg_pi, prime, modulus_n) * lhs_g % modulus_n
    return lhs == rhs
