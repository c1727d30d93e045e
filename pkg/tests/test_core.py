"""Primitive-layer tests: encodings, digests, streams, timestamps."""

import hashlib
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gputelem.core import (
    DIGEST_LEN,
    KAPPA,
    SALT_LEN,
    Challenge,
    Response,
    digest_below_target,
    digest_to_int,
    encode_fields,
    generate_salt,
    hash_bytes,
    issued_at_micros,
    keyed_hash,
    keyed_stream,
)


def test_hash_bytes_is_sha256():
    assert hash_bytes(b"abc") == hashlib.sha256(b"abc").digest()
    assert len(hash_bytes(b"")) == DIGEST_LEN


def test_keyed_hash_differs_from_unkeyed_and_by_key():
    data = b"payload"
    assert keyed_hash(b"k1", data) != keyed_hash(b"k2", data)
    assert keyed_hash(b"k1", data) != hash_bytes(data)
    assert len(keyed_hash(b"k", data)) == DIGEST_LEN


def test_keyed_hash_long_key_is_prehashed():
    long_key = b"x" * 200
    folded = hashlib.blake2b(long_key, digest_size=64).digest()
    assert keyed_hash(long_key, b"d") == keyed_hash(folded, b"d")


def test_keyed_stream_prefix_stability():
    # requesting fewer bytes must yield a prefix of the longer stream
    full = keyed_stream(b"key", 300, domain=b"dom")
    assert keyed_stream(b"key", 128, domain=b"dom") == full[:128]
    assert len(full) == 300


def test_keyed_stream_domain_separation():
    a = keyed_stream(b"key", 64, domain=b"a")
    b = keyed_stream(b"key", 64, domain=b"b")
    assert a != b
    assert keyed_stream(b"key", 0) == b""


def test_keyed_stream_matches_manual_blocks():
    key, domain = b"key", b"dom"
    manual = b"".join(
        hashlib.blake2b(
            domain + counter.to_bytes(8, "big"), digest_size=64, key=key
        ).digest()
        for counter in range(3)
    )
    assert keyed_stream(key, 192, domain=domain) == manual


def test_encode_fields_known_bytes():
    # 4-byte length prefixes, minimal-width ints, utf-8 strings
    assert encode_fields(b"ab") == b"\x00\x00\x00\x02ab"
    assert encode_fields(0) == b"\x00\x00\x00\x01\x00"
    assert encode_fields(256) == b"\x00\x00\x00\x02\x01\x00"
    assert encode_fields("hi") == b"\x00\x00\x00\x02hi"
    assert encode_fields() == b""


def test_encode_fields_rejects_negative_and_alien_types():
    with pytest.raises(ValueError):
        encode_fields(-1)
    with pytest.raises(TypeError):
        encode_fields(1.5)


@given(
    st.lists(
        st.one_of(
            st.binary(max_size=64),
            st.integers(min_value=0, max_value=1 << 256),
            st.text(max_size=32),
        ),
        max_size=6,
    )
)
def test_encode_fields_is_parseable_and_injective_on_layout(parts):
    blob = encode_fields(*parts)
    # walk the length prefixes back out
    offset, count = 0, 0
    while offset < len(blob):
        n = int.from_bytes(blob[offset : offset + 4], "big")
        offset += 4 + n
        count += 1
    assert offset == len(blob)
    assert count == len(parts)


@given(st.binary(min_size=1, max_size=8), st.binary(min_size=1, max_size=8))
def test_encode_fields_no_concatenation_collision(a, b):
    # (a, b) and (a||b,) must never encode identically
    assert encode_fields(a, b) != encode_fields(a + b)


def test_digest_to_int_round_trip():
    digest = bytes(range(32))
    assert digest_to_int(digest).to_bytes(32, "big") == digest


def test_digest_below_target_boundaries():
    zero = bytes(32)
    # the zero digest is the only value clearing the maximum difficulty
    assert digest_below_target(zero, KAPPA)
    assert not digest_below_target(b"\x00" * 31 + b"\x01", KAPPA)
    top = b"\xff" * 32
    assert digest_below_target(top, 0)
    assert not digest_below_target(top, 1)


def test_digest_below_target_matches_leading_zero_bits():
    digest = b"\x00\x0f" + b"\xff" * 30  # 12 leading zero bits
    for d in range(13):
        assert digest_below_target(digest, d)
    assert not digest_below_target(digest, 13)


def test_digest_below_target_input_validation():
    with pytest.raises(ValueError):
        digest_below_target(bytes(31), 4)
    with pytest.raises(ValueError):
        digest_below_target(bytes(32), KAPPA + 1)
    with pytest.raises(ValueError):
        digest_below_target(bytes(32), -1)


def test_generate_salt_deterministic_under_seed():
    assert generate_salt(random.Random(5)) == generate_salt(random.Random(5))
    assert len(generate_salt(random.Random(5))) == SALT_LEN


@given(st.integers(min_value=0, max_value=(1 << 51) - 1))
def test_issued_at_micros_survives_wire_round_trip(micros):
    """Stamp -> float seconds -> stamp must be the identity."""
    assert issued_at_micros(micros / 1e6) == micros


def test_issued_at_micros_truncation_counterexample():
    # the truncating version loses this epoch; round-to-nearest keeps it
    micros = 1_787_000_000_000_001
    assert issued_at_micros(micros / 1e6) == micros


def test_challenge_transcript_binds_every_field():
    base = dict(
        session_id=b"s" * 32,
        index=3,
        mode="pow",
        salt=b"t" * 32,
        issued_at=123.456789,
    )
    reference = Challenge(**base).transcript()
    for key, other in [
        ("session_id", b"x" * 32),
        ("index", 4),
        ("mode", "vdf"),
        ("salt", b"y" * 32),
        ("issued_at", 123.456790),
    ]:
        assert Challenge(**{**base, key: other}).transcript() != reference


def test_response_matches_checks_identity_fields():
    ch = Challenge(b"s", 1, "pow", b"t", 0.0)
    ok = Response(b"s", 1, "pow", {}, 0.1)
    assert ok.matches(ch)
    assert not Response(b"s", 2, "pow", {}, 0.1).matches(ch)
    assert not Response(b"s", 1, "vdf", {}, 0.1).matches(ch)
    assert not Response(b"z", 1, "pow", {}, 0.1).matches(ch)
