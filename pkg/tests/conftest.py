"""Shared fixtures: RSA groups are expensive, so build them once."""

import random

import pytest

from gputelem import vdf


@pytest.fixture(scope="session")
def rsa_group():
    """512-bit trapdoor group; one honest setup reused across the suite."""
    return vdf.setup_group(512, random.Random(0xBEEF), keep_trapdoor=True)


@pytest.fixture(scope="session")
def tiny_group():
    """N = 1081 = 23 * 47, both safe primes (11, 23 Sophie Germain)."""
    return vdf.GroupParams(
        modulus_N=1081, bit_length=11, trapdoor=(23, 47, 11 * 23)
    )
