"""Memory-residency inference from probe timing.

The challenger plants a large pseudorandom dataset in the worker's fast
memory, then fires nonce-keyed probes at uniformly random times.  A
worker that kept the data resident answers after a fast-memory scan; a
worker that evicted it must haul every byte back across the slow bus
first, which shows up as a timing gap of roughly dataset_size / bus
bandwidth.  Probes are keyed so responses can be neither precomputed
nor faked: the challenger regenerates the dataset from its seed and
recomputes the expected digest exactly.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from enum import Enum

from cryptography.hazmat.primitives.kdf.argon2 import Argon2id

from .core import (
    TimingSample,
    digest_to_int,
    encode_fields,
    generate_salt,
    hash_bytes,
    keyed_hash,
    keyed_stream,
)

DEFAULT_BLOCK_BYTES = 1 << 20  # matches the per-instance Argon2id memory cost
DESK_DATASET_BYTES = 256 << 20  # deployment-scale corpora are simulated, not allocated


class Residency(str, Enum):
    HOT = "Hot"
    COLD = "Cold"


@dataclass(frozen=True)
class BandwidthModel:
    """Fast-memory vs. transfer-bus bandwidths used for timing expectations."""

    hbm_bw: float = 100e9
    pci_bw: float = 10e9
    base_latency_ns: int = 50_000

    def __post_init__(self) -> None:
        if not self.hbm_bw > self.pci_bw > 0:
            raise ValueError("need hbm_bw > pci_bw > 0")
        if self.base_latency_ns < 0:
            raise ValueError("base latency cannot be negative")


@dataclass
class ChalDataset:
    """Incompressible challenge data, regenerable block by block from a seed."""

    size_bytes: int
    block_size_bytes: int
    seed: bytes
    blocks: list[bytes]
    block_digests: list[bytes]

    @property
    def block_count(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class ResidencyProbeResult:
    response_digest: bytes
    timing: TimingSample
    kernel_time_s: float
    mode_truth: str | None = None


def chal_block(seed: bytes, index: int, nbytes: int) -> bytes:
    """Block ``index`` of the dataset: a seed-keyed pseudorandom stream."""
    return keyed_stream(seed, nbytes, domain=encode_fields("chal", index))


def init_chal(
    size_bytes: int, seed: bytes, block_size_bytes: int = DEFAULT_BLOCK_BYTES
) -> ChalDataset:
    """Materialize the dataset and cache per-block digests.

    The last block may be short when the size is not a block multiple.
    Pseudorandom bytes are incompressible, so a worker cannot keep a
    cheaper representation than the data itself.
    """
    if size_bytes < 1:
        raise ValueError("dataset needs at least one byte")
    if block_size_bytes < 1:
        raise ValueError("block size must be positive")
    blocks = []
    digests = []
    offset = 0
    index = 0
    while offset < size_bytes:
        nbytes = min(block_size_bytes, size_bytes - offset)
        block = chal_block(seed, index, nbytes)
        blocks.append(block)
        digests.append(hash_bytes(block))
        offset += nbytes
        index += 1
    return ChalDataset(
        size_bytes=size_bytes,
        block_size_bytes=block_size_bytes,
        seed=seed,
        blocks=blocks,
        block_digests=digests,
    )


def mask_block(nonce: bytes, index: int, block: bytes) -> bytes:
    """Phase-1 keyed mask; XOR, so applying it twice restores the block."""
    stream = keyed_stream(nonce, len(block), domain=encode_fields("mask", index))
    return (
        int.from_bytes(block, "big") ^ int.from_bytes(stream, "big")
    ).to_bytes(len(block), "big")


def default_instance_count(block_count: int) -> int:
    """Phase-2 memory-hard instances per probe: ceil(sqrt(block count))."""
    return math.isqrt(max(block_count - 1, 0)) + 1


def residency_probe(
    chal: ChalDataset,
    nonce: bytes,
    argon_memory_kib: int = 1024,
    argon_passes: int = 1,
    argon_lanes: int = 1,
    instances: int | None = None,
    mode_truth: str | None = None,
) -> ResidencyProbeResult:
    """Run the two-phase probe over the dataset and return the digest.

    Phase 1 scans every block in order, masking it with a nonce-keyed
    stream and folding it into a running digest, so the full dataset has
    to be readable at probe time.  Phase 2 runs memory-hard instances
    whose block indices depend on the evolving digest; the next index is
    unknown until the previous tag exists, forcing genuinely randomized
    access instead of a prefetched linear pass.
    """
    if instances is None:
        instances = default_instance_count(chal.block_count)
    if instances < 1:
        raise ValueError("need at least one phase-2 instance")
    t_start = time.perf_counter()
    state = keyed_hash(nonce, b"probe-init")
    masked = []
    for j, block in enumerate(chal.blocks):
        mblock = mask_block(nonce, j, block)
        masked.append(mblock)
        state = keyed_hash(state, mblock)
    t_phase2 = time.perf_counter()
    for i in range(instances):
        pick = digest_to_int(keyed_hash(state, encode_fields("pick", i)))
        j = pick % chal.block_count
        kdf = Argon2id(
            salt=state,
            length=32,
            iterations=argon_passes,
            lanes=argon_lanes,
            memory_cost=argon_memory_kib,
            secret=nonce,
            ad=encode_fields(j),
        )
        tag = kdf.derive(masked[j])
        state = keyed_hash(state, encode_fields(tag, j))
    t_end = time.perf_counter()
    timing = TimingSample(
        index=0, mode="residency", duration=t_end - t_start, valid=True
    )
    return ResidencyProbeResult(
        response_digest=state,
        timing=timing,
        kernel_time_s=t_end - t_phase2,
        mode_truth=mode_truth,
    )


def expected_gap(size_bytes: int, model: BandwidthModel) -> float:
    """Hot/cold timing gap: transferring S bytes over the slow bus.

    Nanosecond-rounded so both sides agree on thresholds exactly.
    """
    if size_bytes < 0:
        raise ValueError("size cannot be negative")
    return round(size_bytes / model.pci_bw * 1e9) / 1e9


def default_threshold_ns(size_bytes: int, model: BandwidthModel) -> int:
    """Classification threshold: hot-path estimate plus half the gap.

    The hot estimate covers base latency plus a fast-memory scan of the
    dataset; probe compute must stay under half the gap for the default
    to separate cleanly, which holds whenever the dataset dwarfs the
    phase-2 working set (square-root sampling guarantees that).
    """
    hot_estimate_s = model.base_latency_ns * 1e-9 + size_bytes / model.hbm_bw
    return int(round((hot_estimate_s + expected_gap(size_bytes, model) / 2) * 1e9))


def schedule_next(t_max: float, rng: random.Random) -> float:
    """Waiting time before the next probe: uniform on [0, t_max).

    Uniform scheduling means the worker cannot predict a quiet window to
    page the dataset out and back in unnoticed.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    return rng.random() * t_max


def classify_residency(timing: TimingSample, threshold_ns: int) -> Residency:
    """Hot iff the observed time is strictly below the threshold.

    Ties go to Cold: when in doubt, flag.
    """
    if threshold_ns <= 0:
        raise ValueError("threshold must be positive")
    return Residency.HOT if timing.duration * 1e9 < threshold_ns else Residency.COLD


@dataclass
class ResidencySessionReport:
    rows: list[dict]
    overall_pass: bool
    cold_count: int
    invalid_count: int
    threshold_ns: int


def run_residency_session(
    worker,
    rounds: int,
    t_max_s: float,
    dataset_bytes: int = DESK_DATASET_BYTES,
    block_size_bytes: int = DEFAULT_BLOCK_BYTES,
    model: BandwidthModel | None = None,
    threshold_ns: int | None = None,
    argon_memory_kib: int = 1024,
    rng: random.Random | None = None,
    sink=None,
) -> ResidencySessionReport:
    """Full session: plant the dataset, then probe at random times.

    Each round waits a uniform interval, sends a fresh nonce, verifies
    the returned digest against a local recomputation, and classifies
    the reported timing.  A digest mismatch marks the round invalid
    regardless of how fast it was; any Cold or invalid round fails the
    session overall.
    """
    if rounds < 1:
        raise ValueError("need at least one round")
    rng = rng if rng is not None else random.Random()
    model = model if model is not None else BandwidthModel()
    if threshold_ns is None:
        threshold_ns = default_threshold_ns(dataset_bytes, model)
    seed = generate_salt(rng)
    local = init_chal(dataset_bytes, seed, block_size_bytes)
    worker.init_dataset(seed, dataset_bytes, block_size_bytes)
    rows: list[dict] = []
    cold = 0
    invalid = 0
    for i in range(rounds):
        worker.sleep_until(worker.now() + schedule_next(t_max_s, rng))
        nonce = generate_salt(rng)
        result = worker.probe(nonce, argon_memory_kib=argon_memory_kib)
        expected = residency_probe(
            local, nonce, argon_memory_kib=argon_memory_kib
        ).response_digest
        valid = result.response_digest == expected
        timing = TimingSample(
            index=i, mode="residency", duration=result.timing.duration, valid=valid
        )
        verdict = classify_residency(timing, threshold_ns)
        if not valid:
            invalid += 1
        elif verdict is Residency.COLD:
            cold += 1
        row = {
            "round": i,
            "nonce_digest": hash_bytes(nonce).hex(),
            "total_ns": int(timing.duration * 1e9),
            "kernel_ns": int(result.kernel_time_s * 1e9),
            "verdict": verdict.value,
            "valid": valid,
        }
        rows.append(row)
        if sink is not None:
            sink(row)
    return ResidencySessionReport(
        rows=rows,
        overall_pass=(cold == 0 and invalid == 0),
        cold_count=cold,
        invalid_count=invalid,
        threshold_ns=threshold_ns,
    )
