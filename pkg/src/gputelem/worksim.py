"""Simulated workers: real cryptographic answers, modeled latencies.

A simulated worker actually solves every challenge it receives (the
hashes, squarings and matrix products are genuine, so verification
exercises the real code paths), but the time it *reports into the
session* is drawn from a behavioral latency model: exponential solve
times for nonce searches, near-deterministic times for the squaring
chain, bandwidth-derived times for residency probes.  An in-process
worker advances a virtual clock by those drawn times, which lets
thousand-session Monte-Carlo runs finish in seconds while producing the
same decisions a patient wall-clock run would.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, replace

from .core import Challenge, Response, generate_salt
from .gemm import GemmParams, solve_gemm_puzzle
from .pow import PowParams, solve_pow
from .residency import (
    BandwidthModel,
    ChalDataset,
    ResidencyProbeResult,
    init_chal,
    residency_probe,
)
from .vdf import VdfInstance, derive_instance, prove_batch
from . import vdf as _vdf

_RESIDENCY_STATES = ("hot", "cold", "evict_after")
_BEHAVIORS = ("honest", "outsourced", "precompute")


@dataclass(frozen=True)
class WorkerProfile:
    """Behavioral model of one worker.

    hash_rate_r and threads_M set the nonce-search rate; the three
    contention factors slow the scalar, tensor, and memory pathways
    independently (a co-resident workload rarely loads all three the
    same way).  behavior selects honest play, outsourcing (valid
    answers, extra shipping latency), or a precompute attempt, which
    against fresh salts degenerates to honest play by construction.
    """

    hash_rate_r: float = 1024.0
    threads_M: int = 1
    contention_factor: float = 1.0
    tensor_contention: float = 1.0
    memory_contention: float = 1.0
    residency_state: str = "hot"
    evict_after_round: int | None = None
    network_t0_ns: int = 0
    squaring_rate: float = 1e6
    jitter_rel: float = 0.02
    behavior: str = "honest"
    outsourced_extra_ns: int = 0
    vdf_capacity: int = 128

    def __post_init__(self) -> None:
        if self.hash_rate_r <= 0 or self.squaring_rate <= 0:
            raise ValueError("rates must be positive")
        if self.threads_M < 1:
            raise ValueError("threads_M must be >= 1")
        for factor in (
            self.contention_factor,
            self.tensor_contention,
            self.memory_contention,
        ):
            if factor < 1:
                raise ValueError("contention factors must be >= 1")
        if not 0 <= self.jitter_rel <= 0.2:
            raise ValueError("jitter_rel must lie in [0, 0.2]")
        if self.residency_state not in _RESIDENCY_STATES:
            raise ValueError(f"residency_state must be one of {_RESIDENCY_STATES}")
        if self.residency_state == "evict_after" and not self.evict_after_round:
            raise ValueError("evict_after state needs evict_after_round >= 1")
        if self.behavior not in _BEHAVIORS:
            raise ValueError(f"behavior must be one of {_BEHAVIORS}")
        if self.network_t0_ns < 0 or self.outsourced_extra_ns < 0:
            raise ValueError("latency offsets cannot be negative")
        if self.vdf_capacity < 1:
            raise ValueError("vdf_capacity must be >= 1")


def _jitter_factor(profile: WorkerProfile, rng: random.Random) -> float:
    """Multiplicative Gaussian jitter, truncated at three sigma."""
    if profile.jitter_rel == 0:
        return 1.0
    g = rng.gauss(0.0, 1.0)
    while abs(g) > 3.0:
        g = rng.gauss(0.0, 1.0)
    return 1.0 + profile.jitter_rel * g


def _finalize(profile: WorkerProfile, core_s: float, rng: random.Random) -> float:
    """Apply jitter to the compute core, then add fixed latency offsets."""
    total = core_s * _jitter_factor(profile, rng) + profile.network_t0_ns * 1e-9
    if profile.behavior == "outsourced":
        total += profile.outsourced_extra_ns * 1e-9
    return total


def simulate_pow_time(
    profile: WorkerProfile, difficulty: int | PowParams, rng: random.Random
) -> float:
    """Draw one nonce-search solve time.

    Exponential with rate r * M * 2^-d, slowed by scalar contention.
    Memorylessness is inherited from the exponential draw, matching how
    independent hashing attempts behave.
    """
    d = difficulty.difficulty if isinstance(difficulty, PowParams) else difficulty
    lam = profile.hash_rate_r * profile.threads_M * 2.0 ** (-d)
    lam /= profile.contention_factor
    return _finalize(profile, rng.expovariate(lam), rng)


def simulate_gemm_time(
    profile: WorkerProfile, difficulty: int | GemmParams, rng: random.Random
) -> float:
    """Chained-product search time: same law as the nonce search, tensor path."""
    d = difficulty.difficulty_d if isinstance(difficulty, GemmParams) else difficulty
    lam = profile.hash_rate_r * profile.threads_M * 2.0 ** (-d)
    lam /= profile.tensor_contention
    return _finalize(profile, rng.expovariate(lam), rng)


def occupancy(profile: WorkerProfile, c_instances: int) -> float:
    """Saturation factor: 1 below the parallel capacity, C/capacity above."""
    return max(1.0, c_instances / profile.vdf_capacity)


def simulate_vdf_time(
    profile: WorkerProfile, delay_t: int, c_instances: int, rng: random.Random
) -> float:
    """Squaring-chain wall time: deterministic core, narrow jitter.

    T/squaring_rate scaled by scalar contention and by occupancy once
    the instance count exceeds the parallel capacity.  The coefficient
    of variation is jitter_rel, far below the exponential law's 1.
    """
    if delay_t < 1:
        raise ValueError("delay must be >= 1")
    if c_instances < 1:
        raise ValueError("instance count must be >= 1")
    core = delay_t / profile.squaring_rate
    core *= profile.contention_factor * occupancy(profile, c_instances)
    return _finalize(profile, core, rng)


def residency_hot_at(profile: WorkerProfile, round_index: int) -> bool:
    """Ground truth for round ``round_index`` (0-based) under the profile."""
    if profile.residency_state == "hot":
        return True
    if profile.residency_state == "cold":
        return False
    return round_index < profile.evict_after_round


def simulate_residency_time(
    profile: WorkerProfile,
    s_touched: int,
    model: BandwidthModel,
    rng: random.Random,
    hot: bool = True,
) -> float:
    """Probe wall time under the bandwidth model.

    Hot: base latency plus a fast-memory scan (memory contention applies
    to the scan).  Cold: the same plus the full transfer of the touched
    bytes over the slow bus, which is the detectable gap.
    """
    if s_touched < 0:
        raise ValueError("touched bytes cannot be negative")
    core = model.base_latency_ns * 1e-9
    core += s_touched / model.hbm_bw * profile.memory_contention
    if not hot:
        core += s_touched / model.pci_bw
    return _finalize(profile, core, rng)


class VirtualClock:
    """Session clock that jumps instead of waiting."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = start

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            self._now += seconds

    def sleep_until(self, deadline: float) -> None:
        if deadline > self._now:
            self._now = deadline


class WallClock:
    """Real-time clock with the same interface."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def sleep_until(self, deadline: float) -> None:
        self.sleep(deadline - self.now())


class SimWorker:
    """In-process worker: solves challenges for real, reports modeled times.

    The handle exposes the clock interface (now/sleep_until) so session
    drivers schedule against the same timeline the worker advances.  One
    handle serves one session at a time.
    """

    def __init__(
        self,
        profile: WorkerProfile,
        seed: int = 0,
        clock=None,
        model: BandwidthModel | None = None,
        session_id: bytes | None = None,
    ) -> None:
        self.profile = profile
        self.rng = random.Random(seed)
        self.clock = clock if clock is not None else VirtualClock()
        self.model = model if model is not None else BandwidthModel()
        self.session_id = (
            session_id if session_id is not None else generate_salt(self.rng)
        )
        self.dataset: ChalDataset | None = None
        self._probe_round = 0

    # clock interface, shared with session drivers
    def now(self) -> float:
        return self.clock.now()

    def sleep_until(self, deadline: float) -> None:
        self.clock.sleep_until(deadline)

    def answer(self, challenge: Challenge) -> Response:
        """Solve one challenge; advance the clock by the modeled duration."""
        handler = {
            "pow": self._answer_pow,
            "gemm": self._answer_gemm,
            "vdf": self._answer_vdf,
        }.get(challenge.mode)
        if handler is None:
            raise ValueError(f"unsupported challenge mode {challenge.mode!r}")
        payload, duration = handler(challenge)
        self.clock.sleep(duration)
        return Response(
            session_id=challenge.session_id,
            index=challenge.index,
            mode=challenge.mode,
            payload=payload,
            solve_time=duration,
        )

    def _answer_pow(self, challenge: Challenge) -> tuple[dict, float]:
        params = PowParams(
            difficulty=int(challenge.params["difficulty"]),
            argon_passes=int(challenge.params.get("argon_passes", 1)),
            argon_lanes=int(challenge.params.get("argon_lanes", 1)),
            argon_memory_kib=int(challenge.params.get("argon_memory_kib", 1024)),
        )
        solution = solve_pow(challenge, params)
        if solution is None:
            raise RuntimeError("solve cap exhausted on an honest worker")
        duration = simulate_pow_time(self.profile, params, self.rng)
        payload = {
            "nonce": solution.nonce,
            "digest": solution.digest,
            "attempts": solution.attempts,
            "kernel_time_ns": max(
                int(duration * 1e9) - self.profile.network_t0_ns, 0
            ),
        }
        return payload, duration

    def _answer_gemm(self, challenge: Challenge) -> tuple[dict, float]:
        params = GemmParams(
            dimension_n=int(challenge.params["dimension_n"]),
            difficulty_d=int(challenge.params["difficulty_d"]),
            freivalds_k=int(challenge.params.get("freivalds_k", 5)),
        )
        proof = solve_gemm_puzzle(challenge.salt, params)
        duration = simulate_gemm_time(self.profile, params, self.rng)
        payload = {
            "index_jstar": proof.index_jstar,
            "chain_state_sigma": proof.chain_state_sigma,
            "product_c": proof.product_C,
            "kernel_time_ns": max(
                int(duration * 1e9) - self.profile.network_t0_ns, 0
            ),
        }
        return payload, duration

    def _answer_vdf(self, challenge: Challenge) -> tuple[dict, float]:
        modulus_n = int(challenge.params["modulus_n"])
        t_min = int(challenge.params["t_min"])
        t_max = int(challenge.params["t_max"])
        count = int(challenge.params.get("instances", 1))
        instances: list[VdfInstance] = [
            derive_instance(challenge.salt, i, modulus_n, t_min, t_max)
            for i in range(count)
        ]
        outputs = [
            _vdf.eval(inst.generator_g, inst.delay_T, modulus_n)
            for inst in instances
        ]
        proofs = prove_batch(instances, outputs, modulus_n, challenge.salt)
        # concurrent instances finish with the slowest chain
        t_eff = max(inst.delay_T for inst in instances)
        duration = simulate_vdf_time(self.profile, t_eff, count, self.rng)
        payload = {
            "proofs": [
                {
                    "output_y": p.output_y,
                    "pi": p.pi,
                    "remainder_r": p.remainder_r,
                    "challenge_prime": p.challenge_prime,
                }
                for p in proofs
            ],
            "kernel_time_ns": max(
                int(duration * 1e9) - self.profile.network_t0_ns, 0
            ),
        }
        return payload, duration

    # residency session interface
    def init_dataset(
        self, seed: bytes, size_bytes: int, block_size_bytes: int
    ) -> float:
        """Pre-challenge: materialize the dataset; costs one bus transfer."""
        self.dataset = init_chal(size_bytes, seed, block_size_bytes)
        self._probe_round = 0
        duration = _finalize(
            self.profile, size_bytes / self.model.pci_bw, self.rng
        )
        self.clock.sleep(duration)
        return duration

    def probe(self, nonce: bytes, argon_memory_kib: int = 1024) -> ResidencyProbeResult:
        """Answer one residency probe with a real digest and a modeled time."""
        if self.dataset is None:
            raise RuntimeError("probe before init_dataset")
        hot = residency_hot_at(self.profile, self._probe_round)
        self._probe_round += 1
        real = residency_probe(
            self.dataset, nonce, argon_memory_kib=argon_memory_kib
        )
        duration = simulate_residency_time(
            self.profile, self.dataset.size_bytes, self.model, self.rng, hot=hot
        )
        self.clock.sleep(duration)
        kernel_s = self.dataset.size_bytes / self.model.hbm_bw
        return ResidencyProbeResult(
            response_digest=real.response_digest,
            timing=replace(real.timing, duration=duration),
            kernel_time_s=kernel_s,
            mode_truth="Hot" if hot else "Cold",
        )


def spawn_worker(
    profile: WorkerProfile,
    mode: str = "in-process",
    seed: int = 0,
    wall_clock: bool = False,
    model: BandwidthModel | None = None,
    listen: str = "127.0.0.1:0",
):
    """Create a worker handle.

    "in-process" returns a SimWorker on a virtual clock (or wall clock
    when asked).  "daemon" starts a TCP server thread speaking the wire
    protocol and returns its bound (host, port); port binding failures
    propagate as OSError.
    """
    if mode == "in-process":
        clock = WallClock() if wall_clock else VirtualClock()
        return SimWorker(profile, seed=seed, clock=clock, model=model)
    if mode == "daemon":
        from .netcli import serve_worker_background

        return serve_worker_background(profile, listen=listen, seed=seed, model=model)
    raise ValueError(f"unknown worker mode {mode!r}")
