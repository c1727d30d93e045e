"""Watch memory-hard puzzle cost double with each difficulty step.

Solves real puzzles at several difficulties, checks every solution,
then compares the attempt counts and wall times against the worker
model's exponential draws.
"""

import random
import statistics
import time

from gputelem.core import Challenge, generate_salt
from gputelem.pow import PowParams, solve_pow, verify_pow
from gputelem.worksim import WorkerProfile, simulate_pow_time


def solve_batch(difficulty: int, count: int, rng: random.Random):
    params = PowParams(difficulty=difficulty, argon_memory_kib=16)
    attempts = []
    started = time.perf_counter()
    for i in range(count):
        ch = Challenge(
            session_id=rng.randbytes(32),
            index=i,
            mode="pow",
            salt=generate_salt(rng),
            issued_at=time.time(),
            params={},
        )
        sol = solve_pow(ch, params)
        assert sol is not None and verify_pow(ch, sol, params)
        attempts.append(sol.attempts)
    elapsed = time.perf_counter() - started
    return attempts, elapsed


def main() -> None:
    rng = random.Random(7)
    print("Real solves, Argon2id at 16 KiB per hash, 30 puzzles per difficulty:")
    print(f"{'d':>3} {'expected':>9} {'mean attempts':>14} {'wall/puzzle':>12}")
    for d in (4, 6, 8):
        attempts, elapsed = solve_batch(d, 30, rng)
        print(
            f"{d:>3} {2 ** d:>9} {statistics.mean(attempts):>14.1f} "
            f"{elapsed / len(attempts) * 1e3:>10.2f}ms"
        )
    print("Every solution verified; attempt counts track 2^d.")

    print()
    print("Worker model at 1024 hashes/s, 2000 draws per difficulty:")
    profile = WorkerProfile(hash_rate_r=1024.0, jitter_rel=0.0)
    srng = random.Random(7)
    for d in (6, 8, 10):
        times = [simulate_pow_time(profile, d, srng) for _ in range(2000)]
        mean = statistics.mean(times)
        cv = statistics.stdev(times) / mean
        print(
            f"  d={d:<2} mean={mean * 1e3:8.2f}ms  cv={cv:.3f}"
            "  (exponential law has cv = 1)"
        )
    print("Mean solve time doubles per difficulty step; the shape stays exponential.")


if __name__ == "__main__":
    main()
