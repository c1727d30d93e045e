"""Daemons, transport, session reports: the operational shell.

A challenger session speaks a strict request/response sequence over one
TCP connection: a pre-challenge announcing the session, then one
challenge per round, each answered before the next is sent.  The worker
daemon actually computes every answer and shapes its reply latency to
its behavioral profile, so a challenger cannot tell (and should not
care) whether it is talking to a simulation.

Reports come out as CSV rows plus a JSON summary; with seeded configs
and virtual clocks both are byte-deterministic.
"""

from __future__ import annotations

import json
import random
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

import yaml

from .core import Response
from .protocol import (
    MODES,
    ProtocolError,
    SessionDriver,
    challenge_record,
    new_session_id,
    parse_challenge,
    parse_response,
    response_record,
)
from .residency import (
    BandwidthModel,
    ResidencyProbeResult,
    ResidencySessionReport,
    run_residency_session,
)
from .stattests import Decision, Verdict, continuous_measurement
from .vdf import setup_group
from .wire import (
    MSG_CHALLENGE_BATCH,
    MSG_ERROR,
    MSG_PRE_CHALLENGE,
    MSG_PRE_RESPONSE,
    MSG_RESPONSE_BATCH,
    WireDecodeError,
    WireMessage,
    decode_message,
    decode_record,
    encode_message,
    encode_record,
)
from .worksim import SimWorker, WallClock, WorkerProfile

_HEADER_LEN = 6


class TransportError(RuntimeError):
    """Connection-level failure: refused, reset, truncated, or timed out."""


# --- framed socket I/O ------------------------------------------------------


def send_frame(sock: socket.socket, msg: WireMessage) -> None:
    try:
        sock.sendall(encode_message(msg))
    except OSError as exc:
        raise TransportError(f"send failed: {exc}") from exc


def _recv_exact(sock: socket.socket, nbytes: int) -> bytes:
    chunks = []
    remaining = nbytes
    while remaining > 0:
        try:
            chunk = sock.recv(min(remaining, 1 << 20))
        except OSError as exc:
            raise TransportError(f"recv failed: {exc}") from exc
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> WireMessage:
    header = _recv_exact(sock, _HEADER_LEN)
    length = int.from_bytes(header[2:6], "big")
    if length > (256 << 20):
        raise TransportError("peer announced an oversize frame")
    payload = _recv_exact(sock, length) if length else b""
    try:
        return decode_message(header + payload)
    except WireDecodeError as exc:
        raise TransportError(f"undecodable frame: {exc}") from exc


def _error_message(detail: str, code: str = "protocol") -> WireMessage:
    return WireMessage(
        MSG_ERROR, encode_record({"code": code, "detail": detail[:500]})
    )


# --- worker daemon -----------------------------------------------------------


class _WorkerServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, profile, seed, model, shape_latency=True):
        self.profile = profile
        self.base_seed = seed
        self.model = model
        self.shape_latency = shape_latency
        self._session_counter = 0
        self._counter_lock = threading.Lock()
        super().__init__(address, _WorkerHandler)

    def next_seed(self) -> int:
        with self._counter_lock:
            self._session_counter += 1
            return self.base_seed + self._session_counter


class _WorkerHandler(socketserver.BaseRequestHandler):
    """One connection = one session; malformed input answers Error and
    keeps the connection alive, since a challenger must be able to log a
    bad round and continue measuring."""

    def handle(self) -> None:
        server: _WorkerServer = self.server
        worker = SimWorker(
            server.profile, seed=server.next_seed(), model=server.model
        )
        sock = self.request
        while True:
            try:
                msg = recv_frame(sock)
            except TransportError:
                return
            try:
                reply = self._dispatch(worker, msg, server.shape_latency)
            except (WireDecodeError, ProtocolError, ValueError, KeyError) as exc:
                reply = _error_message(str(exc))
            except Exception as exc:  # no crash on any challenge content
                reply = _error_message(f"internal: {exc}", code="internal")
            try:
                send_frame(sock, reply)
            except TransportError:
                return

    def _dispatch(
        self, worker: SimWorker, msg: WireMessage, shape_latency: bool
    ) -> WireMessage:
        if msg.msg_type == MSG_PRE_CHALLENGE:
            record = decode_record(msg.payload)
            kind = str(record["kind"])
            if kind not in MODES:
                return _error_message(f"unknown kind {kind!r}")
            init_time_ns = 0
            if kind == "residency":
                res = record["residency"]
                started = time.monotonic()
                duration = worker.init_dataset(
                    bytes(res["seed"]),
                    int(res["size_bytes"]),
                    int(res["block_size_bytes"]),
                )
                if shape_latency:
                    _sleep_remainder(duration, started)
                init_time_ns = int(duration * 1e9)
            return WireMessage(
                MSG_PRE_RESPONSE,
                encode_record(
                    {
                        "session_id": bytes(record["session_id"]),
                        "status": "ok",
                        "init_time_ns": init_time_ns,
                    }
                ),
            )
        if msg.msg_type == MSG_CHALLENGE_BATCH:
            challenge = parse_challenge(decode_record(msg.payload))
            started = time.monotonic()
            if challenge.mode == "residency":
                result = worker.probe(
                    challenge.salt,
                    argon_memory_kib=int(
                        challenge.params.get("argon_memory_kib", 1024)
                    ),
                )
                response = Response(
                    session_id=challenge.session_id,
                    index=challenge.index,
                    mode="residency",
                    payload={
                        "response_digest": result.response_digest,
                        "kernel_time_ns": int(result.kernel_time_s * 1e9),
                    },
                    solve_time=result.timing.duration,
                )
            else:
                response = worker.answer(challenge)
            if shape_latency:
                _sleep_remainder(response.solve_time, started)
            return WireMessage(
                MSG_RESPONSE_BATCH, encode_record(response_record(response))
            )
        return _error_message(f"unexpected message type {msg.msg_type}")


def _sleep_remainder(target_s: float, started_monotonic: float) -> None:
    remaining = target_s - (time.monotonic() - started_monotonic)
    if remaining > 0:
        time.sleep(remaining)


@dataclass
class WorkerDaemon:
    """Handle on a background worker daemon; close() shuts it down."""

    server: _WorkerServer
    thread: threading.Thread

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def serve_worker_background(
    profile: WorkerProfile,
    listen: str = "127.0.0.1:0",
    seed: int = 0,
    model: BandwidthModel | None = None,
    shape_latency: bool = True,
) -> WorkerDaemon:
    host, _, port = listen.rpartition(":")
    server = _WorkerServer(
        (host or "127.0.0.1", int(port)),
        profile,
        seed,
        model if model is not None else BandwidthModel(),
        shape_latency=shape_latency,
    )
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return WorkerDaemon(server=server, thread=thread)


def run_worker(config: dict) -> None:
    """Blocking daemon entry point; serves until interrupted."""
    profile = profile_from_dict(config.get("profile", {}))
    listen = str(config.get("listen", "127.0.0.1:9333"))
    model = bandwidth_model_from_dict(config.get("bandwidth", {}))
    host, _, port = listen.rpartition(":")
    server = _WorkerServer(
        (host or "127.0.0.1", int(port)),
        profile,
        int(config.get("seed", 0)),
        model,
    )
    try:
        server.serve_forever()
    finally:
        server.server_close()


# --- challenger-side client --------------------------------------------------


class RemoteWorker:
    """Client handle over TCP implementing the session-driver interface."""

    def __init__(self, address: tuple[str, int], timeout_s: float = 120.0) -> None:
        try:
            self._sock = socket.create_connection(address, timeout=timeout_s)
        except OSError as exc:
            raise TransportError(f"cannot reach worker at {address}: {exc}") from exc
        self._clock = WallClock()
        self.session_id = b""
        self._probe_index = 0
        self._probe_params: dict = {}

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def now(self) -> float:
        return self._clock.now()

    def sleep_until(self, deadline: float) -> None:
        self._clock.sleep_until(deadline)

    def _round_trip(self, msg: WireMessage) -> WireMessage:
        send_frame(self._sock, msg)
        reply = recv_frame(self._sock)
        if reply.msg_type == MSG_ERROR:
            detail = decode_record(reply.payload)
            raise ProtocolError(f"worker error: {detail.get('detail', '?')}")
        return reply

    def pre_challenge(self, record: dict) -> dict:
        reply = self._round_trip(
            WireMessage(MSG_PRE_CHALLENGE, encode_record(record))
        )
        if reply.msg_type != MSG_PRE_RESPONSE:
            raise ProtocolError("expected a pre-response")
        return decode_record(reply.payload)

    def answer(self, challenge) -> Response:
        reply = self._round_trip(
            WireMessage(MSG_CHALLENGE_BATCH, encode_record(challenge_record(challenge)))
        )
        if reply.msg_type != MSG_RESPONSE_BATCH:
            raise ProtocolError("expected a response batch")
        return parse_response(
            decode_record(reply.payload),
            dimension_n=challenge.params.get("dimension_n"),
        )

    # residency-session interface
    def init_dataset(
        self, seed: bytes, size_bytes: int, block_size_bytes: int
    ) -> float:
        ack = self.pre_challenge(
            {
                "session_id": self.session_id or b"\x00" * 32,
                "kind": "residency",
                "residency": {
                    "seed": seed,
                    "size_bytes": size_bytes,
                    "block_size_bytes": block_size_bytes,
                },
            }
        )
        return int(ack.get("init_time_ns", 0)) / 1e9

    def probe(self, nonce: bytes, argon_memory_kib: int = 1024) -> ResidencyProbeResult:
        from .core import Challenge, TimingSample

        challenge = Challenge(
            session_id=self.session_id or b"\x00" * 32,
            index=self._probe_index,
            mode="residency",
            salt=nonce,
            issued_at=self.now(),
            params={"argon_memory_kib": argon_memory_kib},
        )
        self._probe_index += 1
        started = self.now()
        response = self.answer(challenge)
        elapsed = self.now() - started
        return ResidencyProbeResult(
            response_digest=bytes(response.payload["response_digest"]),
            timing=TimingSample(
                index=challenge.index,
                mode="residency",
                duration=elapsed,
                valid=True,
            ),
            kernel_time_s=int(response.payload.get("kernel_time_ns", 0)) / 1e9,
        )


# --- session reports ---------------------------------------------------------

ROUND_HEADERS = {
    "pow": ("session_id", "round", "kind", "total_time_ns", "adjusted_ns", "valid"),
    "vdf": ("session_id", "round", "kind", "total_time_ns", "adjusted_ns", "valid"),
    "gemm": ("session_id", "round", "kind", "total_time_ns", "adjusted_ns", "valid"),
    "residency": ("round", "nonce_digest", "total_ns", "kernel_ns", "verdict", "valid"),
}


@dataclass
class SessionReport:
    session_id: str
    kind: str
    rows: list[dict] = field(default_factory=list)
    decision: Decision | None = None
    config: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.decision is None:
            return 2
        return 0 if self.decision.verdict is Verdict.ACCEPT else 1

    def verdict_line(self) -> str:
        if self.decision is None:
            return f"{self.kind}: inconclusive"
        d = self.decision
        return (
            f"{self.kind}: {d.verdict.value} "
            f"(statistic={d.statistic:.6g}, threshold={d.threshold:.6g}, "
            f"rounds={d.samples_used}, invalid={d.invalid_count})"
        )


def rows_to_csv(rows: list[dict], header: tuple[str, ...]) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(_csv_cell(row.get(col, "")) for col in header))
    return "\n".join(out) + "\n"


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_report(report: SessionReport, out_path: str) -> None:
    """CSV of per-round rows next to a JSON summary at ``out_path``.

    out_path names the CSV; the summary lands at out_path + ".json".
    """
    header = ROUND_HEADERS.get(report.kind) or tuple(
        report.rows[0].keys() if report.rows else ()
    )
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(report.rows, header))
    summary = {
        "session_id": report.session_id,
        "kind": report.kind,
        "rounds": len(report.rows),
        "config": report.config,
    }
    if report.decision is not None:
        summary["decision"] = {
            "verdict": report.decision.verdict.value,
            "statistic": report.decision.statistic,
            "threshold": report.decision.threshold,
            "samples_used": report.decision.samples_used,
            "invalid_count": report.decision.invalid_count,
        }
    with open(out_path + ".json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- challenger --------------------------------------------------------------


def _mode_params(kind: str, config: dict, rng: random.Random) -> dict:
    section = dict(config.get(kind, {}))
    if kind == "pow":
        return {
            "difficulty": int(section.get("difficulty", 8)),
            "argon_passes": int(section.get("argon_passes", 1)),
            "argon_lanes": int(section.get("argon_lanes", 1)),
            "argon_memory_kib": int(section.get("argon_memory_kib", 64)),
        }
    if kind == "gemm":
        return {
            "dimension_n": int(section.get("dimension_n", 64)),
            "difficulty_d": int(section.get("difficulty_d", 4)),
            "freivalds_k": int(section.get("freivalds_k", 5)),
        }
    if kind == "vdf":
        if "modulus_n" in section:
            modulus_n = int(section["modulus_n"])
        else:
            bits = int(section.get("modulus_bits", 512))
            modulus_n = setup_group(bits, rng).modulus_N
        return {
            "modulus_n": modulus_n,
            "t_min": int(section.get("t_min", 1 << 10)),
            "t_max": int(section.get("t_max", 1 << 12)),
            "instances": int(section.get("instances", 4)),
        }
    if kind == "residency":
        return section
    raise ValueError(f"unknown kind {kind!r}")


def _parse_address(text: str) -> tuple[str, int]:
    host, _, port = str(text).rpartition(":")
    if not port.isdigit():
        raise ValueError(f"bad worker address {text!r}")
    return (host or "127.0.0.1", int(port))


def run_challenger(config: dict, out_path: str | None = None) -> SessionReport:
    """Drive one measurement session against a (remote) worker.

    Raises TransportError when no worker answers and InconclusiveError
    when a session yields no verdict; both map to exit code 2 at the
    CLI.  Accept/Reject land in the returned report.
    """
    kind = str(config.get("kind", "pow"))
    if kind not in MODES:
        raise ValueError(f"unknown kind {kind!r}")
    seed = int(config.get("seed", 0))
    rng = random.Random(seed)
    remote = RemoteWorker(_parse_address(config.get("worker", "127.0.0.1:9333")))
    try:
        report = _run_session(remote, kind, config, rng)
    finally:
        remote.close()
    if out_path:
        write_report(report, out_path)
    return report


def _run_session(
    worker, kind: str, config: dict, rng: random.Random
) -> SessionReport:
    session_id = new_session_id(rng)
    rows: list[dict] = []
    if kind == "residency":
        section = dict(config.get("residency", {}))
        model = bandwidth_model_from_dict(config.get("bandwidth", {}))
        worker.session_id = session_id
        res_report = run_residency_session(
            worker,
            rounds=int(section.get("rounds", config.get("rounds", 10))),
            t_max_s=float(section.get("t_max_s", 1.0)),
            dataset_bytes=int(section.get("dataset_mib", 64)) << 20,
            block_size_bytes=int(section.get("block_kib", 1024)) << 10,
            model=model,
            threshold_ns=(
                None
                if section.get("threshold_ns") is None
                else _coerce_int("threshold_ns", section.get("threshold_ns"))
            ),
            argon_memory_kib=int(section.get("argon_memory_kib", 1024)),
            rng=rng,
            sink=rows.append,
        )
        decision = _residency_decision(res_report)
        return SessionReport(
            session_id=session_id.hex(),
            kind=kind,
            rows=rows,
            decision=decision,
            config=_config_snapshot(config),
        )
    params = _mode_params(kind, config, rng)
    if hasattr(worker, "pre_challenge"):
        worker.pre_challenge(
            {"session_id": session_id, "kind": kind, "params": params}
        )
    if hasattr(worker, "session_id"):
        worker.session_id = session_id
    driver = SessionDriver(
        worker=worker, mode=kind, params=params, rng=rng, session_id=session_id
    )
    decision = continuous_measurement(
        driver,
        n=int(config.get("rounds", 20)),
        lambda_min=float(config.get("lambda_min", 1.0)),
        interval_s=float(config.get("interval_s", 0.0)),
        t0_s=float(config.get("t0_ns", 0)) * 1e-9,
        kind=kind,
        sink=rows.append,
    )
    return SessionReport(
        session_id=session_id.hex(),
        kind=kind,
        rows=rows,
        decision=decision,
        config=_config_snapshot(config),
    )


def _residency_decision(res_report: ResidencySessionReport) -> Decision:
    flagged = res_report.cold_count + res_report.invalid_count
    verdict = Verdict.ACCEPT if res_report.overall_pass else Verdict.REJECT
    return Decision(
        verdict=verdict,
        statistic=float(flagged),
        threshold=0.0,
        samples_used=len(res_report.rows),
        invalid_count=res_report.invalid_count,
    )


def run_local_session(
    kind: str,
    profile: WorkerProfile,
    config: dict,
    seed: int = 0,
    model: BandwidthModel | None = None,
) -> SessionReport:
    """Virtual-clock session against an in-process worker.

    Same decision path as the TCP flow, minus sockets: thousands of
    sessions per minute, identical verdict semantics.
    """
    rng = random.Random(seed)
    worker = SimWorker(profile, seed=rng.randrange(1 << 62), model=model)
    return _run_session(worker, kind, config, rng)


def _config_snapshot(config: dict) -> dict:
    flat = {}
    for key, value in sorted(config.items()):
        if isinstance(value, dict):
            for sub, subval in sorted(value.items()):
                flat[f"{key}.{sub}"] = subval
        else:
            flat[key] = value
    return {k: v for k, v in flat.items() if isinstance(v, (int, float, str, bool))}


# --- config plumbing ---------------------------------------------------------


def load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        loaded = yaml.safe_load(fh)
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ValueError("config must be a key-value document")
    return loaded


def _coerce_float(field: str, value) -> float:
    # YAML 1.1 floats need a signed exponent, so "2.0e6" arrives as a
    # string; accept anything float() does rather than crash later.
    if isinstance(value, bool):
        raise ValueError(f"{field}: expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{field}: expected a number, got {value!r}") from None


def _coerce_int(field: str, value) -> int:
    parsed = _coerce_float(field, value)
    if parsed != int(parsed):
        raise ValueError(f"{field}: expected an integer, got {value!r}")
    return int(parsed)


_PROFILE_FLOAT_FIELDS = frozenset(
    {
        "hash_rate_r",
        "contention_factor",
        "tensor_contention",
        "memory_contention",
        "squaring_rate",
        "jitter_rel",
    }
)
_PROFILE_INT_FIELDS = frozenset(
    {"threads_M", "network_t0_ns", "outsourced_extra_ns", "vdf_capacity"}
)
_PROFILE_STR_FIELDS = frozenset({"residency_state", "behavior"})


def profile_from_dict(raw: dict) -> WorkerProfile:
    known = _PROFILE_FLOAT_FIELDS | _PROFILE_INT_FIELDS | _PROFILE_STR_FIELDS | {
        "evict_after_round"
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown profile fields: {sorted(unknown)}")
    clean = {}
    for key, value in raw.items():
        if key in _PROFILE_STR_FIELDS:
            clean[key] = str(value)
        elif key == "evict_after_round":
            clean[key] = None if value is None else _coerce_int(key, value)
        elif key in _PROFILE_INT_FIELDS:
            clean[key] = _coerce_int(key, value)
        else:
            clean[key] = _coerce_float(key, value)
    return WorkerProfile(**clean)


def bandwidth_model_from_dict(raw: dict) -> BandwidthModel:
    if not raw:
        return BandwidthModel()
    return BandwidthModel(
        hbm_bw=_coerce_float("hbm_bw", raw.get("hbm_bw", 100e9)),
        pci_bw=_coerce_float("pci_bw", raw.get("pci_bw", 10e9)),
        base_latency_ns=_coerce_int(
            "base_latency_ns", raw.get("base_latency_ns", 50_000)
        ),
    )
