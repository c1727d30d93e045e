"""Transport, daemon, and report tests.

TCP tests run against a daemon on a loopback ephemeral port with
latency shaping mostly off, so the suite exercises real sockets without
real waiting. Byte-determinism of reports is checked on virtual-clock
sessions, the only place it is promised.
"""

import json
import socket
import threading

import pytest
import yaml

from gputelem import netcli
from gputelem.protocol import ProtocolError, build_challenge
from gputelem.stattests import Decision, Verdict
from gputelem.wire import (
    MSG_CHALLENGE_BATCH,
    MSG_ERROR,
    MSG_PRE_CHALLENGE,
    MSG_PRE_RESPONSE,
    MSG_RESPONSE_BATCH,
    WireMessage,
    decode_record,
    encode_record,
)
from gputelem.worksim import WorkerProfile

import random


# --- framed socket I/O -----------------------------------------------------------


def test_send_recv_frame_over_socketpair():
    a, b = socket.socketpair()
    try:
        msg = WireMessage(MSG_PRE_CHALLENGE, encode_record({"kind": "pow"}))
        netcli.send_frame(a, msg)
        assert netcli.recv_frame(b) == msg
    finally:
        a.close()
        b.close()


def test_recv_frame_connection_closed():
    a, b = socket.socketpair()
    a.close()
    try:
        with pytest.raises(netcli.TransportError):
            netcli.recv_frame(b)
    finally:
        b.close()


def test_recv_frame_truncated_payload():
    a, b = socket.socketpair()
    try:
        # header promises 100 bytes; send 3 and hang up
        a.sendall(b"\x01\x01\x00\x00\x00\x64abc")
        a.close()
        with pytest.raises(netcli.TransportError):
            netcli.recv_frame(b)
    finally:
        b.close()


def test_recv_frame_oversize_announcement():
    a, b = socket.socketpair()
    try:
        a.sendall(b"\x01\x01" + ((256 << 20) + 1).to_bytes(4, "big"))
        with pytest.raises(netcli.TransportError):
            netcli.recv_frame(b)
    finally:
        a.close()
        b.close()


def test_recv_frame_wraps_decode_errors():
    a, b = socket.socketpair()
    try:
        a.sendall(b"\x02\x01\x00\x00\x00\x00")  # bad version, valid shape
        with pytest.raises(netcli.TransportError):
            netcli.recv_frame(b)
    finally:
        a.close()
        b.close()


# --- reports -----------------------------------------------------------------------


def test_csv_cell_formatting():
    assert netcli._csv_cell(True) == "1"
    assert netcli._csv_cell(False) == "0"
    assert netcli._csv_cell(0.123456789123) == "0.123456789"
    assert netcli._csv_cell(7) == "7"
    assert netcli._csv_cell("x") == "x"


def test_rows_to_csv_follows_header_order():
    rows = [{"b": 2, "a": 1}, {"a": 3}]
    got = netcli.rows_to_csv(rows, ("a", "b"))
    assert got == "a,b\n1,2\n3,\n"


def test_session_report_exit_codes():
    accept = Decision(Verdict.ACCEPT, 0.1, 0.5, 10, 0)
    reject = Decision(Verdict.REJECT, 0.9, 0.5, 10, 1)
    assert netcli.SessionReport("s", "pow", decision=accept).exit_code == 0
    assert netcli.SessionReport("s", "pow", decision=reject).exit_code == 1
    assert netcli.SessionReport("s", "pow", decision=None).exit_code == 2
    line = netcli.SessionReport("s", "pow", decision=accept).verdict_line()
    assert "Accept" in line and "rounds=10" in line
    assert "inconclusive" in netcli.SessionReport("s", "pow").verdict_line()


def test_write_report_emits_csv_and_json(tmp_path):
    report = netcli.SessionReport(
        session_id="abcd",
        kind="pow",
        rows=[
            {
                "session_id": "abcd",
                "round": 0,
                "kind": "pow",
                "total_time_ns": 1200,
                "adjusted_ns": 1100,
                "valid": True,
            }
        ],
        decision=Decision(Verdict.ACCEPT, 0.1, 0.5, 1, 0),
        config={"rounds": 1},
    )
    out = tmp_path / "session.csv"
    netcli.write_report(report, str(out))
    csv_text = out.read_text()
    assert csv_text.splitlines()[0] == ",".join(netcli.ROUND_HEADERS["pow"])
    assert csv_text.splitlines()[1] == "abcd,0,pow,1200,1100,1"
    summary = json.loads((tmp_path / "session.csv.json").read_text())
    assert summary["decision"]["verdict"] == "Accept"
    assert summary["rounds"] == 1
    assert summary["config"] == {"rounds": 1}


# --- config plumbing -----------------------------------------------------------------


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("kind: pow\nrounds: 5\npow:\n  difficulty: 3\n")
    config = netcli.load_config(str(path))
    assert config == {"kind": "pow", "rounds": 5, "pow": {"difficulty": 3}}
    (tmp_path / "empty.yaml").write_text("")
    assert netcli.load_config(str(tmp_path / "empty.yaml")) == {}
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ValueError):
        netcli.load_config(str(tmp_path / "list.yaml"))


def test_profile_from_dict_rejects_unknown_fields():
    profile = netcli.profile_from_dict({"hash_rate_r": 99.0, "behavior": "outsourced"})
    assert profile.hash_rate_r == 99.0
    assert netcli.profile_from_dict({}) == WorkerProfile()
    with pytest.raises(ValueError):
        netcli.profile_from_dict({"hash_rate": 99.0})  # typo must not pass silently


def test_profile_from_dict_coerces_yaml_number_strings():
    # YAML 1.1 floats need a signed exponent: safe_load("2.0e6") gives
    # the string "2.0e6", which must still land as a float.
    loaded = yaml.safe_load("squaring_rate: 2.0e6\nthreads_M: '4'\n")
    assert loaded["squaring_rate"] == "2.0e6"
    profile = netcli.profile_from_dict(loaded)
    assert profile.squaring_rate == 2_000_000.0
    assert profile.threads_M == 4
    assert netcli.profile_from_dict({"evict_after_round": None}) == WorkerProfile()


def test_profile_from_dict_rejects_garbage_values():
    with pytest.raises(ValueError, match="jitter_rel"):
        netcli.profile_from_dict({"jitter_rel": "fast"})
    with pytest.raises(ValueError, match="threads_M"):
        netcli.profile_from_dict({"threads_M": 2.5})  # counts must be whole
    with pytest.raises(ValueError, match="hash_rate_r"):
        netcli.profile_from_dict({"hash_rate_r": True})


def test_bandwidth_model_from_dict():
    assert netcli.bandwidth_model_from_dict({}).hbm_bw == 100e9
    model = netcli.bandwidth_model_from_dict({"pci_bw": 5e9, "base_latency_ns": 100})
    assert model.pci_bw == 5e9 and model.base_latency_ns == 100
    wart = netcli.bandwidth_model_from_dict({"hbm_bw": "100e9", "base_latency_ns": "5e4"})
    assert wart.hbm_bw == 100e9 and wart.base_latency_ns == 50_000
    with pytest.raises(ValueError, match="pci_bw"):
        netcli.bandwidth_model_from_dict({"pci_bw": "wide"})


def test_parse_address():
    assert netcli._parse_address("10.0.0.1:9000") == ("10.0.0.1", 9000)
    assert netcli._parse_address(":8000") == ("127.0.0.1", 8000)
    with pytest.raises(ValueError):
        netcli._parse_address("no-port")


# --- daemon over TCP ------------------------------------------------------------------


@pytest.fixture(scope="module")
def daemon():
    handle = netcli.serve_worker_background(
        WorkerProfile(hash_rate_r=4096.0, squaring_rate=1e6),
        seed=70,
        shape_latency=False,
    )
    yield handle
    handle.close()


def test_remote_worker_pow_round_trip(daemon):
    remote = netcli.RemoteWorker(daemon.address)
    try:
        ack = remote.pre_challenge({"session_id": b"\x11" * 32, "kind": "pow"})
        assert ack["status"] == "ok"
        challenge = build_challenge(
            b"\x11" * 32,
            0,
            "pow",
            random.Random(1),
            remote.now(),
            {"difficulty": 2, "argon_memory_kib": 8},
        )
        response = remote.answer(challenge)
        assert response.matches(challenge)
        assert "nonce" in response.payload
    finally:
        remote.close()


def test_daemon_error_reply_keeps_connection_alive(daemon):
    sock = socket.create_connection(daemon.address, timeout=10)
    try:
        # structurally valid frame, nonsense record: daemon must answer
        # an Error frame and keep serving on the same connection
        netcli.send_frame(
            sock, WireMessage(MSG_PRE_CHALLENGE, encode_record({"kind": "quantum"}))
        )
        reply = netcli.recv_frame(sock)
        assert reply.msg_type == MSG_ERROR
        assert "quantum" in decode_record(reply.payload)["detail"]
        # missing fields: also an error, also non-fatal
        netcli.send_frame(sock, WireMessage(MSG_CHALLENGE_BATCH, encode_record({})))
        assert netcli.recv_frame(sock).msg_type == MSG_ERROR
        # and the session still works afterwards
        netcli.send_frame(
            sock,
            WireMessage(
                MSG_PRE_CHALLENGE,
                encode_record({"session_id": b"\x22" * 32, "kind": "pow"}),
            ),
        )
        assert netcli.recv_frame(sock).msg_type == MSG_PRE_RESPONSE
    finally:
        sock.close()


def test_daemon_closes_connection_on_undecodable_stream(daemon):
    sock = socket.create_connection(daemon.address, timeout=10)
    try:
        sock.sendall(b"\x02\x01\x00\x00\x00\x00")  # wrong version: stream is untrusted
        assert sock.recv(1) == b""  # server hangs up
    finally:
        sock.close()


def test_remote_worker_error_reply_raises_protocol_error(daemon):
    remote = netcli.RemoteWorker(daemon.address)
    try:
        with pytest.raises(ProtocolError):
            remote.pre_challenge({"session_id": b"\x33" * 32, "kind": "quantum"})
    finally:
        remote.close()


def test_run_challenger_pow_accepts_over_tcp(daemon, tmp_path):
    config = {
        "kind": "pow",
        "seed": 5,
        "worker": "%s:%d" % daemon.address,
        "rounds": 6,
        "lambda_min": 5.0,
        "pow": {"difficulty": 2, "argon_memory_kib": 8},
    }
    out = tmp_path / "pow.csv"
    report = netcli.run_challenger(config, out_path=str(out))
    assert report.decision.verdict is Verdict.ACCEPT
    assert report.exit_code == 0
    assert len(report.rows) == 6
    lines = out.read_text().splitlines()
    assert len(lines) == 7  # header + 6 rounds
    summary = json.loads((tmp_path / "pow.csv.json").read_text())
    assert summary["decision"]["verdict"] == "Accept"


def test_run_challenger_gemm_over_tcp(daemon):
    config = {
        "kind": "gemm",
        "seed": 6,
        "worker": "%s:%d" % daemon.address,
        "rounds": 4,
        "lambda_min": 5.0,
        "gemm": {"dimension_n": 8, "difficulty_d": 2, "freivalds_k": 3},
    }
    report = netcli.run_challenger(config)
    assert report.decision.verdict is Verdict.ACCEPT
    assert all(row["valid"] for row in report.rows)


def test_run_challenger_residency_over_tcp(daemon):
    config = {
        "kind": "residency",
        "seed": 7,
        "worker": "%s:%d" % daemon.address,
        "residency": {
            "rounds": 3,
            "t_max_s": 0.01,
            "dataset_mib": 1,
            "block_kib": 256,
            "argon_memory_kib": 8,
            # unshaped replies arrive in microseconds; classify against
            # a generous bound so the round validity is what is tested
            "threshold_ns": 2_000_000_000,
        },
    }
    report = netcli.run_challenger(config)
    assert report.decision.verdict is Verdict.ACCEPT
    assert all(row["valid"] for row in report.rows)
    assert len(report.rows) == 3


def test_run_challenger_no_worker_raises_transport_error():
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        dead_port = probe.getsockname()[1]
    config = {"kind": "pow", "worker": f"127.0.0.1:{dead_port}", "rounds": 1}
    with pytest.raises(netcli.TransportError):
        netcli.run_challenger(config)


def test_run_challenger_rejects_unknown_kind():
    with pytest.raises(ValueError):
        netcli.run_challenger({"kind": "quantum"})


def test_shaped_latency_reject_over_tcp(tmp_path):
    """A slow worker with shaped wall latency earns a Reject verdict."""
    handle = netcli.serve_worker_background(
        WorkerProfile(hash_rate_r=32.0), seed=71, shape_latency=True
    )
    try:
        config = {
            "kind": "pow",
            "seed": 9,
            "worker": "%s:%d" % handle.address,
            "rounds": 6,
            "lambda_min": 40.0,
            "pow": {"difficulty": 2, "argon_memory_kib": 8},
        }
        report = netcli.run_challenger(config)
        assert report.decision.verdict is Verdict.REJECT
        assert report.exit_code == 1
    finally:
        handle.close()


# --- local sessions --------------------------------------------------------------------


def test_run_local_session_accept_and_reject():
    config = {
        "rounds": 12,
        "lambda_min": 2.0,
        "pow": {"difficulty": 4, "argon_memory_kib": 8},
    }
    fast = netcli.run_local_session(
        "pow", WorkerProfile(hash_rate_r=128.0), config, seed=1
    )
    slow = netcli.run_local_session(
        "pow", WorkerProfile(hash_rate_r=8.0), config, seed=1
    )
    assert fast.decision.verdict is Verdict.ACCEPT
    assert slow.decision.verdict is Verdict.REJECT
    assert fast.rows[0]["kind"] == "pow"
    assert set(netcli.ROUND_HEADERS["pow"]) <= set(fast.rows[0])


def test_run_local_session_residency_report_shape():
    config = {
        "residency": {
            "rounds": 4,
            "t_max_s": 1.0,
            "dataset_mib": 1,
            "block_kib": 256,
            "argon_memory_kib": 8,
        }
    }
    report = netcli.run_local_session("residency", WorkerProfile(), config, seed=2)
    assert report.kind == "residency"
    assert report.decision.verdict is Verdict.ACCEPT
    assert report.decision.statistic == 0.0
    assert len(report.rows) == 4
    assert set(netcli.ROUND_HEADERS["residency"]) == set(report.rows[0])


def test_run_local_session_residency_flags_eviction():
    config = {
        "residency": {
            "rounds": 6,
            "t_max_s": 1.0,
            "dataset_mib": 1,
            "block_kib": 256,
            "argon_memory_kib": 8,
        }
    }
    profile = WorkerProfile(residency_state="evict_after", evict_after_round=3)
    report = netcli.run_local_session("residency", profile, config, seed=3)
    assert report.decision.verdict is Verdict.REJECT
    verdicts = [row["verdict"] for row in report.rows]
    assert verdicts == ["Hot"] * 3 + ["Cold"] * 3


def test_local_session_reports_are_byte_deterministic(tmp_path):
    config = {
        "rounds": 8,
        "lambda_min": 2.0,
        "seed": 4,
        "pow": {"difficulty": 4, "argon_memory_kib": 8},
    }
    outs = []
    for name in ("a", "b"):
        report = netcli.run_local_session(
            "pow", WorkerProfile(hash_rate_r=128.0), config, seed=4
        )
        out = tmp_path / f"{name}.csv"
        netcli.write_report(report, str(out))
        outs.append(
            (out.read_bytes(), (tmp_path / f"{name}.csv.json").read_bytes())
        )
    assert outs[0] == outs[1]
