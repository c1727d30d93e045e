"""Command-line entry points: challenger, worker, scenario.

Exit codes follow the measurement semantics rather than Unix habit:
0 = Accept, 1 = Reject, 2 = anything that prevented a verdict (bad
config, unreachable worker, inconclusive session).
"""

from __future__ import annotations

import argparse
import sys

from .netcli import (
    TransportError,
    load_config,
    profile_from_dict,
    run_challenger,
    run_worker,
)
from .protocol import MODES, ProtocolError
from .scenarios import ScenarioError, run_scenario_file
from .stattests import InconclusiveError

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_ERROR = 2


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def challenger_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="challenger",
        description="Issue challenges to a worker and judge the timing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="drive one measurement session")
    run_p.add_argument("--mode", choices=MODES, required=True)
    run_p.add_argument("--config", required=True, help="session config (YAML)")
    run_p.add_argument("--out", required=True, help="CSV report path")
    run_p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except (OSError, ValueError) as exc:
        return _fail(f"config: {exc}")
    config["kind"] = args.mode
    if args.seed is not None:
        config["seed"] = args.seed
    try:
        report = run_challenger(config, out_path=args.out)
    except (TransportError, ProtocolError, InconclusiveError, ValueError) as exc:
        return _fail(str(exc))
    print(report.verdict_line())
    return report.exit_code


def worker_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="worker",
        description="Serve challenge responses, latency-shaped by a profile.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve_p = sub.add_parser("serve", help="listen for challenger sessions")
    serve_p.add_argument("--listen", default="127.0.0.1:9333")
    serve_p.add_argument("--profile", required=True, help="worker profile (YAML)")
    serve_p.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        doc = load_config(args.profile)
    except (OSError, ValueError) as exc:
        return _fail(f"profile: {exc}")
    if "profile" not in doc:
        doc = {"profile": doc}
    doc["listen"] = args.listen
    doc["seed"] = args.seed
    try:
        profile_from_dict(doc["profile"])
    except ValueError as exc:
        return _fail(f"profile: {exc}")
    print(f"worker: serving on {args.listen}", file=sys.stderr)
    try:
        run_worker(doc)
    except KeyboardInterrupt:
        return 0
    except (OSError, ValueError) as exc:
        return _fail(str(exc))
    return 0


def scenario_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="scenario",
        description="Run named distribution experiments to CSV.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="execute a scenario file")
    run_p.add_argument("--file", required=True, help="scenario list (YAML)")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        summaries = run_scenario_file(args.file, args.out, seed=args.seed)
    except (OSError, ScenarioError, ValueError) as exc:
        return _fail(str(exc))
    for s in summaries:
        flags = {k: v for k, v in s.items() if k.startswith("flag_")}
        status = "ok" if all(flags.values()) else "FLAG-FAIL"
        print(f"{s['scenario']}: rows={s['rows']} {status}")
    print(f"summary: {args.out}/summary.csv")
    return 0


_DISPATCH = {
    "challenger": challenger_main,
    "worker": worker_main,
    "scenario": scenario_main,
}


def main(argv: list[str] | None = None) -> int:
    """Single-module dispatcher: ``python -m gputelem.cli <tool> ...``."""
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] not in _DISPATCH:
        names = ", ".join(_DISPATCH)
        print(f"usage: gputelem.cli {{{names}}} ...", file=sys.stderr)
        return EXIT_ERROR
    return _DISPATCH[argv[0]](argv[1:])


if __name__ == "__main__":
    sys.exit(main())
