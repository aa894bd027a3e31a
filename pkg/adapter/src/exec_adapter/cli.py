"""Command-line entry point: serve the wire protocol, or profile a unit case."""

from __future__ import annotations

import argparse
import importlib
import json
import sys
from typing import Optional, Sequence, TextIO

from .executor import (
    OUTCOME_TIMEOUT,
    make_namespace_factory,
    run_forked,
)
from .profiler import ProfileFailure, profile_api
from .protocol import (
    RequestError,
    STATUS_CRASHED,
    STATUS_TIMEOUT,
    error_line,
    hello_line,
    parse_request,
    response_line,
)
from .sandbox import DEFAULT_ENV_ALLOW, SandboxConfig


def _load_framework(tag: str) -> Optional[str]:
    """Import the framework module; return the root name to bind, if any."""
    if not tag:
        return None
    importlib.import_module(tag)
    return tag.split(".")[0]


def serve(
    sandbox: SandboxConfig,
    framework_tag: str,
    stdin: Optional[TextIO] = None,
    stdout: Optional[TextIO] = None,
) -> int:
    """Answer requests until the host closes stdin. Never dies on a case."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    factory = make_namespace_factory(_load_framework(framework_tag))
    stdout.write(hello_line(dialect=framework_tag or "python") + "\n")
    stdout.flush()
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = parse_request(line)
        except RequestError as err:
            if err.case_id:
                payload = response_line(err.case_id, STATUS_CRASHED, error=str(err))
            else:
                payload = error_line(str(err))
            stdout.write(payload + "\n")
            stdout.flush()
            continue
        result, wall, outcome = run_forked(request, factory, sandbox)
        if outcome == OUTCOME_TIMEOUT:
            payload = response_line(request.case_id, STATUS_TIMEOUT, wall_time_s=wall)
        elif result is None:
            payload = response_line(request.case_id, STATUS_CRASHED, wall_time_s=wall)
        else:
            payload = response_line(
                request.case_id,
                str(result.get("status", STATUS_CRASHED)),
                exception=result.get("exception"),
                flags=tuple(str(f) for f in result.get("flags", [])),
                measurements=result.get("measurements"),
                wall_time_s=wall,
            )
        stdout.write(payload + "\n")
        stdout.flush()
    return 0


def run_profile(framework_tag: str, api_name: str, case_path: str) -> int:
    factory = make_namespace_factory(_load_framework(framework_tag))
    if case_path == "-":
        source = sys.stdin.read()
    else:
        with open(case_path, "r", encoding="utf-8") as handle:
            source = handle.read()
    try:
        record = profile_api(api_name, source, factory())
    except ProfileFailure as exc:
        print(f"profile error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(record, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exec-adapter",
        description="Execute rendered API snippets in isolated child processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve_p = sub.add_parser("serve", help="speak the wire protocol over stdin/stdout")
    serve_p.add_argument("--device", default="cpu", choices=("cpu", "accelerator"))
    serve_p.add_argument("--memory-cap-mb", type=int, default=4096)
    serve_p.add_argument("--framework", default="", help="module to import and pre-bind")
    serve_p.add_argument(
        "--env-allow",
        action="append",
        default=[],
        metavar="NAME",
        help="extra environment variable a child keeps (repeatable)",
    )
    profile_p = sub.add_parser("profile", help="record the call-stack trace of one unit case")
    profile_p.add_argument("--framework", default="", help="module to import and pre-bind")
    profile_p.add_argument("--api", required=True, help="API name the trace is recorded for")
    profile_p.add_argument("--unit-case", required=True, help="path to the case source, - for stdin")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            sandbox = SandboxConfig(
                device=args.device,
                memory_cap_mb=args.memory_cap_mb,
                env_allow=DEFAULT_ENV_ALLOW + tuple(args.env_allow),
            )
            return serve(sandbox, args.framework)
        return run_profile(args.framework, args.api, args.unit_case)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ImportError as exc:
        print(f"configuration error: cannot import framework: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
