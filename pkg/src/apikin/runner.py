"""Bridge to execution runners over a line-delimited JSON wire protocol.

One session talks to one runner process over its stdin/stdout, one request in
flight at a time. On startup the runner writes a single hello line:

    {"hello": {"protocol_version": 1, "capabilities": [...], "dialect": "..."}}

Each request line is {"case_id", "source", "recipes", "timeout_s"} where
recipes maps a slot name to {"metric", "repetitions", "warmup_runs",
"source"}. The terminal response line is {"case_id", "status",
"exception": {"type", "message"}?, "flags": [...],
"measurements": {slot: {"metric", "samples"}}, "wall_time_s"}.

Session death without a terminal response maps to status=crashed; a deadline
expiry kills the runner and maps to status=timeout. Either way the session
restarts itself for the next case.
"""

from __future__ import annotations

import json
import logging
import os
import re
import select
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .corpus import ParseError
from .evaluator import (
    ExecutionResult,
    MeasurementSample,
    STATUS_COMPLETED,
    STATUS_CRASHED,
    STATUS_RAISED,
    STATUS_TIMEOUT,
    STATUSES,
    normalize_exception,
)
from .generator import PerformanceOracle, SynthesizedCase, render_recipe_body

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 60.0

_FINGERPRINT_RE = re.compile(r"^# fingerprint: ([^#\s]+)#([0-9a-f]+)$", re.MULTILINE)


class ProtocolError(Exception):
    """The runner sent something outside the wire contract."""


class VersionMismatch(Exception):
    """The runner advertises an incompatible protocol version."""


class RunnerDead(Exception):
    """The runner session could not be started or restarted."""


@dataclass(frozen=True)
class Capabilities:
    protocol_version: int
    capabilities: frozenset[str]
    dialect: str


@dataclass
class RunnerRequest:
    case_id: str
    source: str
    recipes: dict[str, dict[str, Any]] = field(default_factory=dict)
    timeout_s: float = DEFAULT_TIMEOUT_S


def request_for_case(case: SynthesizedCase, timeout_s: float = DEFAULT_TIMEOUT_S) -> RunnerRequest:
    """Build the wire request for a rendered synthesized case."""
    recipes: dict[str, dict[str, Any]] = {}
    if isinstance(case.oracle, PerformanceOracle):
        for slot, recipe in (("baseline", case.oracle.baseline), ("subject", case.oracle.subject)):
            recipes[slot] = {
                "metric": recipe.metric,
                "repetitions": recipe.repetitions,
                "warmup_runs": recipe.warmup_runs,
                "source": render_recipe_body(recipe),
            }
    return RunnerRequest(case.case_id, case.rendered, recipes, timeout_s)


def encode_request(request: RunnerRequest) -> dict[str, Any]:
    return {
        "case_id": request.case_id,
        "source": request.source,
        "recipes": request.recipes,
        "timeout_s": request.timeout_s,
    }


def decode_request(obj: dict[str, Any]) -> RunnerRequest:
    if not isinstance(obj, dict) or "case_id" not in obj or "source" not in obj:
        raise ProtocolError("request must carry case_id and source")
    return RunnerRequest(
        case_id=str(obj["case_id"]),
        source=str(obj["source"]),
        recipes=dict(obj.get("recipes", {})),
        timeout_s=float(obj.get("timeout_s", DEFAULT_TIMEOUT_S)),
    )


def response_to_result(
    obj: dict[str, Any],
    request: RunnerRequest,
    api_names: Iterable[str] = (),
    runner_id: str = "",
) -> ExecutionResult:
    """Validate a terminal response and convert it, normalizing the exception."""
    if not isinstance(obj, dict):
        raise ProtocolError("response must be a JSON object")
    if obj.get("case_id") != request.case_id:
        raise ProtocolError(
            f"response case_id {obj.get('case_id')!r} does not match request {request.case_id!r}"
        )
    status = obj.get("status")
    if status not in STATUSES:
        raise ProtocolError(f"unknown status {status!r}")
    exception = None
    if status == STATUS_RAISED:
        exc = obj.get("exception")
        if not isinstance(exc, dict) or "type" not in exc:
            raise ProtocolError("raised responses must carry exception {type, message}")
        exception = normalize_exception(str(exc["type"]), str(exc.get("message", "")), api_names)
    flags = obj.get("flags", [])
    if not isinstance(flags, list) or not all(isinstance(f, str) for f in flags):
        raise ProtocolError("flags must be a list of strings")
    raw_measurements = obj.get("measurements", {})
    if not isinstance(raw_measurements, dict):
        raise ProtocolError("measurements must be an object")
    measurements: dict[str, MeasurementSample] = {}
    for slot, sample in raw_measurements.items():
        if not isinstance(sample, dict) or "metric" not in sample or "samples" not in sample:
            raise ProtocolError(f"measurement {slot!r} must carry metric and samples")
        samples = sample["samples"]
        if not isinstance(samples, list) or not samples:
            raise ProtocolError(f"measurement {slot!r} needs a non-empty samples list")
        declared = request.recipes.get(slot)
        if declared is not None and len(samples) != int(declared.get("repetitions", len(samples))):
            raise ProtocolError(
                f"measurement {slot!r} has {len(samples)} samples, "
                f"expected {declared.get('repetitions')}"
            )
        measurements[slot] = MeasurementSample(
            metric=str(sample["metric"]), samples=tuple(float(s) for s in samples)
        )
    if status == STATUS_COMPLETED:
        for slot in request.recipes:
            if slot not in measurements:
                raise ProtocolError(f"completed response lacks declared measurement slot {slot!r}")
    return ExecutionResult(
        case_id=request.case_id,
        status=str(status),
        exception=exception,
        flags=frozenset(flags),
        measurements=measurements,
        runner_id=runner_id,
        wall_time_s=float(obj.get("wall_time_s", 0.0)),
    )


def _crashed_result(request: RunnerRequest, runner_id: str) -> ExecutionResult:
    return ExecutionResult(request.case_id, STATUS_CRASHED, runner_id=runner_id)


def _timeout_result(request: RunnerRequest, runner_id: str) -> ExecutionResult:
    return ExecutionResult(
        request.case_id, STATUS_TIMEOUT, runner_id=runner_id, wall_time_s=request.timeout_s
    )


# ---------------------------------------------------------------------------
# hello


def decode_hello(line: str) -> Capabilities:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid hello line: {exc}") from exc
    hello = obj.get("hello") if isinstance(obj, dict) else None
    if not isinstance(hello, dict) or "protocol_version" not in hello:
        raise ProtocolError("hello must be {'hello': {'protocol_version': ...}}")
    version = int(hello["protocol_version"])
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(f"runner speaks protocol {version}, host speaks {PROTOCOL_VERSION}")
    caps = hello.get("capabilities", [])
    return Capabilities(
        protocol_version=version,
        capabilities=frozenset(str(c) for c in caps),
        dialect=str(hello.get("dialect", "")),
    )


def encode_hello(capabilities: Sequence[str], dialect: str) -> str:
    return json.dumps(
        {
            "hello": {
                "protocol_version": PROTOCOL_VERSION,
                "capabilities": list(capabilities),
                "dialect": dialect,
            }
        },
        sort_keys=True,
    )


# ---------------------------------------------------------------------------
# subprocess session


class _LineReader:
    """Deadline-aware line reader over a raw pipe."""

    def __init__(self, fd: int) -> None:
        self.fd = fd
        self.buffer = b""

    def readline(self, deadline: Optional[float]) -> Optional[bytes]:
        """One line without the newline; None on timeout; b"" alone means EOF."""
        while b"\n" not in self.buffer:
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                ready, _, _ = select.select([self.fd], [], [], remaining)
                if not ready:
                    return None
            chunk = os.read(self.fd, 65536)
            if not chunk:
                if self.buffer:
                    line, self.buffer = self.buffer, b""
                    return line
                return b""
            self.buffer += chunk
        line, self.buffer = self.buffer.split(b"\n", 1)
        return line


class SubprocessRunnerSession:
    """Owns one runner subprocess; restarts it after crashes and timeouts."""

    def __init__(
        self,
        cmd: Sequence[str],
        api_names: Iterable[str] = (),
        handshake_timeout_s: float = 30.0,
    ) -> None:
        self.cmd = list(cmd)
        self.api_names = tuple(api_names)
        self.handshake_timeout_s = handshake_timeout_s
        self.proc: Optional[subprocess.Popen] = None
        self.reader: Optional[_LineReader] = None
        self.capabilities: Optional[Capabilities] = None
        self.restarts = 0

    @property
    def runner_id(self) -> str:
        pid = self.proc.pid if self.proc else "down"
        return f"proc:{pid}"

    def _start(self) -> None:
        try:
            self.proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise RunnerDead(f"cannot start runner {self.cmd!r}: {exc}") from exc
        assert self.proc.stdout is not None
        self.reader = _LineReader(self.proc.stdout.fileno())
        line = self.reader.readline(time.monotonic() + self.handshake_timeout_s)
        if not line:
            self._kill()
            raise RunnerDead("runner did not send a hello line")
        self.capabilities = decode_hello(line.decode("utf-8", "replace"))

    def _ensure_started(self) -> None:
        if self.proc is None or self.proc.poll() is not None:
            if self.proc is not None:
                self.restarts += 1
            self._start()

    def _kill(self) -> None:
        if self.proc is not None:
            try:
                self.proc.kill()
                self.proc.wait(timeout=10)
            except OSError:
                pass
        self.proc = None
        self.reader = None

    def run_case(self, request: RunnerRequest) -> ExecutionResult:
        """Send one request and wait for its terminal response.

        Timeout kills the runner and yields status=timeout; losing the session
        mid-case yields status=crashed. The session restarts lazily.
        """
        self._ensure_started()
        assert self.proc is not None and self.proc.stdin is not None and self.reader is not None
        runner_id = self.runner_id
        payload = json.dumps(encode_request(request), sort_keys=True) + "\n"
        try:
            self.proc.stdin.write(payload.encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._kill()
            return _crashed_result(request, runner_id)
        line = self.reader.readline(time.monotonic() + request.timeout_s)
        if line is None:
            self._kill()
            return _timeout_result(request, runner_id)
        if line == b"":
            self._kill()
            return _crashed_result(request, runner_id)
        try:
            obj = json.loads(line.decode("utf-8", "replace"))
        except json.JSONDecodeError as exc:
            self._kill()
            raise ProtocolError(f"malformed response line: {exc}") from exc
        return response_to_result(obj, request, self.api_names, runner_id)

    def close(self) -> None:
        if self.proc is not None and self.proc.stdin is not None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
        self._kill()


# ---------------------------------------------------------------------------
# scripted mock session


@dataclass
class MockEntry:
    behavior: str = "respond"  # respond | sleep | die
    sleep_s: float = 0.0
    response: dict[str, Any] = field(default_factory=dict)


@dataclass
class MockScript:
    """Scripted responses keyed by case fingerprint (API plus argument digest).

    Entries with a null digest match any call to that API; exact entries win.
    """

    entries: dict[tuple[str, Optional[str]], MockEntry] = field(default_factory=dict)
    default: Optional[MockEntry] = None

    def lookup(self, api: str, digest: str) -> Optional[MockEntry]:
        entry = self.entries.get((api, digest))
        if entry is None:
            entry = self.entries.get((api, None))
        if entry is None:
            entry = self.default
        return entry


def load_mock_script(path: Path | str) -> MockScript:
    from .records import read_records

    script = MockScript()
    for fname, lineno, rec in read_records(path):
        kind = rec.get("kind")
        entry = MockEntry(
            behavior=str(rec.get("behavior", "respond")),
            sleep_s=float(rec.get("sleep_s", 0.0)),
            response=dict(rec.get("response", {})),
        )
        if kind == "mock_response":
            api = rec.get("api")
            if not api:
                raise ParseError(f"{fname}:{lineno}: mock_response needs an api")
            key = (str(api), rec.get("digest"))
            if key in script.entries:
                raise ParseError(f"{fname}:{lineno}: duplicate mock fingerprint {key!r}")
            script.entries[key] = entry
        elif kind == "mock_default":
            if script.default is not None:
                raise ParseError(f"{fname}:{lineno}: more than one mock_default")
            script.default = entry
        else:
            raise ParseError(f"{fname}:{lineno}: unknown mock record kind {kind!r}")
    return script


def fingerprint_of_source(source: str) -> Optional[tuple[str, str]]:
    m = _FINGERPRINT_RE.search(source)
    if not m:
        return None
    return m.group(1), m.group(2)


_COMPLETED_DEFAULT = MockEntry(behavior="respond", response={"status": "completed"})


class MockRunnerSession:
    """Deterministic in-process runner replaying a MockScript.

    Sleep behaviors are simulated against the request deadline instead of
    really sleeping, so scripted timeouts stay fast and reproducible. A die
    behavior models the session vanishing mid-case: the case reports crashed
    and the next case sees a fresh session.
    """

    def __init__(self, script: MockScript, api_names: Iterable[str] = ()) -> None:
        self.script = script
        self.api_names = tuple(api_names)
        self.restarts = 0
        self.cases_run = 0

    @property
    def runner_id(self) -> str:
        return f"mock:{self.restarts}"

    def run_case(self, request: RunnerRequest) -> ExecutionResult:
        self.cases_run += 1
        fp = fingerprint_of_source(request.source)
        entry = None
        if fp is not None:
            entry = self.script.lookup(fp[0], fp[1])
        if entry is None:
            entry = self.script.default or _COMPLETED_DEFAULT
        if entry.behavior == "die":
            self.restarts += 1
            return _crashed_result(request, self.runner_id)
        if entry.behavior == "sleep" and entry.sleep_s >= request.timeout_s:
            self.restarts += 1
            return _timeout_result(request, self.runner_id)
        obj = dict(entry.response)
        obj.setdefault("case_id", request.case_id)
        obj["case_id"] = request.case_id
        return response_to_result(obj, request, self.api_names, self.runner_id)

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# entry points


def run_case(request: RunnerRequest, session: Any) -> ExecutionResult:
    """Run one case on any session object exposing run_case."""
    return session.run_case(request)


def open_session(
    runner_cmd: str, api_names: Iterable[str] = ()
) -> SubprocessRunnerSession | MockRunnerSession:
    """Open a session from a CLI-style runner command.

    "mock:<script-path>" loads the in-process scripted runner; anything else
    is treated as a shell-style command line for a subprocess runner.
    """
    if runner_cmd.startswith("mock:"):
        return MockRunnerSession(load_mock_script(runner_cmd[len("mock:") :]), api_names)
    cmd = shlex.split(runner_cmd)
    if not cmd:
        raise RunnerDead("empty runner command")
    return SubprocessRunnerSession(cmd, api_names)
