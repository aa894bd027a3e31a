"""Case execution in a fresh child process per case.

The child applies the sandbox, executes the rendered source in a clean
namespace, scans whatever the snippet defined for numeric anomalies, runs
each measurement recipe (warmups unreported, then one sample per
repetition), and ships a single JSON result back through a pipe. A child
that dies without shipping a result is classified crashed by the parent; a
child still running at the deadline is killed and classified timeout.
"""

from __future__ import annotations

import builtins
import faulthandler
import json
import math
import os
import select
import signal
import sys
import time
import tracemalloc
from typing import Any, Callable, Optional

from .protocol import (
    METRIC_MEMORY,
    METRIC_TIME,
    Recipe,
    Request,
    STATUS_COMPLETED,
    STATUS_RAISED,
)
from .sandbox import SandboxConfig, apply as apply_sandbox

FLAG_NAN = "nan"
FLAG_INF = "inf"

_SCAN_DEPTH = 8

OUTCOME_OK = "ok"
OUTCOME_CRASHED = "crashed"
OUTCOME_TIMEOUT = "timeout"


def _scan_value(value: Any, flags: set[str], depth: int, seen: set[int]) -> None:
    if depth <= 0:
        return
    if isinstance(value, bool):
        return
    if isinstance(value, float):
        if math.isnan(value):
            flags.add(FLAG_NAN)
        elif math.isinf(value):
            flags.add(FLAG_INF)
        return
    if isinstance(value, complex):
        for part in (value.real, value.imag):
            _scan_value(part, flags, depth, seen)
        return
    if isinstance(value, (str, bytes, int)) or value is None:
        return
    if isinstance(value, dict):
        if id(value) in seen:
            return
        seen.add(id(value))
        for item in value.values():
            _scan_value(item, flags, depth - 1, seen)
        return
    if isinstance(value, (list, tuple, set, frozenset)):
        if id(value) in seen:
            return
        seen.add(id(value))
        for item in value:
            _scan_value(item, flags, depth - 1, seen)


def scan_anomalies(namespace: dict[str, Any], skip_names: frozenset[str]) -> tuple[str, ...]:
    """Numeric anomaly flags over everything the snippet defined."""
    flags: set[str] = set()
    seen: set[int] = set()
    for name, value in namespace.items():
        if name in skip_names or name.startswith("_"):
            continue
        _scan_value(value, flags, _SCAN_DEPTH, seen)
    return tuple(sorted(flags))


def _exception_payload(exc: BaseException) -> dict[str, str]:
    return {"type": type(exc).__name__, "message": str(exc)}


def _measure_once(code: Any, namespace: dict[str, Any], metric: str) -> float:
    if metric == METRIC_TIME:
        start = time.perf_counter()
        exec(code, namespace)
        return time.perf_counter() - start
    if metric == METRIC_MEMORY:
        tracemalloc.start()
        try:
            exec(code, namespace)
            _, peak = tracemalloc.get_traced_memory()
        finally:
            tracemalloc.stop()
        return peak / (1024 * 1024)
    raise ValueError(f"unsupported metric {metric!r}")


def _run_recipe(recipe: Recipe, slot: str, namespace: dict[str, Any]) -> dict[str, Any]:
    code = compile(recipe.source, f"<recipe:{slot}>", "exec")
    for _ in range(recipe.warmup_runs):
        exec(code, namespace)
    samples = [_measure_once(code, namespace, recipe.metric) for _ in range(recipe.repetitions)]
    return {"metric": recipe.metric, "samples": samples}


def run_case_body(request: Request, namespace: dict[str, Any]) -> dict[str, Any]:
    """Execute one case inside the current process and build the result.

    Any exception out of the main source or a recipe body classifies the
    case as raised; the text travels verbatim.
    """
    preseeded = frozenset(namespace)
    try:
        code = compile(request.source, "<case>", "exec")
        exec(code, namespace)
    except BaseException as exc:
        return {"status": STATUS_RAISED, "exception": _exception_payload(exc)}
    flags = scan_anomalies(namespace, preseeded)
    measurements: dict[str, dict[str, Any]] = {}
    for slot in sorted(request.recipes):
        try:
            measurements[slot] = _run_recipe(request.recipes[slot], slot, namespace)
        except BaseException as exc:
            return {
                "status": STATUS_RAISED,
                "exception": _exception_payload(exc),
                "flags": list(flags),
            }
    return {"status": STATUS_COMPLETED, "flags": list(flags), "measurements": measurements}


def make_namespace_factory(framework_root: Optional[str]) -> Callable[[], dict[str, Any]]:
    """Fresh exec globals per case, with the framework module pre-bound."""

    def factory() -> dict[str, Any]:
        namespace: dict[str, Any] = {"__name__": "__exec_case__", "__builtins__": builtins}
        if framework_root:
            namespace[framework_root] = sys.modules[framework_root]
        return namespace

    return factory


def _redirect_streams() -> None:
    # the parent's stdout carries the protocol; snippet output must not
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)
    os.dup2(devnull, 2)
    os.close(devnull)


def _read_until_eof(fd: int, deadline: float) -> Optional[bytes]:
    chunks: list[bytes] = []
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            return None
        ready, _, _ = select.select([fd], [], [], remaining)
        if not ready:
            return None
        chunk = os.read(fd, 65536)
        if not chunk:
            return b"".join(chunks)
        chunks.append(chunk)


def run_forked(
    request: Request,
    namespace_factory: Callable[[], dict[str, Any]],
    sandbox: SandboxConfig,
) -> tuple[Optional[dict[str, Any]], float, str]:
    """One case in one fresh child. Returns (result, wall_s, outcome).

    outcome is "ok" with the child's result dict, "crashed" when the child
    died without shipping one, or "timeout" when the deadline killed it.
    """
    read_fd, write_fd = os.pipe()
    start = time.monotonic()
    pid = os.fork()
    if pid == 0:
        exit_code = 0
        try:
            os.close(read_fd)
            _redirect_streams()
            # a parent-installed crash handler would dump onto inherited fds
            faulthandler.disable()
            apply_sandbox(sandbox)
            result = run_case_body(request, namespace_factory())
            os.write(write_fd, json.dumps(result).encode("utf-8"))
            os.close(write_fd)
        except BaseException:
            exit_code = 1
        finally:
            os._exit(exit_code)
    os.close(write_fd)
    try:
        data = _read_until_eof(read_fd, start + request.timeout_s)
    finally:
        os.close(read_fd)
    wall = time.monotonic() - start
    if data is None:
        try:
            os.kill(pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        os.waitpid(pid, 0)
        return None, request.timeout_s, OUTCOME_TIMEOUT
    os.waitpid(pid, 0)
    if not data:
        return None, wall, OUTCOME_CRASHED
    try:
        result = json.loads(data.decode("utf-8", "replace"))
    except json.JSONDecodeError:
        return None, wall, OUTCOME_CRASHED
    if not isinstance(result, dict):
        return None, wall, OUTCOME_CRASHED
    return result, wall, OUTCOME_OK
