"""Call-stack capture for API unit cases.

Runs a unit case under a profile hook and collects the set of function
names it touches, Python and C level alike. The frame set feeds the host's
corpus as a "trace" record; repeated runs of the same case on the same
build yield the same set.
"""

from __future__ import annotations

import sys
from typing import Any

_OWN_PREFIX = __name__.rsplit(".", 1)[0] + "."  # exec_adapter.*


class ProfileFailure(Exception):
    """The unit case errored; no trace was collected."""


def _python_frame_name(frame: Any) -> str:
    module = frame.f_globals.get("__name__", "")
    qualname = getattr(frame.f_code, "co_qualname", frame.f_code.co_name)
    return f"{module}.{qualname}" if module else qualname


def _c_frame_name(func: Any) -> str:
    module = getattr(func, "__module__", None)
    qualname = getattr(func, "__qualname__", None) or getattr(func, "__name__", "")
    return f"{module}.{qualname}" if module else qualname


def _keep(name: str) -> bool:
    if not name:
        return False
    if name.startswith(_OWN_PREFIX):
        return False
    return not name.endswith(".<module>") and name != "<module>"


def profile_api(api_name: str, unit_case_source: str, namespace: dict[str, Any]) -> dict[str, Any]:
    """Execute the unit case under a profiler; emit a corpus trace record."""
    frames: set[str] = set()

    def hook(frame: Any, event: str, arg: Any) -> None:
        if event == "call":
            frames.add(_python_frame_name(frame))
        elif event == "c_call":
            frames.add(_c_frame_name(arg))

    code = compile(unit_case_source, "<unit-case>", "exec")
    sys.setprofile(hook)
    try:
        exec(code, namespace)
    except BaseException as exc:
        raise ProfileFailure(f"unit case for {api_name} errored: {exc}") from exc
    finally:
        sys.setprofile(None)
    return {"kind": "trace", "api": api_name, "frames": sorted(f for f in frames if _keep(f))}
