"""Wire protocol spoken over stdin/stdout, one JSON object per line.

On startup the adapter writes a single hello line:

    {"hello": {"protocol_version": 1, "capabilities": [...], "dialect": "..."}}

Each request line carries {"case_id", "source", "recipes", "timeout_s"} where
recipes maps a slot name to {"metric", "repetitions", "warmup_runs",
"source"}. Each terminal response line carries {"case_id", "status",
"exception": {"type", "message"}?, "flags": [...],
"measurements": {slot: {"metric", "samples"}}, "wall_time_s"}.

Exception text travels verbatim; normalization is the host's job.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 60.0

STATUS_COMPLETED = "completed"
STATUS_RAISED = "raised"
STATUS_CRASHED = "crashed"
STATUS_TIMEOUT = "timeout"

METRIC_TIME = "wall-time-seconds"
METRIC_MEMORY = "peak-memory-megabytes"
METRICS = (METRIC_TIME, METRIC_MEMORY)

CAPABILITIES = (
    "execute",
    "measure:" + METRIC_TIME,
    "measure:" + METRIC_MEMORY,
    "profile",
)


class RequestError(Exception):
    """A request line that cannot be executed. Carries any salvaged case id."""

    def __init__(self, message: str, case_id: str = "") -> None:
        super().__init__(message)
        self.case_id = case_id


@dataclass(frozen=True)
class Recipe:
    metric: str
    repetitions: int
    warmup_runs: int
    source: str


@dataclass
class Request:
    case_id: str
    source: str
    recipes: dict[str, Recipe] = field(default_factory=dict)
    timeout_s: float = DEFAULT_TIMEOUT_S


def hello_line(dialect: str) -> str:
    return json.dumps(
        {
            "hello": {
                "protocol_version": PROTOCOL_VERSION,
                "capabilities": list(CAPABILITIES),
                "dialect": dialect,
            }
        },
        sort_keys=True,
    )


def _parse_recipe(slot: str, obj: Any, case_id: str) -> Recipe:
    if not isinstance(obj, dict):
        raise RequestError(f"recipe {slot!r} must be an object", case_id)
    try:
        metric = str(obj["metric"])
        repetitions = int(obj["repetitions"])
        warmup_runs = int(obj["warmup_runs"])
        source = str(obj["source"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RequestError(f"recipe {slot!r} is missing or malformed: {exc}", case_id) from exc
    if metric not in METRICS:
        raise RequestError(f"recipe {slot!r} wants unsupported metric {metric!r}", case_id)
    if repetitions < 1:
        raise RequestError(f"recipe {slot!r} needs repetitions >= 1", case_id)
    if warmup_runs < 0:
        raise RequestError(f"recipe {slot!r} needs warmup_runs >= 0", case_id)
    return Recipe(metric, repetitions, warmup_runs, source)


def parse_request(line: str) -> Request:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RequestError(f"request line is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise RequestError("request must be a JSON object")
    case_id = str(obj.get("case_id", ""))
    if not case_id:
        raise RequestError("request needs a case_id")
    if "source" not in obj:
        raise RequestError("request needs a source", case_id)
    raw_recipes = obj.get("recipes", {})
    if not isinstance(raw_recipes, dict):
        raise RequestError("recipes must be an object", case_id)
    recipes = {str(slot): _parse_recipe(str(slot), rec, case_id) for slot, rec in raw_recipes.items()}
    try:
        timeout_s = float(obj.get("timeout_s", DEFAULT_TIMEOUT_S))
    except (TypeError, ValueError) as exc:
        raise RequestError(f"timeout_s is not a number: {exc}", case_id) from exc
    if timeout_s <= 0:
        raise RequestError("timeout_s must be positive", case_id)
    return Request(case_id=case_id, source=str(obj["source"]), recipes=recipes, timeout_s=timeout_s)


def response_line(
    case_id: str,
    status: str,
    exception: Optional[dict[str, str]] = None,
    flags: tuple[str, ...] = (),
    measurements: Optional[dict[str, dict[str, Any]]] = None,
    wall_time_s: float = 0.0,
    error: Optional[str] = None,
) -> str:
    obj: dict[str, Any] = {
        "case_id": case_id,
        "status": status,
        "flags": list(flags),
        "measurements": measurements or {},
        "wall_time_s": wall_time_s,
    }
    if exception is not None:
        obj["exception"] = exception
    if error is not None:
        # extra context for humans; the host parser ignores unknown fields
        obj["error"] = error
    return json.dumps(obj, sort_keys=True)


def error_line(message: str) -> str:
    """Last resort for lines with no usable case_id."""
    return json.dumps({"error": message}, sort_keys=True)
