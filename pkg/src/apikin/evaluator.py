"""Classify execution results against bug oracles.

Exception messages are compared as normalized templates: numbers, paths, hex
addresses, and known API names collapse to placeholder slots so that the same
failure wording matches across analogous APIs.
"""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from .corpus import (
    COMPARATOR_EXCEEDS,
    COMPARATOR_NO_IMPROVEMENT,
    ExceptionSignature,
    HARD_CRASH,
    OracleSpec,
    PerformanceOracle,
    StatusOracle,
    ValueOracle,
    oracle_kind,
    terminal_segment,
)

STATUS_COMPLETED = "completed"
STATUS_RAISED = "raised"
STATUS_CRASHED = "crashed"
STATUS_TIMEOUT = "timeout"
STATUSES = (STATUS_COMPLETED, STATUS_RAISED, STATUS_CRASHED, STATUS_TIMEOUT)

VERDICT_BUG = "bug"
VERDICT_NO_BUG = "no-bug"
VERDICT_INCONCLUSIVE = "inconclusive"

SLOT_NUMBER = "<N>"
SLOT_PATH = "<PATH>"
SLOT_HEX = "<HEX>"
SLOT_API = "<API>"

_HEX_RE = re.compile(r"0[xX][0-9a-fA-F]+")
_PATH_RE = re.compile(r"(?:[A-Za-z]:)?(?:/[^\s:;,'\"()\[\]]+){2,}/?")
_NUM_RE = re.compile(r"(?<![\w.<])[+-]?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?(?!\w)")
_WS_RE = re.compile(r"\s+")


class MetricMismatch(Exception):
    """Measurement metrics disagree with the oracle's recipes."""


@dataclass(frozen=True)
class MeasurementSample:
    """Raw post-warmup readings for one recipe slot."""

    metric: str
    samples: tuple[float, ...]

    @property
    def aggregate(self) -> float:
        return float(statistics.median(self.samples))


@dataclass
class ExecutionResult:
    """Terminal outcome of running one synthesized case."""

    case_id: str
    status: str
    exception: Optional[ExceptionSignature] = None
    flags: frozenset[str] = frozenset()
    measurements: dict[str, MeasurementSample] = field(default_factory=dict)
    runner_id: str = ""
    wall_time_s: float = 0.0

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown execution status {self.status!r}")
        if (self.exception is not None) != (self.status == STATUS_RAISED):
            raise ValueError("exception signature must be present iff status is raised")


@dataclass
class Verdict:
    kind: str
    bug_kind: Optional[str] = None
    reason: Optional[str] = None
    evidence: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind == VERDICT_BUG and not self.evidence:
            raise ValueError("bug verdicts must carry evidence")


# ---------------------------------------------------------------------------
# normalization


def _api_token_pattern(api_names: Iterable[str]) -> Optional[re.Pattern]:
    tokens: set[str] = set()
    for name in api_names:
        tokens.add(name)
        tokens.add(terminal_segment(name))
    if not tokens:
        return None
    ordered = sorted(tokens, key=lambda t: (-len(t), t))
    return re.compile(
        r"(?<![\w.])(?:" + "|".join(re.escape(t) for t in ordered) + r")(?![\w.])"
    )


def normalize_exception(
    exc_type: str, message: str, api_names: Iterable[str] = ()
) -> ExceptionSignature:
    """Collapse volatile message fragments into placeholder slots.

    Number literals, file paths, hex addresses, and known API-name tokens are
    slotted; whitespace runs collapse to single spaces. Idempotent.
    """
    text = message
    text = _PATH_RE.sub(SLOT_PATH, text)
    text = _HEX_RE.sub(SLOT_HEX, text)
    text = _NUM_RE.sub(SLOT_NUMBER, text)
    api_pattern = _api_token_pattern(api_names)
    if api_pattern is not None:
        text = api_pattern.sub(SLOT_API, text)
    text = _WS_RE.sub(" ", text).strip()
    return ExceptionSignature(exc_type.strip(), text)


# ---------------------------------------------------------------------------
# checks


def check_status(
    oracle: StatusOracle, result: ExecutionResult, api_names: Iterable[str] = ()
) -> bool:
    """True when the result reproduces the expected failure signature.

    A crashed result matches only the distinguished hard-crash oracle.
    """
    if oracle.signature == HARD_CRASH:
        return result.status == STATUS_CRASHED
    if result.status != STATUS_RAISED or result.exception is None:
        return False
    expected = normalize_exception(oracle.signature.exc_type, oracle.signature.message, api_names)
    return result.exception == expected


def check_value(oracle: ValueOracle, result: ExecutionResult) -> bool:
    if result.status != STATUS_COMPLETED:
        raise ValueError("check_value requires a completed execution")
    return oracle.pattern in result.flags


def check_performance(oracle: PerformanceOracle, result: ExecutionResult) -> bool:
    """Compare aggregates under the oracle's comparator and margin."""
    try:
        baseline = result.measurements["baseline"]
        subject = result.measurements["subject"]
    except KeyError as exc:
        raise MetricMismatch(f"missing measurement slot {exc.args[0]!r}") from exc
    for slot, sample, recipe in (
        ("baseline", baseline, oracle.baseline),
        ("subject", subject, oracle.subject),
    ):
        if sample.metric != recipe.metric:
            raise MetricMismatch(
                f"{slot} measured {sample.metric!r} but the recipe wants {recipe.metric!r}"
            )
    if oracle.comparator == COMPARATOR_EXCEEDS:
        return subject.aggregate > oracle.margin * baseline.aggregate
    if oracle.comparator == COMPARATOR_NO_IMPROVEMENT:
        return abs(subject.aggregate - baseline.aggregate) <= (
            (oracle.margin - 1.0) * baseline.aggregate
        )
    raise MetricMismatch(f"unknown comparator {oracle.comparator!r}")


# ---------------------------------------------------------------------------
# dispatch


def evaluate(case: Any, result: ExecutionResult, api_names: Iterable[str] = ()) -> Verdict:
    """Total verdict function: every (oracle, result) combination is covered.

    case is anything carrying .case_id and .oracle (a bug case or a
    synthesized case). Timeouts, and raised exceptions under value or
    performance oracles, yield Inconclusive rather than NoBug.
    """
    if case.case_id != result.case_id:
        raise ValueError(f"case/result mismatch: {case.case_id} vs {result.case_id}")
    oracle: OracleSpec = case.oracle
    kind = oracle_kind(oracle)

    if result.status == STATUS_TIMEOUT:
        return Verdict(VERDICT_INCONCLUSIVE, reason="timeout")

    if isinstance(oracle, StatusOracle):
        if check_status(oracle, result, api_names):
            if result.status == STATUS_CRASHED:
                evidence: dict[str, Any] = {"matched": "hard-crash"}
            else:
                assert result.exception is not None
                evidence = {
                    "matched": {
                        "type": result.exception.exc_type,
                        "message": result.exception.message,
                    }
                }
            return Verdict(VERDICT_BUG, bug_kind=kind, evidence=evidence)
        return Verdict(VERDICT_NO_BUG)

    if result.status == STATUS_RAISED:
        return Verdict(VERDICT_INCONCLUSIVE, reason="raised-exception")
    if result.status == STATUS_CRASHED:
        return Verdict(VERDICT_INCONCLUSIVE, reason="crashed")

    if isinstance(oracle, ValueOracle):
        if check_value(oracle, result):
            return Verdict(VERDICT_BUG, bug_kind=kind, evidence={"flag": oracle.pattern})
        return Verdict(VERDICT_NO_BUG)

    assert isinstance(oracle, PerformanceOracle)
    try:
        is_bug = check_performance(oracle, result)
    except MetricMismatch as exc:
        return Verdict(VERDICT_INCONCLUSIVE, reason=f"metric-mismatch: {exc}")
    if is_bug:
        return Verdict(
            VERDICT_BUG,
            bug_kind=kind,
            evidence={
                "comparator": oracle.comparator,
                "margin": oracle.margin,
                "baseline": result.measurements["baseline"].aggregate,
                "subject": result.measurements["subject"].aggregate,
            },
        )
    return Verdict(VERDICT_NO_BUG)


# ---------------------------------------------------------------------------
# records


def encode_verdict(case_id: str, verdict: Verdict) -> dict[str, Any]:
    obj: dict[str, Any] = {"kind": "verdict", "case_id": case_id, "verdict": verdict.kind}
    if verdict.bug_kind is not None:
        obj["bug_kind"] = verdict.bug_kind
    if verdict.reason is not None:
        obj["reason"] = verdict.reason
    if verdict.evidence:
        obj["evidence"] = verdict.evidence
    return obj


def decode_verdict(rec: dict) -> tuple[str, Verdict]:
    return rec["case_id"], Verdict(
        kind=rec["verdict"],
        bug_kind=rec.get("bug_kind"),
        reason=rec.get("reason"),
        evidence=rec.get("evidence", {}),
    )
