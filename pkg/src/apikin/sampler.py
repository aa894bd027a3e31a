"""Screen tracker issues and extract structured bug cases from their code.

Screening applies fixed gates in order (first failure wins). Extraction uses a
deliberately minimal call grammar: an API name token followed by literal
arguments; everything else in the block becomes opaque setup text.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .corpus import (
    ApiSignature,
    BugCase,
    IssueRecord,
    MeasurementRecipe,
    METRIC_MEMORY,
    METRIC_TIME,
    PerformanceOracle,
    ShapeTuple,
    StatusOracle,
    StructuredCall,
    Value,
    ValueOracle,
    terminal_segment,
    validate_call,
)
from .evaluator import normalize_exception

REASON_NO_CODE = "no-code"
REASON_NOT_BUG_LABELED = "not-bug-labeled"
REASON_HARDWARE_SPECIFIC = "hardware-specific"
REASON_LOW_ENGAGEMENT = "low-engagement"
REASON_CLOSED_WITHOUT_CHANGE = "closed-without-change"

FAIL_UNPARSABLE = "unparsable-call"
FAIL_ARITY = "positional-arity-mismatch"
FAIL_NO_OVERHEAD = "no-overhead-recipe"

KIND_LABEL_PREFIX = "kind:"

_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*")
_KEYWORD_ARG_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=(?!=)\s*(.+)$", re.DOTALL)
_TRACEBACK_LINE_RE = re.compile(
    r"^\s*([A-Za-z_][A-Za-z0-9_.]*(?:Error|Exception))\s*:\s*(.*)$", re.MULTILINE
)
_PROMPT_RE = re.compile(r"^(>>> |\.\.\. )")

# Substrings that show the issue code computes an expected-overhead comparison.
DEFAULT_PERF_MARKERS = (
    "time.time",
    "perf_counter",
    "monotonic",
    "timeit",
    "elapsed",
    "cuda.event",
    "memory_allocated",
    "max_memory_allocated",
    "memory_stats",
)
_MEMORY_MARKERS = ("memory_allocated", "max_memory_allocated", "memory_stats")


class ExtractionFailure(Exception):
    """Bug-case extraction gave up; .reason holds the failure class."""

    def __init__(self, reason: str, detail: str = "") -> None:
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


@dataclass(frozen=True)
class SamplerPolicy:
    bug_labels: frozenset[str] = frozenset({"bug", "crash"})
    hardware_exclusions: frozenset[str] = frozenset({"m1"})
    min_comments: int = 3
    perf_markers: tuple[str, ...] = DEFAULT_PERF_MARKERS
    # Skeleton defaults for extracted performance oracles.
    default_margin: float = 1.05
    default_repetitions: int = 3
    default_warmups: int = 1


# ---------------------------------------------------------------------------
# screening


def screen_issue(issue: IssueRecord, policy: SamplerPolicy) -> Optional[str]:
    """Apply the discard gates in order; returns the reason or None to keep."""
    if not any(block.strip() for block in issue.code_blocks):
        return REASON_NO_CODE
    labels = {l.casefold() for l in issue.labels}
    if not labels & {l.casefold() for l in policy.bug_labels}:
        return REASON_NOT_BUG_LABELED
    markers = {m.casefold() for m in issue.hardware_markers}
    if markers & {m.casefold() for m in policy.hardware_exclusions}:
        return REASON_HARDWARE_SPECIFIC
    if issue.comment_count < policy.min_comments:
        return REASON_LOW_ENGAGEMENT
    if issue.state == "closed" and issue.linked_changes == 0:
        return REASON_CLOSED_WITHOUT_CHANGE
    return None


def kind_hint(issue: IssueRecord) -> Optional[str]:
    """Externally supplied bug-kind label, e.g. kind:performance."""
    for label in sorted(issue.labels):
        if label.startswith(KIND_LABEL_PREFIX):
            hint = label[len(KIND_LABEL_PREFIX) :]
            if hint in ("status", "value", "performance"):
                return hint
    return None


# ---------------------------------------------------------------------------
# API identification


def _mentions(text: str, api_name: str) -> list[int]:
    """Positions of whole tokens equal to the API name or its terminal segment."""
    wanted = {api_name, terminal_segment(api_name)}
    return [m.start() for m in _TOKEN_RE.finditer(text) if m.group(0) in wanted]


def _mentioned_in(text: str, api_name: str) -> bool:
    wanted = {api_name, terminal_segment(api_name)}
    return any(m.group(0) in wanted for m in _TOKEN_RE.finditer(text))


def identify_problematic_api(issue: IssueRecord, api_names: Iterable[str]) -> Optional[str]:
    """Most-mentioned known API that also shows up in a code block.

    Ranking is by title+body mention count, ties broken by earliest first
    mention then name. Falls back to the top mention when no candidate appears
    in code; None when no known API is mentioned at all.
    """
    text = issue.title + "\n" + issue.body
    ranked: list[tuple[int, int, str]] = []
    for api in api_names:
        positions = _mentions(text, api)
        if positions:
            ranked.append((-len(positions), positions[0], api))
    if not ranked:
        return None
    ranked.sort()
    for _, _, api in ranked:
        if any(_mentioned_in(block, api) for block in issue.code_blocks):
            return api
    return ranked[0][2]


# ---------------------------------------------------------------------------
# call parsing


def _parse_literal(text: str) -> tuple[bool, Optional[Value]]:
    """(ok, value). Accepts scalars, strings, tuples, and lists only."""
    try:
        raw = ast.literal_eval(text.strip())
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        return False, None
    return _coerce_literal(raw)

def _coerce_literal(raw: object) -> tuple[bool, Optional[Value]]:
    if isinstance(raw, bool) or isinstance(raw, (int, float, str)):
        return True, raw
    if isinstance(raw, tuple):
        if raw and all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in raw):
            return True, ShapeTuple(tuple(raw))
        raw = list(raw)
    if isinstance(raw, list):
        out = []
        for item in raw:
            ok, val = _coerce_literal(item)
            if not ok:
                return False, None
            out.append(val)
        return True, out
    return False, None


def _split_top_level(text: str) -> Optional[list[str]]:
    """Split an argument list on top-level commas; None when quoting/nesting breaks."""
    parts: list[str] = []
    depth = 0
    quote: Optional[str] = None
    current: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if quote is not None:
            current.append(ch)
            if ch == "\\":
                if i + 1 < len(text):
                    current.append(text[i + 1])
                    i += 1
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            current.append(ch)
        elif ch in "([{":
            depth += 1
            current.append(ch)
        elif ch in ")]}":
            depth -= 1
            if depth < 0:
                return None
            current.append(ch)
        elif ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
        i += 1
    if depth != 0 or quote is not None:
        return None
    parts.append("".join(current))
    return parts


def _find_call_sites(block: str, sig: ApiSignature) -> list[tuple[int, str]]:
    """(offset, argument text) for each syntactically balanced call to the API."""
    sites: list[tuple[int, str]] = []
    for token in sorted({sig.name, sig.terminal}, key=len, reverse=True):
        pattern = re.compile(r"(?<![\w.])" + re.escape(token) + r"\s*\(")
        for m in pattern.finditer(block):
            start = m.end()
            depth = 1
            quote: Optional[str] = None
            for i in range(start, len(block)):
                ch = block[i]
                if quote is not None:
                    if ch == "\\":
                        continue
                    if ch == quote:
                        quote = None
                elif ch in "'\"":
                    quote = ch
                elif ch == "(":
                    depth += 1
                elif ch == ")":
                    depth -= 1
                    if depth == 0:
                        sites.append((m.start(), block[start:i]))
                        break
    sites.sort(key=lambda s: s[0])
    return sites


def _bind_arguments(arg_text: str, sig: ApiSignature) -> dict[str, Value]:
    """Bind a literal argument list to parameter names, positionals first."""
    params = sig.params_in_order()
    bound: dict[str, Value] = {}
    parts = [] if not arg_text.strip() else _split_top_level(arg_text)
    if parts is None:
        raise ExtractionFailure(FAIL_UNPARSABLE, "unbalanced argument list")
    positional_index = 0
    seen_keyword = False
    for part in parts:
        part = part.strip()
        if not part:
            raise ExtractionFailure(FAIL_UNPARSABLE, "empty argument")
        kw = _KEYWORD_ARG_RE.match(part)
        if kw:
            name, value_text = kw.group(1), kw.group(2)
            ok, value = _parse_literal(value_text)
            if not ok:
                raise ExtractionFailure(FAIL_UNPARSABLE, f"unparsable literal for {name}")
            if name in bound:
                raise ExtractionFailure(FAIL_UNPARSABLE, f"duplicate binding for {name}")
            bound[name] = value
            seen_keyword = True
        else:
            if seen_keyword:
                raise ExtractionFailure(FAIL_UNPARSABLE, "positional after keyword argument")
            if positional_index >= len(params):
                raise ExtractionFailure(
                    FAIL_ARITY,
                    f"{positional_index + 1} positional values, {len(params)} parameters",
                )
            ok, value = _parse_literal(part)
            if not ok:
                raise ExtractionFailure(FAIL_UNPARSABLE, f"unparsable literal {part!r}")
            name = params[positional_index].name
            if name in bound:
                raise ExtractionFailure(FAIL_UNPARSABLE, f"duplicate binding for {name}")
            bound[name] = value
            positional_index += 1
    return bound


def _setup_fragments(block: str, call_offset: int) -> tuple[str, ...]:
    """Lines preceding the call become opaque setup fragments."""
    head = block[:call_offset]
    if "\n" in head:
        head = head.rsplit("\n", 1)[0]
    else:
        head = ""
    fragments = []
    for line in head.splitlines():
        line = _PROMPT_RE.sub("", line).rstrip()
        if line.strip():
            fragments.append(line)
    return tuple(fragments)


# ---------------------------------------------------------------------------
# oracle skeletons


def _status_skeleton(issue: IssueRecord, api_name: str) -> StatusOracle:
    text = "\n".join(list(issue.code_blocks) + [issue.body])
    matches = _TRACEBACK_LINE_RE.findall(text)
    if not matches:
        return StatusOracle(normalize_exception("Exception", "", (api_name,)))
    exc_type, message = matches[-1]
    return StatusOracle(normalize_exception(exc_type, message, (api_name,)))


def _value_skeleton(issue: IssueRecord) -> ValueOracle:
    text = (issue.title + "\n" + issue.body + "\n" + "\n".join(issue.code_blocks)).casefold()
    if re.search(r"\bnan\b", text):
        return ValueOracle("nan")
    if re.search(r"\binf\b", text):
        return ValueOracle("inf")
    if re.search(r"\bconstant\b", text):
        return ValueOracle("constant-output")
    return ValueOracle("mismatch-token")


def _performance_skeleton(
    issue: IssueRecord, call: StructuredCall, policy: SamplerPolicy
) -> PerformanceOracle:
    code = "\n".join(issue.code_blocks).casefold()
    hits = [m for m in policy.perf_markers if m.casefold() in code]
    if not hits:
        raise ExtractionFailure(FAIL_NO_OVERHEAD, "no expected-overhead computation in code")
    metric = METRIC_MEMORY if any(m in _MEMORY_MARKERS for m in hits) else METRIC_TIME

    def recipe() -> MeasurementRecipe:
        return MeasurementRecipe(
            metric=metric,
            repetitions=policy.default_repetitions,
            warmup_runs=policy.default_warmups,
            body=(StructuredCall(call.api_name, dict(call.bound_args), call.setup_steps),),
        )

    return PerformanceOracle(
        baseline=recipe(),
        subject=recipe(),
        comparator="subject_exceeds_baseline",
        margin=policy.default_margin,
    )


# ---------------------------------------------------------------------------
# extraction


def blocks_mentioning(issue: IssueRecord, sig: ApiSignature) -> int:
    return sum(1 for block in issue.code_blocks if _mentioned_in(block, sig.name))


def extract_bug_case(
    issue: IssueRecord,
    sig: ApiSignature,
    hint: str,
    policy: SamplerPolicy = SamplerPolicy(),
) -> BugCase:
    """Parse the first usable call to sig out of the issue's code blocks.

    The bug kind hint comes from external labeling; the attached oracle is a
    skeleton of that kind. Raises ExtractionFailure when no call parses, when
    positional arity exceeds the signature, or when a performance issue lacks
    an in-code overhead computation.
    """
    if hint not in ("status", "value", "performance"):
        raise ExtractionFailure(FAIL_UNPARSABLE, f"unusable kind hint {hint!r}")
    last_failure: Optional[ExtractionFailure] = None
    call: Optional[StructuredCall] = None
    for block in issue.code_blocks:
        for offset, arg_text in _find_call_sites(block, sig):
            try:
                bound = _bind_arguments(arg_text, sig)
            except ExtractionFailure as exc:
                last_failure = exc
                continue
            candidate = StructuredCall(
                api_name=sig.name,
                bound_args=bound,
                setup_steps=_setup_fragments(block, offset),
            )
            violations = validate_call(candidate, sig)
            if violations:
                last_failure = ExtractionFailure(FAIL_UNPARSABLE, ", ".join(violations))
                continue
            call = candidate
            break
        if call is not None:
            break
    if call is None:
        raise last_failure or ExtractionFailure(FAIL_UNPARSABLE, f"no call to {sig.name} found")

    if hint == "status":
        oracle = _status_skeleton(issue, sig.name)
    elif hint == "value":
        oracle = _value_skeleton(issue)
    else:
        oracle = _performance_skeleton(issue, call, policy)

    return BugCase(
        case_id=f"{issue.issue_id}/case",
        source_api=sig.name,
        repro_call=call,
        bug_kind=hint,
        oracle=oracle,
        origin_issue=issue.issue_id,
    )
