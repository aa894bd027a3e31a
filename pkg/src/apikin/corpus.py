"""Data model for API corpora: signatures, source functions, traces, bug cases.

A corpus is stored as line-delimited JSON records discriminated by a "kind"
field (see records.py for the on-disk format). This module holds the in-memory
types, the set-similarity primitive, and call validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import AbstractSet, Optional, Union


# ---------------------------------------------------------------------------
# errors


class CorpusError(Exception):
    """Base class for corpus loading and validation failures."""


class ParseError(CorpusError):
    """Malformed or semantically invalid record (reported with line context)."""


class DuplicateIdError(CorpusError):
    """The same identifier was defined twice."""


class UnresolvedReferenceError(CorpusError):
    """A record references an API or function that is not in the corpus."""


# ---------------------------------------------------------------------------
# values

METRIC_TIME = "wall-time-seconds"
METRIC_MEMORY = "peak-memory-megabytes"
METRICS = (METRIC_TIME, METRIC_MEMORY)

ANOMALY_PATTERNS = ("nan", "inf", "constant-output", "mismatch-token")

COMPARATOR_EXCEEDS = "subject_exceeds_baseline"
COMPARATOR_NO_IMPROVEMENT = "no_improvement"
COMPARATORS = (COMPARATOR_EXCEEDS, COMPARATOR_NO_IMPROVEMENT)

BUG_KINDS = ("status", "value", "performance")


@dataclass(frozen=True)
class ShapeTuple:
    """An ordered tuple of positive integers describing a tensor shape."""

    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.dims:
            raise ValueError("shape-tuple must have at least one entry")
        for d in self.dims:
            if isinstance(d, bool) or not isinstance(d, int) or d < 1:
                raise ValueError(f"shape-tuple entries must be integers >= 1, got {d!r}")

    @property
    def rank(self) -> int:
        return len(self.dims)


# Scalars, shape-tuples, or (possibly nested) lists of values.
Value = Union[int, float, bool, str, ShapeTuple, list]


# ---------------------------------------------------------------------------
# signatures


@dataclass(frozen=True)
class ParamSpec:
    """One parameter: name, optional expected rank, optional default literal.

    rank is None for rank-free parameters.
    """

    name: str
    rank: Optional[int] = None
    default: Optional[Value] = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("parameter name must be non-empty")
        if self.rank is not None and (not isinstance(self.rank, int) or self.rank < 0):
            raise ValueError(f"rank annotation must be a non-negative integer, got {self.rank!r}")


@dataclass(frozen=True)
class ApiSignature:
    name: str
    required: tuple[ParamSpec, ...] = ()
    optional: tuple[ParamSpec, ...] = ()
    framework: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("API name must be non-empty")
        names = [p.name for p in self.required + self.optional]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate parameter names in signature {self.name}")

    @property
    def required_names(self) -> frozenset[str]:
        return frozenset(p.name for p in self.required)

    @property
    def param_names(self) -> frozenset[str]:
        return frozenset(p.name for p in self.required + self.optional)

    def params_in_order(self) -> tuple[ParamSpec, ...]:
        return self.required + self.optional

    def param(self, name: str) -> Optional[ParamSpec]:
        for p in self.required + self.optional:
            if p.name == name:
                return p
        return None

    @property
    def terminal(self) -> str:
        """Last dotted segment of the API name, e.g. Conv2d for torch.nn.Conv2d."""
        return self.name.rsplit(".", 1)[-1]


def terminal_segment(api_name: str) -> str:
    return api_name.rsplit(".", 1)[-1]


# ---------------------------------------------------------------------------
# functions and traces


@dataclass(frozen=True)
class SourceFunction:
    """A framework source function with its I/O argument and callee token sets."""

    name: str
    io_args: frozenset[str]
    callees: frozenset[str]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("source function name must be non-empty")


@dataclass(frozen=True)
class CallStackTrace:
    """Set of source-function frames an API touches during unit-test execution."""

    api_name: str
    frames: frozenset[str]


# ---------------------------------------------------------------------------
# calls, recipes, oracles


@dataclass
class StructuredCall:
    """A single API invocation with named argument bindings."""

    api_name: str
    bound_args: dict[str, Value]
    setup_steps: tuple[str, ...] = ()
    measurement_recipe: Optional["MeasurementRecipe"] = None


@dataclass
class MeasurementRecipe:
    """How to measure one side of a performance comparison."""

    metric: str
    repetitions: int
    warmup_runs: int
    body: tuple[StructuredCall, ...]

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.warmup_runs < 0:
            raise ValueError("warmup_runs must be >= 0")
        if not self.body:
            raise ValueError("recipe body must contain at least one call")


@dataclass(frozen=True)
class ExceptionSignature:
    """Exception type token plus normalized message template."""

    exc_type: str
    message: str


# Distinguished oracle signature matched by crashed executions.
HARD_CRASH = ExceptionSignature("hard-crash", "")


@dataclass(frozen=True)
class StatusOracle:
    signature: ExceptionSignature


@dataclass(frozen=True)
class ValueOracle:
    pattern: str
    detail: Optional[str] = None

    def __post_init__(self) -> None:
        if self.pattern not in ANOMALY_PATTERNS:
            raise ValueError(f"unknown anomaly pattern {self.pattern!r}")


@dataclass
class PerformanceOracle:
    baseline: MeasurementRecipe
    subject: MeasurementRecipe
    comparator: str
    margin: float = 1.05

    def __post_init__(self) -> None:
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")
        if self.margin < 1.0:
            raise ValueError("margin must be >= 1.0")


OracleSpec = Union[StatusOracle, ValueOracle, PerformanceOracle]


def oracle_kind(oracle: OracleSpec) -> str:
    if isinstance(oracle, StatusOracle):
        return "status"
    if isinstance(oracle, ValueOracle):
        return "value"
    if isinstance(oracle, PerformanceOracle):
        return "performance"
    raise TypeError(f"not an oracle: {oracle!r}")


@dataclass
class BugCase:
    """A confirmed bug-triggering call with the oracle that recognizes the bug."""

    case_id: str
    source_api: str
    repro_call: StructuredCall
    bug_kind: str
    oracle: OracleSpec
    origin_issue: Optional[str] = None

    def __post_init__(self) -> None:
        if self.bug_kind not in BUG_KINDS:
            raise ValueError(f"unknown bug kind {self.bug_kind!r}")
        if oracle_kind(self.oracle) != self.bug_kind:
            raise ValueError(
                f"bug case {self.case_id}: oracle kind {oracle_kind(self.oracle)} "
                f"does not match bug_kind {self.bug_kind}"
            )


@dataclass(frozen=True)
class SignaturePair:
    """Precomputed signature-similarity pair from an external matcher."""

    source_api: str
    target_api: str
    score: float


@dataclass(frozen=True)
class IssueRecord:
    """Offline snapshot of one tracker issue."""

    issue_id: str
    title: str
    body: str
    labels: frozenset[str]
    comment_count: int
    state: str
    linked_changes: int
    code_blocks: tuple[str, ...]
    hardware_markers: frozenset[str]

    def __post_init__(self) -> None:
        if self.state not in ("open", "closed"):
            raise ValueError(f"issue state must be open or closed, got {self.state!r}")


# ---------------------------------------------------------------------------
# corpus


@dataclass
class Corpus:
    signatures: dict[str, ApiSignature] = field(default_factory=dict)
    source_functions: dict[str, SourceFunction] = field(default_factory=dict)
    traces: dict[str, CallStackTrace] = field(default_factory=dict)
    bug_cases: dict[str, BugCase] = field(default_factory=dict)
    signature_pairs: list[SignaturePair] = field(default_factory=list)
    issues: list[IssueRecord] = field(default_factory=list)

    def api_names(self) -> frozenset[str]:
        return frozenset(self.signatures)


# ---------------------------------------------------------------------------
# operations


def jaccard(a: AbstractSet, b: AbstractSet) -> float:
    """Set similarity |a & b| / |a | b|. Two empty sets score 0.0."""
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def validate_call(call: StructuredCall, sig: ApiSignature) -> list[str]:
    """Check a call against a signature. Returns violation strings, empty if valid.

    Violations: missing-required:<name>, unknown-parameter:<name>,
    rank-mismatch:<name>:<got>-><want>. Shape-tuple values are checked against
    rank annotations only when both are present.
    """
    violations: list[str] = []
    for p in sig.required:
        if p.name not in call.bound_args:
            violations.append(f"missing-required:{p.name}")
    for name in sorted(call.bound_args):
        if name not in sig.param_names:
            violations.append(f"unknown-parameter:{name}")
    for name in sorted(call.bound_args):
        value = call.bound_args[name]
        p = sig.param(name)
        if p is not None and p.rank is not None and isinstance(value, ShapeTuple):
            if value.rank != p.rank:
                violations.append(f"rank-mismatch:{name}:{value.rank}->{p.rank}")
    return violations


def cross_validate(corpus: Corpus) -> None:
    """Enforce cross-record invariants. Raises on the first violation found."""
    for api, trace in corpus.traces.items():
        if api not in corpus.signatures:
            raise UnresolvedReferenceError(f"trace references unknown API {api!r}")
    for case in corpus.bug_cases.values():
        sig = corpus.signatures.get(case.source_api)
        if sig is None:
            raise UnresolvedReferenceError(
                f"bug case {case.case_id} references unknown API {case.source_api!r}"
            )
        violations = validate_call(case.repro_call, sig)
        if violations:
            raise ParseError(
                f"bug case {case.case_id}: repro call invalid: {', '.join(violations)}"
            )
        if isinstance(case.oracle, PerformanceOracle):
            for slot, recipe in (("baseline", case.oracle.baseline), ("subject", case.oracle.subject)):
                _validate_recipe(corpus, case.case_id, slot, recipe)
        if case.repro_call.measurement_recipe is not None:
            _validate_recipe(corpus, case.case_id, "repro", case.repro_call.measurement_recipe)
    for pair in corpus.signature_pairs:
        for api in (pair.source_api, pair.target_api):
            if api not in corpus.signatures:
                raise UnresolvedReferenceError(f"signature pair references unknown API {api!r}")
        if pair.source_api == pair.target_api:
            raise ParseError(f"signature pair with identical endpoints {pair.source_api!r}")


def _validate_recipe(corpus: Corpus, case_id: str, slot: str, recipe: MeasurementRecipe) -> None:
    for call in recipe.body:
        sig = corpus.signatures.get(call.api_name)
        if sig is None:
            raise UnresolvedReferenceError(
                f"bug case {case_id}: {slot} recipe references unknown API {call.api_name!r}"
            )
        violations = validate_call(call, sig)
        if violations:
            raise ParseError(
                f"bug case {case_id}: {slot} recipe call invalid: {', '.join(violations)}"
            )
