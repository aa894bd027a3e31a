"""Aggregate verdicts into a run report, fold duplicate bugs, derive metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

from .evaluator import VERDICT_BUG, VERDICT_INCONCLUSIVE, VERDICT_NO_BUG, Verdict
from .generator import SynthesisSkip, SynthesizedCase
from .matcher import CandidatePair
from .records import oracle_fingerprint


class ReportError(Exception):
    """Internal accounting broke (conservation failure)."""


@dataclass
class ApiBug:
    """One distinct buggy behavior: a target API plus an oracle fingerprint."""

    target_api: str
    oracle_fp: str
    bug_kind: str
    case_ids: tuple[str, ...]
    suppressed: bool = False


@dataclass
class RunReport:
    total_cases: int = 0
    verdict_counts: dict[str, int] = field(default_factory=dict)
    bug_kind_counts: dict[str, int] = field(default_factory=dict)
    inconclusive_reasons: dict[str, int] = field(default_factory=dict)
    skip_counts: dict[str, int] = field(default_factory=dict)
    never_ran: int = 0
    pair_counts: dict[str, int] = field(default_factory=dict)
    covered_apis: int = 0
    api_bugs: list[ApiBug] = field(default_factory=list)
    suppressed_bugs: int = 0
    detection_wall_s: Optional[float] = None
    per_case: list[dict[str, Any]] = field(default_factory=list)

    @property
    def bug_verdicts(self) -> int:
        return self.verdict_counts.get(VERDICT_BUG, 0)

    @property
    def api_bug_count(self) -> int:
        return len(self.api_bugs)


@dataclass(frozen=True)
class Metrics:
    """None means undefined (division by zero), rendered as "undefined"."""

    trigger_ratio_pct: Optional[float]
    avg_minutes_to_bug: Optional[float]


def compute_metrics(report: RunReport) -> Metrics:
    """Bug-trigger ratio (percent) and average detection minutes per API bug.

    The wall time covers the detection phase only (generation plus
    evaluation); preprocessing stages are excluded by construction.
    """
    if report.total_cases > 0:
        ratio = 100.0 * report.bug_verdicts / report.total_cases
    else:
        ratio = None
    if report.detection_wall_s is not None and report.api_bug_count > 0:
        avg = (report.detection_wall_s / 60.0) / report.api_bug_count
    else:
        avg = None
    return Metrics(trigger_ratio_pct=ratio, avg_minutes_to_bug=avg)


def build_report(
    cases: Sequence[SynthesizedCase],
    skips: Sequence[SynthesisSkip],
    verdicts: Mapping[str, Verdict],
    pairs: Sequence[CandidatePair] = (),
    detection_wall_s: Optional[float] = None,
    suppress: Iterable[str] = (),
) -> RunReport:
    """Fold verdicts into the report; raises ReportError when counts leak.

    suppress holds "<target_api>#<oracle_fp>" keys for developer-rejected
    behaviors; matching folded bugs are marked, not deleted.
    """
    report = RunReport(total_cases=len(cases), detection_wall_s=detection_wall_s)
    suppress_keys = set(suppress)

    for skip in skips:
        report.skip_counts[skip.reason] = report.skip_counts.get(skip.reason, 0) + 1

    folded: dict[tuple[str, str], ApiBug] = {}
    for case in sorted(cases, key=lambda c: c.case_id):
        verdict = verdicts.get(case.case_id)
        if verdict is None:
            report.never_ran += 1
            report.per_case.append({"case_id": case.case_id, "verdict": "never-ran"})
            continue
        report.verdict_counts[verdict.kind] = report.verdict_counts.get(verdict.kind, 0) + 1
        entry: dict[str, Any] = {"case_id": case.case_id, "verdict": verdict.kind}
        if verdict.kind == VERDICT_BUG:
            assert verdict.bug_kind is not None
            report.bug_kind_counts[verdict.bug_kind] = (
                report.bug_kind_counts.get(verdict.bug_kind, 0) + 1
            )
            entry["bug_kind"] = verdict.bug_kind
            fp = oracle_fingerprint(case.oracle)
            key = (case.target_api, fp)
            bug = folded.get(key)
            if bug is None:
                folded[key] = ApiBug(
                    target_api=case.target_api,
                    oracle_fp=fp,
                    bug_kind=verdict.bug_kind,
                    case_ids=(case.case_id,),
                    suppressed=f"{case.target_api}#{fp}" in suppress_keys,
                )
            else:
                bug.case_ids = bug.case_ids + (case.case_id,)
        elif verdict.kind == VERDICT_INCONCLUSIVE:
            reason = verdict.reason or "unspecified"
            report.inconclusive_reasons[reason] = report.inconclusive_reasons.get(reason, 0) + 1
            entry["reason"] = reason
        report.per_case.append(entry)

    report.api_bugs = sorted(folded.values(), key=lambda b: (b.target_api, b.oracle_fp))
    report.suppressed_bugs = sum(1 for b in report.api_bugs if b.suppressed)

    for pair in pairs:
        key = f"{pair.provenance}/{'accept' if pair.accepted else 'reject'}"
        report.pair_counts[key] = report.pair_counts.get(key, 0) + 1
    covered: set[str] = set()
    for pair in pairs:
        if pair.provenance == "context" and pair.accepted:
            covered.add(pair.source_api)
            covered.add(pair.target_api)
    report.covered_apis = len(covered)

    accounted = (
        sum(report.verdict_counts.get(k, 0) for k in (VERDICT_BUG, VERDICT_NO_BUG, VERDICT_INCONCLUSIVE))
        + report.never_ran
    )
    if accounted != report.total_cases:
        raise ReportError(
            f"case conservation failed: {accounted} accounted vs {report.total_cases} generated"
        )
    return report


# ---------------------------------------------------------------------------
# rendering


def _fmt(value: Optional[float], suffix: str = "") -> str:
    if value is None:
        return "undefined"
    return f"{value:.2f}{suffix}"


def report_records(report: RunReport) -> list[dict[str, Any]]:
    """Canonical line records; excludes wall-clock so re-runs are byte-identical."""
    records: list[dict[str, Any]] = [
        {
            "kind": "report_totals",
            "cases_generated": report.total_cases,
            "verdicts": dict(sorted(report.verdict_counts.items())),
            "bug_kinds": dict(sorted(report.bug_kind_counts.items())),
            "inconclusive_reasons": dict(sorted(report.inconclusive_reasons.items())),
            "skips": dict(sorted(report.skip_counts.items())),
            "never_ran": report.never_ran,
            "pairs": dict(sorted(report.pair_counts.items())),
            "covered_apis": report.covered_apis,
            "api_bugs": report.api_bug_count,
            "suppressed": report.suppressed_bugs,
        }
    ]
    for bug in report.api_bugs:
        records.append(
            {
                "kind": "api_bug",
                "target_api": bug.target_api,
                "oracle_fp": bug.oracle_fp,
                "bug_kind": bug.bug_kind,
                "case_ids": list(bug.case_ids),
                "suppressed": bug.suppressed,
            }
        )
    for entry in sorted(report.per_case, key=lambda e: e["case_id"]):
        records.append({"kind": "case_verdict", **entry})
    return records


def render_summary(report: RunReport, metrics: Metrics) -> str:
    """Plain-text summary table. Includes timing metrics, so this file is not
    covered by the byte-identity guarantee of the record outputs."""
    lines = [
        "run summary",
        "-----------",
        f"cases generated       {report.total_cases}",
        f"bug verdicts          {report.bug_verdicts}"
        + (
            " ("
            + ", ".join(f"{k} {v}" for k, v in sorted(report.bug_kind_counts.items()))
            + ")"
            if report.bug_kind_counts
            else ""
        ),
        f"no-bug verdicts       {report.verdict_counts.get(VERDICT_NO_BUG, 0)}",
        f"inconclusive          {report.verdict_counts.get(VERDICT_INCONCLUSIVE, 0)}",
        f"never ran             {report.never_ran}",
        f"synthesis skips       {sum(report.skip_counts.values())}"
        + (
            " (" + ", ".join(f"{k} {v}" for k, v in sorted(report.skip_counts.items())) + ")"
            if report.skip_counts
            else ""
        ),
        f"pairs                 "
        + (
            ", ".join(f"{k} {v}" for k, v in sorted(report.pair_counts.items()))
            if report.pair_counts
            else "0"
        ),
        f"covered APIs          {report.covered_apis}",
        f"distinct API bugs     {report.api_bug_count}"
        + (f" ({report.suppressed_bugs} suppressed)" if report.suppressed_bugs else ""),
        f"trigger ratio         {_fmt(metrics.trigger_ratio_pct, '%')}",
        f"avg time to bug       {_fmt(metrics.avg_minutes_to_bug, ' min')}",
    ]
    return "\n".join(lines) + "\n"


def load_suppress_list(text: str) -> set[str]:
    """One `<target_api>#<oracle_fp>` per line; # comments and blanks ignored."""
    keys: set[str] = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        keys.add(line)
    return keys
