"""Pipeline command-line interface.

Stages read and write line-delimited JSON records under one output directory:
ingest -> corpus.jsonl, sample -> sample_cases.jsonl + sample_report.jsonl,
analyze -> groups.jsonl, match -> pairs.jsonl, generate -> cases.jsonl,
evaluate -> results.jsonl + verdicts.jsonl, report -> report.jsonl +
summary.txt, sweep-beta -> sweep.jsonl + sweep.txt. Stage wall times live in
timings.kv so the record outputs stay byte-identical across re-runs.

Exit codes: 0 success, 1 stage failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

from . import analyzer, generator, matcher, records, report as report_mod, sampler
from .config import ConfigError, PipelineConfig, load_config, parse_kv_text
from .corpus import Corpus, CorpusError, oracle_kind
from .evaluator import VERDICT_BUG, Verdict, decode_verdict, encode_verdict, evaluate
from .generator import (
    RenderTemplate,
    SynthesisSkip,
    SynthesizedCase,
    TemplateError,
    load_template,
    packaged_template,
    render,
)
from .runner import (
    ProtocolError,
    RunnerDead,
    RunnerRequest,
    VersionMismatch,
    open_session,
    request_for_case,
)

log = logging.getLogger(__name__)

TIMINGS_FILE = "timings.kv"


class PipelineError(Exception):
    """A stage failed; the CLI exits with code 1."""


# ---------------------------------------------------------------------------
# shared I/O helpers


def _out(config: PipelineConfig, name: str) -> Path:
    return config.out_dir / name


def _read_timings(config: PipelineConfig) -> dict[str, float]:
    path = _out(config, TIMINGS_FILE)
    if not path.exists():
        return {}
    raw = parse_kv_text(path.read_text(encoding="utf-8"), str(path))
    return {k: float(v) for k, v in raw.items()}


def _write_timing(config: PipelineConfig, stage: str, seconds: float) -> None:
    timings = _read_timings(config)
    timings[stage] = seconds
    text = "".join(f"{k} = {v:.6f}\n" for k, v in sorted(timings.items()))
    records.write_text(_out(config, TIMINGS_FILE), text)


def load_groups(path: Path) -> list[analyzer.FunctionGroup]:
    groups = []
    for fname, lineno, rec in records.read_records(path):
        if rec.get("kind") != "function_group":
            continue
        groups.append(analyzer.decode_group(rec, f"{fname}:{lineno}"))
    return groups


def load_pairs(path: Path) -> list[matcher.CandidatePair]:
    pairs = []
    for fname, lineno, rec in records.read_records(path):
        if rec.get("kind") != "candidate_pair":
            continue
        pairs.append(matcher.decode_pair(rec, f"{fname}:{lineno}"))
    return pairs


def load_cases(path: Path) -> tuple[list[SynthesizedCase], list[SynthesisSkip]]:
    cases: list[SynthesizedCase] = []
    skips: list[SynthesisSkip] = []
    for fname, lineno, rec in records.read_records(path):
        kind = rec.get("kind")
        if kind == "synthesized_case":
            cases.append(generator.decode_synthesized(rec, f"{fname}:{lineno}"))
        elif kind == "synthesis_skip":
            skips.append(
                SynthesisSkip(
                    source_case_id=str(rec.get("source_case_id", "")),
                    target_api=str(rec.get("target_api", "")),
                    reason=str(rec.get("reason", "")),
                    detail=str(rec.get("detail", "")),
                )
            )
    return cases, skips


def load_verdicts(path: Path) -> dict[str, Verdict]:
    verdicts: dict[str, Verdict] = {}
    for _, _, rec in records.read_records(path):
        if rec.get("kind") != "verdict":
            continue
        case_id, verdict = decode_verdict(rec)
        verdicts[case_id] = verdict
    return verdicts


# ---------------------------------------------------------------------------
# stages


def stage_ingest(config: PipelineConfig, corpus_paths: Sequence[str]) -> Corpus:
    corpus = records.load_corpus([Path(p) for p in corpus_paths])
    records.save_corpus(_out(config, "corpus.jsonl"), corpus)
    return corpus


def stage_sample(
    config: PipelineConfig, corpus: Corpus, issue_paths: Sequence[str]
) -> tuple[int, int]:
    """Screen issues, extract bug cases. Returns (kept, extracted)."""
    issues = list(corpus.issues)
    for path in issue_paths:
        extra = records.load_corpus(Path(path))
        issues.extend(extra.issues)
    issues.sort(key=lambda i: i.issue_id)
    policy = config.sampler_policy()
    api_names = sorted(corpus.signatures)

    report_records: list[dict[str, Any]] = []
    case_records: list[dict[str, Any]] = []
    kept = extracted = 0
    for issue in issues:
        reason = sampler.screen_issue(issue, policy)
        entry: dict[str, Any] = {
            "kind": "issue_screen",
            "issue_id": issue.issue_id,
            "verdict": "discard" if reason else "keep",
        }
        if reason:
            entry["reason"] = reason
            report_records.append(entry)
            continue
        kept += 1
        api = sampler.identify_problematic_api(issue, api_names)
        if api is None:
            entry["extraction"] = "api-not-found"
            report_records.append(entry)
            continue
        sig = corpus.signatures[api]
        entry["api"] = api
        blocks = sampler.blocks_mentioning(issue, sig)
        if blocks > 1:
            entry["multi_block"] = blocks
        hint = sampler.kind_hint(issue)
        if hint is None:
            entry["extraction"] = "no-kind-hint"
            report_records.append(entry)
            continue
        try:
            case = sampler.extract_bug_case(issue, sig, hint, policy)
        except sampler.ExtractionFailure as exc:
            entry["extraction"] = exc.reason
            if exc.detail:
                entry["detail"] = exc.detail
            report_records.append(entry)
            continue
        extracted += 1
        entry["extraction"] = "ok"
        entry["case_id"] = case.case_id
        report_records.append(entry)
        case_records.append(records.encode_bug_case(case))

    records.write_records(_out(config, "sample_cases.jsonl"), case_records)
    records.write_records(_out(config, "sample_report.jsonl"), report_records)
    return kept, extracted


def stage_analyze(config: PipelineConfig, corpus: Corpus) -> list[analyzer.FunctionGroup]:
    groups = analyzer.cluster_functions(corpus, config.thresholds())
    records.write_records(_out(config, "groups.jsonl"), (analyzer.encode_group(g) for g in groups))
    return groups


def stage_match(
    config: PipelineConfig, corpus: Corpus, groups: Sequence[analyzer.FunctionGroup]
) -> list[matcher.CandidatePair]:
    pairs = matcher.match_pairs(
        corpus, groups, config.thresholds(), noise_patterns=config.noise_patterns
    )
    records.write_records(_out(config, "pairs.jsonl"), (matcher.encode_pair(p) for p in pairs))
    return pairs


def _template_for(
    dialect: str, override: Optional[RenderTemplate], cache: dict[str, RenderTemplate]
) -> RenderTemplate:
    if override is not None:
        return override
    if dialect not in cache:
        cache[dialect] = packaged_template(dialect)
    return cache[dialect]


def synthesize_all(
    corpus: Corpus,
    pairs: Sequence[matcher.CandidatePair],
    template_override: Optional[RenderTemplate] = None,
) -> tuple[list[SynthesizedCase], list[SynthesisSkip]]:
    """Port every bug case across every accepted pair touching its API."""
    by_endpoint: dict[str, list[matcher.CandidatePair]] = {}
    for pair in pairs:
        if not pair.accepted:
            continue
        by_endpoint.setdefault(pair.source_api, []).append(pair)
        by_endpoint.setdefault(pair.target_api, []).append(pair)

    cases: list[SynthesizedCase] = []
    skips: list[SynthesisSkip] = []
    template_cache: dict[str, RenderTemplate] = {}
    for case_id in sorted(corpus.bug_cases):
        case = corpus.bug_cases[case_id]
        partners = by_endpoint.get(case.source_api, [])
        oriented = sorted(
            (matcher.orient(p, case.source_api) for p in partners),
            key=lambda p: p.target_api,
        )
        for pair in oriented:
            result = generator.synthesize(case, pair, corpus)
            if isinstance(result, SynthesisSkip):
                skips.append(result)
                continue
            dialect = corpus.signatures[result.target_api].framework
            template = _template_for(dialect, template_override, template_cache)
            result.rendered = render(result, template)
            cases.append(result)
    return cases, skips


def stage_generate(
    config: PipelineConfig,
    corpus: Corpus,
    pairs: Sequence[matcher.CandidatePair],
    template_path: Optional[str] = None,
) -> tuple[list[SynthesizedCase], list[SynthesisSkip]]:
    started = time.perf_counter()
    override = load_template(template_path) if template_path else None
    cases, skips = synthesize_all(corpus, pairs, override)
    out: list[dict[str, Any]] = [generator.encode_synthesized(c) for c in cases]
    out.extend(generator.encode_skip(s) for s in skips)
    records.write_records(_out(config, "cases.jsonl"), out)
    _write_timing(config, "generate", time.perf_counter() - started)
    return cases, skips


def evaluate_cases(
    config: PipelineConfig, corpus: Corpus, cases: Sequence[SynthesizedCase]
) -> tuple[dict[str, Any], dict[str, Verdict]]:
    """Run cases through the configured runner and classify the outcomes.

    Performance-oracle cases get a dedicated session with no concurrent
    sibling; everything else shares round-robin sessions (config.jobs of
    them). Runner failures become Inconclusive verdicts, never crashes.
    """
    if not config.runner_cmd:
        raise PipelineError("evaluate needs runner_cmd (use mock:<script> for replay)")
    api_names = sorted(corpus.signatures)
    ordered = sorted(cases, key=lambda c: c.case_id)
    perf = [c for c in ordered if oracle_kind(c.oracle) == "performance"]
    plain = [c for c in ordered if oracle_kind(c.oracle) != "performance"]

    results: dict[str, Any] = {}
    verdicts: dict[str, Verdict] = {}

    def run_batch(batch: Sequence[SynthesizedCase]) -> None:
        if not batch:
            return
        session = open_session(config.runner_cmd, api_names)
        try:
            for case in batch:
                request = request_for_case(case, config.timeout_s)
                try:
                    result = session.run_case(request)
                except (ProtocolError, RunnerDead, VersionMismatch) as exc:
                    log.warning("runner failure on %s: %s", case.case_id, exc)
                    verdicts[case.case_id] = Verdict(
                        "inconclusive", reason=f"runner-failure: {type(exc).__name__}"
                    )
                    continue
                results[case.case_id] = result
                verdicts[case.case_id] = evaluate(case, result, api_names)
        finally:
            session.close()

    if config.jobs > 1 and len(plain) > 1:
        import concurrent.futures

        slices = [plain[i :: config.jobs] for i in range(config.jobs)]
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(run_batch, s) for s in slices if s]
            for f in futures:
                f.result()
    else:
        run_batch(plain)
    run_batch(perf)
    return results, verdicts


def stage_evaluate(
    config: PipelineConfig, corpus: Corpus, cases: Sequence[SynthesizedCase]
) -> tuple[dict[str, Any], dict[str, Verdict]]:
    started = time.perf_counter()
    results, verdicts = evaluate_cases(config, corpus, cases)
    result_records = []
    for case_id in sorted(results):
        result = results[case_id]
        rec: dict[str, Any] = {
            "kind": "execution_result",
            "case_id": case_id,
            "status": result.status,
            "flags": sorted(result.flags),
            "wall_time_s": result.wall_time_s,
        }
        if result.exception is not None:
            rec["exception"] = {
                "type": result.exception.exc_type,
                "message": result.exception.message,
            }
        if result.measurements:
            rec["measurements"] = {
                slot: {"metric": m.metric, "samples": list(m.samples)}
                for slot, m in sorted(result.measurements.items())
            }
        result_records.append(rec)
    records.write_records(_out(config, "results.jsonl"), result_records)
    records.write_records(
        _out(config, "verdicts.jsonl"),
        (encode_verdict(cid, verdicts[cid]) for cid in sorted(verdicts)),
    )
    _write_timing(config, "evaluate", time.perf_counter() - started)
    return results, verdicts


def stage_report(config: PipelineConfig) -> tuple[report_mod.RunReport, report_mod.Metrics]:
    cases, skips = load_cases(_out(config, "cases.jsonl"))
    verdicts = load_verdicts(_out(config, "verdicts.jsonl"))
    pairs_path = _out(config, "pairs.jsonl")
    pairs = load_pairs(pairs_path) if pairs_path.exists() else []
    timings = _read_timings(config)
    detection = None
    if "generate" in timings and "evaluate" in timings:
        detection = timings["generate"] + timings["evaluate"]
    suppress: set[str] = set()
    if config.suppress_list is not None:
        if not config.suppress_list.exists():
            raise PipelineError(f"suppress list not found: {config.suppress_list}")
        suppress = report_mod.load_suppress_list(
            config.suppress_list.read_text(encoding="utf-8")
        )
    run_report = report_mod.build_report(
        cases, skips, verdicts, pairs, detection_wall_s=detection, suppress=suppress
    )
    metrics = report_mod.compute_metrics(run_report)
    records.write_records(_out(config, "report.jsonl"), report_mod.report_records(run_report))
    records.write_text(_out(config, "summary.txt"), report_mod.render_summary(run_report, metrics))
    return run_report, metrics


def sweep_beta(
    config: PipelineConfig,
    corpus: Corpus,
    groups: Sequence[analyzer.FunctionGroup],
    betas: Sequence[float],
    template_path: Optional[str] = None,
) -> list[dict[str, Any]]:
    """Re-run match, generate, evaluate across a beta grid; report only.

    Coverage (APIs in accepted context pairs) is non-increasing in beta; the
    effective target ratio is reported without any monotonicity claim.
    """
    override = load_template(template_path) if template_path else None
    rows: list[dict[str, Any]] = []
    for beta in betas:
        cfg = replace(config, beta=beta)
        pairs = matcher.match_pairs(
            corpus, groups, cfg.thresholds(), noise_patterns=cfg.noise_patterns
        )
        cases, _ = synthesize_all(corpus, pairs, override)
        _, verdicts = evaluate_cases(cfg, corpus, cases)

        context_accepted = [
            p for p in pairs if p.provenance == matcher.PROVENANCE_CONTEXT and p.accepted
        ]
        covered: set[str] = set()
        for p in context_accepted:
            covered.add(p.source_api)
            covered.add(p.target_api)
        context_keys = {frozenset((p.source_api, p.target_api)) for p in context_accepted}

        matched_targets: set[str] = set()
        for case in corpus.bug_cases.values():
            for p in context_accepted:
                if case.source_api in (p.source_api, p.target_api):
                    other = p.target_api if case.source_api == p.source_api else p.source_api
                    matched_targets.add(other)
        bug_targets = {
            c.target_api
            for c in cases
            if verdicts.get(c.case_id) is not None
            and verdicts[c.case_id].kind == VERDICT_BUG
            and frozenset((c.source_api, c.target_api)) in context_keys
        }
        ratio = (
            100.0 * len(bug_targets) / len(matched_targets) if matched_targets else None
        )
        rows.append(
            {
                "kind": "beta_sweep_row",
                "beta": beta,
                "covered_apis": len(covered),
                "context_pairs": len(context_accepted),
                "cases": len(cases),
                "bug_verdicts": sum(1 for v in verdicts.values() if v.kind == VERDICT_BUG),
                "effective_target_ratio_pct": ratio,
            }
        )
    return rows


def stage_sweep(
    config: PipelineConfig,
    corpus: Corpus,
    betas: Sequence[float],
    template_path: Optional[str] = None,
) -> list[dict[str, Any]]:
    groups = analyzer.cluster_functions(corpus, config.thresholds())
    rows = sweep_beta(config, corpus, groups, betas, template_path)
    records.write_records(_out(config, "sweep.jsonl"), rows)
    lines = ["beta  covered  pairs  cases  bugs  effective-ratio"]
    for row in rows:
        ratio = row["effective_target_ratio_pct"]
        ratio_text = "undefined" if ratio is None else f"{ratio:.2f}%"
        lines.append(
            f"{row['beta']:<5.2f} {row['covered_apis']:<8} {row['context_pairs']:<6} "
            f"{row['cases']:<6} {row['bug_verdicts']:<5} {ratio_text}"
        )
    records.write_text(_out(config, "sweep.txt"), "\n".join(lines) + "\n")
    return rows


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--out", help="output directory (default: out)")
    parser.add_argument("--alpha-io", type=float, dest="alpha_io")
    parser.add_argument("--alpha-call", type=float, dest="alpha_call")
    parser.add_argument("--beta", type=float, help="context threshold override for all suites")
    parser.add_argument("--runner-cmd", dest="runner_cmd")
    parser.add_argument("--timeout-s", type=float, dest="timeout_s")
    parser.add_argument("--margin", type=float)
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--noise-patterns", dest="noise_patterns")
    parser.add_argument("--suppress-list", dest="suppress_list")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apikin",
        description="Find bugs by porting confirmed bug cases to analogous APIs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate corpus files and write the canonical corpus")
    p.add_argument("--corpus", nargs="+", required=True)
    _add_common(p)

    p = sub.add_parser("sample", help="screen issues and extract bug cases")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--issues", nargs="*", default=[])
    _add_common(p)

    p = sub.add_parser("analyze", help="group analogous source functions")
    p.add_argument("--corpus", nargs="+", required=True)
    _add_common(p)

    p = sub.add_parser("match", help="match analogous API pairs")
    p.add_argument("--corpus", nargs="+", required=True)
    _add_common(p)

    p = sub.add_parser("generate", help="synthesize and render test cases")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--template", help="render template path overriding packaged dialects")
    _add_common(p)

    p = sub.add_parser("evaluate", help="execute rendered cases and classify outcomes")
    p.add_argument("--corpus", nargs="+", required=True)
    _add_common(p)

    p = sub.add_parser("report", help="aggregate verdicts into report.jsonl and summary.txt")
    _add_common(p)

    p = sub.add_parser("sweep-beta", help="re-run the detection phase across a beta grid")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--betas", help="comma-separated grid (default 0.1..0.9)")
    p.add_argument("--template", help="render template path overriding packaged dialects")
    _add_common(p)

    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides: dict[str, Optional[str]] = {}
    for key in ("alpha_io", "alpha_call", "beta", "runner_cmd", "timeout_s", "margin", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "noise_patterns", None) is not None:
        overrides["noise_patterns"] = args.noise_patterns
    if getattr(args, "suppress_list", None) is not None:
        overrides["suppress_list"] = args.suppress_list
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    return load_config(getattr(args, "config", None), os.environ, overrides)


def _parse_betas(raw: Optional[str]) -> list[float]:
    if not raw:
        return [round(0.1 * i, 1) for i in range(1, 10)]
    try:
        betas = [float(b) for b in raw.split(",") if b.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --betas value: {raw!r}") from exc
    if not betas or not all(0.0 <= b <= 1.0 for b in betas):
        raise ConfigError(f"betas must be in [0, 1]: {raw!r}")
    return betas


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        return _dispatch(args, config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, CorpusError, TemplateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace, config: PipelineConfig) -> int:
    command = args.command
    if command == "ingest":
        corpus = stage_ingest(config, args.corpus)
        print(
            f"ingested {len(corpus.signatures)} signatures, "
            f"{len(corpus.source_functions)} functions, {len(corpus.traces)} traces, "
            f"{len(corpus.bug_cases)} bug cases, {len(corpus.issues)} issues"
        )
        return 0
    corpus = records.load_corpus([Path(p) for p in args.corpus]) if hasattr(args, "corpus") else None
    if command == "sample":
        assert corpus is not None
        kept, extracted = stage_sample(config, corpus, args.issues)
        print(f"kept {kept} issues, extracted {extracted} bug cases")
        return 0
    if command == "analyze":
        assert corpus is not None
        groups = stage_analyze(config, corpus)
        print(f"found {len(groups)} function groups")
        return 0
    if command == "match":
        assert corpus is not None
        groups = load_groups(_out(config, "groups.jsonl"))
        pairs = stage_match(config, corpus, groups)
        accepted = sum(1 for p in pairs if p.accepted)
        print(f"matched {len(pairs)} pairs ({accepted} accepted)")
        return 0
    if command == "generate":
        assert corpus is not None
        pairs = load_pairs(_out(config, "pairs.jsonl"))
        cases, skips = stage_generate(config, corpus, pairs, args.template)
        print(f"synthesized {len(cases)} cases ({len(skips)} skips)")
        return 0
    if command == "evaluate":
        assert corpus is not None
        cases, _ = load_cases(_out(config, "cases.jsonl"))
        results, verdicts = stage_evaluate(config, corpus, cases)
        bugs = sum(1 for v in verdicts.values() if v.kind == VERDICT_BUG)
        print(f"evaluated {len(verdicts)} cases ({bugs} bug verdicts)")
        return 0
    if command == "report":
        run_report, metrics = stage_report(config)
        print(report_mod.render_summary(run_report, metrics), end="")
        return 0
    if command == "sweep-beta":
        assert corpus is not None
        rows = stage_sweep(config, corpus, _parse_betas(args.betas), args.template)
        print((_out(config, "sweep.txt")).read_text(encoding="utf-8"), end="")
        return 0
    raise PipelineError(f"unknown command {command!r}")


if __name__ == "__main__":
    sys.exit(main())
