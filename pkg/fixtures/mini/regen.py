"""Regenerate the bundled mini-corpus fixture and its frozen expected outputs.

Run from the repository root after an editable install:

    python3 fixtures/mini/regen.py

Everything under fixtures/mini/ except this script is generated. The corpus
is defined here in code so the on-disk records always carry the canonical
encoding; the mock script is keyed by each synthesized case's fingerprint,
which this script computes by running the real pipeline in memory. The
expected/ directory pins the byte-exact stage outputs the end-to-end tests
compare against (timing side files are excluded on purpose).
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

MINI = Path(__file__).resolve().parent

from apikin import records
from apikin.cli import (
    PipelineConfig,
    stage_analyze,
    stage_evaluate,
    stage_generate,
    stage_ingest,
    stage_match,
    stage_report,
    synthesize_all,
)
from apikin.corpus import (
    ApiSignature,
    BugCase,
    CallStackTrace,
    Corpus,
    ExceptionSignature,
    HARD_CRASH,
    IssueRecord,
    MeasurementRecipe,
    ParamSpec,
    PerformanceOracle,
    ShapeTuple,
    SourceFunction,
    StatusOracle,
    StructuredCall,
    ValueOracle,
)
from apikin.records import args_digest, oracle_fingerprint

METRIC_TIME = "wall-time-seconds"
METRIC_MEMORY = "peak-memory-megabytes"


# ---------------------------------------------------------------------------
# corpus definition


def p(name: str, rank: int | None = None, default=None) -> ParamSpec:
    return ParamSpec(name=name, rank=rank, default=default)


def conv_optional(shape_rank: int, transpose: bool = False) -> tuple[ParamSpec, ...]:
    extra = (p("output_padding", default=0),) if transpose else ()
    return (
        p("stride", default=1),
        p("padding", default=0),
        *extra,
        p("groups", default=1),
        p("bias", default=True),
        p("input_shape", rank=shape_rank),
    )


def signatures() -> list[ApiSignature]:
    fw = "pytorch-like"
    conv_required = (p("in_channels"), p("out_channels"), p("kernel_size"))
    lazy_required = (p("out_channels"), p("kernel_size"))
    return [
        ApiSignature("torch.nn.Conv1d", conv_required, conv_optional(3), fw),
        ApiSignature("torch.nn.Conv2d", conv_required, conv_optional(4), fw),
        ApiSignature("torch.nn.Conv3d", conv_required, conv_optional(5), fw),
        ApiSignature("torch.nn.ConvTranspose2d", conv_required, conv_optional(4, True), fw),
        ApiSignature("torch.nn.LazyConv2d", lazy_required, conv_optional(4), fw),
        ApiSignature("torch.nn.LazyConvTranspose2d", lazy_required, conv_optional(4, True), fw),
        ApiSignature(
            "torch.nn.LPPool2d",
            (p("norm_type"), p("kernel_size")),
            (p("stride"), p("ceil_mode", default=False)),
            fw,
        ),
        ApiSignature("torch.nn.ReLU6", (), (p("inplace", default=False),), fw),
        ApiSignature(
            "torch.nn.Hardtanh",
            (),
            (p("min_val", default=-1.0), p("max_val", default=1.0), p("inplace", default=False)),
            fw,
        ),
        ApiSignature("torch.det", (p("input", rank=2),), (), fw),
        ApiSignature("torch.logdet", (p("input", rank=2),), (), fw),
        ApiSignature(
            "torch.gather",
            (p("input"), p("dim"), p("index")),
            (p("sparse_grad", default=False),),
            fw,
        ),
        ApiSignature(
            "torch.compat.gather",
            (p("input"), p("dim"), p("index")),
            (p("sparse_grad", default=False), p("validate_args", default=False)),
            fw,
        ),
    ]


def fn(name: str, io_args: str, callees: str) -> SourceFunction:
    return SourceFunction(name, frozenset(io_args.split()), frozenset(callees.split()))


def source_functions() -> list[SourceFunction]:
    conv_io = "input weight bias stride padding"
    conv_call = "at::convolution at::empty at::contiguous at::pad"
    pool_io = "self kernel_size stride padding"
    return [
        fn("aten::conv1d", conv_io, conv_call),
        fn("aten::conv2d", conv_io, conv_call),
        fn("aten::conv3d", conv_io, conv_call),
        fn("aten::conv_transpose2d", conv_io + " output_padding", conv_call + " at::output_padding_check"),
        fn("aten::hardtanh", "self min_val max_val", "at::clamp at::empty"),
        fn("aten::hardtanh_", "self min_val max_val", "at::clamp at::empty"),
        fn("aten::det", "self", "at::lu at::diag at::prod at::sum"),
        fn("aten::logdet", "self", "at::lu at::diag at::prod at::sum at::log"),
        fn("aten::gather", "self dim index sparse_grad", "at::index_select_impl at::bounds_check"),
        fn("aten::compat_gather", "self dim index sparse_grad", "at::index_select_impl at::bounds_check"),
        fn("aten::lp_pool2d", "self norm_type kernel_size", "at::pow at::avg_pool2d"),
        # near-miss pair: identical io but callee similarity below threshold
        fn("aten::max_pool2d", pool_io, "at::pool_impl at::empty"),
        fn("aten::avg_pool2d", pool_io, "at::pool_impl at::empty at::div"),
        fn("aten::softmax", "self dim", "at::exp at::sum_dim"),
        fn("aten::log_softmax", "self dim", "at::exp at::sum_dim at::log"),
        fn("aten::relu", "self", "at::clamp_min"),
        fn("aten::sigmoid", "self", "at::exp at::reciprocal"),
        fn("aten::tanh", "self", "at::exp_m1 at::div_impl"),
        fn("aten::dropout", "self p training", "at::bernoulli at::mul_impl"),
        fn("aten::embedding", "weight indices padding_idx", "at::index_select_impl"),
        fn("aten::batch_norm", "input weight bias running_mean running_var", "at::normalize_impl at::empty"),
    ]


def traces() -> list[CallStackTrace]:
    def t(api: str, frames: str) -> CallStackTrace:
        return CallStackTrace(api, frozenset(frames.split()))

    conv = "at::convolution at::cudnn_conv"
    return [
        t("torch.nn.Conv1d", f"aten::conv1d {conv}"),
        t("torch.nn.Conv2d", f"aten::conv2d {conv} malloc_impl"),
        t("torch.nn.Conv3d", f"aten::conv3d {conv} at::algo_select malloc_impl"),
        t("torch.nn.ConvTranspose2d", f"aten::conv_transpose2d {conv}"),
        t("torch.nn.LazyConv2d", f"aten::conv2d {conv} at::lazy_init"),
        t("torch.nn.LazyConvTranspose2d", f"aten::conv_transpose2d {conv} at::lazy_init"),
        t("torch.nn.LPPool2d", "aten::lp_pool2d at::pow at::avg_pool2d"),
        t("torch.nn.ReLU6", "aten::hardtanh at::clamp malloc_impl"),
        t("torch.nn.Hardtanh", "aten::hardtanh_ at::clamp"),
        t("torch.det", "aten::det at::lu_solve at::prod_impl"),
        t("torch.logdet", "aten::logdet at::lu_solve at::prod_impl"),
        t("torch.gather", "aten::gather at::index_select_impl at::bounds_check at::empty_strided"),
        t("torch.compat.gather", "aten::compat_gather at::index_select_impl at::bounds_check"),
    ]


def conv_recipe(groups: int) -> MeasurementRecipe:
    return MeasurementRecipe(
        metric=METRIC_TIME,
        repetitions=3,
        warmup_runs=1,
        body=(
            StructuredCall(
                "torch.nn.Conv2d",
                {
                    "in_channels": 3,
                    "out_channels": 64,
                    "kernel_size": 3,
                    "groups": groups,
                    "input_shape": ShapeTuple((2, 3, 8, 8)),
                },
            ),
        ),
    )


def relu_recipe(inplace: bool) -> MeasurementRecipe:
    return MeasurementRecipe(
        metric=METRIC_MEMORY,
        repetitions=3,
        warmup_runs=1,
        body=(StructuredCall("torch.nn.ReLU6", {"inplace": inplace}),),
    )


def bug_cases() -> list[BugCase]:
    return [
        BugCase(
            case_id="pt-1001/case",
            source_api="torch.nn.Conv2d",
            repro_call=StructuredCall(
                "torch.nn.Conv2d",
                {
                    "in_channels": 3,
                    "out_channels": 64,
                    "kernel_size": 3,
                    "groups": 3,
                    "input_shape": ShapeTuple((2, 3, 8, 8)),
                },
                setup_steps=("seed_all(0)",),
            ),
            bug_kind="performance",
            oracle=PerformanceOracle(
                baseline=conv_recipe(groups=1),
                subject=conv_recipe(groups=3),
                comparator="subject_exceeds_baseline",
                margin=1.05,
            ),
            origin_issue="pt-1001",
        ),
        BugCase(
            case_id="pt-1002/case",
            source_api="torch.nn.Conv2d",
            repro_call=StructuredCall(
                "torch.nn.Conv2d",
                {"in_channels": 512, "out_channels": 2048, "kernel_size": 1},
            ),
            bug_kind="status",
            oracle=StatusOracle(ExceptionSignature("RuntimeError", "expected <N> channels, got <N>")),
            origin_issue="pt-1002",
        ),
        BugCase(
            case_id="pt-1003/case",
            source_api="torch.det",
            repro_call=StructuredCall(
                "torch.det", {"input": [[1.5, 2.5], [2.5, 4.5]]}
            ),
            bug_kind="value",
            oracle=ValueOracle("nan"),
            origin_issue="pt-1003",
        ),
        BugCase(
            case_id="pt-1004/case",
            source_api="torch.nn.ReLU6",
            repro_call=StructuredCall("torch.nn.ReLU6", {"inplace": True}),
            bug_kind="performance",
            oracle=PerformanceOracle(
                baseline=relu_recipe(inplace=False),
                subject=relu_recipe(inplace=True),
                comparator="no_improvement",
                margin=1.05,
            ),
            origin_issue="pt-1004",
        ),
        BugCase(
            case_id="pt-1005/case",
            source_api="torch.gather",
            repro_call=StructuredCall(
                "torch.gather",
                {"input": [[1, 2], [3, 4]], "dim": 0, "index": [[0, 0], [1, 0]]},
                setup_steps=("probe = torch.gather",),
            ),
            bug_kind="status",
            oracle=StatusOracle(HARD_CRASH),
            origin_issue="pt-1005",
        ),
        BugCase(
            case_id="pt-1006/case",
            source_api="torch.nn.LazyConv2d",
            repro_call=StructuredCall(
                "torch.nn.LazyConv2d", {"out_channels": 8, "kernel_size": 2}
            ),
            bug_kind="status",
            oracle=StatusOracle(
                ExceptionSignature("ValueError", "LazyConv2d has uninitialized parameters")
            ),
            origin_issue="pt-1006",
        ),
    ]


def build_corpus() -> Corpus:
    corpus = Corpus()
    for sig in signatures():
        corpus.signatures[sig.name] = sig
    for func in source_functions():
        corpus.source_functions[func.name] = func
    for trace in traces():
        corpus.traces[trace.api_name] = trace
    for case in bug_cases():
        corpus.bug_cases[case.case_id] = case
    from apikin.corpus import SignaturePair

    corpus.signature_pairs = [
        SignaturePair("torch.nn.Conv2d", "torch.nn.LPPool2d", 0.82),
        SignaturePair("torch.nn.Conv2d", "torch.nn.Conv3d", 0.91),
    ]
    return corpus


# ---------------------------------------------------------------------------
# issues


def issues() -> list[IssueRecord]:
    def issue(issue_id, title, body, labels, comments, state="open", changes=0, blocks=(), hw=()):
        return IssueRecord(
            issue_id=issue_id,
            title=title,
            body=body,
            labels=frozenset(labels),
            comment_count=comments,
            state=state,
            linked_changes=changes,
            code_blocks=tuple(blocks),
            hardware_markers=frozenset(hw),
        )

    return [
        issue(
            "iss-001",
            "Conv2d rejects matching channel counts",
            "Conv2d raises at construction even though the channel math is right.\n"
            "Smallest repro I could find uses Conv2d directly.",
            {"bug", "kind:status"},
            comments=5,
            state="closed",
            changes=1,
            blocks=(
                ">>> from framework import nn\n"
                ">>> layer = Conv2d(512, 2048, 1)\n"
                "Traceback (most recent call last):\n"
                '  File "<stdin>", line 1, in <module>\n'
                "RuntimeError: expected 512 channels, got 256",
            ),
        ),
        issue(
            "iss-002",
            "Docs page renders wrong",
            "The install page shows stale output.",
            {"bug"},
            comments=8,
        ),
        issue(
            "iss-003",
            "How do I pick a kernel size?",
            "General question about layer setup.",
            {"question"},
            comments=9,
            blocks=("print(1)",),
        ),
        issue(
            "iss-004",
            "ReLU6 wrong on this laptop",
            "Only reproduces on my machine.",
            {"bug"},
            comments=7,
            blocks=("ReLU6()",),
            hw={"M1"},
        ),
        issue(
            "iss-005",
            "det returns zero",
            "torch.det gives 0 for my matrix.",
            {"crash"},
            comments=1,
            blocks=("torch.det(x)",),
        ),
        issue(
            "iss-006",
            "gather slow on big index",
            "Closed by the reporter, never fixed.",
            {"bug"},
            comments=4,
            state="closed",
            changes=0,
            blocks=("y = torch.gather(x, 0, idx)",),
        ),
        issue(
            "iss-007",
            "ReLU6 inplace gives no speedup",
            "Timing the inplace path of ReLU6 shows the same cost as the default.\n"
            "Expected the inplace flag of ReLU6 to save a copy.",
            {"bug", "kind:performance"},
            comments=6,
            blocks=(
                "import time\n"
                "t0 = time.perf_counter()\n"
                "net = ReLU6(inplace=True)\n"
                "elapsed = time.perf_counter() - t0\n"
                "print(elapsed)",
            ),
        ),
        issue(
            "iss-008",
            "Conv2d breaks with many positional arguments",
            "Passing a long positional list to Conv2d brings the process down.",
            {"bug", "kind:status"},
            comments=3,
            blocks=("layer = Conv2d(1, 2, 3, 4, 5, 6, 7, 8, 9)",),
        ),
    ]


# ---------------------------------------------------------------------------
# mock runner scenarios, keyed by synthesized case id


def _time_measurements(baseline: list[float], subject: list[float]) -> dict:
    return {
        "baseline": {"metric": METRIC_TIME, "samples": baseline},
        "subject": {"metric": METRIC_TIME, "samples": subject},
    }


SCENARIOS: dict[str, dict] = {
    # grouped-conv overhead ported across the conv family
    "pt-1001/case->torch.nn.Conv1d": {
        "behavior": "respond",
        "response": {
            "status": "completed",
            "measurements": _time_measurements([5.0, 5.02, 4.98], [5.1, 5.08, 5.12]),
        },
    },
    "pt-1001/case->torch.nn.Conv3d": {
        "behavior": "respond",
        "response": {
            "status": "completed",
            "measurements": _time_measurements([8.91, 8.9, 8.93], [11.79, 11.7, 11.85]),
        },
    },
    "pt-1001/case->torch.nn.ConvTranspose2d": {"behavior": "sleep", "sleep_s": 9999.0},
    "pt-1001/case->torch.nn.LazyConv2d": {
        "behavior": "respond",
        "response": {
            "status": "completed",
            "measurements": _time_measurements([7.0, 7.01, 6.99], [7.2, 7.18, 7.22]),
        },
    },
    "pt-1001/case->torch.nn.LazyConvTranspose2d": {
        "behavior": "respond",
        "response": {
            "status": "completed",
            "measurements": _time_measurements([20.09, 20.05, 20.11], [46.75, 46.7, 46.8]),
        },
    },
    # channel-mismatch exception ported across the conv family
    "pt-1002/case->torch.nn.Conv1d": {"behavior": "respond", "response": {"status": "completed"}},
    "pt-1002/case->torch.nn.Conv3d": {
        "behavior": "respond",
        "response": {
            "status": "raised",
            "exception": {"type": "RuntimeError", "message": "expected 16 channels, got 8"},
        },
    },
    "pt-1002/case->torch.nn.ConvTranspose2d": {
        "behavior": "respond",
        "response": {
            "status": "raised",
            "exception": {"type": "ValueError", "message": "output padding must be smaller than stride"},
        },
    },
    "pt-1002/case->torch.nn.LazyConv2d": {
        "behavior": "respond",
        "response": {
            "status": "raised",
            "exception": {"type": "RuntimeError", "message": "expected 32 channels, got 4"},
        },
    },
    "pt-1002/case->torch.nn.LazyConvTranspose2d": {
        "behavior": "respond",
        "response": {"status": "completed"},
    },
    # singular-matrix nan ported from det to logdet
    "pt-1003/case->torch.logdet": {
        "behavior": "respond",
        "response": {"status": "completed", "flags": ["nan"]},
    },
    # inplace no-improvement ported from ReLU6 to Hardtanh
    "pt-1004/case->torch.nn.Hardtanh": {
        "behavior": "respond",
        "response": {
            "status": "completed",
            "measurements": {
                "baseline": {"metric": METRIC_MEMORY, "samples": [40.43, 40.43, 40.43]},
                "subject": {"metric": METRIC_MEMORY, "samples": [40.43, 40.43, 40.43]},
            },
        },
    },
    # hard crash ported from gather to its compat twin
    "pt-1005/case->torch.compat.gather": {"behavior": "die"},
    # lazy-module exception that does not reproduce on the transpose twin
    "pt-1006/case->torch.nn.LazyConvTranspose2d": {
        "behavior": "respond",
        "response": {"status": "completed"},
    },
}

EXPECTED_VERDICTS: dict[str, str] = {
    "pt-1001/case->torch.nn.Conv1d": "no-bug",
    "pt-1001/case->torch.nn.Conv3d": "bug",
    "pt-1001/case->torch.nn.ConvTranspose2d": "inconclusive",
    "pt-1001/case->torch.nn.LazyConv2d": "no-bug",
    "pt-1001/case->torch.nn.LazyConvTranspose2d": "bug",
    "pt-1002/case->torch.nn.Conv1d": "no-bug",
    "pt-1002/case->torch.nn.Conv3d": "bug",
    "pt-1002/case->torch.nn.ConvTranspose2d": "no-bug",
    "pt-1002/case->torch.nn.LazyConv2d": "bug",
    "pt-1002/case->torch.nn.LazyConvTranspose2d": "no-bug",
    "pt-1003/case->torch.logdet": "bug",
    "pt-1004/case->torch.nn.Hardtanh": "bug",
    "pt-1005/case->torch.compat.gather": "bug",
    "pt-1006/case->torch.nn.LazyConvTranspose2d": "no-bug",
}


# ---------------------------------------------------------------------------
# generation


def main() -> int:
    corpus = build_corpus()
    records.save_corpus(MINI / "corpus.jsonl", corpus)
    records.write_records(MINI / "issues.jsonl", (records.encode_issue(i) for i in issues()))

    config = PipelineConfig(
        noise_patterns=("*malloc*",),
        timeout_s=5.0,
        out_dir=MINI / "expected",
        runner_cmd=f"mock:{MINI / 'mock_script.jsonl'}",
    )

    (MINI / "config.txt").write_text(
        "# mini corpus run configuration\n"
        "noise_patterns = *malloc*\n"
        "timeout_s = 5\n"
        "margin = 1.05\n",
        encoding="utf-8",
    )

    groups = stage_analyze(config, corpus)
    pairs = stage_match(config, corpus, groups)
    cases, skips = synthesize_all(corpus, pairs)

    case_ids = {c.case_id for c in cases}
    missing = case_ids.symmetric_difference(SCENARIOS)
    if missing:
        print(f"scenario table out of sync with synthesis: {sorted(missing)}", file=sys.stderr)
        return 1

    mock_records = []
    for case in sorted(cases, key=lambda c: c.case_id):
        scenario = SCENARIOS[case.case_id]
        rec = {
            "kind": "mock_response",
            "api": case.target_api,
            "digest": args_digest(case.call.bound_args),
            "behavior": scenario["behavior"],
        }
        if "sleep_s" in scenario:
            rec["sleep_s"] = scenario["sleep_s"]
        if "response" in scenario:
            rec["response"] = scenario["response"]
        mock_records.append(rec)
    mock_records.append({"kind": "mock_default", "response": {"status": "completed"}})
    records.write_records(MINI / "mock_script.jsonl", mock_records)

    # full pipeline into expected/, then drop the timing-dependent outputs
    expected = MINI / "expected"
    if expected.exists():
        shutil.rmtree(expected)
    stage_ingest(config, [str(MINI / "corpus.jsonl")])
    stage_analyze(config, corpus)
    stage_match(config, corpus, groups)
    gen_cases, gen_skips = stage_generate(config, corpus, pairs)
    results, verdicts = stage_evaluate(config, corpus, gen_cases)
    report, metrics = stage_report(config)
    (expected / "timings.kv").unlink()
    (expected / "summary.txt").unlink()

    for case_id, want in EXPECTED_VERDICTS.items():
        got = verdicts[case_id].kind
        if got != want:
            print(f"verdict drift: {case_id} expected {want}, got {got}", file=sys.stderr)
            return 1
    if len(gen_skips) != 4 or {s.reason for s in gen_skips} != {"infeasible-direction"}:
        print(f"skip drift: {[(s.target_api, s.reason) for s in gen_skips]}", file=sys.stderr)
        return 1
    if report.covered_apis != 12 or report.api_bug_count != 7:
        print(
            f"report drift: covered={report.covered_apis} api_bugs={report.api_bug_count}",
            file=sys.stderr,
        )
        return 1
    if metrics.trigger_ratio_pct is None or abs(metrics.trigger_ratio_pct - 50.0) > 1e-9:
        print(f"trigger ratio drift: {metrics.trigger_ratio_pct}", file=sys.stderr)
        return 1

    # developer-rejected bug example: the conv family timing regression on Conv3d
    conv3d_perf = next(
        c for c in gen_cases if c.case_id == "pt-1001/case->torch.nn.Conv3d"
    )
    key = f"torch.nn.Conv3d#{oracle_fingerprint(conv3d_perf.oracle)}"
    (MINI / "suppress.txt").write_text(
        "# developer-rejected behaviors, one <target_api>#<oracle_fp> per line\n" + key + "\n",
        encoding="utf-8",
    )

    print(
        f"ok: {len(gen_cases)} cases, {len(gen_skips)} skips, "
        f"{report.bug_verdicts} bug verdicts, {report.api_bug_count} api bugs, "
        f"{len(pairs)} pairs, covered={report.covered_apis}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
