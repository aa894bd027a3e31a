"""On-disk record format: UTF-8 line-delimited JSON with a "kind" discriminator.

Corpus kinds: signature, source_function, trace, bug_case, signature_pair,
issue. Pipeline stages add function_group, candidate_pair, synthesized_case,
execution_result, verdict (and the mock runner reads mock_response /
mock_default). Unknown kinds are rejected by load_corpus.

Serialization is canonical: sorted keys, compact separators, sorted sets.
save/load round-trips are structurally exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

from .corpus import (
    ApiSignature,
    BugCase,
    CallStackTrace,
    Corpus,
    DuplicateIdError,
    ExceptionSignature,
    IssueRecord,
    MeasurementRecipe,
    OracleSpec,
    ParamSpec,
    ParseError,
    PerformanceOracle,
    ShapeTuple,
    SignaturePair,
    SourceFunction,
    StatusOracle,
    StructuredCall,
    ValueOracle,
    cross_validate,
)

CORPUS_KINDS = ("signature", "source_function", "trace", "bug_case", "signature_pair", "issue")


# ---------------------------------------------------------------------------
# low-level json helpers


def dump_record(obj: dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def read_records(path: Path | str) -> Iterator[tuple[str, int, dict[str, Any]]]:
    """Yield (path, line_number, record) for every non-blank line."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: record must be a JSON object")
            yield str(path), lineno, obj


def write_records(path: Path | str, records: Iterable[dict[str, Any]]) -> None:
    """Write records atomically: write to a temp file, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(dump_record(rec))
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path: Path | str, text: str) -> None:
    """Atomic plain-text write."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# values


def encode_value(value: Any) -> Any:
    if isinstance(value, ShapeTuple):
        return {"shape": list(value.dims)}
    if isinstance(value, list):
        return [encode_value(v) for v in value]
    if isinstance(value, (bool, int, float, str)):
        return value
    raise ParseError(f"unsupported value {value!r}")


def decode_value(obj: Any, ctx: str = "") -> Any:
    if isinstance(obj, dict):
        if set(obj) != {"shape"}:
            raise ParseError(f"{ctx}: value objects must have exactly a 'shape' key")
        try:
            return ShapeTuple(tuple(obj["shape"]))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{ctx}: bad shape-tuple: {exc}") from exc
    if isinstance(obj, list):
        return [decode_value(v, ctx) for v in obj]
    if isinstance(obj, (bool, int, float, str)):
        return obj
    raise ParseError(f"{ctx}: unsupported value {obj!r}")


# ---------------------------------------------------------------------------
# calls, recipes, oracles


def encode_call(call: StructuredCall) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "api": call.api_name,
        "args": {k: encode_value(v) for k, v in call.bound_args.items()},
    }
    if call.setup_steps:
        obj["setup"] = list(call.setup_steps)
    if call.measurement_recipe is not None:
        obj["recipe"] = encode_recipe(call.measurement_recipe)
    return obj


def decode_call(obj: Any, ctx: str) -> StructuredCall:
    if not isinstance(obj, dict) or "api" not in obj or "args" not in obj:
        raise ParseError(f"{ctx}: call must be an object with 'api' and 'args'")
    args = obj["args"]
    if not isinstance(args, dict):
        raise ParseError(f"{ctx}: call args must be an object")
    setup = obj.get("setup", [])
    if not isinstance(setup, list) or not all(isinstance(s, str) for s in setup):
        raise ParseError(f"{ctx}: call setup must be a list of strings")
    recipe = None
    if obj.get("recipe") is not None:
        recipe = decode_recipe(obj["recipe"], ctx)
    return StructuredCall(
        api_name=str(obj["api"]),
        bound_args={str(k): decode_value(v, ctx) for k, v in args.items()},
        setup_steps=tuple(setup),
        measurement_recipe=recipe,
    )


def encode_recipe(recipe: MeasurementRecipe) -> dict[str, Any]:
    return {
        "metric": recipe.metric,
        "repetitions": recipe.repetitions,
        "warmup_runs": recipe.warmup_runs,
        "body": [encode_call(c) for c in recipe.body],
    }


def decode_recipe(obj: Any, ctx: str) -> MeasurementRecipe:
    if not isinstance(obj, dict):
        raise ParseError(f"{ctx}: recipe must be an object")
    try:
        return MeasurementRecipe(
            metric=str(obj.get("metric", "")),
            repetitions=int(obj.get("repetitions", 0)),
            warmup_runs=int(obj.get("warmup_runs", 0)),
            body=tuple(decode_call(c, ctx) for c in obj.get("body", [])),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{ctx}: bad recipe: {exc}") from exc


def encode_oracle(oracle: OracleSpec) -> dict[str, Any]:
    if isinstance(oracle, StatusOracle):
        return {
            "oracle": "status",
            "exception": {"type": oracle.signature.exc_type, "message": oracle.signature.message},
        }
    if isinstance(oracle, ValueOracle):
        obj: dict[str, Any] = {"oracle": "value", "pattern": oracle.pattern}
        if oracle.detail is not None:
            obj["detail"] = oracle.detail
        return obj
    if isinstance(oracle, PerformanceOracle):
        return {
            "oracle": "performance",
            "baseline": encode_recipe(oracle.baseline),
            "subject": encode_recipe(oracle.subject),
            "comparator": oracle.comparator,
            "margin": oracle.margin,
        }
    raise ParseError(f"not an oracle: {oracle!r}")


def decode_oracle(obj: Any, ctx: str) -> OracleSpec:
    if not isinstance(obj, dict) or "oracle" not in obj:
        raise ParseError(f"{ctx}: oracle must be an object with an 'oracle' tag")
    tag = obj["oracle"]
    try:
        if tag == "status":
            exc = obj.get("exception", {})
            if not isinstance(exc, dict) or "type" not in exc:
                raise ValueError("status oracle needs an exception {type, message}")
            return StatusOracle(ExceptionSignature(str(exc["type"]), str(exc.get("message", ""))))
        if tag == "value":
            return ValueOracle(str(obj.get("pattern", "")), obj.get("detail"))
        if tag == "performance":
            return PerformanceOracle(
                baseline=decode_recipe(obj.get("baseline"), ctx),
                subject=decode_recipe(obj.get("subject"), ctx),
                comparator=str(obj.get("comparator", "")),
                margin=float(obj.get("margin", 1.05)),
            )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{ctx}: bad oracle: {exc}") from exc
    raise ParseError(f"{ctx}: unknown oracle tag {tag!r}")


# ---------------------------------------------------------------------------
# fingerprints


def args_digest(bound_args: dict[str, Any]) -> str:
    """Stable 12-hex digest of a call's named argument bindings."""
    canon = json.dumps(
        {k: encode_value(v) for k, v in bound_args.items()},
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def case_fingerprint(call: StructuredCall) -> str:
    """Fingerprint of a call: target API name plus bound-argument digest."""
    return f"{call.api_name}#{args_digest(call.bound_args)}"


def oracle_fingerprint(oracle: OracleSpec) -> str:
    """Stable 12-hex digest of an oracle, used to fold duplicate bugs."""
    canon = dump_record(encode_oracle(oracle))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


# ---------------------------------------------------------------------------
# corpus records


def encode_param(p: ParamSpec) -> dict[str, Any]:
    obj: dict[str, Any] = {"name": p.name}
    if p.rank is not None:
        obj["rank"] = p.rank
    if p.default is not None:
        obj["default"] = encode_value(p.default)
    return obj


def decode_param(obj: Any, ctx: str) -> ParamSpec:
    if not isinstance(obj, dict) or "name" not in obj:
        raise ParseError(f"{ctx}: parameter must be an object with a 'name'")
    try:
        return ParamSpec(
            name=str(obj["name"]),
            rank=obj.get("rank"),
            default=decode_value(obj["default"], ctx) if "default" in obj else None,
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{ctx}: bad parameter: {exc}") from exc


def encode_signature(sig: ApiSignature) -> dict[str, Any]:
    return {
        "kind": "signature",
        "name": sig.name,
        "framework": sig.framework,
        "required": [encode_param(p) for p in sig.required],
        "optional": [encode_param(p) for p in sig.optional],
    }


def encode_source_function(fn: SourceFunction) -> dict[str, Any]:
    return {
        "kind": "source_function",
        "name": fn.name,
        "io_args": sorted(fn.io_args),
        "callees": sorted(fn.callees),
    }


def encode_trace(trace: CallStackTrace) -> dict[str, Any]:
    return {"kind": "trace", "api": trace.api_name, "frames": sorted(trace.frames)}


def encode_bug_case(case: BugCase) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "kind": "bug_case",
        "case_id": case.case_id,
        "api": case.source_api,
        "bug_kind": case.bug_kind,
        "call": encode_call(case.repro_call),
        "oracle": encode_oracle(case.oracle),
    }
    if case.origin_issue is not None:
        obj["issue"] = case.origin_issue
    return obj


def encode_signature_pair(pair: SignaturePair) -> dict[str, Any]:
    return {
        "kind": "signature_pair",
        "source": pair.source_api,
        "target": pair.target_api,
        "score": pair.score,
    }


def encode_issue(issue: IssueRecord) -> dict[str, Any]:
    return {
        "kind": "issue",
        "issue_id": issue.issue_id,
        "title": issue.title,
        "body": issue.body,
        "labels": sorted(issue.labels),
        "comments": issue.comment_count,
        "state": issue.state,
        "linked_changes": issue.linked_changes,
        "code_blocks": list(issue.code_blocks),
        "hardware": sorted(issue.hardware_markers),
    }


def _decode_string_list(obj: Any, ctx: str, key: str) -> list[str]:
    val = obj.get(key, [])
    if not isinstance(val, list) or not all(isinstance(s, str) for s in val):
        raise ParseError(f"{ctx}: {key} must be a list of strings")
    return val


def decode_corpus_record(rec: dict[str, Any], ctx: str) -> tuple[str, Any]:
    """Decode one corpus record into (kind, typed object)."""
    kind = rec.get("kind")
    try:
        if kind == "signature":
            return kind, ApiSignature(
                name=str(rec.get("name", "")),
                required=tuple(decode_param(p, ctx) for p in rec.get("required", [])),
                optional=tuple(decode_param(p, ctx) for p in rec.get("optional", [])),
                framework=str(rec.get("framework", "")),
            )
        if kind == "source_function":
            return kind, SourceFunction(
                name=str(rec.get("name", "")),
                io_args=frozenset(_decode_string_list(rec, ctx, "io_args")),
                callees=frozenset(_decode_string_list(rec, ctx, "callees")),
            )
        if kind == "trace":
            if not rec.get("api"):
                raise ValueError("trace needs an 'api'")
            return kind, CallStackTrace(
                api_name=str(rec["api"]),
                frames=frozenset(_decode_string_list(rec, ctx, "frames")),
            )
        if kind == "bug_case":
            return kind, BugCase(
                case_id=str(rec.get("case_id", "")),
                source_api=str(rec.get("api", "")),
                repro_call=decode_call(rec.get("call"), ctx),
                bug_kind=str(rec.get("bug_kind", "")),
                oracle=decode_oracle(rec.get("oracle"), ctx),
                origin_issue=rec.get("issue"),
            )
        if kind == "signature_pair":
            return kind, SignaturePair(
                source_api=str(rec.get("source", "")),
                target_api=str(rec.get("target", "")),
                score=float(rec.get("score", 0.0)),
            )
        if kind == "issue":
            return kind, IssueRecord(
                issue_id=str(rec.get("issue_id", "")),
                title=str(rec.get("title", "")),
                body=str(rec.get("body", "")),
                labels=frozenset(_decode_string_list(rec, ctx, "labels")),
                comment_count=int(rec.get("comments", 0)),
                state=str(rec.get("state", "open")),
                linked_changes=int(rec.get("linked_changes", 0)),
                code_blocks=tuple(_decode_string_list(rec, ctx, "code_blocks")),
                hardware_markers=frozenset(_decode_string_list(rec, ctx, "hardware")),
            )
    except ParseError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{ctx}: {exc}") from exc
    raise ParseError(f"{ctx}: unknown record kind {kind!r}")


# ---------------------------------------------------------------------------
# corpus load/save


def load_corpus(paths: Iterable[Path | str] | Path | str) -> Corpus:
    """Load and cross-validate corpus records from one or more files.

    Duplicate identifiers raise DuplicateIdError. Multiple trace records for
    one API are merged by frame union (profiling emits one record per unit
    case). Dangling references raise UnresolvedReferenceError.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    corpus = Corpus()
    seen_pairs: set[tuple[str, str]] = set()
    for path in paths:
        for fname, lineno, rec in read_records(path):
            ctx = f"{fname}:{lineno}"
            kind, obj = decode_corpus_record(rec, ctx)
            if kind == "signature":
                if obj.name in corpus.signatures:
                    raise DuplicateIdError(f"{ctx}: duplicate signature {obj.name!r}")
                corpus.signatures[obj.name] = obj
            elif kind == "source_function":
                if obj.name in corpus.source_functions:
                    raise DuplicateIdError(f"{ctx}: duplicate source function {obj.name!r}")
                corpus.source_functions[obj.name] = obj
            elif kind == "trace":
                prev = corpus.traces.get(obj.api_name)
                if prev is None:
                    corpus.traces[obj.api_name] = obj
                else:
                    corpus.traces[obj.api_name] = CallStackTrace(
                        obj.api_name, prev.frames | obj.frames
                    )
            elif kind == "bug_case":
                if obj.case_id in corpus.bug_cases:
                    raise DuplicateIdError(f"{ctx}: duplicate bug case {obj.case_id!r}")
                corpus.bug_cases[obj.case_id] = obj
            elif kind == "signature_pair":
                key = (obj.source_api, obj.target_api)
                if key in seen_pairs:
                    raise DuplicateIdError(f"{ctx}: duplicate signature pair {key!r}")
                seen_pairs.add(key)
                corpus.signature_pairs.append(obj)
            elif kind == "issue":
                if any(i.issue_id == obj.issue_id for i in corpus.issues):
                    raise DuplicateIdError(f"{ctx}: duplicate issue {obj.issue_id!r}")
                corpus.issues.append(obj)
    cross_validate(corpus)
    return corpus


def corpus_records(corpus: Corpus) -> Iterator[dict[str, Any]]:
    """Canonical record stream: each section sorted by its identifier."""
    for name in sorted(corpus.signatures):
        yield encode_signature(corpus.signatures[name])
    for name in sorted(corpus.source_functions):
        yield encode_source_function(corpus.source_functions[name])
    for api in sorted(corpus.traces):
        yield encode_trace(corpus.traces[api])
    for case_id in sorted(corpus.bug_cases):
        yield encode_bug_case(corpus.bug_cases[case_id])
    for pair in sorted(corpus.signature_pairs, key=lambda p: (p.source_api, p.target_api)):
        yield encode_signature_pair(pair)
    for issue in sorted(corpus.issues, key=lambda i: i.issue_id):
        yield encode_issue(issue)


def save_corpus(path: Path | str, corpus: Corpus) -> None:
    write_records(path, corpus_records(corpus))
