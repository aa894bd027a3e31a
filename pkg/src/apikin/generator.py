"""Synthesize oracle-carrying test cases for target APIs from confirmed bugs.

The port keeps every transformation value-preserving: arguments the target
does not accept are dropped, shape-tuples are rank-adjusted by repeating or
truncating trailing entries, and no values are ever invented.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from .corpus import (
    ApiSignature,
    BugCase,
    Corpus,
    ExceptionSignature,
    MeasurementRecipe,
    OracleSpec,
    PerformanceOracle,
    ShapeTuple,
    StatusOracle,
    StructuredCall,
    Value,
    ValueOracle,
    terminal_segment,
    validate_call,
)
from .evaluator import SLOT_API
from .matcher import CandidatePair
from .records import args_digest, decode_call, decode_oracle, encode_call, encode_oracle

log = logging.getLogger(__name__)

SKIP_INFEASIBLE = "infeasible-direction"
SKIP_RANK = "rank-unresolvable"
SKIP_RECIPE = "recipe-retarget-failure"

PLACEHOLDERS = ("{setup}", "{call}", "{measure_baseline}", "{measure_subject}", "{oracle_assert}")


class InfeasibleDirection(Exception):
    """A required target parameter has no bound value in the source call."""


class RankUnresolvable(Exception):
    """Ranks differ but the bound value is not a shape-tuple."""


class RecipeRetargetFailure(Exception):
    """A measurement-recipe call could not be ported to the target API."""


class TemplateError(Exception):
    """The render template is unusable (missing the call placeholder)."""


@dataclass
class SynthesizedCase:
    case_id: str
    source_case_id: str
    source_api: str
    target_api: str
    call: StructuredCall
    oracle: OracleSpec
    bug_kind: str
    transform_log: tuple[str, ...] = ()
    rendered: str = ""


@dataclass(frozen=True)
class SynthesisSkip:
    source_case_id: str
    target_api: str
    reason: str
    detail: str = ""


# ---------------------------------------------------------------------------
# feasibility and argument resolution


def feasible_direction(case: BugCase, sig_t: ApiSignature) -> bool:
    """Every required parameter of the target must be bound by name in the source call."""
    return _feasible(case.repro_call, sig_t)


def _feasible(call: StructuredCall, sig_t: ApiSignature) -> bool:
    return all(name in call.bound_args for name in sig_t.required_names)


def resolve_argument_difference(
    call: StructuredCall, sig_t: ApiSignature
) -> tuple[StructuredCall, list[str]]:
    """Drop bound arguments the target does not accept. Never invents values."""
    if not _feasible(call, sig_t):
        missing = sorted(n for n in sig_t.required_names if n not in call.bound_args)
        raise InfeasibleDirection(f"{sig_t.name} requires unbound {', '.join(missing)}")
    kept: dict[str, Value] = {}
    dropped: list[str] = []
    for name, value in call.bound_args.items():
        if name in sig_t.param_names:
            kept[name] = value
        else:
            dropped.append(name)
    result = StructuredCall(
        api_name=call.api_name,
        bound_args=kept,
        setup_steps=call.setup_steps,
        measurement_recipe=call.measurement_recipe,
    )
    return result, [f"drop-arg:{name}" for name in dropped]


def _adjust_shape(shape: ShapeTuple, target_rank: int) -> ShapeTuple:
    if target_rank == shape.rank:
        return shape
    if target_rank > shape.rank:
        extra = (shape.dims[-1],) * (target_rank - shape.rank)
        return ShapeTuple(shape.dims + extra)
    return ShapeTuple(shape.dims[:target_rank])


def resolve_dimension_difference(
    call: StructuredCall, sig_s: ApiSignature, sig_t: ApiSignature
) -> tuple[StructuredCall, list[str]]:
    """Adjust shape-tuple values where the two signatures disagree on rank.

    Expansion appends copies of the last entry; shrinking truncates trailing
    entries. Scalars pass through untouched; a nested list under a differing
    rank annotation is unresolvable.
    """
    adjusted: dict[str, Value] = {}
    transforms: list[str] = []
    for name, value in call.bound_args.items():
        p_s, p_t = sig_s.param(name), sig_t.param(name)
        ranks_differ = (
            p_s is not None
            and p_t is not None
            and p_s.rank is not None
            and p_t.rank is not None
            and p_s.rank != p_t.rank
        )
        if not ranks_differ:
            adjusted[name] = value
            continue
        assert p_t is not None and p_t.rank is not None
        if isinstance(value, ShapeTuple):
            new_value = _adjust_shape(value, p_t.rank)
            adjusted[name] = new_value
            tag = "rank-expand" if p_t.rank > value.rank else "rank-shrink"
            if new_value != value:
                transforms.append(f"{tag}:{name}:{value.rank}->{p_t.rank}")
        elif isinstance(value, list):
            raise RankUnresolvable(
                f"{name} binds a nested list but ranks differ ({p_s.rank} vs {p_t.rank})"
            )
        else:
            adjusted[name] = value  # scalars are rank-free by construction
    result = StructuredCall(
        api_name=call.api_name,
        bound_args=adjusted,
        setup_steps=call.setup_steps,
        measurement_recipe=call.measurement_recipe,
    )
    return result, transforms


# ---------------------------------------------------------------------------
# retargeting


def _api_token_re(api_name: str) -> re.Pattern:
    terminal = terminal_segment(api_name)
    alts = sorted({api_name, terminal}, key=len, reverse=True)
    return re.compile(r"(?<![\w.])(?:" + "|".join(re.escape(a) for a in alts) + r")(?![\w])")


def _substitute_setup(steps: tuple[str, ...], source_api: str, target_api: str) -> tuple[str, ...]:
    if not steps:
        return steps
    pattern = _api_token_re(source_api)
    out = []
    for step in steps:
        replaced = pattern.sub(
            lambda m: target_api if "." in m.group(0) else terminal_segment(target_api), step
        )
        if pattern.search(replaced):
            log.warning("setup fragment still mentions %s after retarget: %r", source_api, replaced)
        out.append(replaced)
    return tuple(out)


def retarget_call(
    call: StructuredCall, sig_s: ApiSignature, sig_t: ApiSignature
) -> tuple[StructuredCall, list[str]]:
    """Port one call from the source to the target API.

    Raises InfeasibleDirection or RankUnresolvable. Bound arguments come out
    in target-signature order so rendering is deterministic.
    """
    narrowed, drops = resolve_argument_difference(call, sig_t)
    adjusted, rank_log = resolve_dimension_difference(narrowed, sig_s, sig_t)
    ordered: dict[str, Value] = {}
    for p in sig_t.params_in_order():
        if p.name in adjusted.bound_args:
            ordered[p.name] = adjusted.bound_args[p.name]
    result = StructuredCall(
        api_name=sig_t.name,
        bound_args=ordered,
        setup_steps=_substitute_setup(call.setup_steps, sig_s.name, sig_t.name),
        measurement_recipe=call.measurement_recipe,
    )
    return result, drops + rank_log


def port_oracle(
    oracle: OracleSpec, sig_s: ApiSignature, sig_t: ApiSignature
) -> tuple[OracleSpec, list[str]]:
    """Port an oracle across the pair; see retarget_call for call handling.

    Status oracles get source API-name tokens wildcarded in the message
    template. Performance recipes retarget every source-API call; calls to
    other APIs pass through unchanged.
    """
    if isinstance(oracle, StatusOracle):
        pattern = _api_token_re(sig_s.name)
        message = pattern.sub(SLOT_API, oracle.signature.message)
        return StatusOracle(ExceptionSignature(oracle.signature.exc_type, message)), []
    if isinstance(oracle, ValueOracle):
        return oracle, []
    assert isinstance(oracle, PerformanceOracle)
    transforms: list[str] = []

    def retarget_recipe(slot: str, recipe: MeasurementRecipe) -> MeasurementRecipe:
        body: list[StructuredCall] = []
        changed = False
        for call in recipe.body:
            if call.api_name != sig_s.name:
                body.append(call)
                continue
            try:
                ported_call, _ = retarget_call(call, sig_s, sig_t)
            except (InfeasibleDirection, RankUnresolvable) as exc:
                raise RecipeRetargetFailure(f"{slot} recipe: {exc}") from exc
            body.append(ported_call)
            changed = True
        if changed:
            transforms.append(f"recipe-retarget:{slot}")
        return MeasurementRecipe(
            metric=recipe.metric,
            repetitions=recipe.repetitions,
            warmup_runs=recipe.warmup_runs,
            body=tuple(body),
        )

    ported_perf = PerformanceOracle(
        baseline=retarget_recipe("baseline", oracle.baseline),
        subject=retarget_recipe("subject", oracle.subject),
        comparator=oracle.comparator,
        margin=oracle.margin,
    )
    return ported_perf, transforms


def synthesize(
    case: BugCase, pair: CandidatePair, corpus: Corpus
) -> Union[SynthesizedCase, SynthesisSkip]:
    """Port one bug case across one accepted pair; skips are data, not errors."""
    if not pair.accepted:
        raise ValueError(f"pair {pair.source_api}->{pair.target_api} was rejected by the filter")
    if case.source_api != pair.source_api:
        raise ValueError(f"case {case.case_id} is not on the pair's source side")
    sig_s = corpus.signatures[pair.source_api]
    sig_t = corpus.signatures[pair.target_api]
    try:
        call, transforms = retarget_call(case.repro_call, sig_s, sig_t)
    except InfeasibleDirection as exc:
        return SynthesisSkip(case.case_id, sig_t.name, SKIP_INFEASIBLE, str(exc))
    except RankUnresolvable as exc:
        return SynthesisSkip(case.case_id, sig_t.name, SKIP_RANK, str(exc))
    try:
        oracle, oracle_transforms = port_oracle(case.oracle, sig_s, sig_t)
    except RecipeRetargetFailure as exc:
        return SynthesisSkip(case.case_id, sig_t.name, SKIP_RECIPE, str(exc))
    violations = validate_call(call, sig_t)
    if violations:
        raise RuntimeError(
            f"retargeted call for {case.case_id}->{sig_t.name} failed validation: {violations}"
        )
    return SynthesizedCase(
        case_id=f"{case.case_id}->{sig_t.name}",
        source_case_id=case.case_id,
        source_api=sig_s.name,
        target_api=sig_t.name,
        call=call,
        oracle=oracle,
        bug_kind=case.bug_kind,
        transform_log=tuple(transforms + oracle_transforms),
    )


# ---------------------------------------------------------------------------
# rendering


@dataclass(frozen=True)
class RenderTemplate:
    """Template text with named placeholders; the header declares the dialect."""

    dialect: str
    text: str


def load_template(path: Path | str) -> RenderTemplate:
    text = Path(path).read_text(encoding="utf-8")
    return _parse_template(text)


def packaged_template(dialect: str) -> RenderTemplate:
    """Load a template shipped with the package, keyed by framework tag."""
    ref = resources.files(__package__).joinpath(f"templates/{dialect}.tmpl")
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise TemplateError(f"no packaged template for dialect {dialect!r}") from exc
    return _parse_template(text)


def _parse_template(text: str) -> RenderTemplate:
    dialect = ""
    first = text.splitlines()[0] if text else ""
    m = re.match(r"#\s*dialect:\s*(\S+)", first)
    if m:
        dialect = m.group(1)
    if "{call}" not in text:
        raise TemplateError("template lacks the {call} placeholder")
    return RenderTemplate(dialect=dialect, text=text)


def render_value(value: Value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, (int, float, str)):
        return repr(value)
    if isinstance(value, ShapeTuple):
        inner = ", ".join(str(d) for d in value.dims)
        return f"({inner},)" if len(value.dims) == 1 else f"({inner})"
    if isinstance(value, list):
        return "[" + ", ".join(render_value(v) for v in value) + "]"
    raise TypeError(f"unrenderable value {value!r}")


def render_call_line(call: StructuredCall) -> str:
    args = ", ".join(f"{name}={render_value(value)}" for name, value in call.bound_args.items())
    return f"{call.api_name}({args})"


def render_recipe_body(recipe: MeasurementRecipe) -> str:
    lines: list[str] = []
    for call in recipe.body:
        lines.extend(call.setup_steps)
        lines.append(render_call_line(call))
    return "\n".join(lines)


def _measure_section(slot: str, recipe: Optional[MeasurementRecipe]) -> str:
    if recipe is None:
        return ""
    header = (
        f"# recipe {slot}: {recipe.metric}, repetitions={recipe.repetitions}, "
        f"warmup={recipe.warmup_runs}"
    )
    return header + "\n" + render_recipe_body(recipe)


def _oracle_comment(oracle: OracleSpec) -> str:
    if isinstance(oracle, StatusOracle):
        return f"# oracle: status {oracle.signature.exc_type} {oracle.signature.message!r}"
    if isinstance(oracle, ValueOracle):
        detail = f" {oracle.detail}" if oracle.detail else ""
        return f"# oracle: value {oracle.pattern}{detail}"
    assert isinstance(oracle, PerformanceOracle)
    return f"# oracle: performance {oracle.comparator} margin={oracle.margin}"


def render(case: SynthesizedCase, template: RenderTemplate) -> str:
    """Deterministic source text for one synthesized case.

    The first two lines carry the case id and the call fingerprint so that
    replay runners can identify the case from the source alone.
    """
    if "{call}" not in template.text:
        raise TemplateError("template lacks the {call} placeholder")
    perf = case.oracle if isinstance(case.oracle, PerformanceOracle) else None
    text = template.text
    text = text.replace("{setup}", "\n".join(case.call.setup_steps))
    text = text.replace("{call}", render_call_line(case.call))
    text = text.replace("{measure_baseline}", _measure_section("baseline", perf.baseline if perf else None))
    text = text.replace("{measure_subject}", _measure_section("subject", perf.subject if perf else None))
    text = text.replace("{oracle_assert}", _oracle_comment(case.oracle))
    fingerprint = f"{case.target_api}#{args_digest(case.call.bound_args)}"
    header = f"# case: {case.case_id}\n# fingerprint: {fingerprint}\n"
    return header + text


# ---------------------------------------------------------------------------
# records


def encode_synthesized(case: SynthesizedCase) -> dict[str, Any]:
    return {
        "kind": "synthesized_case",
        "case_id": case.case_id,
        "source_case_id": case.source_case_id,
        "source_api": case.source_api,
        "target_api": case.target_api,
        "bug_kind": case.bug_kind,
        "call": encode_call(case.call),
        "oracle": encode_oracle(case.oracle),
        "transforms": list(case.transform_log),
        "rendered": case.rendered,
    }


def decode_synthesized(rec: dict[str, Any], ctx: str = "") -> SynthesizedCase:
    return SynthesizedCase(
        case_id=str(rec["case_id"]),
        source_case_id=str(rec.get("source_case_id", "")),
        source_api=str(rec.get("source_api", "")),
        target_api=str(rec["target_api"]),
        call=decode_call(rec["call"], ctx),
        oracle=decode_oracle(rec["oracle"], ctx),
        bug_kind=str(rec.get("bug_kind", "")),
        transform_log=tuple(rec.get("transforms", ())),
        rendered=str(rec.get("rendered", "")),
    )


def encode_skip(skip: SynthesisSkip) -> dict[str, Any]:
    return {
        "kind": "synthesis_skip",
        "source_case_id": skip.source_case_id,
        "target_api": skip.target_api,
        "reason": skip.reason,
        "detail": skip.detail,
    }
