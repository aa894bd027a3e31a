import pytest
from hypothesis import given
from hypothesis import strategies as st

from apikin.corpus import (
    ApiSignature,
    BugCase,
    Corpus,
    ExceptionSignature,
    MeasurementRecipe,
    METRIC_TIME,
    ParamSpec,
    PerformanceOracle,
    ShapeTuple,
    StatusOracle,
    StructuredCall,
    ValueOracle,
)
from apikin.generator import (
    InfeasibleDirection,
    RankUnresolvable,
    RecipeRetargetFailure,
    RenderTemplate,
    SKIP_INFEASIBLE,
    SKIP_RANK,
    SKIP_RECIPE,
    SynthesisSkip,
    SynthesizedCase,
    TemplateError,
    decode_synthesized,
    encode_synthesized,
    feasible_direction,
    load_template,
    packaged_template,
    port_oracle,
    render,
    render_call_line,
    render_value,
    resolve_argument_difference,
    resolve_dimension_difference,
    retarget_call,
    synthesize,
)
from apikin.matcher import CandidatePair, PROVENANCE_CONTEXT
from apikin.records import args_digest


def sig(name, required=(), optional=(), framework="pytorch-like"):
    return ApiSignature(name, tuple(required), tuple(optional), framework)


SIG_S = sig(
    "m.Src",
    required=(ParamSpec("a"), ParamSpec("b")),
    optional=(ParamSpec("extra", default=0), ParamSpec("shape", rank=3)),
)
SIG_T = sig(
    "m.Tgt",
    required=(ParamSpec("a"),),
    optional=(ParamSpec("b", default=0), ParamSpec("shape", rank=5)),
)


def call(api="m.Src", **bound):
    return StructuredCall(api_name=api, bound_args=bound)


def accepted_pair(source, target):
    return CandidatePair(source, target, 0.9, PROVENANCE_CONTEXT)


class TestFeasibility:
    def test_all_required_bound(self):
        case = BugCase("c/1", "m.Src", call(a=1, b=2), "status", StatusOracle(ExceptionSignature("E", "")))
        assert feasible_direction(case, SIG_T)

    def test_missing_required_infeasible(self):
        case = BugCase("c/1", "m.Src", call(b=2), "status", StatusOracle(ExceptionSignature("E", "")))
        target = sig("m.T2", required=(ParamSpec("a"),))
        assert not feasible_direction(case, target)


class TestArgumentResolution:
    def test_drops_unknown_args(self):
        resolved, log = resolve_argument_difference(call(a=1, b=2, extra=7), SIG_T)
        assert resolved.bound_args == {"a": 1, "b": 2}
        assert log == ["drop-arg:extra"]

    def test_nothing_to_drop(self):
        resolved, log = resolve_argument_difference(call(a=1), SIG_T)
        assert resolved.bound_args == {"a": 1} and log == []

    def test_infeasible_raises_with_missing_names(self):
        with pytest.raises(InfeasibleDirection) as exc:
            resolve_argument_difference(call(b=2), SIG_T)
        assert "a" in str(exc.value)


class TestDimensionResolution:
    def test_rank_expand_appends_last_dim(self):
        c = call(a=1, b=2, shape=ShapeTuple((2, 3, 8)))
        adjusted, log = resolve_dimension_difference(c, SIG_S, SIG_T)
        assert adjusted.bound_args["shape"] == ShapeTuple((2, 3, 8, 8, 8))
        assert log == ["rank-expand:shape:3->5"]

    def test_rank_shrink_truncates_trailing(self):
        c = call(api="m.Tgt", a=1, shape=ShapeTuple((2, 3, 8, 8, 8)))
        adjusted, log = resolve_dimension_difference(c, SIG_T, SIG_S)
        assert adjusted.bound_args["shape"] == ShapeTuple((2, 3, 8))
        assert log == ["rank-shrink:shape:5->3"]

    def test_equal_ranks_untouched(self):
        other = sig("m.T3", optional=(ParamSpec("shape", rank=3),))
        c = call(shape=ShapeTuple((1, 2, 3)))
        adjusted, log = resolve_dimension_difference(c, SIG_S, other)
        assert adjusted.bound_args["shape"] == ShapeTuple((1, 2, 3)) and log == []

    def test_scalar_passes_untouched(self):
        s = sig("m.A", required=(ParamSpec("x", rank=2),))
        t = sig("m.B", required=(ParamSpec("x", rank=4),))
        adjusted, log = resolve_dimension_difference(call(x=7), s, t)
        assert adjusted.bound_args["x"] == 7 and log == []

    def test_nested_list_unresolvable(self):
        s = sig("m.A", required=(ParamSpec("x", rank=2),))
        t = sig("m.B", required=(ParamSpec("x", rank=4),))
        with pytest.raises(RankUnresolvable):
            resolve_dimension_difference(call(x=[[1, 2], [3, 4]]), s, t)

    def test_unannotated_side_skips_adjustment(self):
        s = sig("m.A", required=(ParamSpec("x"),))
        t = sig("m.B", required=(ParamSpec("x", rank=4),))
        c = call(x=ShapeTuple((2, 2)))
        adjusted, log = resolve_dimension_difference(c, s, t)
        assert adjusted.bound_args["x"] == ShapeTuple((2, 2)) and log == []

    @given(
        st.lists(st.integers(min_value=1, max_value=9), min_size=1, max_size=6),
        st.integers(min_value=1, max_value=8),
    )
    def test_expand_then_shrink_round_trips(self, dims, extra):
        original = ShapeTuple(tuple(dims))
        wide_rank = original.rank + extra
        s = sig("m.A", required=(ParamSpec("x", rank=original.rank),))
        w = sig("m.B", required=(ParamSpec("x", rank=wide_rank),))
        expanded, _ = resolve_dimension_difference(call(x=original), s, w)
        restored, _ = resolve_dimension_difference(
            call(x=expanded.bound_args["x"]), w, s
        )
        assert restored.bound_args["x"] == original


class TestRetargetCall:
    def test_arguments_come_out_in_target_order(self):
        src = sig("m.S", required=(ParamSpec("x"), ParamSpec("y"), ParamSpec("z")))
        tgt = sig("m.T", required=(ParamSpec("z"), ParamSpec("x")), optional=(ParamSpec("y", default=0),))
        ported, _ = retarget_call(call(api="m.S", x=1, y=2, z=3), src, tgt)
        assert list(ported.bound_args) == ["z", "x", "y"]
        assert ported.api_name == "m.T"

    def test_setup_substitution_terminal_and_dotted(self):
        src = sig("pkg.mod.Src")
        tgt = sig("pkg.mod.Tgt")
        c = StructuredCall(
            "pkg.mod.Src",
            {},
            setup_steps=("probe = pkg.mod.Src", "alias = Src", "keep = Srcish"),
        )
        ported, _ = retarget_call(c, src, tgt)
        assert ported.setup_steps == ("probe = pkg.mod.Tgt", "alias = Tgt", "keep = Srcish")


class TestPortOracle:
    def test_status_wildcards_source_api(self):
        oracle = StatusOracle(ExceptionSignature("ValueError", "Src has uninitialized parameters"))
        ported, log = port_oracle(oracle, sig("m.Src"), sig("m.Tgt"))
        assert ported.signature.message == "<API> has uninitialized parameters"
        assert ported.signature.exc_type == "ValueError"
        assert log == []

    def test_value_oracle_passes_through(self):
        oracle = ValueOracle("nan")
        ported, log = port_oracle(oracle, SIG_S, SIG_T)
        assert ported is oracle and log == []

    def perf_oracle(self, baseline_api="m.Src", subject_api="m.Src"):
        def recipe(api):
            return MeasurementRecipe(
                metric=METRIC_TIME,
                repetitions=3,
                warmup_runs=1,
                body=(StructuredCall(api, {"a": 1, "b": 2}),),
            )

        return PerformanceOracle(
            baseline=recipe(baseline_api),
            subject=recipe(subject_api),
            comparator="subject_exceeds_baseline",
            margin=1.05,
        )

    def test_performance_retargets_source_calls(self):
        ported, log = port_oracle(self.perf_oracle(), SIG_S, SIG_T)
        assert ported.baseline.body[0].api_name == "m.Tgt"
        assert ported.subject.body[0].api_name == "m.Tgt"
        assert log == ["recipe-retarget:baseline", "recipe-retarget:subject"]

    def test_performance_foreign_calls_untouched(self):
        oracle = self.perf_oracle(baseline_api="other.Api")
        ported, log = port_oracle(oracle, SIG_S, SIG_T)
        assert ported.baseline.body[0].api_name == "other.Api"
        assert log == ["recipe-retarget:subject"]

    def test_recipe_retarget_failure(self):
        tgt = sig("m.Needy", required=(ParamSpec("missing"),))
        with pytest.raises(RecipeRetargetFailure) as exc:
            port_oracle(self.perf_oracle(), SIG_S, tgt)
        assert "baseline" in str(exc.value)


class TestSynthesize:
    def corpus_with(self, *sigs):
        corpus = Corpus()
        for s in sigs:
            corpus.signatures[s.name] = s
        return corpus

    def case_for(self, **bound):
        return BugCase(
            "iss/case",
            "m.Src",
            call(**bound),
            "status",
            StatusOracle(ExceptionSignature("E", "boom")),
        )

    def test_rejected_pair_is_an_error(self):
        pair = CandidatePair("m.Src", "m.Tgt", 0.9, PROVENANCE_CONTEXT, reject_reason="x")
        with pytest.raises(ValueError):
            synthesize(self.case_for(a=1, b=2), pair, self.corpus_with(SIG_S, SIG_T))

    def test_case_must_sit_on_source_side(self):
        pair = accepted_pair("m.Tgt", "m.Src")
        with pytest.raises(ValueError):
            synthesize(self.case_for(a=1, b=2), pair, self.corpus_with(SIG_S, SIG_T))

    def test_infeasible_becomes_skip(self):
        tgt = sig("m.Needy", required=(ParamSpec("missing"),))
        result = synthesize(
            self.case_for(a=1, b=2), accepted_pair("m.Src", "m.Needy"), self.corpus_with(SIG_S, tgt)
        )
        assert isinstance(result, SynthesisSkip)
        assert result.reason == SKIP_INFEASIBLE and result.target_api == "m.Needy"

    def test_rank_unresolvable_becomes_skip(self):
        src = sig("m.Src", required=(ParamSpec("x", rank=2),))
        tgt = sig("m.Tgt", required=(ParamSpec("x", rank=4),))
        case = BugCase(
            "iss/case", "m.Src", call(x=[[1, 2]]), "status", StatusOracle(ExceptionSignature("E", ""))
        )
        result = synthesize(case, accepted_pair("m.Src", "m.Tgt"), self.corpus_with(src, tgt))
        assert isinstance(result, SynthesisSkip) and result.reason == SKIP_RANK

    def test_recipe_failure_becomes_skip(self):
        # repro call ports fine, but the recipe's richer call does not
        src = sig("m.Src", required=(ParamSpec("a"),), optional=(ParamSpec("b", default=0),))
        tgt = sig("m.Tgt", required=(ParamSpec("a"), ParamSpec("b")))
        recipe_call = StructuredCall("m.Src", {"a": 1})
        oracle = PerformanceOracle(
            baseline=MeasurementRecipe(METRIC_TIME, 3, 1, (recipe_call,)),
            subject=MeasurementRecipe(METRIC_TIME, 3, 1, (recipe_call,)),
            comparator="subject_exceeds_baseline",
        )
        case = BugCase("iss/case", "m.Src", call(a=1, b=2), "performance", oracle)
        result = synthesize(case, accepted_pair("m.Src", "m.Tgt"), self.corpus_with(src, tgt))
        assert isinstance(result, SynthesisSkip) and result.reason == SKIP_RECIPE

    def test_successful_port(self):
        result = synthesize(
            self.case_for(a=1, b=2, extra=9),
            accepted_pair("m.Src", "m.Tgt"),
            self.corpus_with(SIG_S, SIG_T),
        )
        assert isinstance(result, SynthesizedCase)
        assert result.case_id == "iss/case->m.Tgt"
        assert result.call.bound_args == {"a": 1, "b": 2}
        assert result.transform_log == ("drop-arg:extra",)
        assert result.bug_kind == "status"

    def test_invalid_port_is_a_hard_error(self):
        # unannotated source rank lets a wrong-rank shape through to validation
        src = sig("m.Src", required=(ParamSpec("x"),))
        tgt = sig("m.Tgt", required=(ParamSpec("x", rank=4),))
        case = BugCase(
            "iss/case",
            "m.Src",
            call(x=ShapeTuple((2, 2))),
            "status",
            StatusOracle(ExceptionSignature("E", "")),
        )
        with pytest.raises(RuntimeError):
            synthesize(case, accepted_pair("m.Src", "m.Tgt"), self.corpus_with(src, tgt))


class TestTemplates:
    def test_packaged_dialects(self):
        for dialect in ("pytorch-like", "tensorflow-like"):
            tmpl = packaged_template(dialect)
            assert tmpl.dialect == dialect
            assert "{call}" in tmpl.text

    def test_unknown_dialect(self):
        with pytest.raises(TemplateError):
            packaged_template("no-such-dialect")

    def test_template_requires_call_placeholder(self, tmp_path):
        path = tmp_path / "bad.tmpl"
        path.write_text("# dialect: x\n{setup}\n")
        with pytest.raises(TemplateError):
            load_template(path)

    def test_load_template_from_file(self, tmp_path):
        path = tmp_path / "ok.tmpl"
        path.write_text("# dialect: custom\n{call}\n")
        assert load_template(path).dialect == "custom"


class TestRendering:
    def test_render_value_formats(self):
        assert render_value(True) == "True"
        assert render_value(False) == "False"
        assert render_value(3) == "3"
        assert render_value(2.5) == "2.5"
        assert render_value("x") == "'x'"
        assert render_value(ShapeTuple((2,))) == "(2,)"
        assert render_value(ShapeTuple((2, 3))) == "(2, 3)"
        assert render_value([1, [2.0, "s"]]) == "[1, [2.0, 's']]"

    def test_render_call_line(self):
        c = StructuredCall("m.Api", {"a": 1, "shape": ShapeTuple((2, 3))})
        assert render_call_line(c) == "m.Api(a=1, shape=(2, 3))"

    def test_render_golden(self):
        case = SynthesizedCase(
            case_id="iss/case->m.Tgt",
            source_case_id="iss/case",
            source_api="m.Src",
            target_api="m.Tgt",
            call=StructuredCall("m.Tgt", {"a": 1}, setup_steps=("x = 1",)),
            oracle=StatusOracle(ExceptionSignature("E", "boom <N>")),
            bug_kind="status",
        )
        template = RenderTemplate("d", "{setup}\nresult = {call}\n{oracle_assert}\n")
        digest = args_digest({"a": 1})
        expected = (
            f"# case: iss/case->m.Tgt\n"
            f"# fingerprint: m.Tgt#{digest}\n"
            f"x = 1\n"
            f"result = m.Tgt(a=1)\n"
            f"# oracle: status E 'boom <N>'\n"
        )
        assert render(case, template) == expected

    def test_render_performance_sections(self):
        recipe = MeasurementRecipe(
            METRIC_TIME, 3, 1, (StructuredCall("m.Tgt", {"a": 1}, setup_steps=("s0",)),)
        )
        case = SynthesizedCase(
            case_id="c->m.Tgt",
            source_case_id="c",
            source_api="m.Src",
            target_api="m.Tgt",
            call=StructuredCall("m.Tgt", {"a": 1}),
            oracle=PerformanceOracle(recipe, recipe, "subject_exceeds_baseline", 1.05),
            bug_kind="performance",
        )
        text = render(case, packaged_template("pytorch-like"))
        assert "# recipe baseline: wall-time-seconds, repetitions=3, warmup=1" in text
        assert text.count("s0\nm.Tgt(a=1)") == 2
        assert "# oracle: performance subject_exceeds_baseline margin=1.05" in text

    def test_render_is_deterministic(self):
        tmpl = packaged_template("pytorch-like")
        case = SynthesizedCase(
            case_id="c->m.T",
            source_case_id="c",
            source_api="m.S",
            target_api="m.T",
            call=StructuredCall("m.T", {"a": 1}),
            oracle=ValueOracle("nan"),
            bug_kind="value",
        )
        assert render(case, tmpl) == render(case, tmpl)


class TestSynthesizedRecords:
    def test_round_trip(self):
        case = SynthesizedCase(
            case_id="iss/case->m.Tgt",
            source_case_id="iss/case",
            source_api="m.Src",
            target_api="m.Tgt",
            call=StructuredCall("m.Tgt", {"a": 1}),
            oracle=ValueOracle("inf", detail="overflow"),
            bug_kind="value",
            transform_log=("drop-arg:extra",),
            rendered="# case: x\n",
        )
        decoded = decode_synthesized(encode_synthesized(case))
        assert decoded == case


class TestFixtureGoldens:
    def test_conv2d_to_conv3d_rank_expand(self, mini_corpus):
        case = mini_corpus.bug_cases["pt-1001/case"]
        pair = accepted_pair("torch.nn.Conv2d", "torch.nn.Conv3d")
        result = synthesize(case, pair, mini_corpus)
        assert isinstance(result, SynthesizedCase)
        assert result.call.bound_args["input_shape"] == ShapeTuple((2, 3, 8, 8, 8))
        assert "rank-expand:input_shape:4->5" in result.transform_log

    def test_conv2d_to_lazyconv2d_drop_args(self, mini_corpus):
        case = mini_corpus.bug_cases["pt-1002/case"]
        pair = accepted_pair("torch.nn.Conv2d", "torch.nn.LazyConv2d")
        result = synthesize(case, pair, mini_corpus)
        assert isinstance(result, SynthesizedCase)
        assert result.call.bound_args == {"out_channels": 2048, "kernel_size": 1}
        assert result.transform_log == ("drop-arg:in_channels",)

    def test_gather_setup_substitution(self, mini_corpus):
        case = mini_corpus.bug_cases["pt-1005/case"]
        pair = accepted_pair("torch.gather", "torch.compat.gather")
        result = synthesize(case, pair, mini_corpus)
        assert isinstance(result, SynthesizedCase)
        assert result.call.setup_steps == ("probe = torch.compat.gather",)

    def test_lazy_source_is_infeasible_toward_conv(self, mini_corpus):
        case = mini_corpus.bug_cases["pt-1006/case"]
        pair = accepted_pair("torch.nn.LazyConv2d", "torch.nn.Conv2d")
        result = synthesize(case, pair, mini_corpus)
        assert isinstance(result, SynthesisSkip)
        assert result.reason == SKIP_INFEASIBLE
