import pytest
from hypothesis import given, strategies as st

from apikin.corpus import (
    ApiSignature,
    BugCase,
    Corpus,
    CallStackTrace,
    ExceptionSignature,
    IssueRecord,
    MeasurementRecipe,
    ParamSpec,
    ParseError,
    PerformanceOracle,
    ShapeTuple,
    StatusOracle,
    StructuredCall,
    UnresolvedReferenceError,
    ValueOracle,
    cross_validate,
    jaccard,
    oracle_kind,
    terminal_segment,
    validate_call,
)


class TestShapeTuple:
    def test_rank(self):
        assert ShapeTuple((2, 3, 8, 8)).rank == 4

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ShapeTuple(())

    @pytest.mark.parametrize("bad", [0, -1, 1.5, True, "2"])
    def test_rejects_non_positive_entries(self, bad):
        with pytest.raises(ValueError):
            ShapeTuple((2, bad))


class TestJaccard:
    def test_both_empty_scores_zero(self):
        assert jaccard(set(), set()) == 0.0

    def test_one_empty_scores_zero(self):
        assert jaccard({"a"}, set()) == 0.0

    def test_identical(self):
        assert jaccard({"a", "b"}, {"a", "b"}) == 1.0

    def test_partial(self):
        assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == 0.5

    @given(st.frozensets(st.integers(0, 20)), st.frozensets(st.integers(0, 20)))
    def test_symmetric_and_bounded(self, a, b):
        assert jaccard(a, b) == jaccard(b, a)
        assert 0.0 <= jaccard(a, b) <= 1.0


class TestSignature:
    def test_duplicate_param_names_rejected(self):
        with pytest.raises(ValueError):
            ApiSignature("f", (ParamSpec("x"),), (ParamSpec("x"),))

    def test_terminal_segment(self):
        sig = ApiSignature("torch.nn.Conv2d")
        assert sig.terminal == "Conv2d"
        assert terminal_segment("gather") == "gather"

    def test_param_lookup(self):
        sig = ApiSignature("f", (ParamSpec("a", rank=2),), (ParamSpec("b"),))
        assert sig.param("a").rank == 2
        assert sig.param("missing") is None
        assert sig.required_names == frozenset({"a"})
        assert sig.param_names == frozenset({"a", "b"})


SIG = ApiSignature(
    "api.Op",
    required=(ParamSpec("x", rank=2), ParamSpec("y")),
    optional=(ParamSpec("flag", default=False),),
)


class TestValidateCall:
    def test_valid(self):
        call = StructuredCall("api.Op", {"x": ShapeTuple((2, 3)), "y": 1})
        assert validate_call(call, SIG) == []

    def test_missing_required(self):
        call = StructuredCall("api.Op", {"x": ShapeTuple((2, 3))})
        assert validate_call(call, SIG) == ["missing-required:y"]

    def test_unknown_parameter(self):
        call = StructuredCall("api.Op", {"x": ShapeTuple((2, 3)), "y": 1, "z": 0})
        assert "unknown-parameter:z" in validate_call(call, SIG)

    def test_rank_mismatch(self):
        call = StructuredCall("api.Op", {"x": ShapeTuple((2, 3, 4)), "y": 1})
        assert validate_call(call, SIG) == ["rank-mismatch:x:3->2"]

    def test_rank_unchecked_for_non_shape_values(self):
        # only shape-tuple bindings are checked against rank annotations
        call = StructuredCall("api.Op", {"x": [[1, 2], [3, 4]], "y": 1})
        assert validate_call(call, SIG) == []


class TestOracles:
    def test_kind_dispatch(self):
        assert oracle_kind(StatusOracle(ExceptionSignature("E", ""))) == "status"
        assert oracle_kind(ValueOracle("nan")) == "value"

    def test_value_oracle_pattern_checked(self):
        with pytest.raises(ValueError):
            ValueOracle("unknown-pattern")

    def test_recipe_validation(self):
        with pytest.raises(ValueError):
            MeasurementRecipe("wall-time-seconds", 0, 0, (StructuredCall("a", {}),))
        with pytest.raises(ValueError):
            MeasurementRecipe("bogus-metric", 1, 0, (StructuredCall("a", {}),))
        with pytest.raises(ValueError):
            MeasurementRecipe("wall-time-seconds", 1, 0, ())

    def test_performance_margin_floor(self):
        recipe = MeasurementRecipe("wall-time-seconds", 1, 0, (StructuredCall("a", {}),))
        with pytest.raises(ValueError):
            PerformanceOracle(recipe, recipe, "subject_exceeds_baseline", margin=0.9)

    def test_bug_case_kind_must_match_oracle(self):
        call = StructuredCall("api.Op", {"x": ShapeTuple((2, 3)), "y": 1})
        with pytest.raises(ValueError):
            BugCase("c1", "api.Op", call, "status", ValueOracle("nan"))


class TestIssueRecord:
    def test_state_checked(self):
        with pytest.raises(ValueError):
            IssueRecord("i", "t", "b", frozenset(), 0, "merged", 0, (), frozenset())


class TestCrossValidate:
    def _corpus(self) -> Corpus:
        corpus = Corpus()
        corpus.signatures["api.Op"] = SIG
        return corpus

    def test_trace_must_reference_known_api(self):
        corpus = self._corpus()
        corpus.traces["api.Other"] = CallStackTrace("api.Other", frozenset({"f"}))
        with pytest.raises(UnresolvedReferenceError):
            cross_validate(corpus)

    def test_bug_case_call_must_validate(self):
        corpus = self._corpus()
        call = StructuredCall("api.Op", {"x": ShapeTuple((2, 3))})
        corpus.bug_cases["c"] = BugCase("c", "api.Op", call, "value", ValueOracle("nan"))
        with pytest.raises(ParseError):
            cross_validate(corpus)

    def test_recipe_calls_must_reference_known_apis(self):
        corpus = self._corpus()
        call = StructuredCall("api.Op", {"x": ShapeTuple((2, 3)), "y": 1})
        recipe = MeasurementRecipe(
            "wall-time-seconds", 1, 0, (StructuredCall("api.Ghost", {}),)
        )
        corpus.bug_cases["c"] = BugCase(
            "c",
            "api.Op",
            call,
            "performance",
            PerformanceOracle(recipe, recipe, "subject_exceeds_baseline"),
        )
        with pytest.raises(UnresolvedReferenceError):
            cross_validate(corpus)

    def test_signature_pair_endpoints_checked(self):
        from apikin.corpus import SignaturePair

        corpus = self._corpus()
        corpus.signature_pairs.append(SignaturePair("api.Op", "api.Ghost", 0.9))
        with pytest.raises(UnresolvedReferenceError):
            cross_validate(corpus)
