import fnmatch
import itertools
import logging
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from apikin.analyzer import FunctionGroup, SimilarityThresholds
from apikin.corpus import ApiSignature, CallStackTrace, Corpus, ParamSpec, ParseError, SignaturePair
from apikin.matcher import (
    PROVENANCE_CONTEXT,
    PROVENANCE_SIGNATURE,
    REJECT_MUTUAL_REQUIRED,
    CandidatePair,
    CanonicalContext,
    EmptyContextError,
    build_contexts,
    canonicalize,
    context_similarity,
    decode_pair,
    encode_pair,
    filter_arguments,
    match_pairs,
    normalize_trace,
    orient,
)

from support import random_api_corpus


def sig(name: str, required: str = "", optional: str = "", framework: str = "pytorch-like") -> ApiSignature:
    return ApiSignature(
        name,
        tuple(ParamSpec(p) for p in required.split()),
        tuple(ParamSpec(p, default=0) for p in optional.split()),
        framework,
    )


def small_corpus(entries) -> Corpus:
    """entries: (signature, frame tokens) pairs."""
    corpus = Corpus()
    for signature, frames in entries:
        corpus.signatures[signature.name] = signature
        corpus.traces[signature.name] = CallStackTrace(signature.name, frozenset(frames.split()))
    return corpus


def brute_force_pairs(corpus, groups, thresholds, noise_patterns=()):
    """Independent all-pairs reference for context-provenance matching."""
    to_group = {}
    for g in groups:
        for m in g.members:
            to_group[m] = g.group_id
    contexts = {}
    for api, trace in corpus.traces.items():
        kept = [
            f
            for f in trace.frames
            if not any(fnmatch.fnmatchcase(f, p) for p in noise_patterns)
        ]
        tokens = frozenset(to_group.get(f, f) for f in kept)
        if tokens:
            contexts[api] = tokens
    out = []
    apis = sorted(a for a in contexts if a in corpus.signatures)
    for a, b in itertools.combinations(apis, 2):
        sa, sb = corpus.signatures[a], corpus.signatures[b]
        if sa.framework != sb.framework:
            continue
        score = len(contexts[a] & contexts[b]) / len(contexts[a] | contexts[b])
        if score >= thresholds.beta_for(sa.framework):
            s_missing = any(n not in sb.param_names for n in sa.required_names)
            t_missing = any(n not in sa.param_names for n in sb.required_names)
            reason = REJECT_MUTUAL_REQUIRED if (s_missing and t_missing) else None
            out.append(CandidatePair(a, b, score, PROVENANCE_CONTEXT, None, reason))
    out.sort(key=lambda p: (p.source_api, p.target_api))
    return out


class TestContexts:
    def test_noise_glob_filters_frames(self):
        trace = CallStackTrace("api", frozenset({"at::conv", "sys_malloc_impl", "at::pad"}))
        assert normalize_trace(trace, ("*malloc*",)) == frozenset({"at::conv", "at::pad"})

    def test_all_filtered_warns(self, caplog):
        trace = CallStackTrace("api", frozenset({"heap_malloc"}))
        with caplog.at_level(logging.WARNING, logger="apikin.matcher"):
            assert normalize_trace(trace, ("*malloc*",)) == frozenset()
        assert any("api" in r.message for r in caplog.records)

    def test_empty_trace_does_not_warn(self, caplog):
        with caplog.at_level(logging.WARNING, logger="apikin.matcher"):
            normalize_trace(CallStackTrace("api", frozenset()), ("*",))
        assert not caplog.records

    def test_canonicalize_collapses_group_members(self):
        groups = [FunctionGroup("f1", frozenset({"f1", "f2", "f3"}))]
        frames = frozenset({"f2", "f3", "other"})
        assert canonicalize(frames, groups) == frozenset({"f1", "other"})

    def test_build_contexts_omits_empty(self):
        corpus = small_corpus([(sig("a"), "my_malloc"), (sig("b"), "fn")])
        contexts = build_contexts(corpus, [], ("*malloc*",))
        assert set(contexts) == {"b"}

    def test_similarity_refuses_empty_context(self):
        full = CanonicalContext("a", frozenset({"x"}))
        empty = CanonicalContext("b", frozenset())
        with pytest.raises(EmptyContextError):
            context_similarity(full, empty)


class TestArgumentFilter:
    def test_fixture_verdicts(self, mini_corpus):
        conv2d = mini_corpus.signatures["torch.nn.Conv2d"]
        assert filter_arguments(conv2d, mini_corpus.signatures["torch.nn.Conv3d"]) is None
        assert filter_arguments(conv2d, mini_corpus.signatures["torch.nn.LazyConv2d"]) is None
        assert (
            filter_arguments(conv2d, mini_corpus.signatures["torch.nn.LPPool2d"])
            == REJECT_MUTUAL_REQUIRED
        )

    def test_one_sided_mismatch_accepted(self):
        # only s has an unmatched required param; t's requireds are covered
        s = sig("s", required="a b")
        t = sig("t", required="a")
        assert filter_arguments(s, t) is None
        assert filter_arguments(t, s) is None

    names = st.lists(st.sampled_from("abcdefgh"), unique=True, max_size=6)

    @given(names, names, names, names)
    def test_filter_is_symmetric(self, req_s, opt_s, req_t, opt_t):
        s = sig("s", required=" ".join(req_s), optional=" ".join(x for x in opt_s if x not in req_s))
        t = sig("t", required=" ".join(req_t), optional=" ".join(x for x in opt_t if x not in req_t))
        assert (filter_arguments(s, t) is None) == (filter_arguments(t, s) is None)


class TestMatchPairs:
    def corpus_ab(self):
        return small_corpus(
            [
                (sig("m.a", required="x"), "f1 f2 f3"),
                (sig("m.b", required="x"), "f1 f2 f4"),
                (sig("m.c", required="x"), "g1"),
            ]
        )

    def test_beta_threshold_is_inclusive(self):
        corpus = self.corpus_ab()
        pairs = match_pairs(corpus, [], SimilarityThresholds(beta=0.5), signature_pairs=[])
        assert [(p.source_api, p.target_api) for p in pairs] == [("m.a", "m.b")]
        assert pairs[0].score == 0.5
        assert match_pairs(
            corpus, [], SimilarityThresholds(beta=0.5 + 1e-9), signature_pairs=[]
        ) == []

    def test_endpoints_lexicographic_and_sorted(self):
        corpus = small_corpus(
            [(sig("m.z"), "f1"), (sig("m.y"), "f1"), (sig("m.x"), "f1")]
        )
        pairs = match_pairs(corpus, [], SimilarityThresholds(beta=0.9), signature_pairs=[])
        assert [(p.source_api, p.target_api) for p in pairs] == [
            ("m.x", "m.y"),
            ("m.x", "m.z"),
            ("m.y", "m.z"),
        ]

    def test_cross_framework_context_pairs_skipped(self):
        corpus = small_corpus(
            [
                (sig("m.a", framework="pytorch-like"), "f1"),
                (sig("m.b", framework="tensorflow-like"), "f1"),
            ]
        )
        assert match_pairs(corpus, [], SimilarityThresholds(beta=0.1), signature_pairs=[]) == []

    def test_per_framework_beta(self):
        corpus = small_corpus(
            [
                (sig("pt.a", framework="pytorch-like"), "f1 f2 f3"),
                (sig("pt.b", framework="pytorch-like"), "f1 f2 f4"),
                (sig("tf.a", framework="tensorflow-like"), "f1 f2 f3"),
                (sig("tf.b", framework="tensorflow-like"), "f1 f2 f4"),
            ]
        )
        # 0.5 clears neither default; beta_by_framework drives the split
        t = SimilarityThresholds(beta_by_framework={"pytorch-like": 0.5, "tensorflow-like": 0.8})
        pairs = match_pairs(corpus, [], t, signature_pairs=[])
        assert [(p.source_api, p.target_api) for p in pairs] == [("pt.a", "pt.b")]

    def test_signature_supplement_and_topk(self):
        corpus = small_corpus([(sig(f"m.api{i:02d}"), f"tok{i}") for i in range(25)])
        sps = [SignaturePair("m.api00", f"m.api{i:02d}", 1 - i / 100) for i in range(1, 25)]
        pairs = match_pairs(corpus, [], SimilarityThresholds(), signature_pairs=sps)
        assert len(pairs) == 20
        assert all(p.provenance == PROVENANCE_SIGNATURE for p in pairs)
        kept_targets = {p.target_api for p in pairs}
        assert "m.api01" in kept_targets and "m.api21" not in kept_targets

    def test_cross_provenance_dedup_keeps_context(self):
        corpus = self.corpus_ab()
        sps = [SignaturePair("m.b", "m.a", 0.7), SignaturePair("m.a", "m.b", 0.9)]
        pairs = match_pairs(corpus, [], SimilarityThresholds(beta=0.5), signature_pairs=sps)
        assert len(pairs) == 1
        p = pairs[0]
        assert p.provenance == PROVENANCE_CONTEXT
        assert (p.source_api, p.target_api) == ("m.a", "m.b")
        assert p.score == 0.5 and p.signature_score == 0.9

    def test_signature_only_duplicates_keep_best_score(self):
        corpus = self.corpus_ab()
        sps = [SignaturePair("m.a", "m.c", 0.4), SignaturePair("m.c", "m.a", 0.6)]
        pairs = match_pairs(corpus, [], SimilarityThresholds(beta=0.99), signature_pairs=sps)
        assert len(pairs) == 1
        assert pairs[0].score == 0.6 and pairs[0].source_api == "m.c"

    def test_signature_pair_unknown_api_skipped(self, caplog):
        corpus = self.corpus_ab()
        with caplog.at_level(logging.WARNING, logger="apikin.matcher"):
            pairs = match_pairs(
                corpus,
                [],
                SimilarityThresholds(beta=0.99),
                signature_pairs=[SignaturePair("m.a", "m.ghost", 0.9)],
            )
        assert pairs == []
        assert any("ghost" in r.message for r in caplog.records)

    def test_cross_framework_signature_pair_skipped(self):
        corpus = small_corpus(
            [
                (sig("m.a", framework="pytorch-like"), "f1"),
                (sig("m.b", framework="tensorflow-like"), "f2"),
            ]
        )
        pairs = match_pairs(
            corpus,
            [],
            SimilarityThresholds(),
            signature_pairs=[SignaturePair("m.a", "m.b", 0.95)],
        )
        assert pairs == []

    def test_rejected_pairs_still_reported(self):
        corpus = small_corpus(
            [(sig("m.a", required="x y"), "f1"), (sig("m.b", required="z"), "f1")]
        )
        pairs = match_pairs(corpus, [], SimilarityThresholds(beta=0.5), signature_pairs=[])
        assert len(pairs) == 1
        assert not pairs[0].accepted
        assert pairs[0].reject_reason == REJECT_MUTUAL_REQUIRED

    def test_mini_corpus_pair_counts(self, mini_corpus):
        from apikin.analyzer import cluster_functions

        groups = cluster_functions(mini_corpus.source_functions, SimilarityThresholds())
        pairs = match_pairs(
            mini_corpus, groups, SimilarityThresholds(), noise_patterns=("*malloc*",)
        )
        accepted = [p for p in pairs if p.accepted]
        assert len(pairs) == 19 and len(accepted) == 18
        rejected = [p for p in pairs if not p.accepted]
        assert rejected[0].target_api == "torch.nn.LPPool2d"

    @pytest.mark.parametrize("beta", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_matches_brute_force(self, beta):
        rng = random.Random(77000 + int(beta * 10))
        for _ in range(20):
            corpus, groups = random_api_corpus(rng, max_apis=40)
            noise = ("noise-*",) if rng.random() < 0.5 else ()
            t = SimilarityThresholds(beta=beta)
            assert match_pairs(corpus, groups, t, signature_pairs=[], noise_patterns=noise) == (
                brute_force_pairs(corpus, groups, t, noise)
            )


class TestOrient:
    pair = CandidatePair("m.a", "m.b", 0.8, PROVENANCE_CONTEXT, signature_score=0.9)

    def test_identity(self):
        assert orient(self.pair, "m.a") is self.pair

    def test_swap_preserves_fields(self):
        flipped = orient(self.pair, "m.b")
        assert (flipped.source_api, flipped.target_api) == ("m.b", "m.a")
        assert flipped.score == 0.8 and flipped.signature_score == 0.9

    def test_non_endpoint_rejected(self):
        with pytest.raises(ValueError):
            orient(self.pair, "m.c")


class TestPairRecords:
    def test_round_trip(self):
        pair = CandidatePair("m.a", "m.b", 0.75, PROVENANCE_CONTEXT, 0.9, REJECT_MUTUAL_REQUIRED)
        rec = encode_pair(pair)
        assert rec["verdict"] == "reject"
        assert decode_pair(rec) == pair

    def test_accept_omits_reason(self):
        rec = encode_pair(CandidatePair("m.a", "m.b", 0.75, PROVENANCE_CONTEXT))
        assert rec["verdict"] == "accept"
        assert "reject_reason" not in rec and "signature_score" not in rec

    def test_decode_requires_score(self):
        with pytest.raises(ParseError):
            decode_pair({"kind": "candidate_pair", "source": "a", "target": "b", "provenance": "context"})
