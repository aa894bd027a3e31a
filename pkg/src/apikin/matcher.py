"""Match analogous API pairs by call-stack context similarity.

An API's context is its trace frame set after noise filtering, with frames
that belong to a function group collapsed to the group id. Pairs whose context
jaccard clears the per-framework threshold are emitted; an external
signature-similarity list supplements them (top 20 per source API).
"""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .analyzer import FunctionGroup, SimilarityThresholds
from .corpus import ApiSignature, CallStackTrace, Corpus, SignaturePair, jaccard

log = logging.getLogger(__name__)

SIGNATURE_TOP_K = 20

PROVENANCE_CONTEXT = "context"
PROVENANCE_SIGNATURE = "signature"

REJECT_MUTUAL_REQUIRED = "mutual-required-mismatch"


class EmptyContextError(ValueError):
    """Raised when similarity is requested for an API with an empty context."""


@dataclass(frozen=True)
class CanonicalContext:
    api_name: str
    tokens: frozenset[str]


@dataclass(frozen=True)
class CandidatePair:
    """One analogous API pair. reject_reason None means the filter accepted it."""

    source_api: str
    target_api: str
    score: float
    provenance: str
    signature_score: Optional[float] = None
    reject_reason: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.reject_reason is None


# ---------------------------------------------------------------------------
# contexts


def normalize_trace(trace: CallStackTrace, noise_patterns: Sequence[str] = ()) -> frozenset[str]:
    """Drop frames matching any noise glob pattern; dedupe is inherent."""
    frames = frozenset(
        f for f in trace.frames if not any(fnmatch.fnmatchcase(f, p) for p in noise_patterns)
    )
    if trace.frames and not frames:
        log.warning("all frames of %s filtered as noise; API excluded from matching", trace.api_name)
    return frames


def canonicalize(frames: frozenset[str], groups: Iterable[FunctionGroup]) -> frozenset[str]:
    """Replace grouped function names with their group id; dedupe follows."""
    to_group: dict[str, str] = {}
    for g in groups:
        for member in g.members:
            to_group[member] = g.group_id
    return frozenset(to_group.get(f, f) for f in frames)


def build_contexts(
    corpus: Corpus,
    groups: Iterable[FunctionGroup],
    noise_patterns: Sequence[str] = (),
) -> dict[str, CanonicalContext]:
    """Canonical context per API; APIs whose context ends up empty are omitted."""
    groups = list(groups)
    contexts: dict[str, CanonicalContext] = {}
    for api, trace in corpus.traces.items():
        tokens = canonicalize(normalize_trace(trace, noise_patterns), groups)
        if tokens:
            contexts[api] = CanonicalContext(api, tokens)
    return contexts


def context_similarity(a: CanonicalContext, b: CanonicalContext) -> float:
    if not a.tokens or not b.tokens:
        raise EmptyContextError(f"empty context for {a.api_name if not a.tokens else b.api_name}")
    return jaccard(a.tokens, b.tokens)


# ---------------------------------------------------------------------------
# argument filter


def filter_arguments(sig_s: ApiSignature, sig_t: ApiSignature) -> Optional[str]:
    """Reject only when BOTH sides have a required parameter missing from the
    other side's full parameter set. Returns the reject reason or None."""
    s_missing = any(name not in sig_t.param_names for name in sig_s.required_names)
    t_missing = any(name not in sig_s.param_names for name in sig_t.required_names)
    if s_missing and t_missing:
        return REJECT_MUTUAL_REQUIRED
    return None


# ---------------------------------------------------------------------------
# matching


def _top_k_signature_pairs(pairs: Sequence[SignaturePair], k: int = SIGNATURE_TOP_K) -> list[SignaturePair]:
    by_source: dict[str, list[SignaturePair]] = {}
    for p in pairs:
        by_source.setdefault(p.source_api, []).append(p)
    kept: list[SignaturePair] = []
    for source in sorted(by_source):
        ranked = sorted(by_source[source], key=lambda p: (-p.score, p.target_api))
        kept.extend(ranked[:k])
    return kept


def match_pairs(
    corpus: Corpus,
    groups: Iterable[FunctionGroup],
    thresholds: SimilarityThresholds,
    signature_pairs: Optional[Sequence[SignaturePair]] = None,
    noise_patterns: Sequence[str] = (),
) -> list[CandidatePair]:
    """All analogous API pairs from both provenances, argument-filtered.

    Context pairs are emitted once per unordered pair (endpoints in
    lexicographic order) within one framework. Signature pairs keep their
    stated direction; a pair present in both provenances is reported once with
    context provenance and both scores. Output is sorted by (source, target).
    """
    contexts = build_contexts(corpus, groups, noise_patterns)
    if signature_pairs is None:
        signature_pairs = corpus.signature_pairs

    merged: dict[frozenset[str], CandidatePair] = {}

    apis = sorted(a for a in contexts if a in corpus.signatures)
    for i, a in enumerate(apis):
        for b in apis[i + 1 :]:
            fw_a = corpus.signatures[a].framework
            if fw_a != corpus.signatures[b].framework:
                continue
            score = context_similarity(contexts[a], contexts[b])
            if score >= thresholds.beta_for(fw_a):
                merged[frozenset((a, b))] = CandidatePair(
                    source_api=a, target_api=b, score=score, provenance=PROVENANCE_CONTEXT
                )

    for sp in _top_k_signature_pairs(signature_pairs):
        sig_s = corpus.signatures.get(sp.source_api)
        sig_t = corpus.signatures.get(sp.target_api)
        if sig_s is None or sig_t is None:
            log.warning("signature pair references unknown API: %s -> %s", sp.source_api, sp.target_api)
            continue
        if sig_s.framework != sig_t.framework:
            log.warning("skipping cross-framework signature pair %s -> %s", sp.source_api, sp.target_api)
            continue
        key = frozenset((sp.source_api, sp.target_api))
        prev = merged.get(key)
        if prev is None:
            merged[key] = CandidatePair(
                source_api=sp.source_api,
                target_api=sp.target_api,
                score=sp.score,
                provenance=PROVENANCE_SIGNATURE,
            )
        elif prev.provenance == PROVENANCE_CONTEXT:
            best = sp.score if prev.signature_score is None else max(prev.signature_score, sp.score)
            merged[key] = CandidatePair(
                source_api=prev.source_api,
                target_api=prev.target_api,
                score=prev.score,
                provenance=PROVENANCE_CONTEXT,
                signature_score=best,
            )
        else:
            if sp.score > prev.score:
                merged[key] = CandidatePair(
                    source_api=sp.source_api,
                    target_api=sp.target_api,
                    score=sp.score,
                    provenance=PROVENANCE_SIGNATURE,
                )

    result: list[CandidatePair] = []
    for pair in merged.values():
        reason = filter_arguments(
            corpus.signatures[pair.source_api], corpus.signatures[pair.target_api]
        )
        result.append(
            CandidatePair(
                source_api=pair.source_api,
                target_api=pair.target_api,
                score=pair.score,
                provenance=pair.provenance,
                signature_score=pair.signature_score,
                reject_reason=reason,
            )
        )
    result.sort(key=lambda p: (p.source_api, p.target_api))
    return result


def orient(pair: CandidatePair, source_api: str) -> CandidatePair:
    """Return the pair oriented so that source_api is its source endpoint."""
    if pair.source_api == source_api:
        return pair
    if pair.target_api != source_api:
        raise ValueError(f"{source_api} is not an endpoint of {pair.source_api}->{pair.target_api}")
    return CandidatePair(
        source_api=pair.target_api,
        target_api=pair.source_api,
        score=pair.score,
        provenance=pair.provenance,
        signature_score=pair.signature_score,
        reject_reason=pair.reject_reason,
    )


# ---------------------------------------------------------------------------
# records


def encode_pair(pair: CandidatePair) -> dict:
    obj: dict = {
        "kind": "candidate_pair",
        "source": pair.source_api,
        "target": pair.target_api,
        "score": pair.score,
        "provenance": pair.provenance,
        "verdict": "accept" if pair.accepted else "reject",
    }
    if pair.signature_score is not None:
        obj["signature_score"] = pair.signature_score
    if pair.reject_reason is not None:
        obj["reject_reason"] = pair.reject_reason
    return obj


def decode_pair(rec: dict, ctx: str = "") -> CandidatePair:
    from .corpus import ParseError

    for key in ("source", "target", "score", "provenance"):
        if key not in rec:
            raise ParseError(f"{ctx}: candidate_pair missing {key!r}")
    return CandidatePair(
        source_api=str(rec["source"]),
        target_api=str(rec["target"]),
        score=float(rec["score"]),
        provenance=str(rec["provenance"]),
        signature_score=rec.get("signature_score"),
        reject_reason=rec.get("reject_reason"),
    )
