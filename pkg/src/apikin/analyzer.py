"""Static grouping of analogous framework source functions.

Two functions are analogous when both their I/O-argument sets and their callee
sets clear the similarity thresholds. Groups are the connected components of
the analogous-pair graph with at least two members.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus import Corpus, SourceFunction, jaccard

# Default per-framework context thresholds; beta_for falls back to the first.
DEFAULT_BETA = 0.6
DEFAULT_BETAS = {"pytorch-like": 0.6, "tensorflow-like": 0.8}


@dataclass(frozen=True)
class SimilarityThresholds:
    """Inclusive lower bounds for the three similarity checks."""

    alpha_io: float = 0.8
    alpha_call: float = 0.8
    beta: float | None = None  # explicit override; wins over beta_by_framework
    beta_by_framework: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_BETAS))

    def __post_init__(self) -> None:
        for name, value in (("alpha_io", self.alpha_io), ("alpha_call", self.alpha_call)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")

    def beta_for(self, framework: str) -> float:
        if self.beta is not None:
            return self.beta
        return self.beta_by_framework.get(framework, DEFAULT_BETA)


@dataclass(frozen=True)
class FunctionGroup:
    """A set of mutually reachable analogous source functions, |members| >= 2.

    group_id is the lexicographically smallest member name.
    """

    group_id: str
    members: frozenset[str]


def function_similarity(f: SourceFunction, g: SourceFunction) -> tuple[float, float]:
    """(I/O-argument similarity, callee similarity) for one function pair."""
    return jaccard(f.io_args, g.io_args), jaccard(f.callees, g.callees)


def is_analogous(f: SourceFunction, g: SourceFunction, thresholds: SimilarityThresholds) -> bool:
    sim_io, sim_call = function_similarity(f, g)
    return sim_io >= thresholds.alpha_io and sim_call >= thresholds.alpha_call


class _UnionFind:
    def __init__(self, items: Iterable[str]) -> None:
        self.parent = {x: x for x in items}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _candidate_pairs(
    functions: Mapping[str, SourceFunction], thresholds: SimilarityThresholds
) -> Iterable[tuple[str, str]]:
    # An analogous pair needs callee jaccard >= alpha_call; with alpha_call > 0
    # that forces a shared callee, so an inverted index over callee tokens is a
    # sound pre-filter. With alpha_call == 0 every pair passes, so fall back to
    # the full quadratic enumeration.
    names = sorted(functions)
    if thresholds.alpha_call <= 0.0:
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                yield a, b
        return
    by_callee: dict[str, list[str]] = {}
    for name in names:
        for callee in functions[name].callees:
            by_callee.setdefault(callee, []).append(name)
    seen: set[tuple[str, str]] = set()
    for bucket in by_callee.values():
        bucket.sort()
        for i, a in enumerate(bucket):
            for b in bucket[i + 1 :]:
                if (a, b) not in seen:
                    seen.add((a, b))
                    yield a, b


def cluster_functions(
    corpus: Corpus | Mapping[str, SourceFunction], thresholds: SimilarityThresholds
) -> list[FunctionGroup]:
    """Group analogous source functions; deterministic output order.

    Accepts a corpus or a plain name-to-function mapping. Returns groups sorted
    by group_id; singletons are not reported.
    """
    functions = corpus.source_functions if isinstance(corpus, Corpus) else corpus
    uf = _UnionFind(functions)
    for a, b in _candidate_pairs(functions, thresholds):
        if is_analogous(functions[a], functions[b], thresholds):
            uf.union(a, b)
    components: dict[str, set[str]] = {}
    for name in functions:
        components.setdefault(uf.find(name), set()).add(name)
    groups = [
        FunctionGroup(group_id=min(members), members=frozenset(members))
        for members in components.values()
        if len(members) >= 2
    ]
    groups.sort(key=lambda g: g.group_id)
    return groups


def encode_group(group: FunctionGroup) -> dict:
    return {"kind": "function_group", "group_id": group.group_id, "members": sorted(group.members)}


def decode_group(rec: dict, ctx: str = "") -> FunctionGroup:
    from .corpus import ParseError

    members = rec.get("members")
    if not isinstance(members, list) or len(members) < 2:
        raise ParseError(f"{ctx}: function_group needs >= 2 members")
    group_id = rec.get("group_id") or min(members)
    return FunctionGroup(group_id=str(group_id), members=frozenset(str(m) for m in members))
