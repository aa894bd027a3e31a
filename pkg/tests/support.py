"""Shared test helpers: fixture paths and random-corpus generators."""

from __future__ import annotations

import random
from pathlib import Path

from apikin.analyzer import FunctionGroup
from apikin.corpus import ApiSignature, CallStackTrace, Corpus, ParamSpec, SourceFunction

REPO = Path(__file__).resolve().parent.parent
MINI = REPO / "fixtures" / "mini"


def random_functions(rng: random.Random, max_n: int = 200) -> dict[str, SourceFunction]:
    """Random source functions with enough near-duplicates to form groups."""
    n = rng.randint(2, max_n)
    io_pool = [f"arg{i}" for i in range(12)]
    callee_pool = [f"callee{i}" for i in range(12)]
    protos = [
        (
            frozenset(rng.sample(io_pool, rng.randint(0, 6))),
            frozenset(rng.sample(callee_pool, rng.randint(0, 6))),
        )
        for _ in range(rng.randint(1, 6))
    ]
    functions: dict[str, SourceFunction] = {}
    for i in range(n):
        name = f"fn{i:03d}"
        if rng.random() < 0.7:
            io, callees = protos[rng.randrange(len(protos))]
            io, callees = set(io), set(callees)
            for _ in range(rng.randint(0, 2)):
                if rng.random() < 0.5:
                    io.symmetric_difference_update({rng.choice(io_pool)})
                else:
                    callees.symmetric_difference_update({rng.choice(callee_pool)})
            functions[name] = SourceFunction(name, frozenset(io), frozenset(callees))
        else:
            functions[name] = SourceFunction(
                name,
                frozenset(rng.sample(io_pool, rng.randint(0, 6))),
                frozenset(rng.sample(callee_pool, rng.randint(0, 6))),
            )
    return functions


def random_api_corpus(
    rng: random.Random, max_apis: int = 50
) -> tuple[Corpus, list[FunctionGroup]]:
    """Random traced APIs plus disjoint function groups for matcher tests."""
    n = rng.randint(2, max_apis)
    fn_tokens = [f"fn-{i}" for i in range(16)]
    frame_pool = fn_tokens + [f"noise-{i}" for i in range(3)]
    grouped = rng.sample(fn_tokens, rng.randint(0, 8))
    groups: list[FunctionGroup] = []
    while len(grouped) >= 2:
        size = min(len(grouped), rng.randint(2, 4))
        members, grouped = grouped[:size], grouped[size:]
        groups.append(FunctionGroup(min(members), frozenset(members)))

    corpus = Corpus()
    param_pool = [f"p{k}" for k in range(8)]
    for i in range(n):
        name = f"api.mod{i % 3}.Op{i}"
        required = tuple(ParamSpec(x) for x in rng.sample(param_pool, rng.randint(0, 3)))
        taken = {p.name for p in required}
        rest = [x for x in param_pool if x not in taken]
        optional = tuple(ParamSpec(x, default=0) for x in rng.sample(rest, rng.randint(0, 3)))
        corpus.signatures[name] = ApiSignature(
            name, required, optional, rng.choice(["pytorch-like", "tensorflow-like"])
        )
        frames = frozenset(rng.sample(frame_pool, rng.randint(0, 7)))
        corpus.traces[name] = CallStackTrace(name, frames)
    return corpus, groups
