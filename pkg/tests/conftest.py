"""Shared fixtures over the bundled mini corpus."""

from __future__ import annotations

from pathlib import Path

import pytest

from apikin.corpus import Corpus
from apikin.records import load_corpus

from support import MINI


@pytest.fixture(scope="session")
def mini_dir() -> Path:
    return MINI


@pytest.fixture(scope="session")
def mini_corpus() -> Corpus:
    return load_corpus(MINI / "corpus.jsonl")
