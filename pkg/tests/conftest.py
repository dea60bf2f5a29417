from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from agentsim.corpus import Document, build_index, load_default_stopwords


@pytest.fixture(scope="session")
def stopwords():
    return load_default_stopwords()


@pytest.fixture()
def toy_corpus():
    docs = [
        Document("d1", "Paris is the capital of France"),
        Document("d2", "The Manhattan Project developed the first nuclear weapons"),
        Document("d3", "Berlin is the capital of Germany and a large city"),
    ]
    return build_index(docs)
