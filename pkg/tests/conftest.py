"""Shared fixtures for the test suite."""

import pytest

from kgelab.graph import KnowledgeGraph, Triple


@pytest.fixture
def toy_graph() -> KnowledgeGraph:
    """A tiny hand-written graph: 4 entities, 2 relations, 3/1/1 split."""
    return KnowledgeGraph(
        entity_count=4,
        relation_count=2,
        train=(Triple(0, 0, 1), Triple(2, 0, 1), Triple(0, 1, 3)),
        valid=(Triple(1, 0, 2),),
        test=(Triple(3, 1, 0),),
    )
