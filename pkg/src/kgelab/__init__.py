"""kgelab: a small lab for translational knowledge-graph embeddings.

The package covers the full loop of a scoring-function search study:
synthetic graph generation, a signed-term scoring-function algebra, L1
translational training with self-supervised negatives, filtered ranking
evaluation under exchangeable protocols (full vs. sampled candidate sets),
a tail-popularity baseline, and random search over the term space.
"""

__version__ = "0.1.0"

from .baseline import EntOccurModel, fit_entoccur
from .graph import (
    KnowledgeGraph,
    SyntheticConfig,
    Triple,
    add_inverse_relations,
    generate_synthetic,
    load_graph,
    save_graph,
)
from .ranking import EmbeddingScorer, EvalProtocol, RankingMetrics, evaluate
from .scoring import (
    SFSpec,
    Term,
    VectorPart,
    catalog,
    distinct_search_space_size,
    enumerate_terms,
    parse_sf,
    print_sf,
    search_space_size,
    uses_head,
)
from .search import SearchConfig, SearchResult, run_search, sample_sf
from .training import (
    EmbeddingStore,
    TrainConfig,
    TrainReport,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "__version__",
    "EntOccurModel",
    "fit_entoccur",
    "KnowledgeGraph",
    "SyntheticConfig",
    "Triple",
    "add_inverse_relations",
    "generate_synthetic",
    "load_graph",
    "save_graph",
    "EmbeddingScorer",
    "EvalProtocol",
    "RankingMetrics",
    "evaluate",
    "SFSpec",
    "Term",
    "VectorPart",
    "catalog",
    "distinct_search_space_size",
    "enumerate_terms",
    "parse_sf",
    "print_sf",
    "search_space_size",
    "uses_head",
    "SearchConfig",
    "SearchResult",
    "run_search",
    "sample_sf",
    "EmbeddingStore",
    "TrainConfig",
    "TrainReport",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
