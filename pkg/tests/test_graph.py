"""Tests for graph loading, augmentation, occurrence counting, generation."""

from collections import Counter

import numpy as np
import pytest

from kgelab.errors import GraphFormatError
from kgelab.graph import (
    GenerationError,
    KnowledgeGraph,
    SyntheticConfig,
    Triple,
    add_inverse_relations,
    generate_synthetic,
    load_graph,
    occurrence_histogram,
    save_graph,
    save_histogram_csv,
    tail_occurrences,
    triples_to_array,
)


def write_split_files(root, train="", valid="", test=""):
    for name, content in (("train", train), ("valid", valid), ("test", test)):
        (root / f"{name}.tsv").write_text(content, encoding="utf-8")


class TestLoadGraph:
    def test_single_line(self, tmp_path):
        write_split_files(tmp_path, train="0\t0\t1\n")
        g = load_graph(tmp_path)
        assert g.train == (Triple(0, 0, 1),)
        assert g.valid == () and g.test == ()
        assert g.entity_count == 2 and g.relation_count == 1

    def test_counts_default_to_one_plus_max(self, tmp_path):
        write_split_files(tmp_path, train="0\t0\t1\n", valid="7\t2\t0\n")
        g = load_graph(tmp_path)
        assert g.entity_count == 8
        assert g.relation_count == 3

    def test_metadata_overrides_counts(self, tmp_path):
        write_split_files(tmp_path, train="0\t0\t1\n")
        (tmp_path / "metadata.json").write_text(
            '{"entity_count": 10, "relation_count": 4, "augmented": false}\n'
        )
        g = load_graph(tmp_path)
        assert g.entity_count == 10 and g.relation_count == 4
        assert g.augmented is False

    def test_empty_training_set(self, tmp_path):
        write_split_files(tmp_path, valid="0\t0\t1\n")
        with pytest.raises(GraphFormatError, match="empty training set"):
            load_graph(tmp_path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        write_split_files(tmp_path, train="0\t0\t1\na\t0\t1\n")
        with pytest.raises(GraphFormatError, match="line 2"):
            load_graph(tmp_path)

    def test_malformed_first_line(self, tmp_path):
        write_split_files(tmp_path, train="a\t0\t1\n")
        with pytest.raises(GraphFormatError, match="line 1"):
            load_graph(tmp_path)

    def test_wrong_column_count(self, tmp_path):
        write_split_files(tmp_path, train="0\t1\n")
        with pytest.raises(GraphFormatError, match="3 tab-separated fields"):
            load_graph(tmp_path)

    def test_negative_id(self, tmp_path):
        write_split_files(tmp_path, train="0\t0\t-1\n")
        with pytest.raises(GraphFormatError, match="negative"):
            load_graph(tmp_path)

    def test_id_overflow_against_declared_counts(self, tmp_path):
        write_split_files(tmp_path, train="0\t0\t9\n")
        (tmp_path / "metadata.json").write_text(
            '{"entity_count": 5, "relation_count": 1}\n'
        )
        with pytest.raises(GraphFormatError, match="out of range"):
            load_graph(tmp_path)

    def test_missing_split_file(self, tmp_path):
        (tmp_path / "train.tsv").write_text("0\t0\t1\n")
        with pytest.raises(GraphFormatError, match="missing split"):
            load_graph(tmp_path)

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(ValueError, match="unsupported format"):
            load_graph(tmp_path, format="parquet")

    def test_round_trip(self, tmp_path):
        cfg = SyntheticConfig(
            entity_count=30, relation_count=4, triple_count=60,
            zipf_exponent=1.0, typed=True, type_count=3, seed=7,
        )
        g = generate_synthetic(cfg)
        save_graph(g, tmp_path / "g")
        g2 = load_graph(tmp_path / "g")
        assert g2 == g

    def test_round_trip_preserves_augmented_flag(self, tmp_path, toy_graph):
        aug = add_inverse_relations(toy_graph)
        save_graph(aug, tmp_path / "g")
        assert load_graph(tmp_path / "g").augmented is True


class TestGraphInvariants:
    def test_split_overlap_rejected(self):
        with pytest.raises(ValueError, match="disjoint"):
            KnowledgeGraph(
                entity_count=2, relation_count=1,
                train=(Triple(0, 0, 1),), valid=(Triple(0, 0, 1),),
            )

    def test_bounds_checked(self):
        with pytest.raises(ValueError, match="out of range"):
            KnowledgeGraph(entity_count=2, relation_count=1, train=(Triple(0, 0, 5),))

    def test_entity_types_must_be_total(self):
        with pytest.raises(ValueError, match="every entity"):
            KnowledgeGraph(
                entity_count=3, relation_count=1,
                train=(Triple(0, 0, 1),), entity_types={0: 0, 1: 0},
            )

    def test_split_accessor(self, toy_graph):
        assert toy_graph.split("valid") == toy_graph.valid
        with pytest.raises(ValueError, match="unknown split"):
            toy_graph.split("dev")

    def test_triples_to_array(self, toy_graph):
        arr = triples_to_array(toy_graph.train)
        assert arr.shape == (3, 3) and arr.dtype == np.int64
        assert arr[1].tolist() == [2, 0, 1]


class TestAddInverseRelations:
    def test_footnote_rule(self):
        g = KnowledgeGraph(entity_count=2, relation_count=1, train=(Triple(0, 0, 1),))
        aug = add_inverse_relations(g)
        assert aug.relation_count == 2
        assert aug.train == (Triple(0, 0, 1), Triple(1, 1, 0))
        assert aug.augmented is True

    def test_applies_to_every_split(self, toy_graph):
        aug = add_inverse_relations(toy_graph)
        assert len(aug.train) == 6 and len(aug.valid) == 2 and len(aug.test) == 2
        assert Triple(2, 2, 1) in aug.valid  # inverse of (1,0,2) with offset 2
        assert Triple(0, 3, 3) in aug.test

    def test_empty_splits_stay_empty(self):
        g = KnowledgeGraph(entity_count=2, relation_count=3, train=(Triple(0, 1, 1),))
        aug = add_inverse_relations(g)
        assert aug.valid == () and aug.test == ()
        assert aug.relation_count == 6

    def test_double_application_refused(self, toy_graph):
        aug = add_inverse_relations(toy_graph)
        with pytest.raises(ValueError, match="already augmented"):
            add_inverse_relations(aug)

    def test_535_relations_become_1070(self):
        g = KnowledgeGraph(entity_count=2, relation_count=535, train=(Triple(0, 3, 1),))
        assert add_inverse_relations(g).relation_count == 1070


class TestTailOccurrences:
    def test_direct_count(self):
        g = KnowledgeGraph(
            entity_count=3, relation_count=1,
            train=(Triple(0, 0, 1), Triple(2, 0, 1)),
        )
        table = tail_occurrences(g)
        assert table.per_relation == {(0, 1): 2}
        assert table.global_counts == {1: 2}
        assert table.total() == 2

    def test_global_is_sum_over_relations(self, toy_graph):
        table = tail_occurrences(toy_graph)
        for t in set(e for _, e in table.per_relation):
            summed = sum(
                c for (r, e), c in table.per_relation.items() if e == t
            )
            assert summed == table.global_counts[t]

    def test_other_splits_countable(self, toy_graph):
        assert tail_occurrences(toy_graph, split="valid").global_counts == {2: 1}

    def test_recount_oracle_on_zipf_graph(self):
        """Counts must equal a brute-force recount over the emitted triples."""
        cfg = SyntheticConfig(
            entity_count=10_000, relation_count=5, triple_count=4000,
            zipf_exponent=1.2, seed=11, split_fractions=(1.0, 0.0, 0.0),
        )
        g = generate_synthetic(cfg)
        table = tail_occurrences(g)
        recount: Counter = Counter()
        per_rel_recount: Counter = Counter()
        for h, r, t in g.train:
            recount[t] += 1
            per_rel_recount[(r, t)] += 1
        assert dict(recount) == table.global_counts
        assert dict(per_rel_recount) == table.per_relation
        top = max(table.global_counts, key=table.global_counts.get)
        assert table.global_counts[top] == recount[top]


class TestOccurrenceHistogram:
    def test_direct_tabulation(self):
        g = KnowledgeGraph(
            entity_count=8, relation_count=1,
            train=(
                Triple(0, 0, 1), Triple(2, 0, 1),
                Triple(3, 0, 5), Triple(4, 0, 5),
                Triple(6, 0, 7),
            ),
        )
        hist = occurrence_histogram(tail_occurrences(g))
        assert hist == [(1, 1), (2, 2)]

    def test_empty_table(self):
        g = KnowledgeGraph(entity_count=2, relation_count=1, train=(Triple(0, 0, 1),))
        table = tail_occurrences(g, split="valid")
        assert occurrence_histogram(table) == []

    def test_mass_conservation_on_zipf_graph(self):
        """Sum of count*num_entities equals the number of counted triples."""
        cfg = SyntheticConfig(
            entity_count=500, relation_count=3, triple_count=2000,
            zipf_exponent=1.5, seed=3, split_fractions=(1.0, 0.0, 0.0),
        )
        g = generate_synthetic(cfg)
        table = tail_occurrences(g)
        hist = occurrence_histogram(table)
        assert sum(c * n for c, n in hist) == len(g.train)
        assert sum(n for _, n in hist) == len(table.global_counts)
        counts = [c for c, _ in hist]
        assert counts == sorted(counts)
        # concentration: some entity occurs far above the uniform expectation
        assert max(table.global_counts.values()) > 3 * (2000 / 500)

    def test_csv_format(self, tmp_path):
        out = tmp_path / "hist.csv"
        save_histogram_csv([(1, 10), (3, 2)], out)
        assert out.read_text() == "occurrence,num_entities\n1,10\n3,2\n"


class TestGenerateSynthetic:
    def test_uniform_limit(self):
        cfg = SyntheticConfig(
            entity_count=10, relation_count=1, triple_count=5,
            zipf_exponent=0.0, seed=1, split_fractions=(1.0, 0.0, 0.0),
        )
        g = generate_synthetic(cfg)
        assert g.num_triples == 5
        assert len(set(g.train)) == 5

    def test_concentration_increases_with_exponent(self):
        """Max tail share under zipf 2.0 beats the uniform draw, same seed."""
        shares = {}
        for s in (0.0, 2.0):
            cfg = SyntheticConfig(
                entity_count=10, relation_count=1, triple_count=5,
                zipf_exponent=s, seed=1, split_fractions=(1.0, 0.0, 0.0),
            )
            g = generate_synthetic(cfg)
            counts = Counter(t.tail for t in g.train)
            shares[s] = max(counts.values()) / len(g.train)
        assert shares[2.0] > shares[0.0]

    def test_all_train_fractions(self):
        cfg = SyntheticConfig(
            entity_count=20, relation_count=2, triple_count=30,
            split_fractions=(1.0, 0.0, 0.0), seed=0,
        )
        g = generate_synthetic(cfg)
        assert len(g.train) == 30 and g.valid == () and g.test == ()

    def test_split_sizes_floor_rule(self):
        cfg = SyntheticConfig(
            entity_count=200, relation_count=2, triple_count=101,
            split_fractions=(0.9, 0.05, 0.05), seed=0,
        )
        g = generate_synthetic(cfg)
        assert (len(g.train), len(g.valid), len(g.test)) == (90, 5, 6)

    def test_deterministic_given_seed(self):
        cfg = SyntheticConfig(
            entity_count=50, relation_count=3, triple_count=100, seed=9,
        )
        assert generate_synthetic(cfg) == generate_synthetic(cfg)

    def test_seeds_differ(self):
        base = dict(entity_count=50, relation_count=3, triple_count=100)
        a = generate_synthetic(SyntheticConfig(**base, seed=1))
        b = generate_synthetic(SyntheticConfig(**base, seed=2))
        assert a != b

    def test_typed_tails_follow_relation_type(self):
        cfg = SyntheticConfig(
            entity_count=30, relation_count=5, triple_count=80,
            typed=True, type_count=3, seed=4,
        )
        g = generate_synthetic(cfg)
        assert g.entity_types == {e: e % 3 for e in range(30)}
        for split in ("train", "valid", "test"):
            for h, r, t in g.split(split):
                assert g.entity_types[t] == r % 3

    def test_infeasible_triple_count(self):
        cfg = SyntheticConfig(
            entity_count=2, relation_count=1, triple_count=5, seed=0,
        )
        with pytest.raises(GenerationError, match="infeasible"):
            generate_synthetic(cfg)

    def test_relations_prefer_different_tails(self):
        """Per-relation permutations decorrelate the relations' favorites."""
        cfg = SyntheticConfig(
            entity_count=1000, relation_count=4, triple_count=4000,
            zipf_exponent=2.0, seed=5, split_fractions=(1.0, 0.0, 0.0),
        )
        g = generate_synthetic(cfg)
        table = tail_occurrences(g)
        favorite = {}
        for (r, t), c in table.per_relation.items():
            if r not in favorite or c > favorite[r][1]:
                favorite[r] = (t, c)
        tops = {t for t, _ in favorite.values()}
        assert len(tops) > 1


class TestSyntheticConfigValidation:
    def test_fraction_sum_checked(self):
        with pytest.raises(ValueError, match="sum to 1"):
            SyntheticConfig(
                entity_count=5, relation_count=1, triple_count=5,
                split_fractions=(0.5, 0.1, 0.1),
            )

    def test_negative_exponent_rejected(self):
        with pytest.raises(ValueError, match="zipf_exponent"):
            SyntheticConfig(
                entity_count=5, relation_count=1, triple_count=5,
                zipf_exponent=-1.0,
            )

    def test_type_count_bounded_by_entities(self):
        with pytest.raises(ValueError, match="type_count"):
            SyntheticConfig(
                entity_count=3, relation_count=1, triple_count=2,
                typed=True, type_count=5,
            )
