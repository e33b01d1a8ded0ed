import json
from collections import Counter

import pytest
from hypothesis import given

from conftest import graphs
from mgsa.kg import (Corpus, CorpusError, Example, KnowledgeGraph, Triple, cluster_by_head,
                     cluster_corpus, parse_corpus, write_corpus)


def brute_force_cluster(triples):
    """Stable grouping by scanning heads in first-appearance order."""
    heads = []
    for t in triples:
        if t[0] not in heads:
            heads.append(t[0])
    return [t for h in heads for t in triples if t[0] == h]


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


class TestTriple:
    def test_strips_whitespace(self):
        t = Triple("  Alan Bean ", "occupation", "test pilot\t")
        assert t.head == "Alan Bean" and t.tail == "test pilot"

    @pytest.mark.parametrize("parts", [("", "r", "B"), ("A", "  ", "B"), ("A", "r", "")])
    def test_empty_component_rejected(self, parts):
        with pytest.raises(CorpusError, match="empty"):
            Triple(*parts)


class TestKnowledgeGraph:
    def test_single_triple_nodes(self):
        g = KnowledgeGraph.from_triples([("Acharya Institute of Technology", "country", "India")])
        assert g.entity_nodes == ("Acharya Institute of Technology", "India")
        assert g.relation_nodes == ("country",)
        assert g.m == 3

    def test_relations_not_deduplicated(self):
        triples = [("A", "r1", "B"), ("A", "r1", "C")]
        g = KnowledgeGraph.from_triples(triples)
        assert len(g.relation_nodes) == sum(1 for _ in triples)
        assert g.entity_nodes == ("A", "B", "C")

    def test_units_entities_first(self):
        g = KnowledgeGraph.from_triples([("B", "r", "A"), ("A", "s", "C")])
        assert g.unit_labels() == ["B", "A", "C", "r", "s"]
        assert g.triple_units(1) == (1, 4, 2)
        assert g.is_entity_unit(2) and not g.is_entity_unit(3)

    def test_self_loop_is_one_entity(self):
        g = KnowledgeGraph.from_triples([("A", "r", "A")])
        assert g.entity_nodes == ("A",)
        assert g.triple_units(0) == (0, 1, 0)

    @given(graphs())
    def test_entity_count_matches_distinct_labels(self, g):
        labels = {x for t in g.triples for x in (t.head, t.tail)}
        assert g.num_entities == len(labels)
        assert len(set(g.entity_nodes)) == g.num_entities
        assert g.m == g.num_entities + len(g.triples)

    @given(graphs())
    def test_structurally_identical_graphs_index_identically(self, g):
        h = KnowledgeGraph.from_triples([t.as_list() for t in g.triples])
        assert h.unit_labels() == g.unit_labels()


class TestParseCorpus:
    def test_table_example(self, tmp_path):
        path = write_lines(tmp_path / "c.jsonl", [json.dumps(
            {"triples": [["Acharya Institute of Technology", "country", "India"]],
             "text": ["The Acharya Institute of Technology is in India."]})])
        corpus = parse_corpus(path, "test")
        assert len(corpus) == 1 and corpus.split == "test"
        g = corpus[0].graph
        assert g.entity_nodes == ("Acharya Institute of Technology", "India")
        assert len(g.relation_nodes) == 1

    def test_empty_file(self, tmp_path):
        assert len(parse_corpus(write_lines(tmp_path / "e.jsonl", []))) == 0

    def test_malformed_json_reports_line(self, tmp_path):
        good = json.dumps({"triples": [["A", "r", "B"]], "text": ["x"]})
        path = write_lines(tmp_path / "bad.jsonl", [good, "{not json"])
        with pytest.raises(CorpusError) as err:
            parse_corpus(path)
        assert err.value.line == 2 and "line 2" in str(err.value)

    def test_empty_component_identifies_triple(self, tmp_path):
        path = write_lines(tmp_path / "bad.jsonl",
                           [json.dumps({"triples": [["A", "", "B"]], "text": ["x"]})])
        with pytest.raises(CorpusError, match=r"\['A', '', 'B'\]"):
            parse_corpus(path)

    def test_missing_fields(self, tmp_path):
        path = write_lines(tmp_path / "bad.jsonl", [json.dumps({"triples": [["A", "r", "B"]]})])
        with pytest.raises(CorpusError, match="missing"):
            parse_corpus(path)

    def test_round_trip(self, tmp_path):
        examples = [Example(KnowledgeGraph.from_triples([("Ä", "r", "B"), ("B", "s", "C")]),
                            ("one", "two")),
                    Example(KnowledgeGraph.from_triples([("x y", "z", "w")]), ("text",))]
        write_corpus(examples, tmp_path / "c.jsonl")
        assert parse_corpus(tmp_path / "c.jsonl").examples == tuple(examples)

    def test_example_needs_reference(self):
        with pytest.raises(CorpusError):
            Example(KnowledgeGraph.from_triples([("A", "r", "B")]), ())


class TestClusterByHead:
    def test_spec_example(self):
        g = KnowledgeGraph.from_triples([("A", "r1", "B"), ("C", "r2", "D"), ("A", "r3", "E")])
        out = [t.as_list() for t in cluster_by_head(g).triples]
        assert out == [["A", "r1", "B"], ["A", "r3", "E"], ["C", "r2", "D"]]

    def test_fixed_point_and_single(self):
        g = KnowledgeGraph.from_triples([("A", "r1", "B"), ("A", "r3", "E"), ("C", "r2", "D")])
        assert cluster_by_head(g) == g
        one = KnowledgeGraph.from_triples([("A", "r", "B")])
        assert cluster_by_head(one) == one

    @given(graphs(max_triples=8))
    def test_matches_brute_force(self, g):
        triples = [tuple(t.as_list()) for t in g.triples]
        out = [tuple(t.as_list()) for t in cluster_by_head(g).triples]
        assert out == brute_force_cluster(triples)

    @given(graphs(max_triples=8))
    def test_idempotent_and_multiset_preserving(self, g):
        c = cluster_by_head(g)
        assert cluster_by_head(c) == c
        assert Counter(c.triples) == Counter(g.triples)

    @given(graphs(max_triples=8))
    def test_heads_contiguous(self, g):
        heads = [t.head for t in cluster_by_head(g).triples]
        runs = [h for i, h in enumerate(heads) if i == 0 or heads[i - 1] != h]
        assert len(runs) == len(set(heads))

    def test_cluster_corpus_keeps_split(self):
        c = Corpus((Example(KnowledgeGraph.from_triples([("A", "r", "B"), ("C", "s", "D"),
                                                         ("A", "t", "E")]), ("x",)),), "valid")
        out = cluster_corpus(c)
        assert out.split == "valid"
        assert [t.head for t in out[0].graph.triples] == ["A", "A", "C"]
