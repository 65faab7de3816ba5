import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from argex.amr import (
    AMRGraph,
    AMRVocab,
    LinearizedAMR,
    VocabMode,
    build_vocab,
    canonical_form,
    delinearize,
    is_isomorphic,
    linearize,
    parse_penman,
    read_penman_file,
    to_penman,
    write_penman_file,
)
from argex.errors import EmptyCorpus, MalformedPenman, MalformedSequence

from util import make_random_graph

SINGLE = "(a / appeal-01)"
TWO_NODE = "(a / appeal-01 :ARG0 (d / district))"
REENTRANT = "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))"


class TestParsePenman:
    def test_single_node(self):
        g = parse_penman(SINGLE)
        assert g.nodes == (("a", "appeal-01"),)
        assert g.edges == ()
        assert g.root == "a"

    def test_two_nodes_one_edge(self):
        g = parse_penman(TWO_NODE)
        assert g.nodes == (("a", "appeal-01"), ("d", "district"))
        assert g.edges == (("a", ":ARG0", "d"),)
        assert g.root == "a"

    def test_unbalanced_raises(self):
        with pytest.raises(MalformedPenman):
            parse_penman("(a / appeal-01 :ARG0")

    def test_missing_concept_raises(self):
        with pytest.raises(MalformedPenman):
            parse_penman("(a appeal-01)")

    def test_duplicate_variable_raises(self):
        with pytest.raises(MalformedPenman):
            parse_penman("(a / x :ARG0 (a / y))")

    def test_relation_without_target_raises(self):
        with pytest.raises(MalformedPenman):
            parse_penman("(a / x :ARG0 :ARG1 (b / y))")

    def test_trailing_content_raises(self):
        with pytest.raises(MalformedPenman):
            parse_penman("(a / x) (b / y)")

    def test_empty_raises(self):
        with pytest.raises(MalformedPenman):
            parse_penman("   ")

    def test_reentrancy_preserved(self):
        g = parse_penman(REENTRANT)
        assert ("g", ":ARG0", "b") in g.edges
        assert len(g.nodes) == 3

    def test_forward_reference(self):
        g = parse_penman("(w / want-01 :ARG0 b :ARG1 (g / go-02 :ARG0 (b / boy)))")
        assert ("w", ":ARG0", "b") in g.edges
        assert len(g.nodes) == 3

    def test_constant_targets(self):
        g = parse_penman('(c / city :name "York" :quant 5 :polarity -)')
        assert ("c", ":name", '"York"') in g.edges
        assert ("c", ":quant", "5") in g.edges
        assert ("c", ":polarity", "-") in g.edges

    def test_quoted_constant_with_space(self):
        g = parse_penman('(c / city :name "New York")')
        assert ("c", ":name", '"New York"') in g.edges

    def test_cycle_rejected(self):
        with pytest.raises(MalformedPenman):
            parse_penman("(a / x :ARG0 (b / y :ARG0 a))")

    def test_self_loop_rejected(self):
        with pytest.raises(MalformedPenman):
            parse_penman("(a / x :ARG0 a)")


class TestGraphInvariants:
    def test_unreachable_node_rejected(self):
        with pytest.raises(MalformedPenman):
            AMRGraph(nodes=(("a", "x"), ("b", "y")), edges=(), root="a")

    def test_bad_relation_label_rejected(self):
        with pytest.raises(MalformedPenman):
            AMRGraph(nodes=(("a", "x"), ("b", "y")), edges=(("a", "ARG0", "b"),), root="a")

    def test_undeclared_root_rejected(self):
        with pytest.raises(MalformedPenman):
            AMRGraph(nodes=(("a", "x"),), edges=(), root="q")


class TestLinearize:
    def test_single_node(self):
        g = parse_penman(SINGLE)
        assert list(linearize(g)) == ["(", "appeal-01", ")"]

    def test_two_nodes(self):
        g = parse_penman(TWO_NODE)
        assert list(linearize(g)) == ["(", "appeal-01", ":ARG0", "(", "district", ")", ")"]

    def test_reentrancy_emits_reference(self):
        g = parse_penman(REENTRANT)
        toks = list(linearize(g))
        # shared node declared once with its variable, referenced bare afterwards
        assert toks == [
            "(", "want-01",
            ":ARG0", "(", "b", "/", "boy", ")",
            ":ARG1", "(", "go-02", ":ARG0", "b", ")",
            ")",
        ]
        assert toks.count("b") == 2

    def test_constants_bare(self):
        g = parse_penman('(c / city :quant 5 :name "York")')
        assert list(linearize(g)) == ["(", "city", ":quant", "5", ":name", '"York"', ")"]

    def test_balanced_and_min_length(self):
        rng = random.Random(0)
        for _ in range(50):
            toks = list(linearize(make_random_graph(rng)))
            assert toks.count("(") == toks.count(")")
            assert len(toks) >= 3


class TestDelinearize:
    def test_single_round_trip(self):
        g = parse_penman(SINGLE)
        assert is_isomorphic(delinearize(linearize(g)), g)

    def test_reentrant_round_trip(self):
        g = parse_penman(REENTRANT)
        g2 = delinearize(linearize(g))
        assert is_isomorphic(g2, g)
        targets = [t for _, _, t in g2.edges]
        assert len(targets) == len(g2.edges)
        # the shared node keeps a single declaration
        assert len(g2.nodes) == 3

    def test_relation_without_head_raises(self):
        with pytest.raises(MalformedSequence):
            delinearize(["(", ":ARG0", ")"])

    def test_unbalanced_raises(self):
        with pytest.raises(MalformedSequence):
            delinearize(["(", "x"])

    def test_trailing_raises(self):
        with pytest.raises(MalformedSequence):
            delinearize(["(", "x", ")", ")"])

    def test_empty_raises(self):
        with pytest.raises(MalformedSequence):
            delinearize([])

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_random_graphs(self, seed):
        g = make_random_graph(random.Random(seed))
        assert is_isomorphic(delinearize(linearize(g)), g)


class TestPenmanIO:
    def test_to_penman_round_trip(self):
        for text in (SINGLE, TWO_NODE, REENTRANT):
            g = parse_penman(text)
            assert is_isomorphic(parse_penman(to_penman(g)), g)

    def test_file_round_trip(self, tmp_path):
        rng = random.Random(3)
        graphs = [make_random_graph(rng) for _ in range(5)]
        path = tmp_path / "corpus.amr"
        write_penman_file(graphs, path)
        back = read_penman_file(path)
        assert len(back) == len(graphs)
        for a, b in zip(graphs, back):
            assert is_isomorphic(a, b)


class TestBuildVocab:
    def test_no_relations(self):
        vocab = build_vocab([parse_penman(SINGLE)], VocabMode.RELATIONS_ONLY)
        assert vocab.special_tokens == ()

    def test_relations_only(self):
        vocab = build_vocab([parse_penman(TWO_NODE)], "relations_only")
        assert set(vocab.special_tokens) == {":ARG0"}

    def test_relations_and_concepts(self):
        vocab = build_vocab([parse_penman(TWO_NODE)], VocabMode.RELATIONS_AND_CONCEPTS)
        assert set(vocab.special_tokens) == {":ARG0", "appeal-01", "district"}

    def test_empty_corpus_raises(self):
        with pytest.raises(EmptyCorpus):
            build_vocab([], VocabMode.RELATIONS_ONLY)

    @given(st.lists(st.integers(min_value=0, max_value=5000), min_size=1, max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_relations_subset_of_full(self, seeds):
        graphs = [make_random_graph(random.Random(s)) for s in seeds]
        rel = set(build_vocab(graphs, VocabMode.RELATIONS_ONLY).special_tokens)
        full = set(build_vocab(graphs, VocabMode.RELATIONS_AND_CONCEPTS).special_tokens)
        assert rel <= full


class TestIsomorphism:
    def test_renamed_variables_match(self):
        a = parse_penman("(a / x :ARG0 (b / y))")
        b = parse_penman("(q / x :ARG0 (r / y))")
        assert is_isomorphic(a, b)

    def test_different_structure_rejected(self):
        a = parse_penman("(a / x :ARG0 (b / y))")
        b = parse_penman("(a / x :ARG1 (b / y))")
        assert not is_isomorphic(a, b)

    def test_reentrancy_vs_copy_rejected(self):
        shared = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))")
        copied = parse_penman("(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 (c / boy)))")
        assert not is_isomorphic(shared, copied)

    def test_canonical_form_ignores_declaration_interleaving(self):
        a = AMRGraph(
            nodes=(("a", "x"), ("b", "y"), ("c", "z")),
            edges=(("a", ":ARG0", "b"), ("b", ":ARG1", "c")),
            root="a",
        )
        b = AMRGraph(
            nodes=(("a", "x"), ("b", "y"), ("c", "z")),
            edges=(("b", ":ARG1", "c"), ("a", ":ARG0", "b")),
            root="a",
        )
        assert canonical_form(a) == canonical_form(b)
