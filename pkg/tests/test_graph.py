import random
from dataclasses import replace

import pydot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectflow.errors import EmptyEpisode
from affectflow.graph import (
    build_dfg,
    export_dot,
    export_json,
    filter_graph,
    graph_from_dict,
    graph_to_dict,
    import_json,
    merge_graphs,
)
from affectflow.ingest import EpisodeId
from affectflow.patterns import extract_instances, instance_highlights
from lux import lux_episodes
from oracles import brute_force_dfg


def seq(*labels):
    return list(enumerate(labels))


def conservation_holds(g):
    for label, freq in g.nodes.items():
        inflow = g.in_frequency(label) + (label == g.start_label)
        outflow = g.out_frequency(label) + (label == g.end_label)
        if not (inflow == freq == outflow):
            return False
    return True


def test_small_fixture_shape():
    g = build_dfg(seq("Getting Puzzle", "User1-Challenge", "User2-Challenge Positive emotion"))
    assert g.nodes == {"Getting Puzzle": 1, "User1-Challenge": 1, "User2-Challenge Positive emotion": 1}
    assert {k: e.sequence_numbers for k, e in g.edges.items()} == {
        ("Getting Puzzle", "User1-Challenge"): (1,),
        ("User1-Challenge", "User2-Challenge Positive emotion"): (2,),
    }


def test_single_event():
    g = build_dfg(seq("Success Positive emotion"))
    assert g.nodes == {"Success Positive emotion": 1} and g.edges == {}
    assert conservation_holds(g)


def test_abab():
    g = build_dfg(seq("A", "B", "A", "B"))
    assert g.nodes == {"A": 2, "B": 2}
    assert g.edges[("A", "B")].sequence_numbers == (1, 3)
    assert g.edges[("B", "A")].sequence_numbers == (2,)
    assert conservation_holds(g)


def test_empty_rejected():
    with pytest.raises(EmptyEpisode):
        build_dfg([])


def test_filter():
    g = build_dfg(seq("A", "B", "A", "B"))
    assert filter_graph(g, 1) == g
    f = filter_graph(g, 2)
    assert list(f.edges) == [("A", "B")]
    g2 = build_dfg(seq("S", "X", "Y", "E"))
    f2 = filter_graph(g2, 5)
    assert set(f2.nodes) == {"S", "E"} and f2.edges == {} and f2.filtered
    with pytest.raises(ValueError):
        filter_graph(g, 0)


def test_merge_offsets_sequence_numbers():
    a = build_dfg(seq("A", "B"), EpisodeId("t", 1, 0))
    b = build_dfg(seq("A", "B", "A"), EpisodeId("t", 2, 0))
    m = merge_graphs([a, b])
    assert m.nodes == {"A": 3, "B": 2}
    assert m.edges[("A", "B")].sequence_numbers == (1, 2)
    assert m.edges[("B", "A")].sequence_numbers == (3,)


def test_dot_single_node_parses():
    text = export_dot(build_dfg(seq("Getting Puzzle")))
    [graph] = pydot.graph_from_dot_data(text)
    assert len([n for n in graph.get_nodes() if n.get_name() not in ("node", "edge", "graph")]) == 1


def test_dot_quotes_awkward_labels():
    text = export_dot(build_dfg(seq('say "hi"', "back\\slash")))
    [graph] = pydot.graph_from_dot_data(text)
    assert len(graph.get_edges()) == 1


def fixture_graph():
    [ep], _, _ = lux_episodes()
    return ep, build_dfg(ep.labels, ep.episode_id)


def test_fixture_dot_has_three_colors_and_is_stable():
    ep, g = fixture_graph()
    colors, paths = instance_highlights(extract_instances(ep))
    text = export_dot(g, colors, paths)
    assert text == export_dot(g, colors, paths)
    [graph] = pydot.graph_from_dot_data(text)
    used = set()
    for e in graph.get_edges():
        c = e.get("color")
        if c:
            used.update(c.strip('"').split(":"))
    assert len(used) == 3


def test_fixture_edge_total():
    ep, g = fixture_graph()
    assert len(ep.events) == 18
    assert g.edge_frequency_total == 17
    assert conservation_holds(g)


def test_json_round_trip_is_byte_identical():
    _, g = fixture_graph()
    text = export_json(g)
    assert export_json(import_json(text)) == text
    assert graph_from_dict(graph_to_dict(g)) == g


def test_json_rejects_inconsistent_edge():
    _, g = fixture_graph()
    record = graph_to_dict(g)
    record["edges"][0]["freq"] += 1
    with pytest.raises(ValueError):
        graph_from_dict(record)


labels_st = st.lists(st.sampled_from("ABCDE"), min_size=1, max_size=50)


@settings(max_examples=200)
@given(labels_st)
def test_random_sequences_match_pair_counting(labels):
    g = build_dfg(seq(*labels))
    nodes, edges = brute_force_dfg(labels)
    assert g.nodes == dict(nodes)
    assert {k: list(e.sequence_numbers) for k, e in g.edges.items()} == edges
    assert conservation_holds(g)
    assert g.edge_frequency_total == len(labels) - 1
    all_seqs = sorted(s for e in g.edges.values() for s in e.sequence_numbers)
    assert all_seqs == list(range(1, len(labels)))
    assert g.label_sequence() == labels


@settings(max_examples=50)
@given(labels_st, st.integers(1, 5))
def test_filter_keeps_endpoints_and_only_frequent_edges(labels, k):
    g = build_dfg(seq(*labels))
    f = filter_graph(g, k)
    assert {g.start_label, g.end_label} <= set(f.nodes)
    assert all(e.frequency >= k for e in f.edges.values())
    assert set(f.edges) == {key for key, e in g.edges.items() if e.frequency >= k}


def test_dot_deterministic_under_insertion_order():
    rng = random.Random(2)
    labels = [rng.choice("ABCD") for _ in range(30)]
    g = build_dfg(seq(*labels))
    shuffled_edges = list(g.edges.items())
    rng.shuffle(shuffled_edges)
    shuffled_nodes = list(g.nodes.items())
    rng.shuffle(shuffled_nodes)
    h = replace(g, edges=dict(shuffled_edges), nodes=dict(shuffled_nodes))
    assert export_dot(h) == export_dot(g)
    assert export_json(h) == export_json(g)
