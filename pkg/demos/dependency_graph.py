"""
Directly-follows graph of one puzzle episode
============================================

Writes ``team1_2_0.dot`` next to this script; render it with
``dot -Tpng team1_2_0.dot -o team1_2_0.png``.
"""

from pathlib import Path

from affectflow.annotate import Lexicon, auto_label, label_episode, load_annotations, merge_annotators, resolve_labels
from affectflow.graph import build_dfg, export_dot, filter_graph
from affectflow.ingest import load_emoji_table, parse_log, pseudonymize, segment_episodes
from affectflow.patterns import extract_instances, instance_highlights

here = Path(__file__).resolve().parent
fixtures = here.parent / "fixtures"

lines = parse_log((fixtures / "lux_team1_puzzle2.jsonl").read_bytes())
messages, _ = pseudonymize(lines, load_emoji_table(), bot_users=["lux_gamemaster"])
gold = merge_annotators([load_annotations(fixtures / "lux_gold_rater_a.csv")])
labels = resolve_labels(auto_label(messages, Lexicon.load()), gold)
[episode] = segment_episodes(messages, {m: ev for m, (ev, _) in labels.items()})
labeled = label_episode(episode, labels)

graph = build_dfg(labeled.labels, labeled.episode_id)
print(len(graph.nodes), "nodes,", graph.edge_frequency_total, "edge traversals")
for (src, dst), edge in sorted(graph.edges.items(), key=lambda kv: kv[1].sequence_numbers):
    print(edge.sequence_numbers, src, "->", dst)

# each traversal can be read back in order
assert graph.label_sequence() == [str(label) for _, label in labeled.labels]

# keep only edges walked at least twice
print(sorted(filter_graph(graph, 2).edges))

colors, paths = instance_highlights(extract_instances(labeled))
(here / "team1_2_0.dot").write_text(export_dot(graph, colors, paths))
print(colors)
