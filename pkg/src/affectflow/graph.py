"""Directly-follows dependency graphs over composite labels.

Nodes are composite labels weighted by how often they occur in an episode.
Every consecutive pair of labeled events is one edge traversal; traversals
are numbered 1..E-1 in temporal order so that a path through the graph can
be read back as a run of sequence numbers.
"""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .annotate import CompositeLabel
from .errors import EmptyEpisode
from .ingest import EpisodeId


@dataclass(frozen=True)
class DfgEdge:
    source: str
    target: str
    sequence_numbers: tuple[int, ...]

    @property
    def frequency(self) -> int:
        return len(self.sequence_numbers)


@dataclass(frozen=True)
class DependencyGraph:
    episode_id: EpisodeId
    nodes: Mapping[str, int]
    edges: Mapping[tuple[str, str], DfgEdge]
    start_label: str
    end_label: str
    filtered: bool = field(default=False, compare=False)

    def in_frequency(self, label: str) -> int:
        return sum(e.frequency for (_, t), e in self.edges.items() if t == label)

    def out_frequency(self, label: str) -> int:
        return sum(e.frequency for (s, _), e in self.edges.items() if s == label)

    @property
    def edge_frequency_total(self) -> int:
        return sum(e.frequency for e in self.edges.values())

    def label_sequence(self) -> list[str]:
        """Rebuild the event label sequence by walking edges in sequence order."""
        steps = sorted((seq, e.source, e.target) for e in self.edges.values() for seq in e.sequence_numbers)
        if not steps:
            return [self.start_label]
        return [steps[0][1]] + [target for _, _, target in steps]


def _label_text(label: CompositeLabel | str) -> str:
    return label.render() if isinstance(label, CompositeLabel) else str(label)


def build_dfg(
    labeled_episode: Sequence[tuple[int, CompositeLabel | str]],
    episode_id: EpisodeId = EpisodeId("", 0, 0),
) -> DependencyGraph:
    """Build the directly-follows graph of an ordered list of (msg_id, label)."""
    if not labeled_episode:
        raise EmptyEpisode(f"episode {episode_id.key} has no labeled events")
    labels = [_label_text(label) for _, label in labeled_episode]
    nodes = Counter(labels)
    traversals: dict[tuple[str, str], list[int]] = {}
    for seq, pair in enumerate(zip(labels, labels[1:]), start=1):
        traversals.setdefault(pair, []).append(seq)
    edges = {pair: DfgEdge(pair[0], pair[1], tuple(seqs)) for pair, seqs in traversals.items()}
    return DependencyGraph(episode_id, dict(nodes), edges, labels[0], labels[-1])


def filter_graph(graph: DependencyGraph, min_freq: int) -> DependencyGraph:
    """Drop edges rarer than ``min_freq`` and the nodes they leave isolated.

    Start and end nodes always survive. Flow conservation generally does not
    hold on the result.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    edges = {k: e for k, e in graph.edges.items() if e.frequency >= min_freq}
    keep = {graph.start_label, graph.end_label}
    for s, t in edges:
        keep.update((s, t))
    nodes = {label: f for label, f in graph.nodes.items() if label in keep}
    return DependencyGraph(
        graph.episode_id, nodes, edges, graph.start_label, graph.end_label,
        filtered=graph.filtered or min_freq > 1,
    )


def merge_graphs(graphs: Sequence[DependencyGraph], episode_id: EpisodeId = EpisodeId("merged", 0, 0)) -> DependencyGraph:
    """Corpus-level graph: frequencies summed, sequence numbers offset per episode.

    Episode boundaries are not edges, so the per-episode conservation
    invariants do not carry over.
    """
    if not graphs:
        raise EmptyEpisode("nothing to merge")
    nodes: Counter = Counter()
    traversals: dict[tuple[str, str], list[int]] = {}
    offset = 0
    for g in graphs:
        nodes.update(g.nodes)
        top = 0
        for key, edge in g.edges.items():
            traversals.setdefault(key, []).extend(offset + s for s in edge.sequence_numbers)
            top = max([top, *edge.sequence_numbers])
        offset += top
    edges = {k: DfgEdge(k[0], k[1], tuple(sorted(v))) for k, v in traversals.items()}
    return DependencyGraph(episode_id, dict(nodes), edges, graphs[0].start_label, graphs[-1].end_label, filtered=True)


# -- export ------------------------------------------------------------------


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(
    graph: DependencyGraph,
    color_map: Mapping[str, str] | None = None,
    instance_edges: Mapping[str, Collection[int]] | None = None,
) -> str:
    """Graphviz digraph text, nodes and edges in lexicographic order.

    ``instance_edges`` maps a regulation-instance id to the edge sequence
    numbers of its path and ``color_map`` maps the same id to a color. An
    edge on several highlighted paths gets a colon-separated color list.
    """
    color_map = color_map or {}
    instance_edges = instance_edges or {}
    seq_colors: dict[int, list[str]] = {}
    for inst_id in sorted(instance_edges):
        color = color_map.get(inst_id)
        if color is None:
            continue
        for seq in instance_edges[inst_id]:
            seq_colors.setdefault(seq, []).append(color)

    lines = [f"digraph {_dot_quote(graph.episode_id.key or 'dfg')} {{", "  rankdir=TB;", "  node [shape=box];"]
    for label in sorted(graph.nodes):
        attrs = [f"label={_dot_quote(f'{label} ({graph.nodes[label]})')}"]
        if label == graph.start_label:
            attrs.append("peripheries=2")
        if label == graph.end_label:
            attrs.append("style=bold")
        lines.append(f"  {_dot_quote(label)} [{', '.join(attrs)}];")
    for key in sorted(graph.edges):
        edge = graph.edges[key]
        seqs = ",".join(str(s) for s in edge.sequence_numbers)
        attrs = [f"label={_dot_quote(f'{edge.frequency} [{seqs}]')}"]
        colors: list[str] = []
        for s in edge.sequence_numbers:
            for c in seq_colors.get(s, []):
                if c not in colors:
                    colors.append(c)
        if colors:
            attrs.append(f"color={_dot_quote(':'.join(colors))}")
            attrs.append("penwidth=2")
        lines.append(f"  {_dot_quote(edge.source)} -> {_dot_quote(edge.target)} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_dict(graph: DependencyGraph) -> dict:
    return {
        "episode_id": graph.episode_id.key,
        "start": graph.start_label,
        "end": graph.end_label,
        "nodes": [{"label": label, "freq": graph.nodes[label]} for label in sorted(graph.nodes)],
        "edges": [
            {"from": e.source, "to": e.target, "freq": e.frequency, "seqs": list(e.sequence_numbers)}
            for _, e in sorted(graph.edges.items())
        ],
    }


def graph_from_dict(record: Mapping) -> DependencyGraph:
    nodes = {n["label"]: int(n["freq"]) for n in record["nodes"]}
    edges = {}
    for e in record["edges"]:
        seqs = tuple(int(s) for s in e["seqs"])
        if len(seqs) != int(e["freq"]):
            raise ValueError(f"edge {e['from']!r} -> {e['to']!r}: freq does not match seqs")
        edges[(e["from"], e["to"])] = DfgEdge(e["from"], e["to"], seqs)
    return DependencyGraph(EpisodeId.from_key(record["episode_id"]), nodes, edges, record["start"], record["end"])


def export_json(graph: DependencyGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2, ensure_ascii=False) + "\n"


def import_json(text: str) -> DependencyGraph:
    return graph_from_dict(json.loads(text))


def export_many(graphs: Iterable[DependencyGraph]) -> str:
    return json.dumps([graph_to_dict(g) for g in graphs], indent=2, ensure_ascii=False) + "\n"
