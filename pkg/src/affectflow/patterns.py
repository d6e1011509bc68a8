"""Valence transitions, regulation instances, and strategy statistics.

A transition is a change in one player's valence between two of their
labeled events. Transitions that start at a pain point (Failure, Challenge,
Conflict) with an expressed emotion become regulation instances, which are
then classified into a Gross strategy family by an ordered rule table.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .annotate import EventLabel, LabeledEpisode, LabeledEvent, Valence, parse_event, parse_valence
from .errors import ConfigError
from .ingest import EpisodeId

DEFAULT_WINDOW = 3


class StrategyFamily(str, Enum):
    SituationSelection = "SituationSelection"
    SituationModification = "SituationModification"
    AttentionalDeployment = "AttentionalDeployment"
    CognitiveChange = "CognitiveChange"
    ResponseModulation = "ResponseModulation"
    Unclassified = "Unclassified"


# Strategy names whose family is fixed; rule tables may not contradict these.
KNOWN_STRATEGIES = {
    "avoidance": StrategyFamily.SituationSelection,
    "encouragement": StrategyFamily.SituationModification,
    "hint-giving": StrategyFamily.SituationModification,
    "unknown": StrategyFamily.Unclassified,
}


@dataclass(frozen=True)
class ValenceTransition:
    pseudonym: str
    from_valence: Valence
    to_valence: Valence
    from_event_index: int
    to_event_index: int
    path: tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "pseudonym": self.pseudonym,
            "from_valence": self.from_valence.value,
            "to_valence": self.to_valence.value,
            "from_event_index": self.from_event_index,
            "to_event_index": self.to_event_index,
            "path": list(self.path),
        }

    @classmethod
    def from_json(cls, r: Mapping) -> ValenceTransition:
        return cls(
            r["pseudonym"], parse_valence(r["from_valence"]), parse_valence(r["to_valence"]),
            int(r["from_event_index"]), int(r["to_event_index"]), tuple(r["path"]),
        )


def detect_transitions(episode: LabeledEpisode) -> list[ValenceTransition]:
    """Every valence change of every player, from run start to first change.

    For each player the labeled events form runs of equal valence; each pair
    of adjacent runs yields one transition from the first event of the
    earlier run to the first event of the later one. The path lists every
    labeled event (any author) strictly between the two.
    """
    by_player: dict[str, list[int]] = {}
    for i, ev in enumerate(episode.events):
        if ev.player is not None:
            by_player.setdefault(ev.player, []).append(i)

    out = []
    for player, idxs in by_player.items():
        run_start = idxs[0]
        for i in idxs[1:]:
            before = episode.events[run_start].valence
            after = episode.events[i].valence
            if after is not before:
                out.append(ValenceTransition(player, before, after, run_start, i, tuple(range(run_start + 1, i))))
                run_start = i
    out.sort(key=lambda t: (t.from_event_index, t.to_event_index))
    return out


@dataclass(frozen=True)
class RegulationInstance:
    """A candidate emotion-regulation episode for one player.

    ``transition`` is None only for a synthetic withdrawal, where a player's
    last labeled event is Negative and they fall silent without any kept
    transition leading there. ``trigger_index`` points at the pain point the
    instance is keyed on: the transition's origin, or the final Negative
    event of a synthetic withdrawal.
    """

    instance_id: str
    episode_id: EpisodeId
    pseudonym: str
    transition: ValenceTransition | None
    trigger_index: int
    trigger_event: EventLabel
    trigger_valence: Valence
    antecedents: tuple[int, ...]
    antecedent_events: tuple[LabeledEvent, ...]
    withdrawal: bool
    outcome: Valence
    strategy: StrategyFamily = StrategyFamily.Unclassified
    strategy_name: str = "unknown"

    @property
    def end_index(self) -> int:
        return self.transition.to_event_index if self.transition else self.trigger_index

    @property
    def edge_sequence_numbers(self) -> tuple[int, ...]:
        """Edges (1-based sequence numbers) traversed by this instance's path."""
        if self.transition is None:
            return (self.trigger_index,) if self.trigger_index > 0 else ()
        return tuple(range(self.transition.from_event_index + 1, self.transition.to_event_index + 1))

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "episode_id": self.episode_id.key,
            "pseudonym": self.pseudonym,
            "transition": self.transition.to_json() if self.transition else None,
            "trigger_index": self.trigger_index,
            "trigger_event": self.trigger_event.value,
            "trigger_valence": self.trigger_valence.value,
            "antecedents": list(self.antecedents),
            "antecedent_events": [e.to_json() for e in self.antecedent_events],
            "withdrawal": self.withdrawal,
            "outcome": self.outcome.value,
            "strategy": self.strategy.value,
            "strategy_name": self.strategy_name,
        }

    @classmethod
    def from_json(cls, r: Mapping) -> RegulationInstance:
        return cls(
            instance_id=r["instance_id"],
            episode_id=EpisodeId.from_key(r["episode_id"]),
            pseudonym=r["pseudonym"],
            transition=ValenceTransition.from_json(r["transition"]) if r["transition"] else None,
            trigger_index=int(r["trigger_index"]),
            trigger_event=parse_event(r["trigger_event"]),
            trigger_valence=parse_valence(r["trigger_valence"]),
            antecedents=tuple(r["antecedents"]),
            antecedent_events=tuple(LabeledEvent.from_json(e) for e in r["antecedent_events"]),
            withdrawal=bool(r["withdrawal"]),
            outcome=parse_valence(r["outcome"]),
            strategy=StrategyFamily(r["strategy"]),
            strategy_name=r["strategy_name"],
        )


# -- classification ----------------------------------------------------------


@dataclass(frozen=True)
class StrategyRule:
    """One row of the rule table. All given conditions must hold.

    Antecedent conditions are satisfied when at least one antecedent event
    matches every antecedent constraint.
    """

    family: StrategyFamily
    name: str
    withdrawal: bool | None = None
    antecedent_event: EventLabel | None = None
    antecedent_valence: Valence | None = None
    outcome_in: frozenset[Valence] | None = None

    def matches(self, instance: RegulationInstance) -> bool:
        if self.withdrawal is not None and instance.withdrawal != self.withdrawal:
            return False
        if self.outcome_in is not None and instance.outcome not in self.outcome_in:
            return False
        if self.antecedent_event is not None or self.antecedent_valence is not None:
            return any(
                (self.antecedent_event is None or a.event is self.antecedent_event)
                and (self.antecedent_valence is None or a.valence is self.antecedent_valence)
                for a in instance.antecedent_events
            )
        return True

    @classmethod
    def from_json(cls, r: Mapping) -> StrategyRule:
        when = r.get("when", {})
        unknown = set(when) - {"withdrawal", "antecedent_event", "antecedent_valence", "outcome_in"}
        if unknown:
            raise ConfigError(f"rule {r.get('name')!r}: unknown conditions {sorted(unknown)}")
        try:
            family = StrategyFamily(r["family"])
        except (KeyError, ValueError):
            raise ConfigError(f"rule {r.get('name')!r}: bad family {r.get('family')!r}") from None
        name = r.get("name")
        if not name:
            raise ConfigError("rule without a name")
        if name in KNOWN_STRATEGIES and KNOWN_STRATEGIES[name] is not family:
            raise ConfigError(f"strategy {name!r} belongs to {KNOWN_STRATEGIES[name].value}, not {family.value}")
        return cls(
            family=family,
            name=name,
            withdrawal=when.get("withdrawal"),
            antecedent_event=parse_event(when["antecedent_event"]) if "antecedent_event" in when else None,
            antecedent_valence=parse_valence(when["antecedent_valence"]) if "antecedent_valence" in when else None,
            outcome_in=frozenset(parse_valence(v) for v in when["outcome_in"]) if "outcome_in" in when else None,
        )


def load_rule_table(path: str | Path | None = None) -> list[StrategyRule]:
    if path is None:
        text = resources.files("affectflow.data").joinpath("strategy_rules.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return [StrategyRule.from_json(r) for r in json.loads(text)]


DEFAULT_RULES: tuple[StrategyRule, ...] = tuple(load_rule_table())


def classify_strategy(
    instance: RegulationInstance,
    rules: Sequence[StrategyRule] = DEFAULT_RULES,
) -> tuple[StrategyFamily, str]:
    for rule in rules:
        if rule.matches(instance):
            return rule.family, rule.name
    return StrategyFamily.Unclassified, "unknown"


# -- extraction --------------------------------------------------------------


def _antecedents(episode: LabeledEpisode, player: str, end: int, window: int) -> tuple[int, ...]:
    return tuple(
        i for i in range(max(0, end - window), end)
        if episode.events[i].player is not None and episode.events[i].player != player
    )


def _has_withdrawn(episode: LabeledEpisode, player: str, index: int) -> bool:
    """True if ``index`` is the player's last labeled event and they never write again."""
    ev = episode.events[index]
    if ev.valence is not Valence.Negative:
        return False
    if any(e.player == player for e in episode.events[index + 1 :]):
        return False
    last = episode.last_message_id(player)
    return last is None or last <= ev.msg_id


def extract_instances(
    episode: LabeledEpisode,
    transitions: Sequence[ValenceTransition] | None = None,
    *,
    window: int = DEFAULT_WINDOW,
    require_affective_origin: bool = True,
    rules: Sequence[StrategyRule] | None = DEFAULT_RULES,
) -> list[RegulationInstance]:
    """Turn pain-point transitions (and silent exits) into classified instances.

    A transition qualifies when its origin event is a pain point and, with
    ``require_affective_origin``, the origin valence is not Neutral. A player
    whose last labeled event is Negative and who writes nothing afterwards
    is marked as withdrawn: the qualifying transition into that event is
    flagged, or a synthetic withdrawal instance is added if there is none.
    Pass ``rules=None`` to leave instances unclassified.
    """
    if transitions is None:
        transitions = detect_transitions(episode)
    events = episode.events
    key = episode.episode_id.key
    found: list[RegulationInstance] = []

    def make(player, transition, trigger, end, withdrawal, outcome):
        ante = _antecedents(episode, player, end, window)
        return RegulationInstance(
            instance_id="",
            episode_id=episode.episode_id,
            pseudonym=player,
            transition=transition,
            trigger_index=trigger,
            trigger_event=events[trigger].event,
            trigger_valence=events[trigger].valence,
            antecedents=ante,
            antecedent_events=tuple(events[i] for i in ante),
            withdrawal=withdrawal,
            outcome=outcome,
        )

    covered_ends = set()
    for t in transitions:
        origin = events[t.from_event_index]
        if not origin.event.is_pain_point:
            continue
        if require_affective_origin and t.from_valence is Valence.Neutral:
            continue
        withdrawn = _has_withdrawn(episode, t.pseudonym, t.to_event_index)
        found.append(make(t.pseudonym, t, t.from_event_index, t.to_event_index, withdrawn, t.to_valence))
        covered_ends.add(t.to_event_index)

    last_by_player: dict[str, int] = {}
    for i, ev in enumerate(events):
        if ev.player is not None:
            last_by_player[ev.player] = i
    for player, i in last_by_player.items():
        if i not in covered_ends and _has_withdrawn(episode, player, i):
            found.append(make(player, None, i, i, True, Valence.Negative))

    found.sort(key=lambda inst: (inst.end_index, inst.trigger_index, inst.pseudonym))
    out = []
    for n, inst in enumerate(found):
        family, name = (StrategyFamily.Unclassified, "unknown") if rules is None else classify_strategy(inst, rules)
        out.append(replace(inst, instance_id=f"{key}#{n}", strategy=family, strategy_name=name))
    return out


PALETTE = ("hotpink", "gold", "deepskyblue", "limegreen", "darkorange", "mediumpurple", "crimson", "teal")


def instance_highlights(
    instances: Sequence[RegulationInstance],
    palette: Sequence[str] = PALETTE,
) -> tuple[dict[str, str], dict[str, tuple[int, ...]]]:
    """(color_map, instance_edges) for :func:`affectflow.graph.export_dot`."""
    colors = {inst.instance_id: palette[i % len(palette)] for i, inst in enumerate(instances)}
    edges = {inst.instance_id: inst.edge_sequence_numbers for inst in instances}
    return colors, edges


# -- aggregation -------------------------------------------------------------


@dataclass(frozen=True)
class StrategyStats:
    trigger_event: EventLabel
    trigger_valence: Valence
    strategy_name: str
    family: StrategyFamily
    instance_count: int
    success_count: int

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.trigger_event.value, self.trigger_valence.value, self.strategy_name)

    @property
    def success_rate(self) -> Fraction:
        return Fraction(self.success_count, self.instance_count)

    def to_json(self) -> dict:
        return {
            "trigger_event": self.trigger_event.value,
            "trigger_valence": self.trigger_valence.value,
            "strategy_name": self.strategy_name,
            "family": self.family.value,
            "instance_count": self.instance_count,
            "success_count": self.success_count,
            "success_rate": float(self.success_rate),
        }

    @classmethod
    def from_json(cls, r: Mapping) -> StrategyStats:
        return cls(
            parse_event(r["trigger_event"]), parse_valence(r["trigger_valence"]), r["strategy_name"],
            StrategyFamily(r["family"]), int(r["instance_count"]), int(r["success_count"]),
        )


def _sort_stats(stats: Iterable[StrategyStats]) -> list[StrategyStats]:
    return sorted(stats, key=lambda s: (-s.success_rate, -s.instance_count, s.key))


def aggregate_strategies(instances: Iterable[RegulationInstance]) -> list[StrategyStats]:
    """Count instances and Positive outcomes per (trigger event, valence, strategy)."""
    counts: dict[tuple, list] = {}
    for inst in instances:
        k = (inst.trigger_event, inst.trigger_valence, inst.strategy_name)
        entry = counts.setdefault(k, [inst.strategy, 0, 0])
        entry[1] += 1
        entry[2] += inst.outcome is Valence.Positive
    return _sort_stats(StrategyStats(e, v, name, fam, n, s) for (e, v, name), (fam, n, s) in counts.items())


def merge_stats(*parts: Iterable[StrategyStats]) -> list[StrategyStats]:
    """Combine partial aggregates; equal to aggregating the union of instances."""
    counts: dict[tuple, list] = {}
    for part in parts:
        for s in part:
            entry = counts.setdefault((s.trigger_event, s.trigger_valence, s.strategy_name), [s.family, 0, 0])
            entry[1] += s.instance_count
            entry[2] += s.success_count
    return _sort_stats(StrategyStats(e, v, name, fam, n, k) for (e, v, name), (fam, n, k) in counts.items())


def write_instances(instances: Iterable[RegulationInstance]) -> str:
    return "".join(json.dumps(i.to_json(), ensure_ascii=False) + "\n" for i in instances)


def read_instances(text: str) -> list[RegulationInstance]:
    return [RegulationInstance.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


def stats_to_json(stats: Sequence[StrategyStats]) -> str:
    return json.dumps([s.to_json() for s in stats], indent=2) + "\n"


def stats_from_json(text: str) -> list[StrategyStats]:
    return [StrategyStats.from_json(r) for r in json.loads(text)]


def stats_to_csv(stats: Sequence[StrategyStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = ["trigger_event", "trigger_valence", "strategy_name", "family", "instance_count", "success_count", "success_rate"]
    writer.writerow(cols)
    for s in stats:
        row = s.to_json()
        writer.writerow([row[c] for c in cols])
    return buf.getvalue()
