"""Trigger rules compiled from strategy statistics, and stream replay.

A trigger fires on a player's Negative event whose pain point matches the
rule; each (player, trigger) fires at most once per episode.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .annotate import EventLabel, LabeledEpisode, LabeledEvent, Valence, parse_event, parse_valence
from .errors import ConfigError, NoTemplates, OutOfOrderEvent
from .ingest import EpisodeId
from .patterns import StrategyFamily, StrategyStats

SCHEMA_VERSION = 1
DEFAULT_MIN_SUCCESS_RATE = Fraction(1, 2)


def load_templates(path: str | Path | None = None) -> dict[str, str]:
    if path is None:
        text = resources.files("affectflow.data").joinpath("templates.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    templates = json.loads(text)
    for name, tpl in templates.items():
        if "{user}" not in tpl:
            raise ConfigError(f"template for {name!r} has no {{user}} placeholder")
    return templates


@dataclass(frozen=True)
class TriggerRule:
    event: EventLabel
    strategy: StrategyFamily
    strategy_name: str
    template: str
    success_rate: Fraction
    min_success_rate: Fraction
    valence: Valence = Valence.Negative

    def __post_init__(self):
        if self.valence is not Valence.Negative:
            raise ConfigError("triggers fire on Negative valence only")

    @property
    def trigger(self) -> tuple[EventLabel, Valence]:
        return (self.event, self.valence)

    def render(self, pseudonym: str) -> str:
        return self.template.replace("{user}", pseudonym)

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "trigger": {"event": self.event.value, "valence": self.valence.value},
            "suggestion": {"family": self.strategy.value, "strategy_name": self.strategy_name, "template": self.template},
            "success_rate": str(self.success_rate),
            "min_success_rate": str(self.min_success_rate),
        }

    @classmethod
    def from_json(cls, r: Mapping) -> TriggerRule:
        if r.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported rule schema_version {r.get('schema_version')!r}")
        return cls(
            event=parse_event(r["trigger"]["event"]),
            valence=parse_valence(r["trigger"]["valence"]),
            strategy=StrategyFamily(r["suggestion"]["family"]),
            strategy_name=r["suggestion"]["strategy_name"],
            template=r["suggestion"]["template"],
            success_rate=Fraction(r["success_rate"]),
            min_success_rate=Fraction(r["min_success_rate"]),
        )


def compile_triggers(
    stats: Iterable[StrategyStats],
    templates: Mapping[str, str],
    min_success_rate: Fraction | float = DEFAULT_MIN_SUCCESS_RATE,
) -> list[TriggerRule]:
    """One rule per Negative trigger: its best-performing classified strategy.

    Ties on success rate go to the lexicographically smaller strategy name.
    Raises :class:`NoTemplates` when a winning strategy has no template.
    """
    threshold = Fraction(min_success_rate).limit_denominator(10**6) if isinstance(min_success_rate, float) else Fraction(min_success_rate)
    best: dict[EventLabel, StrategyStats] = {}
    for s in stats:
        if s.trigger_valence is not Valence.Negative or s.family is StrategyFamily.Unclassified:
            continue
        if s.success_rate < threshold:
            continue
        cur = best.get(s.trigger_event)
        if cur is None or (-s.success_rate, s.strategy_name) < (-cur.success_rate, cur.strategy_name):
            best[s.trigger_event] = s
    rules = []
    for event in sorted(best, key=lambda e: e.value):
        s = best[event]
        if s.strategy_name not in templates:
            raise NoTemplates(f"no template text for strategy {s.strategy_name!r}")
        rules.append(TriggerRule(event, s.family, s.strategy_name, templates[s.strategy_name], s.success_rate, threshold))
    return rules


def rules_to_json(rules: Sequence[TriggerRule]) -> str:
    return json.dumps([r.to_json() for r in rules], indent=2, ensure_ascii=False) + "\n"


def rules_from_json(text: str) -> list[TriggerRule]:
    data = json.loads(text)
    if not isinstance(data, list):
        raise ConfigError("rules file must be a JSON array")
    return [TriggerRule.from_json(r) for r in data]


@dataclass(frozen=True)
class InterventionSuggestion:
    episode_id: EpisodeId
    msg_index: int
    msg_id: int
    target_pseudonym: str
    strategy_name: str
    rendered_text: str

    def to_json(self) -> dict:
        return {
            "episode_id": self.episode_id.key,
            "msg_index": self.msg_index,
            "msg_id": self.msg_id,
            "target_pseudonym": self.target_pseudonym,
            "strategy_name": self.strategy_name,
            "rendered_text": self.rendered_text,
        }


@dataclass
class Replayer:
    """Streaming matcher for one episode; feed events in temporal order."""

    episode_id: EpisodeId
    rules: Sequence[TriggerRule]
    _fired: set[tuple[str, EventLabel]] = field(default_factory=set)
    _index: int = 0
    _last_msg_id: int | None = None

    def feed(self, event: LabeledEvent) -> list[InterventionSuggestion]:
        if self._last_msg_id is not None and event.msg_id <= self._last_msg_id:
            raise OutOfOrderEvent(f"message {event.msg_id} arrived after {self._last_msg_id}")
        self._last_msg_id = event.msg_id
        index = self._index
        self._index += 1

        player = event.player
        if player is None or event.valence is not Valence.Negative:
            return []
        out = []
        for rule in self.rules:
            if rule.trigger != (event.event, event.valence):
                continue
            key = (player, rule.event)
            if key in self._fired:
                continue
            self._fired.add(key)
            out.append(
                InterventionSuggestion(self.episode_id, index, event.msg_id, player, rule.strategy_name, rule.render(player))
            )
        return out


def replay(episodes: LabeledEpisode | Iterable[LabeledEpisode], rules: Sequence[TriggerRule]) -> list[InterventionSuggestion]:
    """Whole-episode replay; same output as feeding a :class:`Replayer`."""
    if isinstance(episodes, LabeledEpisode):
        episodes = [episodes]
    out = []
    for ep in episodes:
        ids = [ev.msg_id for ev in ep.events]
        for a, b in zip(ids, ids[1:]):
            if b <= a:
                raise OutOfOrderEvent(f"message {b} arrived after {a}")
        first: dict[tuple[str, EventLabel], tuple[int, int]] = {}
        for pos, rule in enumerate(rules):
            for i, ev in enumerate(ep.events):
                if ev.player is None or (ev.event, ev.valence) != rule.trigger:
                    continue
                key = (ev.player, rule.event)
                if key not in first or (i, pos) < first[key]:
                    first[key] = (i, pos)
        for (player, _), (i, pos) in sorted(first.items(), key=lambda kv: kv[1]):
            rule = rules[pos]
            out.append(InterventionSuggestion(ep.episode_id, i, ep.events[i].msg_id, player, rule.strategy_name, rule.render(player)))
    return out


def write_suggestions(suggestions: Iterable[InterventionSuggestion]) -> str:
    return "".join(json.dumps(s.to_json(), ensure_ascii=False) + "\n" for s in suggestions)
