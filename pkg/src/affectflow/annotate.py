"""Event and valence labels, composite node labels, and rater agreement."""

from __future__ import annotations

import csv
import io
import logging
import re
import string
from collections import Counter
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CoverageMismatch,
    DataError,
    DegenerateDistribution,
    DuplicateRating,
    TooFewRaters,
    UnknownCategory,
    UnknownMessageId,
)
from .ingest import ChatMessage, Episode, EpisodeId, is_bot

log = logging.getLogger(__name__)


class EventLabel(str, Enum):
    Failure = "Failure"
    Conflict = "Conflict"
    Challenge = "Challenge"
    GettingPuzzle = "GettingPuzzle"
    Success = "Success"
    None_ = "None"

    @property
    def display(self) -> str:
        return "Getting Puzzle" if self is EventLabel.GettingPuzzle else self.value

    @property
    def is_system(self) -> bool:
        return self in (EventLabel.GettingPuzzle, EventLabel.Success)

    @property
    def is_pain_point(self) -> bool:
        return self in PAIN_POINTS


PAIN_POINTS = frozenset({EventLabel.Failure, EventLabel.Challenge, EventLabel.Conflict})


class Valence(str, Enum):
    Positive = "Positive"
    Negative = "Negative"
    Neutral = "Neutral"


def parse_event(text: str) -> EventLabel:
    try:
        return EventLabel(text.strip())
    except ValueError:
        raise UnknownCategory(f"unknown event label {text!r}") from None


def parse_valence(text: str) -> Valence:
    try:
        return Valence(text.strip())
    except ValueError:
        raise UnknownCategory(f"unknown valence {text!r}") from None


_SYSTEM_BY_DISPLAY = {e.display: e for e in EventLabel if e.is_system}
_EVENT_BY_DISPLAY = {e.display: e for e in EventLabel if e is not EventLabel.None_}


@dataclass(frozen=True, order=True)
class CompositeLabel:
    """A node of the dependency graph: who, what happened, and how it felt.

    Renders as ``User1-Failure Negative emotion``; neutral valence is left
    out (``User1-Challenge``), system events have no author
    (``Getting Puzzle``, ``Success Positive emotion``) and a purely affective
    message renders as ``User2 Positive emotion``.
    """

    pseudonym: str | None
    event: EventLabel
    valence: Valence

    def __post_init__(self):
        if self.event.is_system:
            object.__setattr__(self, "pseudonym", None)
        elif not self.pseudonym:
            raise ValueError(f"{self.event.value} label needs a pseudonym")
        elif "-" in self.pseudonym or " " in self.pseudonym:
            raise ValueError(f"pseudonym {self.pseudonym!r} cannot be rendered unambiguously")

    def render(self) -> str:
        if self.pseudonym is None:
            head = self.event.display
        elif self.event is EventLabel.None_:
            head = self.pseudonym
        else:
            head = f"{self.pseudonym}-{self.event.display}"
        if self.valence is Valence.Neutral:
            return head
        return f"{head} {self.valence.value} emotion"

    def __str__(self) -> str:
        return self.render()

    @classmethod
    def parse(cls, text: str) -> CompositeLabel:
        head, valence = text, Valence.Neutral
        for v in (Valence.Positive, Valence.Negative):
            suffix = f" {v.value} emotion"
            if text.endswith(suffix):
                head, valence = text[: -len(suffix)], v
                break
        if head in _SYSTEM_BY_DISPLAY:
            return cls(None, _SYSTEM_BY_DISPLAY[head], valence)
        if "-" in head:
            user, _, event_text = head.partition("-")
            if event_text not in _EVENT_BY_DISPLAY:
                raise ValueError(f"cannot parse label {text!r}")
            return cls(user, _EVENT_BY_DISPLAY[event_text], valence)
        if not head or " " in head:
            raise ValueError(f"cannot parse label {text!r}")
        return cls(head, EventLabel.None_, valence)


def compose_label(pseudonym: str | None, event: EventLabel, valence: Valence) -> str:
    return CompositeLabel(pseudonym, event, valence).render()


def parse_label(text: str) -> CompositeLabel:
    return CompositeLabel.parse(text)


# -- annotation files --------------------------------------------------------


@dataclass(frozen=True)
class Annotation:
    msg_id: int
    annotator: str
    event: EventLabel
    valence: Valence


ANNOTATION_FIELDS = ("msg_id", "annotator", "event", "valence")


def load_annotations(
    source: str | Path | io.TextIOBase,
    known_ids: Collection[int] | None = None,
) -> list[Annotation]:
    """Read a ``msg_id,annotator,event,valence`` CSV.

    ``source`` is a path or an open text stream. With ``known_ids`` every
    row must refer to a message of the corpus.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_annotations(fh, known_ids)

    reader = csv.DictReader(source)
    if reader.fieldnames is None or tuple(f.strip() for f in reader.fieldnames) != ANNOTATION_FIELDS:
        raise DataError(f"annotation header must be {','.join(ANNOTATION_FIELDS)}, got {reader.fieldnames}")
    out: list[Annotation] = []
    seen: set[tuple[int, str]] = set()
    for row in reader:
        try:
            msg_id = int(row["msg_id"])
        except (TypeError, ValueError):
            raise DataError(f"line {reader.line_num}: bad msg_id {row['msg_id']!r}") from None
        if known_ids is not None and msg_id not in known_ids:
            raise UnknownMessageId(f"line {reader.line_num}: msg_id {msg_id} not in corpus")
        annotator = (row["annotator"] or "").strip()
        key = (msg_id, annotator)
        if key in seen:
            raise DuplicateRating(f"line {reader.line_num}: duplicate rating {key}")
        seen.add(key)
        out.append(Annotation(msg_id, annotator, parse_event(row["event"] or ""), parse_valence(row["valence"] or "")))
    return out


def write_annotations(annotations: Iterable[Annotation]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ANNOTATION_FIELDS)
    for a in annotations:
        writer.writerow([a.msg_id, a.annotator, a.event.value, a.valence.value])
    return buf.getvalue()


@dataclass(frozen=True)
class Consensus:
    """Majority labels for one message.

    When the top count is shared, the value is ``None`` and the tied
    candidates are listed so the caller decides how to resolve them.
    """

    msg_id: int
    event: EventLabel | None
    valence: Valence | None
    event_candidates: tuple[EventLabel, ...] = ()
    valence_candidates: tuple[Valence, ...] = ()

    @property
    def tied(self) -> bool:
        return self.event is None or self.valence is None


def _majority(values: Iterable) -> tuple[object | None, tuple]:
    counts = Counter(values)
    top = max(counts.values())
    winners = sorted((v for v, c in counts.items() if c == top), key=lambda v: v.value)
    if len(winners) == 1:
        return winners[0], ()
    return None, tuple(winners)


def merge_annotators(sets: Sequence[Sequence[Annotation]]) -> list[Consensus]:
    if not sets:
        raise ValueError("need at least one annotation set")
    coverage = [frozenset(a.msg_id for a in s) for s in sets]
    if any(c != coverage[0] for c in coverage[1:]):
        raise CoverageMismatch("annotation sets cover different messages")

    by_msg: dict[int, list[Annotation]] = {}
    for s in sets:
        for a in s:
            by_msg.setdefault(a.msg_id, []).append(a)
    out = []
    for msg_id in sorted(by_msg):
        ratings = by_msg[msg_id]
        event, event_tie = _majority(a.event for a in ratings)
        valence, valence_tie = _majority(a.valence for a in ratings)
        out.append(Consensus(msg_id, event, valence, event_tie, valence_tie))
    return out


# -- automatic labeling ------------------------------------------------------


class Lexicon(dict):
    """Term -> integer weight. Terms are lowercase words or ``:emoji:`` tokens."""

    @classmethod
    def load(cls, path: str | Path | None = None) -> Lexicon:
        if path is None:
            text = resources.files("affectflow.data").joinpath("lexicon.csv").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        lex = cls()
        for row in csv.DictReader(io.StringIO(text)):
            term, weight = row["term"].strip(), int(row["weight"])
            if term != term.lower():
                raise ConfigError(f"lexicon term {term!r} is not lowercase")
            if weight == 0:
                raise ConfigError(f"lexicon term {term!r} has zero weight")
            lex[term] = weight
        return lex

    def weight(self, token: str) -> int:
        low = token.lower()
        if low in self:
            return self[low]
        return self.get(low.strip(string.punctuation + "“”‘’…"), 0)

    def score(self, tokens: Iterable[str]) -> int:
        return sum(self.weight(t) for t in tokens)

    def negated(self) -> Lexicon:
        return Lexicon({t: -w for t, w in self.items()})


def valence_of(tokens: Iterable[str], lexicon: Mapping[str, int]) -> Valence:
    lex = lexicon if isinstance(lexicon, Lexicon) else Lexicon(lexicon)
    total = lex.score(tokens)
    if total > 0:
        return Valence.Positive
    if total < 0:
        return Valence.Negative
    return Valence.Neutral


@dataclass(frozen=True)
class EventRules:
    """Keyword heuristics for the automatic event labeler.

    Rules are tried in order, first match wins: bot puzzle text, bot
    confirmation, bot wrong-answer reply or player failure marker, player
    disagreement with another player, first player reaction to a new puzzle
    or an explicit difficulty marker.
    """

    bot_puzzle: tuple[str, ...] = ("puzzle", "new challenge", "your next task")
    bot_success: tuple[str, ...] = ("correct", "solved", "well done", "congratulations")
    bot_failure: tuple[str, ...] = ("incorrect", "wrong", "not correct", "not the correct", "try again")
    player_failure: tuple[str, ...] = (
        "didnt work", "didn't work", "doesnt work", "doesn't work", "wrong", "nope",
        "not it", "failed", "incorrect", "rejected",
    )
    disagreement: tuple[str, ...] = (
        "disagree", "i don't think", "i dont think", "that's not", "thats not", "no it's",
        "no its", "you're wrong", "youre wrong", "not what", "makes no sense",
    )
    difficulty: tuple[str, ...] = (
        "confused", "confusing", "stuck", "no idea", "idk", "hard", "difficult",
        "cant", "can't", "not sure", "what does", "how do",
    )

    def _matches(self, text: str, markers: Sequence[str]) -> bool:
        return any(re.search(rf"(?<!\w){re.escape(m)}(?!\w)", text) for m in markers)


def auto_label(
    episode: Episode | Sequence[ChatMessage],
    lexicon: Mapping[str, int],
    event_rules: EventRules = EventRules(),
) -> list[Annotation]:
    """Label every message with a keyword event and a lexicon valence."""
    messages = episode.messages if isinstance(episode, Episode) else episode
    lex = lexicon if isinstance(lexicon, Lexicon) else Lexicon(lexicon)
    out = []
    awaiting_reaction = False
    prev_player: str | None = None
    for msg in messages:
        text = " ".join(msg.tokens).lower()
        if is_bot(msg.pseudonym):
            if event_rules._matches(text, event_rules.bot_puzzle):
                event = EventLabel.GettingPuzzle
            elif event_rules._matches(text, event_rules.bot_success) and not event_rules._matches(
                text, event_rules.bot_failure
            ):
                event = EventLabel.Success
            elif event_rules._matches(text, event_rules.bot_failure):
                event = EventLabel.Failure
            else:
                event = EventLabel.None_
            awaiting_reaction = event is EventLabel.GettingPuzzle or (awaiting_reaction and event is EventLabel.None_)
        else:
            if event_rules._matches(text, event_rules.player_failure):
                event = EventLabel.Failure
            elif (
                prev_player is not None
                and prev_player != msg.pseudonym
                and event_rules._matches(text, event_rules.disagreement)
            ):
                event = EventLabel.Conflict
            elif awaiting_reaction or event_rules._matches(text, event_rules.difficulty):
                event = EventLabel.Challenge
            else:
                event = EventLabel.None_
            awaiting_reaction = False
            prev_player = msg.pseudonym
        out.append(Annotation(msg.msg_id, "auto", event, valence_of(msg.tokens, lex)))
    return out


def resolve_labels(
    auto: Iterable[Annotation],
    consensus: Iterable[Consensus] = (),
) -> dict[int, tuple[EventLabel, Valence]]:
    """Final (event, valence) per message: gold consensus over auto labels.

    A tied gold dimension falls back to the automatic label for that message.
    """
    labels = {a.msg_id: (a.event, a.valence) for a in auto}
    for c in consensus:
        base_event, base_valence = labels.get(c.msg_id, (EventLabel.None_, Valence.Neutral))
        if c.tied:
            log.warning("gold tie on message %d, falling back to automatic label", c.msg_id)
        labels[c.msg_id] = (c.event or base_event, c.valence or base_valence)
    return labels


# -- labeled episodes --------------------------------------------------------


@dataclass(frozen=True)
class LabeledEvent:
    msg_id: int
    author: str
    event: EventLabel
    valence: Valence

    @property
    def label(self) -> CompositeLabel:
        return CompositeLabel(self.author, self.event, self.valence)

    @property
    def player(self) -> str | None:
        """Author if this is a player's event, None for system/bot events."""
        if self.event.is_system or is_bot(self.author):
            return None
        return self.author

    def to_json(self) -> dict:
        return {
            "msg_id": self.msg_id,
            "author": self.author,
            "event": self.event.value,
            "valence": self.valence.value,
            "label": self.label.render(),
        }

    @classmethod
    def from_json(cls, record: Mapping) -> LabeledEvent:
        return cls(int(record["msg_id"]), record["author"], parse_event(record["event"]), parse_valence(record["valence"]))


def is_labeled(event: EventLabel, valence: Valence) -> bool:
    return event is not EventLabel.None_ or valence is not Valence.Neutral


@dataclass(frozen=True)
class LabeledEpisode:
    """The labeled events of one episode plus who wrote each message.

    ``authors`` covers every message, labeled or not, as (msg_id, pseudonym);
    it is what tells a quiet player apart from one who kept chatting.
    """

    episode_id: EpisodeId
    events: tuple[LabeledEvent, ...]
    authors: tuple[tuple[int, str], ...] = field(default=())

    @property
    def labels(self) -> list[tuple[int, CompositeLabel]]:
        return [(e.msg_id, e.label) for e in self.events]

    def last_message_id(self, pseudonym: str) -> int | None:
        ids = [m for m, p in self.authors if p == pseudonym]
        return ids[-1] if ids else None

    def to_json(self) -> dict:
        return {
            "episode_id": self.episode_id.key,
            "events": [e.to_json() for e in self.events],
            "authors": [[m, p] for m, p in self.authors],
        }

    @classmethod
    def from_json(cls, record: Mapping) -> LabeledEpisode:
        return cls(
            EpisodeId.from_key(record["episode_id"]),
            tuple(LabeledEvent.from_json(e) for e in record["events"]),
            tuple((int(m), p) for m, p in record.get("authors", [])),
        )


def label_episode(episode: Episode, labels: Mapping[int, tuple[EventLabel, Valence]]) -> LabeledEpisode:
    events = []
    for msg in episode.messages:
        event, valence = labels.get(msg.msg_id, (EventLabel.None_, Valence.Neutral))
        if event.is_system and not is_bot(msg.pseudonym):
            log.warning("message %d: %s label on a non-bot message", msg.msg_id, event.value)
        if is_labeled(event, valence):
            events.append(LabeledEvent(msg.msg_id, msg.pseudonym, event, valence))
    return LabeledEpisode(
        episode.episode_id,
        tuple(events),
        tuple((m.msg_id, m.pseudonym) for m in episode.messages),
    )


# -- inter-rater reliability -------------------------------------------------


def fleiss_kappa(matrix) -> float:
    """Fleiss' kappa for an N x k matrix of per-item category counts.

    Every row must sum to the same number of raters n >= 2.
    """
    counts = np.asarray(matrix)
    if counts.ndim != 2 or counts.shape[0] == 0 or counts.shape[1] < 2:
        raise ValueError(f"rating matrix must be N x k with N >= 1, k >= 2; got shape {counts.shape}")
    if (counts < 0).any() or not np.array_equal(counts, np.round(counts)):
        raise ValueError("rating counts must be non-negative integers")
    counts = counts.astype(np.int64)
    row_sums = counts.sum(axis=1)
    n = int(row_sums[0])
    if (row_sums != n).any():
        raise ValueError("every item must have the same number of ratings")
    if n < 2:
        raise TooFewRaters(f"need at least 2 ratings per item, got {n}")
    n_items = counts.shape[0]
    col_sums = counts.sum(axis=0)
    if (col_sums == n_items * n).any():
        raise DegenerateDistribution("all ratings fall in a single category")

    p_item = ((counts**2).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_item.mean()
    p_cat = col_sums / (n_items * n)
    p_e = (p_cat**2).sum()
    return float((p_bar - p_e) / (1 - p_e))


DIMENSIONS = ("combined", "event", "valence")


def _category_of(a: Annotation, dimension: str) -> str:
    if dimension == "event":
        return a.event.value
    if dimension == "valence":
        return a.valence.value
    return f"{a.event.value}/{a.valence.value}"


def categories_for(dimension: str) -> list[str]:
    if dimension == "event":
        return [e.value for e in EventLabel]
    if dimension == "valence":
        return [v.value for v in Valence]
    if dimension == "combined":
        return [f"{e.value}/{v.value}" for e in EventLabel for v in Valence]
    raise ValueError(f"unknown dimension {dimension!r}")


def rating_matrix(
    annotations: Iterable[Annotation],
    dimension: str = "combined",
) -> tuple[np.ndarray, list[int], list[str]]:
    """Count ratings per (message, category). Returns (matrix, item ids, categories)."""
    categories = categories_for(dimension)
    col = {c: j for j, c in enumerate(categories)}
    by_item: dict[int, Counter] = {}
    for a in annotations:
        by_item.setdefault(a.msg_id, Counter())[_category_of(a, dimension)] += 1
    items = sorted(by_item)
    matrix = np.zeros((len(items), len(categories)), dtype=np.int64)
    for i, msg_id in enumerate(items):
        for cat, c in by_item[msg_id].items():
            matrix[i, col[cat]] = c
    return matrix, items, categories


def irr_report(annotations: Iterable[Annotation], dimension: str = "combined") -> dict:
    matrix, items, categories = rating_matrix(annotations, dimension)
    kappa = fleiss_kappa(matrix)
    n = int(matrix[0].sum())
    marginals = matrix.sum(axis=0) / (len(items) * n)
    return {
        "kappa": kappa,
        "N": len(items),
        "n": n,
        "k": len(categories),
        "dimension": dimension,
        "per_category_marginals": {c: float(p) for c, p in zip(categories, marginals) if p > 0},
    }
