"""Independent reference implementations and random data generators for tests.

The oracles are deliberately naive (all pairs, all boundary subsets, pair
counting) so that they share no code path with the library.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from datetime import datetime, timedelta, timezone

from affectflow.annotate import EventLabel, LabeledEpisode, LabeledEvent, Valence
from affectflow.ingest import ChatMessage, EpisodeId

PLAYERS = ("User1", "User2", "User3")
PLAYER_EVENTS = (EventLabel.Failure, EventLabel.Conflict, EventLabel.Challenge, EventLabel.None_)
VALENCES = tuple(Valence)
T0 = datetime(2022, 4, 1, 16, 0, tzinfo=timezone.utc)


def random_episode(rng: random.Random, max_events: int = 10, key: EpisodeId = EpisodeId("t", 1, 0)) -> LabeledEpisode:
    """Random labeled episode: mostly player events, some bot/system ones."""
    events = []
    for msg_id in range(rng.randint(0, max_events)):
        roll = rng.random()
        if roll < 0.1:
            events.append(LabeledEvent(msg_id, "Bot1", rng.choice([EventLabel.GettingPuzzle, EventLabel.Success]), rng.choice(VALENCES)))
        else:
            events.append(LabeledEvent(msg_id, rng.choice(PLAYERS), rng.choice(PLAYER_EVENTS), rng.choice(VALENCES)))
    authors = tuple((e.msg_id, e.author) for e in events)
    return LabeledEpisode(key, tuple(events), authors)


def brute_force_transitions(episode: LabeledEpisode) -> list[tuple]:
    """All same-player pairs (i, j) forming a run-start to run-start change.

    (i, j) qualifies when the valences differ, every event of that player
    strictly between them keeps i's valence, and i itself opens a run: the
    player's previous event (if any) has a different valence.
    """
    evs = episode.events
    out = []
    for i, j in itertools.combinations(range(len(evs)), 2):
        p = evs[i].player
        if p is None or evs[j].player != p or evs[i].valence is evs[j].valence:
            continue
        between = [k for k in range(i + 1, j) if evs[k].player == p]
        if any(evs[k].valence is not evs[i].valence for k in between):
            continue
        before = [k for k in range(i) if evs[k].player == p]
        if before and evs[before[-1]].valence is evs[i].valence:
            continue
        out.append((p, evs[i].valence, evs[j].valence, i, j, tuple(range(i + 1, j))))
    return sorted(out, key=lambda t: (t[3], t[4]))


def brute_force_dfg(labels: list[str]) -> tuple[Counter, dict[tuple[str, str], list[int]]]:
    nodes = Counter(labels)
    edges: dict[tuple[str, str], list[int]] = {}
    for s in range(1, len(labels)):
        edges.setdefault((labels[s - 1], labels[s]), []).append(s)
    return nodes, edges


def random_messages(rng: random.Random, n: int, channels=("team1",), max_step_minutes: int = 45) -> list[ChatMessage]:
    ts = T0
    out = []
    for i in range(n):
        ts += timedelta(minutes=rng.randint(0, max_step_minutes))
        out.append(ChatMessage(i, ts, rng.choice(PLAYERS), (f"m{i}",), rng.choice(channels)))
    return out


def brute_force_boundaries(stream: list[ChatMessage], events: dict, max_gap: timedelta,
                           start: str = "GettingPuzzle", end: str = "Success") -> list[list[int]]:
    """Enumerate every subset of cut positions and keep the ones that obey the rules.

    A cut before position i is required exactly when message i carries the
    start event, the gap to message i-1 exceeds ``max_gap``, or message i-1
    carries the end event. Returns every valid partition as lists of msg_ids.
    """
    n = len(stream)

    def name(m):
        ev = events.get(m.msg_id)
        return getattr(ev, "name", ev)

    required = [
        name(stream[i]) == start
        or stream[i].timestamp - stream[i - 1].timestamp > max_gap
        or name(stream[i - 1]) == end
        for i in range(1, n)
    ]
    valid = []
    for mask in itertools.product((False, True), repeat=max(n - 1, 0)):
        if list(mask) != required:
            continue
        parts, cur = [], [stream[0].msg_id] if n else []
        for i in range(1, n):
            if mask[i - 1]:
                parts.append(cur)
                cur = []
            cur.append(stream[i].msg_id)
        if cur:
            parts.append(cur)
        valid.append(parts)
    return valid


def pairwise_kappa(ratings: list[list[str]]) -> float:
    """Fleiss' kappa from raw per-item rating lists by explicit rater-pair counting."""
    n = len(ratings[0])
    pairs = n * (n - 1)
    p_bar = sum(
        sum(1 for a, b in itertools.permutations(range(n), 2) if item[a] == item[b]) / pairs
        for item in ratings
    ) / len(ratings)
    total = Counter(r for item in ratings for r in item)
    p_e = sum((c / (len(ratings) * n)) ** 2 for c in total.values())
    return (p_bar - p_e) / (1 - p_e)
