"""Chat log intake: parsing, surrogate tokenization, pseudonymization, episodes.

Raw logs are JSONL with one message per line::

    {"ts": "2022-04-01T16:07:00Z", "user": "u_93", "text": "Hmmm. I'm confused",
     "channel": "team1", "attachments": ["image"]}

Everything downstream works on :class:`ChatMessage` objects, which carry a
``UserN`` pseudonym instead of the raw user id.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from .errors import EmptyFile, InvalidTimestamp, MalformedLine, UnorderedInput

log = logging.getLogger(__name__)

UNKNOWN_EMOJI = ":emoji_unknown:"
DEFAULT_MAX_GAP = timedelta(minutes=30)

ATTACHMENT_TOKENS = {"image": "[image]", "file": "[file]", "video": "[video]", "audio": "[audio]"}

# Emoji blocks plus ZWJ / variation-selector / skin-tone modifiers so that
# multi-codepoint sequences stay one cluster.
_EMOJI_CHAR = (
    "\U0001F000-\U0001FAFF"
    "\u2600-\u27bf"
    "\u2b00-\u2bff"
    "\u2300-\u23ff"
)
_EMOJI_CLUSTER = re.compile(
    f"[{_EMOJI_CHAR}][\ufe0f\U0001F3FB-\U0001F3FF]*"
    f"(?:\u200d[{_EMOJI_CHAR}][\ufe0f\U0001F3FB-\U0001F3FF]*)*"
)
_SHORTCODE = re.compile(r"^:[a-z0-9_+\-]+:$")


@dataclass(frozen=True)
class RawLine:
    timestamp: datetime
    user_id: str
    text: str
    channel: str
    attachments: tuple[str, ...] = ()


@dataclass(frozen=True)
class ChatMessage:
    msg_id: int
    timestamp: datetime
    pseudonym: str
    tokens: tuple[str, ...]
    channel: str

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def to_json(self) -> dict:
        return {
            "msg_id": self.msg_id,
            "ts": format_timestamp(self.timestamp),
            "pseudonym": self.pseudonym,
            "tokens": list(self.tokens),
            "channel": self.channel,
        }

    @classmethod
    def from_json(cls, record: Mapping) -> ChatMessage:
        return cls(
            msg_id=int(record["msg_id"]),
            timestamp=parse_timestamp(record["ts"]),
            pseudonym=record["pseudonym"],
            tokens=tuple(record["tokens"]),
            channel=record["channel"],
        )


class EpisodeId(NamedTuple):
    team: str
    puzzle: int
    seq: int

    @property
    def key(self) -> str:
        return f"{self.team}_{self.puzzle}_{self.seq}"

    @classmethod
    def from_key(cls, key: str) -> EpisodeId:
        team, puzzle, seq = key.rsplit("_", 2)
        return cls(team, int(puzzle), int(seq))


@dataclass(frozen=True)
class Episode:
    episode_id: EpisodeId
    messages: tuple[ChatMessage, ...]

    def __post_init__(self):
        if not self.messages:
            raise ValueError("an episode cannot be empty")


@dataclass
class PseudonymMap:
    """Raw user id -> pseudonym, assigned in order of first appearance."""

    mapping: dict[str, str] = field(default_factory=dict)
    bot_users: frozenset[str] = frozenset()
    _n_users: int = 0
    _n_bots: int = 0

    def assign(self, user_id: str) -> str:
        if user_id not in self.mapping:
            if user_id in self.bot_users:
                self._n_bots += 1
                self.mapping[user_id] = f"Bot{self._n_bots}"
            else:
                self._n_users += 1
                self.mapping[user_id] = f"User{self._n_users}"
        return self.mapping[user_id]

    _pattern: re.Pattern | None = field(default=None, repr=False, compare=False)
    _aliases: list[str] = field(default_factory=list, repr=False, compare=False)

    def redact(self, token: str) -> str:
        """Replace every raw-id substring in ``token`` with its pseudonym."""
        if not self.mapping:
            return token
        if self._pattern is None or self._pattern.groups != len(self.mapping):
            alternatives = sorted(self.mapping, key=len, reverse=True)
            self._pattern = re.compile("|".join(f"({re.escape(raw)})" for raw in alternatives))
            self._aliases = [self.mapping[raw] for raw in alternatives]
        return self._pattern.sub(lambda m: self._aliases[m.lastindex - 1], token)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user_id", "pseudonym"])
        for raw, alias in self.mapping.items():
            writer.writerow([raw, alias])
        return buf.getvalue()


def is_bot(pseudonym: str | None) -> bool:
    return pseudonym is not None and pseudonym.startswith("Bot")


def parse_timestamp(value: str) -> datetime:
    if not isinstance(value, str):
        raise ValueError(f"timestamp must be a string, got {type(value).__name__}")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ").replace(".000000Z", "Z")


def _record_to_line(record: object, lineno: int) -> RawLine:
    if not isinstance(record, dict):
        raise MalformedLine(lineno, "record is not a JSON object")
    for key in ("ts", "user", "text", "channel"):
        if key not in record:
            raise MalformedLine(lineno, f"missing field {key!r}")
    for key in ("user", "text", "channel"):
        if not isinstance(record[key], str):
            raise MalformedLine(lineno, f"field {key!r} must be a string")
    attachments = record.get("attachments") or []
    if not isinstance(attachments, list) or not all(isinstance(a, str) for a in attachments):
        raise MalformedLine(lineno, "attachments must be a list of strings")
    if not record["text"] and not attachments:
        raise MalformedLine(lineno, "empty text without attachments")
    try:
        ts = parse_timestamp(record["ts"])
    except ValueError as exc:
        raise InvalidTimestamp(lineno, f"invalid timestamp {record['ts']!r}: {exc}") from None
    return RawLine(ts, record["user"], record["text"], record["channel"], tuple(attachments))


def parse_log(
    source: bytes | str | Iterable[bytes | str],
    *,
    strict: bool = True,
    errors: list[MalformedLine] | None = None,
) -> list[RawLine]:
    """Parse a JSONL chat log into :class:`RawLine` records, in input order.

    In strict mode the first bad line raises. With ``strict=False`` bad lines
    are skipped and collected into ``errors`` (if given) so the caller can
    report them by line number.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = source.splitlines()

    lines: list[RawLine] = []
    seen_content = False
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        raw = raw.strip()
        if not raw:
            continue
        seen_content = True
        try:
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedLine(lineno, f"invalid JSON: {exc.msg}") from None
            lines.append(_record_to_line(record, lineno))
        except MalformedLine as exc:
            if strict:
                raise
            log.warning("skipping %s", exc)
            if errors is not None:
                errors.append(exc)
    if not seen_content:
        raise EmptyFile("chat log contains no records")
    if not lines:
        raise EmptyFile("chat log contains no valid records")
    return lines


def load_emoji_table(path: str | Path | None = None) -> dict[str, str]:
    """Load a ``codepoint,name`` CSV into a map from emoji/shortcode to ``:name:``.

    Codepoints are hex, space separated for multi-codepoint sequences. Each
    entry also registers its platform shortcode (``:name:`` maps to itself).
    """
    if path is None:
        text = resources.files("affectflow.data").joinpath("emoji.csv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table: dict[str, str] = {}
    for row in csv.DictReader(io.StringIO(text)):
        name = f":{row['name'].strip()}:"
        glyph = "".join(chr(int(cp, 16)) for cp in row["codepoint"].split())
        table[glyph] = name
        table[name] = name
    return table


def _lookup_emoji(cluster: str, table: Mapping[str, str]) -> str:
    if cluster in table:
        return table[cluster]
    stripped = re.sub("[\ufe0f\U0001F3FB-\U0001F3FF]", "", cluster)
    return table.get(stripped, UNKNOWN_EMOJI)


def _attachment_token(tag: str, table: Mapping[str, str]) -> str:
    kind, _, detail = tag.partition(":")
    if kind == "emoji-shortcode":
        return table.get(f":{detail}:", UNKNOWN_EMOJI) if detail else UNKNOWN_EMOJI
    return ATTACHMENT_TOKENS.get(kind, f"[{kind}]")


def tokenize_surrogates(line: RawLine, emoji_table: Mapping[str, str]) -> list[str]:
    """Split text into tokens, replacing emoji and attachments with surrogates.

    Words are kept verbatim. Emoji become ``:name:`` tokens (``:emoji_unknown:``
    when not in the table), shortcodes typed as text are normalized the same
    way, and attachments are appended as ``[image]``-style tokens.
    """
    tokens: list[str] = []
    for word in line.text.split():
        if _SHORTCODE.match(word):
            tokens.append(emoji_table.get(word, UNKNOWN_EMOJI))
            continue
        pos = 0
        for match in _EMOJI_CLUSTER.finditer(word):
            if match.start() > pos:
                tokens.append(word[pos : match.start()])
            tokens.append(_lookup_emoji(match.group(), emoji_table))
            pos = match.end()
        if pos < len(word):
            tokens.append(word[pos:])
    tokens.extend(_attachment_token(tag, emoji_table) for tag in line.attachments)
    return tokens


def pseudonymize(
    lines: Sequence[RawLine],
    emoji_table: Mapping[str, str] | None = None,
    bot_users: Iterable[str] = (),
) -> tuple[list[ChatMessage], PseudonymMap]:
    """Assign ``UserN`` pseudonyms and corpus-wide message ids.

    Lines are ordered by timestamp (stable, so ties keep input order) and
    numbered from 0. Ids listed in ``bot_users`` get ``BotN`` pseudonyms.
    Raw ids quoted inside message text are redacted too.
    """
    if emoji_table is None:
        emoji_table = load_emoji_table()
    pmap = PseudonymMap(bot_users=frozenset(bot_users))
    ordered = sorted(lines, key=lambda line: line.timestamp)
    for line in ordered:
        pmap.assign(line.user_id)
    messages = [
        ChatMessage(
            msg_id=i,
            timestamp=line.timestamp,
            pseudonym=pmap.mapping[line.user_id],
            tokens=tuple(pmap.redact(t) for t in tokenize_surrogates(line, emoji_table)),
            channel=pmap.redact(line.channel),
        )
        for i, line in enumerate(ordered)
    ]
    return messages, pmap


@dataclass(frozen=True)
class SegmentationConfig:
    max_gap: timedelta = DEFAULT_MAX_GAP
    boundary_start_event: str = "GettingPuzzle"
    boundary_end_event: str = "Success"


_PUZZLE_NUMBER = re.compile(r"puzzle\W{0,3}(\d+)", re.IGNORECASE)


def _puzzle_number(message: ChatMessage) -> int | None:
    match = _PUZZLE_NUMBER.search(message.text)
    return int(match.group(1)) if match else None


def segment_episodes(
    messages: Sequence[ChatMessage],
    events: Mapping[int, object] | None = None,
    cfg: SegmentationConfig = SegmentationConfig(),
) -> list[Episode]:
    """Split each channel's message stream into episodes.

    A message opens a new episode when it carries the start event, when its
    gap to the previous message exceeds ``cfg.max_gap``, or when the previous
    message carried the end event. ``events`` maps msg_id to an event label
    (enum member or its name); messages without an entry count as unlabeled.

    Episodes are numbered by puzzle: the number quoted in the start message
    ("Puzzle 2: ...") when there is one, otherwise a running count of start
    events in the channel. Puzzle 0 holds chatter before the first puzzle.
    """
    events = events or {}

    def event_name(msg: ChatMessage) -> str | None:
        ev = events.get(msg.msg_id)
        return getattr(ev, "name", ev)

    by_channel: dict[str, list[ChatMessage]] = {}
    for msg in messages:
        by_channel.setdefault(msg.channel, []).append(msg)

    episodes: list[Episode] = []
    for channel, stream in by_channel.items():
        for prev, cur in zip(stream, stream[1:]):
            if cur.timestamp < prev.timestamp or cur.msg_id <= prev.msg_id:
                raise UnorderedInput(
                    f"channel {channel!r}: message {cur.msg_id} is out of order after {prev.msg_id}"
                )
        puzzle = 0
        starts_seen = 0
        seq_by_puzzle: dict[int, int] = {}
        current: list[ChatMessage] = []

        def close():
            if current:
                seq = seq_by_puzzle.get(puzzle, 0)
                seq_by_puzzle[puzzle] = seq + 1
                episodes.append(Episode(EpisodeId(channel, puzzle, seq), tuple(current)))

        for i, msg in enumerate(stream):
            is_start = event_name(msg) == cfg.boundary_start_event
            if i > 0:
                prev = stream[i - 1]
                if (
                    is_start
                    or msg.timestamp - prev.timestamp > cfg.max_gap
                    or event_name(prev) == cfg.boundary_end_event
                ):
                    close()
                    current = []
            if is_start:
                starts_seen += 1
                number = _puzzle_number(msg)
                puzzle = number if number is not None else starts_seen
            current.append(msg)
        close()

    episodes.sort(key=lambda ep: (ep.episode_id.team, ep.episode_id.puzzle, ep.messages[0].timestamp, ep.episode_id.seq))
    return episodes


def write_corpus(messages: Iterable[ChatMessage]) -> str:
    return "".join(json.dumps(m.to_json(), ensure_ascii=False) + "\n" for m in messages)


def read_corpus(text: str) -> list[ChatMessage]:
    return [ChatMessage.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
