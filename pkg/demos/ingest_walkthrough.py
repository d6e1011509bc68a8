"""
From a raw chat log to pseudonymized episodes
=============================================

"""

from pathlib import Path

from affectflow.ingest import load_emoji_table, parse_log, pseudonymize, segment_episodes

fixtures = Path(__file__).resolve().parent.parent / "fixtures"

# one JSON object per line, raw user ids included
lines = parse_log((fixtures / "lux_team1_puzzle2.jsonl").read_bytes())
print(len(lines), "raw lines, first from", lines[0].user_id)

# emoji become :name: tokens, users become User1, User2, ... and the bot Bot1
messages, pmap = pseudonymize(lines, load_emoji_table(), bot_users=["lux_gamemaster"])
for m in messages[:4]:
    print(m.msg_id, m.pseudonym, m.tokens)
print(pmap.mapping)

# without labels only the time gap splits the stream
episodes = segment_episodes(messages)
print([(ep.episode_id.key, len(ep.messages)) for ep in episodes])

# knowing which message starts the puzzle gives the episode its puzzle number
episodes = segment_episodes(messages, {0: "GettingPuzzle", 17: "Success"})
print([(ep.episode_id.key, len(ep.messages)) for ep in episodes])
