"""
Valence transitions and regulation strategies
=============================================

"""

from affectflow.annotate import EventLabel, LabeledEpisode, LabeledEvent, Valence
from affectflow.ingest import EpisodeId
from affectflow.patterns import aggregate_strategies, detect_transitions, extract_instances

C, F, N = EventLabel.Challenge, EventLabel.Failure, EventLabel.None_
POS, NEG, NEU = Valence.Positive, Valence.Negative, Valence.Neutral

rows = [
    ("Bot1", EventLabel.GettingPuzzle, NEU),
    ("User1", C, POS),
    ("User3", C, NEG),  # stuck
    ("User2", N, POS),  # a cheerful message from a teammate
    ("User1", F, NEG),  # User1's last word
    ("User3", C, POS),  # back on track
]
events = tuple(LabeledEvent(i, who, ev, val) for i, (who, ev, val) in enumerate(rows))
episode = LabeledEpisode(EpisodeId("demo", 1, 0), events, tuple((e.msg_id, e.author) for e in events))

for t in detect_transitions(episode):
    print(t.pseudonym, t.from_valence.value, "->", t.to_valence.value, "via", t.path)

instances = extract_instances(episode)
for inst in instances:
    print(inst.instance_id, inst.pseudonym, inst.strategy.value, inst.strategy_name,
          "antecedents", inst.antecedents, "withdrawal" if inst.withdrawal else "")

for s in aggregate_strategies(instances):
    print(s.key, f"{s.success_count}/{s.instance_count}")
