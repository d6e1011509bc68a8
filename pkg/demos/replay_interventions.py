"""
Compiling trigger rules and replaying a chat
============================================

"""

from affectflow.annotate import EventLabel, LabeledEvent, Valence
from affectflow.ingest import EpisodeId
from affectflow.intervene import Replayer, compile_triggers, load_templates, rules_to_json
from affectflow.patterns import StrategyFamily, StrategyStats

C = EventLabel.Challenge
stats = [
    StrategyStats(C, Valence.Negative, "encouragement", StrategyFamily.SituationModification, 3, 2),
    StrategyStats(C, Valence.Negative, "hint-giving", StrategyFamily.SituationModification, 4, 1),
]
rules = compile_triggers(stats, load_templates(), min_success_rate=0.5)
print(rules_to_json(rules))

# events arrive one at a time, as they would from a live channel
replayer = Replayer(EpisodeId("team1", 2, 0), rules)
chat = [
    LabeledEvent(11, "User2", C, Valence.Positive),
    LabeledEvent(12, "User3", C, Valence.Negative),
    LabeledEvent(13, "User2", C, Valence.Neutral),
    LabeledEvent(14, "User3", C, Valence.Negative),  # same trigger again: stays quiet
]
for event in chat:
    for suggestion in replayer.feed(event):
        print(f"at message {suggestion.msg_id}: {suggestion.rendered_text}")
