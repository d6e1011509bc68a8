"""
Labels, composite nodes and rater agreement
===========================================

"""

from pathlib import Path

from affectflow.annotate import (
    EventLabel,
    Lexicon,
    Valence,
    compose_label,
    fleiss_kappa,
    irr_report,
    load_annotations,
    merge_annotators,
    valence_of,
)

fixtures = Path(__file__).resolve().parent.parent / "fixtures"

# valence is the sign of the summed lexicon weights
lexicon = Lexicon.load()
print(valence_of(["great", "job", ":smile:"], lexicon).value)
print(valence_of(["wait", "this", "is", "literally", "chemistry", ":weary:"], lexicon).value)

# author, event and valence make up one graph node
print(compose_label("User1", EventLabel.Failure, Valence.Negative))
print(compose_label("User1", EventLabel.Challenge, Valence.Neutral))
print(compose_label(None, EventLabel.GettingPuzzle, Valence.Neutral))

# two raters over three items: (A, A), (A, B), (B, B)
print(fleiss_kappa([[2, 0], [1, 1], [0, 2]]))

a = load_annotations(fixtures / "lux_gold_rater_a.csv")
b = load_annotations(fixtures / "lux_gold_rater_b.csv")
report = irr_report(a + b)
print(round(report["kappa"], 3), "over", report["N"], "messages")

# where the raters split, the consensus keeps both candidates
for c in merge_annotators([a, b]):
    if c.tied:
        print(c.msg_id, [e.value for e in c.event_candidates], [v.value for v in c.valence_candidates])
