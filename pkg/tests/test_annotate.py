import io
import itertools
import random
import statistics
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.stats.inter_rater import fleiss_kappa as sm_fleiss_kappa

from affectflow.annotate import (
    Annotation,
    CompositeLabel,
    EventLabel,
    LabeledEpisode,
    Lexicon,
    Valence,
    auto_label,
    compose_label,
    fleiss_kappa,
    irr_report,
    label_episode,
    load_annotations,
    merge_annotators,
    parse_label,
    rating_matrix,
    resolve_labels,
    valence_of,
    write_annotations,
)
from affectflow.errors import (
    CoverageMismatch,
    DataError,
    DegenerateDistribution,
    DuplicateRating,
    TooFewRaters,
    UnknownCategory,
    UnknownMessageId,
)
from affectflow.ingest import ChatMessage, Episode, EpisodeId
from oracles import T0, pairwise_kappa

LEX = Lexicon.load()
HEADER = "msg_id,annotator,event,valence\n"


def csv_of(*rows):
    return io.StringIO(HEADER + "".join(r + "\n" for r in rows))


# -- annotation files ----------------------------------------------------------


def test_load_single_row():
    [a] = load_annotations(csv_of("17,rater_a,Success,Positive"))
    assert a == Annotation(17, "rater_a", EventLabel.Success, Valence.Positive)


def test_duplicate_rating():
    with pytest.raises(DuplicateRating):
        load_annotations(csv_of("1,a,Failure,Negative", "1,a,Challenge,Neutral"))


def test_unknown_category():
    with pytest.raises(UnknownCategory):
        load_annotations(csv_of("1,a,Boredom,Negative"))
    with pytest.raises(UnknownCategory):
        load_annotations(csv_of("1,a,Failure,Grumpy"))


def test_unknown_message_and_bad_header():
    with pytest.raises(UnknownMessageId):
        load_annotations(csv_of("99,a,Failure,Negative"), known_ids={0, 1})
    with pytest.raises(DataError):
        load_annotations(io.StringIO("id,who,what\n1,a,b\n"))


def test_write_load_round_trip():
    anns = [Annotation(0, "a", EventLabel.GettingPuzzle, Valence.Neutral), Annotation(1, "a", EventLabel.None_, Valence.Positive)]
    assert load_annotations(io.StringIO(write_annotations(anns))) == anns


# -- merge ---------------------------------------------------------------------


def one(msg_id, rater, event, valence):
    return [Annotation(msg_id, rater, event, valence)]


def test_majority_valence():
    sets = [one(0, r, EventLabel.Challenge, v) for r, v in zip("abc", [Valence.Positive, Valence.Positive, Valence.Negative])]
    [c] = merge_annotators(sets)
    assert c.valence is Valence.Positive and c.event is EventLabel.Challenge and not c.tied


def test_two_way_tie_flags_candidates():
    [c] = merge_annotators([one(0, "a", EventLabel.Failure, Valence.Negative), one(0, "b", EventLabel.Challenge, Valence.Negative)])
    assert c.tied and c.event is None
    assert set(c.event_candidates) == {EventLabel.Failure, EventLabel.Challenge}
    assert c.valence is Valence.Negative


def test_coverage_mismatch():
    with pytest.raises(CoverageMismatch):
        merge_annotators([one(0, "a", EventLabel.Failure, Valence.Negative), one(1, "b", EventLabel.Failure, Valence.Negative)])


def test_consensus_equals_mode():
    rng = random.Random(11)
    sets = [
        [Annotation(m, r, rng.choice(list(EventLabel)), rng.choice(list(Valence))) for m in range(100)]
        for r in ("a", "b", "c")
    ]
    for c in merge_annotators(sets):
        events = [s[c.msg_id].event for s in sets]
        valences = [s[c.msg_id].valence for s in sets]
        for got, cands, values in ((c.event, c.event_candidates, events), (c.valence, c.valence_candidates, valences)):
            modes = statistics.multimode(values)
            if len(modes) == 1:
                assert got is modes[0] and cands == ()
            else:
                assert got is None and set(cands) == set(modes)


def test_resolve_prefers_gold_and_falls_back_on_ties():
    auto = [Annotation(0, "auto", EventLabel.None_, Valence.Positive), Annotation(1, "auto", EventLabel.Challenge, Valence.Neutral)]
    gold = merge_annotators([
        [Annotation(0, "a", EventLabel.Failure, Valence.Negative), Annotation(1, "a", EventLabel.Failure, Valence.Negative)],
        [Annotation(0, "b", EventLabel.Failure, Valence.Negative), Annotation(1, "b", EventLabel.Conflict, Valence.Negative)],
    ])
    labels = resolve_labels(auto, gold)
    assert labels[0] == (EventLabel.Failure, Valence.Negative)
    assert labels[1] == (EventLabel.Challenge, Valence.Negative)


# -- lexicon and auto labels ---------------------------------------------------


def test_lexicon_hand_sums():
    assert LEX["great"] == 1 and LEX[":smile:"] == 1 and "job" not in LEX and LEX[":weary:"] == -2
    assert valence_of(["great", "job", ":smile:"], LEX) is Valence.Positive
    assert valence_of([], LEX) is Valence.Neutral
    assert LEX.score(["wait", "this", "is", "literally", "chemistry", ":weary:"]) < 0
    assert valence_of(["wait", "this", "is", "literally", "chemistry", ":weary:"], LEX) is Valence.Negative


def test_lexicon_size():
    emoji = [t for t in LEX if t.startswith(":")]
    assert 150 <= len(LEX) - len(emoji) and 40 <= len(emoji)
    assert all(w != 0 and t == t.lower() for t, w in LEX.items())


def message(i, who, text):
    return ChatMessage(i, T0 + timedelta(minutes=i), who, tuple(text.split()), "team1")


def test_auto_label_empty_message_is_none_neutral():
    [a] = auto_label([ChatMessage(0, T0, "User1", (), "team1")], LEX)
    assert (a.annotator, a.event, a.valence) == ("auto", EventLabel.None_, Valence.Neutral)


def test_auto_label_event_rules():
    episode = Episode(EpisodeId("team1", 1, 0), (
        message(0, "Bot1", "Puzzle 1: name the metal"),
        message(1, "User1", "hmm let me think"),
        message(2, "User2", "copper?"),
        message(3, "Bot1", "Sorry, that is not the correct answer"),
        message(4, "User2", "nope that didn't work"),
        message(5, "User1", "I don't think it's copper"),
        message(6, "User1", "honestly I'm stuck"),
        message(7, "Bot1", "Correct! Well done"),
    ))
    events = [a.event for a in auto_label(episode, LEX)]
    assert events == [
        EventLabel.GettingPuzzle, EventLabel.Challenge, EventLabel.None_, EventLabel.Failure,
        EventLabel.Failure, EventLabel.Conflict, EventLabel.Challenge, EventLabel.Success,
    ]


@settings(max_examples=60)
@given(st.lists(st.sampled_from(sorted(LEX)), max_size=8))
def test_negated_lexicon_flips_valence(tokens):
    flip = {Valence.Positive: Valence.Negative, Valence.Negative: Valence.Positive, Valence.Neutral: Valence.Neutral}
    assert valence_of(tokens, LEX.negated()) is flip[valence_of(tokens, LEX)]


# -- composite labels ----------------------------------------------------------


@pytest.mark.parametrize(
    "args, text",
    [
        (("User1", EventLabel.Failure, Valence.Negative), "User1-Failure Negative emotion"),
        (("User1", EventLabel.Challenge, Valence.Neutral), "User1-Challenge"),
        ((None, EventLabel.GettingPuzzle, Valence.Neutral), "Getting Puzzle"),
        (("Bot1", EventLabel.Success, Valence.Positive), "Success Positive emotion"),
        (("User2", EventLabel.None_, Valence.Positive), "User2 Positive emotion"),
    ],
)
def test_compose_label(args, text):
    assert compose_label(*args) == text


label_st = st.builds(
    CompositeLabel,
    st.sampled_from(["User1", "User2", "User17", "Bot1"]),
    st.sampled_from(list(EventLabel)),
    st.sampled_from(list(Valence)),
)


@given(label_st)
def test_label_round_trip(label):
    assert parse_label(label.render()) == label


def test_label_needs_author():
    with pytest.raises(ValueError):
        CompositeLabel(None, EventLabel.Failure, Valence.Negative)
    with pytest.raises(ValueError):
        parse_label("User1-Boredom")


def test_label_episode_skips_unlabeled_messages():
    episode = Episode(EpisodeId("t", 1, 0), (message(0, "Bot1", "Puzzle 1"), message(1, "User1", "ok"), message(2, "User2", "yay")))
    labeled = label_episode(episode, {0: (EventLabel.GettingPuzzle, Valence.Neutral), 2: (EventLabel.None_, Valence.Positive)})
    assert [e.msg_id for e in labeled.events] == [0, 2]
    assert labeled.authors == ((0, "Bot1"), (1, "User1"), (2, "User2"))
    assert LabeledEpisode.from_json(labeled.to_json()) == labeled


# -- Fleiss' kappa -------------------------------------------------------------


def test_kappa_hand_case():
    assert abs(fleiss_kappa([[2, 0], [1, 1], [0, 2]]) - 1 / 3) < 1e-9


def test_kappa_unanimous():
    assert fleiss_kappa([[3, 0, 0], [0, 3, 0], [0, 0, 3], [3, 0, 0]]) == 1.0


def test_kappa_degenerate_and_bad_shapes():
    with pytest.raises(DegenerateDistribution):
        fleiss_kappa([[2, 0], [2, 0]])
    with pytest.raises(TooFewRaters):
        fleiss_kappa([[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        fleiss_kappa([[2, 0], [1, 2]])
    with pytest.raises(ValueError):
        fleiss_kappa([[2]])


def random_ratings(rng, n_items, n_raters, k):
    while True:
        ratings = [[rng.randrange(k) for _ in range(n_raters)] for _ in range(n_items)]
        if len({r for item in ratings for r in item}) > 1:
            return ratings


def to_matrix(ratings, k):
    return np.array([[item.count(c) for c in range(k)] for item in ratings])


def test_kappa_against_oracles():
    rng = random.Random(5)
    for _ in range(200):
        k = rng.randint(2, 5)
        ratings = random_ratings(rng, rng.randint(1, 15), rng.randint(2, 6), k)
        matrix = to_matrix(ratings, k)
        ours = fleiss_kappa(matrix)
        assert ours == pytest.approx(pairwise_kappa(ratings), abs=1e-9)
        assert ours == pytest.approx(sm_fleiss_kappa(matrix, method="fleiss"), abs=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_kappa_permutation_invariant(seed):
    rng = random.Random(seed)
    k = 4
    matrix = to_matrix(random_ratings(rng, 8, 3, k), k)
    rows = list(range(matrix.shape[0]))
    cols = list(range(k))
    rng.shuffle(rows)
    rng.shuffle(cols)
    assert fleiss_kappa(matrix[rows][:, cols]) == pytest.approx(fleiss_kappa(matrix), abs=1e-12)


def test_irr_report_dimensions():
    anns = []
    for rater, cats in (("a", ["Challenge", "Challenge", "Failure"]), ("b", ["Challenge", "Failure", "Failure"])):
        for i, c in enumerate(cats):
            anns.append(Annotation(i, rater, EventLabel(c), Valence.Neutral))
    report = irr_report(anns)
    assert report["kappa"] == pytest.approx(1 / 3, abs=1e-9)
    assert (report["N"], report["n"]) == (3, 2)
    assert report["per_category_marginals"] == {"Failure/Neutral": 0.5, "Challenge/Neutral": 0.5}
    assert irr_report(anns, "event")["kappa"] == pytest.approx(1 / 3, abs=1e-9)
    with pytest.raises(DegenerateDistribution):
        irr_report(anns, "valence")
    matrix, items, cats = rating_matrix(anns, "event")
    assert items == [0, 1, 2] and matrix.sum() == 6 and len(cats) == len(EventLabel)


def test_kappa_unchanged_by_unused_categories():
    ratings = list(itertools.product("AB", repeat=2))
    base = fleiss_kappa([[r.count("A"), r.count("B")] for r in ratings])
    padded = fleiss_kappa([[r.count("A"), r.count("B"), 0, 0] for r in ratings])
    assert base == padded
