import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehrqa.backends import MockBackend
from ehrqa.corpus import Case, NoteSentence
from ehrqa.errors import CorpusError
from ehrqa.evidence import (
    EmbeddingScorer,
    PairScorer,
    ScoredSentence,
    calibrate_threshold,
    classifier_scorer,
    default_grid,
    gold_units,
    make_scorer,
    score_case,
    select_evidence,
)

from oracles import oracle_best_threshold


def _case(case_id, rows):
    """rows: list of (text, relevance)."""
    return Case(
        case_id=case_id,
        patient_question="what happened",
        clinician_question="what was the treatment",
        sentences=[
            NoteSentence(id=str(i + 1), text=text, relevance=rel)
            for i, (text, rel) in enumerate(rows)
        ],
    )


def test_score_case_shape_and_ids():
    case = _case("c1", [("alpha one", "essential"), ("beta two", "not-relevant"),
                        ("gamma three", "not-relevant")])
    scored = score_case(case, "alpha question", EmbeddingScorer(MockBackend()))
    assert len(scored) == 3
    assert [s.sentence_id for s in scored] == ["1", "2", "3"]
    assert all(s.scorer_id == "embedding-cosine" for s in scored)


def test_sentence_equal_to_question_scores_highest():
    question = "did the fever resolve"
    case = _case("c1", [("vitals were stable", "not-relevant"),
                        (question, "essential"),
                        ("plan reviewed with team", "not-relevant")])
    scored = score_case(case, question, EmbeddingScorer(MockBackend()))
    assert max(scored, key=lambda s: s.score).sentence_id == "2"


def test_pair_scorer_overlap_rule():
    case = _case("c1", [("chest pain noted", "essential"), ("no issues", "not-relevant")])
    scored = score_case(case, "chest pain", PairScorer(MockBackend()))
    assert [s.score for s in scored] == [1.0, 0.0]


def test_classifier_scorer_id():
    assert classifier_scorer(MockBackend()).scorer_id == "classifier"
    assert make_scorer("classifier", MockBackend()).scorer_id == "classifier"


def test_select_evidence_strict_greater():
    scored = [ScoredSentence("a", 0.9, "s"), ScoredSentence("b", 0.1, "s")]
    assert select_evidence(scored, 0.5, case_id="c").sentence_ids == {"a"}
    # score exactly equal to t is excluded
    assert select_evidence([ScoredSentence("a", 0.5, "s")], 0.5).sentence_ids == frozenset()


def test_select_evidence_all_relevant_baseline():
    scored = [ScoredSentence(str(i), random.Random(1).random(), "s") for i in range(10)]
    assert select_evidence(scored, float("-inf")).sentence_ids == {str(i) for i in range(10)}
    below_min = min(s.score for s in scored) - 1e-9
    assert len(select_evidence(scored, below_min).sentence_ids) == 10


def test_calibrate_single_case_hand_micro():
    case = _case("c1", [("s one", "essential"), ("s two", "not-relevant")])

    class FixedScorer:
        scorer_id = "fixed"

        def score(self, question, texts):
            return [0.9, 0.1]

    curve = calibrate_threshold([case], FixedScorer(), grid=[0.5])
    assert curve.best_t == 0.5
    assert curve.points[0].f1 == pytest.approx(1.0)


def test_calibrate_all_selected_dev_baseline(dev_corpus):
    class ConstantScorer:
        scorer_id = "const"

        def score(self, question, texts):
            return [0.5] * len(texts)

    curve = calibrate_threshold(dev_corpus, ConstantScorer(), grid=[-1.0])
    point = curve.points[0]
    assert point.precision * 100 == pytest.approx(28.27, abs=0.01)
    assert point.recall == 1.0
    assert point.f1 * 100 == pytest.approx(44.08, abs=0.01)
    assert curve.baseline_f1 == pytest.approx(point.f1)


def test_calibrate_rejects_unlabeled():
    case = Case(
        case_id="c1",
        patient_question="q",
        sentences=[NoteSentence(id="1", text="no label here")],
    )
    with pytest.raises(CorpusError):
        calibrate_threshold([case], EmbeddingScorer(MockBackend()))


def test_recall_non_increasing_along_grid(dev_corpus):
    curve = calibrate_threshold(dev_corpus[:5], EmbeddingScorer(MockBackend()), grid_points=21)
    recalls = [p.recall for p in curve.points]
    assert all(recalls[i] >= recalls[i + 1] for i in range(len(recalls) - 1))


class TableScorer:
    """Replays a fixed score table; the case is identified by its first
    sentence text, which embeds the case id."""

    scorer_id = "table"

    def __init__(self, case_scores):
        self.case_scores = case_scores

    def score(self, question, texts):
        cid = texts[0].split()[0]
        return [s for _, s in self.case_scores[cid]]


def make_random_scored_fixture(rng, trial):
    """Random labeled cases plus their score table and pooled gold units."""
    case_scores = {}
    gold = set()
    cases = []
    for c in range(3):
        cid = f"c{trial}-{c}"
        rows = []
        sents = []
        for i in range(rng.randrange(3, 9)):
            sid = str(i + 1)
            score = round(rng.uniform(-1, 1), 3)
            essential = rng.random() < 0.35
            rows.append((sid, score))
            sents.append(
                NoteSentence(id=sid, text=f"{cid} sentence {i}",
                             relevance="essential" if essential else "not-relevant")
            )
            if essential:
                gold.add((cid, sid))
        case_scores[cid] = rows
        cases.append(Case(case_id=cid, patient_question="q",
                          clinician_question="qc", sentences=sents))
    return cases, case_scores, gold


def test_calibrate_matches_brute_force_argmax():
    rng = random.Random(13)
    for trial in range(30):
        cases, case_scores, gold = make_random_scored_fixture(rng, trial)
        grid = [round(rng.uniform(-1, 1), 3) for _ in range(15)]
        curve = calibrate_threshold(cases, TableScorer(case_scores), grid=grid)
        expected_t, expected_f1 = oracle_best_threshold(case_scores, gold, grid)
        assert curve.best_t == expected_t
        best_point = [p for p in curve.points if p.t == curve.best_t][0]
        assert best_point.f1 == pytest.approx(expected_f1)


def test_supplementary_labels_do_not_change_strict_scores():
    rows = [("alpha", "essential"), ("beta", "supplementary"), ("gamma", "not-relevant")]
    flipped = [("alpha", "essential"), ("beta", "not-relevant"), ("gamma", "supplementary")]
    assert gold_units([_case("c1", rows)]) == gold_units([_case("c1", flipped)])


@given(st.lists(st.floats(min_value=-1, max_value=1, allow_nan=False), min_size=1, max_size=30),
       st.floats(min_value=-1, max_value=1, allow_nan=False),
       st.floats(min_value=-1, max_value=1, allow_nan=False))
@settings(max_examples=100)
def test_selection_monotone_in_threshold(scores, t1, t2):
    lo, hi = min(t1, t2), max(t1, t2)
    scored = [ScoredSentence(str(i), s, "x") for i, s in enumerate(scores)]
    at_lo = select_evidence(scored, lo).sentence_ids
    at_hi = select_evidence(scored, hi).sentence_ids
    assert at_hi <= at_lo
    assert len(at_hi) <= len(at_lo)


def test_default_grid_shape():
    grid = default_grid([0.0, 1.0], n=101)
    assert len(grid) == 101
    assert grid[0] == 0.0 and grid[-1] == 1.0
    assert all(grid[i] < grid[i + 1] for i in range(100))
    assert default_grid([0.4, 0.4]) == [0.4]
