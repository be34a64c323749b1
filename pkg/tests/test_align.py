import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehrqa.align import (
    align_listwise,
    align_pairwise,
    align_threshold,
    alignment_units,
    maps_to_submission,
    parse_alignment_json,
    parse_verdict,
    render_listwise_prompts,
    submission_to_maps,
    validate_alignment,
)
from ehrqa.answer import GeneratedAnswer, split_sentences
from ehrqa.backends import CachedBackend, MockBackend
from ehrqa.corpus import AlignmentMap, Case, NoteSentence
from ehrqa.errors import AlignmentParseError


def _case(texts, case_id="c1"):
    return Case(
        case_id=case_id,
        patient_question="what happened",
        clinician_question="what was done",
        sentences=[NoteSentence(id=str(i + 1), text=t) for i, t in enumerate(texts)],
    )


def _answer(texts, case_id="c1"):
    joined = " ".join(texts)
    return GeneratedAnswer(
        case_id=case_id,
        text=joined,
        sentences=split_sentences(joined),
        word_count=len(joined.split()),
    )


def test_threshold_links_identical_sentence():
    case = _case(["The fever resolved after treatment.", "Vitals were stable."])
    answer = _answer(["The fever resolved after treatment."])
    amap = align_threshold(answer, case, t=0.99, backend=MockBackend())
    assert amap.evidence_for("1") == {"1"}


def test_threshold_above_everything_gives_empty_sets():
    case = _case(["alpha one two.", "beta three four."])
    answer = _answer(["Gamma five six.", "Delta seven eight."])
    amap = align_threshold(answer, case, t=1.1, backend=MockBackend())
    assert amap.answer_ids() == ["1", "2"]
    assert all(ids == set() for _, ids in amap.links)


def test_threshold_similarity_computation_count():
    # 2 answer sentences x 3 note sentences -> exactly 6 cosine comparisons,
    # via 5 per-text embedding calls counted by the cache.
    case = _case(["alpha one.", "beta two.", "gamma three."])
    answer = _answer(["Delta four.", "Epsilon five."])
    import ehrqa.align as align_mod

    calls = {"n": 0}
    original = align_mod.cosine

    def counting(u, v):
        calls["n"] += 1
        return original(u, v)

    align_mod.cosine = counting
    try:
        align_threshold(answer, case, t=0.5, backend=MockBackend())
    finally:
        align_mod.cosine = original
    assert calls["n"] == 6


def test_threshold_monotone():
    case = _case(["alpha one two.", "beta three four.", "alpha beta gamma."])
    answer = _answer(["Alpha one five.", "Beta gamma two."])
    backend = MockBackend()
    links_low = align_threshold(answer, case, t=-1.0, backend=backend)
    links_mid = align_threshold(answer, case, t=0.2, backend=backend)
    links_high = align_threshold(answer, case, t=0.9, backend=backend)
    for aid in ["1", "2"]:
        assert links_high.evidence_for(aid) <= links_mid.evidence_for(aid)
        assert links_mid.evidence_for(aid) <= links_low.evidence_for(aid)


def test_parse_submission_shape():
    case = _case(["one.", "two."])
    answer = _answer(["Answer sentence one.", "Answer sentence two."])
    raw = json.dumps([
        {"case_id": "c1", "prediction": [
            {"answer_id": "1", "evidence_id": ["1", "2"]},
            {"answer_id": "2", "evidence_id": []},
        ]}
    ])
    amap = parse_alignment_json(raw, case, answer)
    assert amap.evidence_for("1") == {"1", "2"}
    assert amap.evidence_for("2") == set()


def test_parse_strips_code_fences():
    case = _case(["one."])
    answer = _answer(["Answer."])
    raw = "Here you go:\n```json\n[{\"answer_id\": \"1\", \"evidence_id\": [\"1\"]}]\n```"
    amap = parse_alignment_json(raw, case, answer)
    assert amap.evidence_for("1") == {"1"}


def test_parse_coerces_integer_ids():
    case = _case(["one.", "two."])
    answer = _answer(["Answer."])
    raw = json.dumps([{"answer_id": 1, "evidence_id": [1, 2]}])
    amap = parse_alignment_json(raw, case, answer)
    assert amap.evidence_for("1") == {"1", "2"}


def test_parse_fills_missing_answer_ids():
    case = _case(["one."])
    answer = _answer(["First answer.", "Second answer."])
    raw = json.dumps([{"answer_id": "1", "evidence_id": ["1"]}])
    amap = parse_alignment_json(raw, case, answer)
    assert amap.answer_ids() == ["1", "2"]
    assert amap.evidence_for("2") == set()


def test_parse_rejects_unknown_evidence_id():
    case = _case(["one."])
    answer = _answer(["Answer."])
    raw = json.dumps([{"answer_id": "1", "evidence_id": ["7"]}])
    with pytest.raises(AlignmentParseError, match="7"):
        parse_alignment_json(raw, case, answer)


def test_parse_no_json_carries_raw_output():
    case = _case(["one."])
    answer = _answer(["Answer."])
    with pytest.raises(AlignmentParseError) as err:
        parse_alignment_json("there is no json here", case, answer)
    assert err.value.raw_output == "there is no json here"


def test_listwise_one_step_parses_mock_json(dev_corpus):
    case = _case(["one.", "two."])
    answer = _answer(["Answer sentence."])
    payload = json.dumps([
        {"case_id": "c1", "prediction": [{"answer_id": "1", "evidence_id": ["2"]}]}
    ])
    backend = MockBackend(chat_rules=[("alignment system", payload)])
    amap = align_listwise(answer, case, "q", "q clin", "one_step", backend,
                          exemplar=dev_corpus[0])
    assert amap.evidence_for("1") == {"2"}


def test_listwise_two_step_repairs_prose(dev_corpus):
    case = _case(["one.", "two."])
    answer = _answer(["Answer sentence."])
    payload = json.dumps([
        {"case_id": "c1", "prediction": [{"answer_id": "1", "evidence_id": ["1"]}]}
    ])
    backend = MockBackend(chat_rules=[
        ("STRICT JSON with this exact format", payload),  # reformat call
        ("alignment system", "sentence 1 supports the answer, I believe"),
    ])
    amap = align_listwise(answer, case, "q", None, "two_step", backend,
                          exemplar=dev_corpus[0])
    assert amap.evidence_for("1") == {"1"}


def test_listwise_one_step_raises_on_prose():
    case = _case(["one."])
    answer = _answer(["Answer."])
    backend = MockBackend(default_response="no json at all")
    with pytest.raises(AlignmentParseError):
        align_listwise(answer, case, "q", None, "one_step", backend)


def test_listwise_prompt_contains_all_blocks(dev_corpus):
    case = _case(["note one.", "note two."], case_id="c9")
    answer = _answer(["Answer alpha.", "Answer beta."], case_id="c9")
    system, user = render_listwise_prompts(answer, case, "patient q", "clin q",
                                           dev_corpus[0])
    assert "patient q" in user and "clin q" in user
    assert "note one." in user and "Answer beta." in user
    # the exemplar renders the first dev case with its gold alignment JSON
    assert dev_corpus[0].case_id in system
    assert "Output:" in system


def test_pairwise_links_follow_verdicts():
    case = _case(["alpha shared.", "nothing here."])
    answer = _answer(["Alpha shared indeed.", "Different entirely."])

    def responder(request):
        text = request.last_user_content()
        answer_block = text.split("Answer sentence:\n")[1].split("\n\nNote sentence:")[0]
        note_block = text.split("Note sentence:\n")[1]
        shared = set(answer_block.lower().split()) & set(note_block.lower().split())
        return "YES" if shared - {""} else "NO"

    amap = align_pairwise(answer, case, MockBackend(responder=responder))
    assert amap.evidence_for("1") == {"1"}
    assert amap.evidence_for("2") == set()


def test_pairwise_all_no():
    case = _case(["one.", "two."])
    answer = _answer(["Alpha.", "Beta."])
    amap = align_pairwise(answer, case, MockBackend(default_response="NO"))
    assert all(ids == set() for _, ids in amap.links)


def test_pairwise_call_budget_cache_verified(tmp_path):
    case = _case(["one one.", "two two.", "three three."])
    answer = _answer(["Alpha.", "Beta."])
    backend = CachedBackend(MockBackend(default_response="NO"), tmp_path / "cache")
    align_pairwise(answer, case, backend)
    assert backend.stats.misses == len(answer.sentences) * len(case.sentences)


def test_pairwise_unparseable_counts_as_negative(caplog):
    case = _case(["one."])
    answer = _answer(["Alpha."])
    amap = align_pairwise(answer, case, MockBackend(default_response="perhaps?"))
    assert amap.evidence_for("1") == set()


def test_parse_verdict_rules():
    assert parse_verdict("YES") is True
    assert parse_verdict("yes, clearly") is True
    assert parse_verdict("No.") is False
    assert parse_verdict("maybe") is None
    assert parse_verdict("") is None


def test_validator_rejects_out_of_case_ids():
    case = _case(["one."])
    answer = _answer(["Alpha."])
    bad = AlignmentMap(case_id="c1", links=[("1", {"9"})])
    with pytest.raises(AlignmentParseError, match="9"):
        validate_alignment(bad, case, answer)


def test_validator_requires_exact_answer_coverage():
    case = _case(["one."])
    answer = _answer(["Alpha.", "Beta."])
    missing = AlignmentMap(case_id="c1", links=[("1", set())])
    with pytest.raises(AlignmentParseError):
        validate_alignment(missing, case, answer)


def test_submission_round_trip():
    maps = [
        AlignmentMap(case_id="c1", links=[("1", {"2", "1"}), ("2", set())]),
        AlignmentMap(case_id="c2", links=[("1", {"3"})]),
    ]
    data = maps_to_submission(maps)
    again = submission_to_maps(json.loads(json.dumps(data)))
    assert [m.case_id for m in again] == ["c1", "c2"]
    assert again[0].evidence_for("1") == {"1", "2"}
    assert again[0].evidence_for("2") == set()
    assert alignment_units(again) == alignment_units(maps)


@given(st.lists(st.sampled_from(["1", "2", "3"]), max_size=6))
@settings(max_examples=60)
def test_all_strategies_cover_exactly_answer_ids(evidence_pool):
    case = _case(["one fish.", "two fish.", "red fish."])
    answer = _answer(["Blue fish here.", "Another answer here."])
    payload = json.dumps([
        {"answer_id": "1", "evidence_id": sorted(set(evidence_pool))}
    ])
    amap = parse_alignment_json(payload, case, answer)
    assert amap.answer_ids() == [s.id for s in answer.sentences]
    validate_alignment(amap, case, answer)
