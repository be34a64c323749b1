import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehrqa.answer import (
    generate_answer,
    render_note_block,
    render_user_prompt,
    split_sentences,
    split_text,
    strip_citation_markers,
)
from ehrqa.backends import MockBackend
from ehrqa.errors import ConfigError, GenerationError


def test_split_simple():
    assert split_text("He was treated. He improved.") == ["He was treated.", "He improved."]


def test_split_decimal_not_boundary():
    assert split_text("Dose was 1.5 mg daily.") == ["Dose was 1.5 mg daily."]


def test_split_empty():
    assert split_text("") == []
    assert split_sentences("") == []


def test_split_abbreviation_not_boundary():
    assert split_text("Seen by Dr. Smith today. Plan unchanged.") == [
        "Seen by Dr. Smith today.", "Plan unchanged.",
    ]


def test_split_requires_uppercase_or_digit_start():
    assert split_text("value was 3. then it rose") == ["value was 3. then it rose"]
    assert split_text("value was 3. Then it rose") == ["value was 3.", "Then it rose"]


def test_split_sentences_ids_in_order():
    out = split_sentences("One here. Two here. Three here.")
    assert [s.id for s in out] == ["1", "2", "3"]


def test_split_idempotent_on_own_output():
    text = "First sentence. Second one! Third one? 4 got digits."
    for piece in split_text(text):
        assert split_text(piece) == [piece]


@given(st.text(max_size=300))
@settings(max_examples=120)
def test_split_rejoin_reproduces_input_modulo_whitespace(text):
    pieces = split_text(text)
    assert all(p.strip() for p in pieces)
    rejoined = " ".join(" ".join(p.split()) for p in pieces)
    assert rejoined == " ".join(text.split())


def _case(mini_corpus):
    return mini_corpus[0]


def test_generate_under_limit(mini_corpus):
    text = " ".join(["word"] * 40) + "."
    backend = MockBackend(default_response=text)
    ans = generate_answer(_case(mini_corpus), "q clin", "zero_shot_full", backend)
    assert ans.word_count == 40
    assert ans.text == text


def test_generate_truncates_to_75(mini_corpus):
    backend = MockBackend(default_response=" ".join(f"w{i}" for i in range(90)))
    ans = generate_answer(_case(mini_corpus), "q clin", "zero_shot_full", backend)
    assert ans.word_count <= 75


def test_prompt_contains_numbered_note(mini_corpus):
    case = _case(mini_corpus)
    rendered = render_user_prompt(case, "q clin")
    for s in case.sentences:
        assert s.text in rendered
        assert f"{s.id}. " in rendered
    assert render_note_block(case) in rendered


def test_two_step_revises(mini_corpus):
    case = _case(mini_corpus)

    def responder(request):
        text = request.last_user_content()
        if "Draft answer:" in text:
            return "Revised grounded answer."
        return "Draft answer from the small model."

    ans = generate_answer(case, None, "two_step", MockBackend(responder=responder))
    assert ans.text == "Revised grounded answer."


def test_two_step_draft_omits_clinician_question(mini_corpus):
    case = _case(mini_corpus)
    seen = []

    def responder(request):
        seen.append(request.last_user_content())
        return "Fine."

    generate_answer(case, "the clinician question", "two_step", MockBackend(responder=responder))
    assert "the clinician question" not in seen[0]


def test_citation_markers_removed(mini_corpus):
    backend = MockBackend(default_response="He improved [1]. Treatment worked (2).")
    ans = generate_answer(_case(mini_corpus), None, "zero_shot_full", backend)
    assert "[1]" not in ans.text
    assert "(2)" not in ans.text


def test_strip_citation_markers_variants():
    assert strip_citation_markers("Fine [1, 2].") == "Fine."
    assert strip_citation_markers("Fine (sentence 3).") == "Fine."
    assert strip_citation_markers("No markers here.") == "No markers here."


def test_sentences_concatenate_to_text(mini_corpus):
    backend = MockBackend(default_response="One sentence here. Another one there.")
    ans = generate_answer(_case(mini_corpus), None, "zero_shot_full", backend)
    assert " ".join(s.text for s in ans.sentences) == ans.text
    assert [s.id for s in ans.sentences] == ["1", "2"]


def test_unknown_mode(mini_corpus):
    with pytest.raises(ConfigError):
        generate_answer(_case(mini_corpus), None, "three_step", MockBackend(default_response="x"))


def test_empty_output_is_generation_error(mini_corpus):
    backend = MockBackend(responder=lambda req: "   ")
    with pytest.raises((GenerationError, Exception)):
        generate_answer(_case(mini_corpus), None, "zero_shot_full", backend)


@given(st.text(min_size=1, max_size=800))
@settings(max_examples=100)
def test_word_limit_guarantee_over_random_outputs(model_output):
    from ehrqa.fixtures import build_mini_corpus

    case = build_mini_corpus(1)[0]
    backend = MockBackend(responder=lambda req: model_output if model_output.strip() else "x.")
    ans = generate_answer(case, None, "zero_shot_full", backend)
    assert ans.word_count <= 75
    assert len(ans.text.split()) <= 75
