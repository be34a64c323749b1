"""Answer generation: produce a grounded answer of at most 75 words from the
patient question, the clinician question, and the note excerpt, then segment
it into numbered answer sentences for downstream citation.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from . import prompts
from .backends import chat_request
from .corpus import AnswerSentence, Case, word_count
from .errors import ConfigError, GenerationError
from .interpret import enforce_word_limit

ANSWER_WORD_LIMIT = 75

ANSWER_MODES = ("zero_shot_full", "two_step")

# Tokens that end with '.' but do not end a sentence. Extendable via the
# abbreviations argument of split_text.
DEFAULT_ABBREVIATIONS = (
    "dr", "mr", "mrs", "ms", "st", "vs", "etc", "approx", "dept", "fig", "no",
    "e.g", "i.e", "pt", "q.d", "b.i.d", "t.i.d", "p.r.n", "mg", "ml",
)

_CITATION_RE = re.compile(r"\s*[\[\(]\s*(?:sentence\s+)?\d+(?:\s*[,;]\s*\d+)*\s*[\]\)]")


@dataclass
class GeneratedAnswer:
    case_id: str
    text: str
    sentences: list[AnswerSentence]
    word_count: int


def render_note_block(case: Case) -> str:
    """The note excerpt as numbered ``id. text`` lines, verbatim."""
    return "\n".join(f"{s.id}. {s.text}" for s in case.sentences)


def strip_citation_markers(text: str) -> str:
    """Drop bracketed sentence-number citations the model was told not to emit."""
    return _CITATION_RE.sub("", text)


def _boundary_ok(text: str, end: int, abbreviations: tuple[str, ...]) -> bool:
    """True when the punctuation run ending at ``end`` closes a sentence."""
    ch = text[end]
    if ch == ".":
        token_start = end
        while token_start > 0 and not text[token_start - 1].isspace():
            token_start -= 1
        token = text[token_start:end].lower().rstrip(".")
        if token in abbreviations:
            return False
    return True


def split_text(
    text: str, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS
) -> list[str]:
    """Deterministic sentence segmentation.

    A boundary is a run of ``. ! ?`` followed by whitespace and an
    uppercase letter or digit. Decimal points never match (no whitespace
    after the dot) and known abbreviations are skipped. Rejoining the parts
    with single spaces reproduces the input modulo inter-sentence
    whitespace.
    """
    text = text.strip()
    if not text:
        return []
    sentences = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in ".!?":
            j = i
            while j + 1 < n and text[j + 1] in ".!?":
                j += 1
            k = j + 1
            while k < n and text[k].isspace():
                k += 1
            if k > j + 1 and k < n and (text[k].isupper() or text[k].isdigit()):
                if _boundary_ok(text, i, abbreviations):
                    piece = text[start : j + 1].strip()
                    if piece:
                        sentences.append(piece)
                    start = k
            i = j + 1
        else:
            i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def split_sentences(
    text: str, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS
) -> list[AnswerSentence]:
    """Segment an answer and number its sentences "1".."m"."""
    return [
        AnswerSentence(id=str(i + 1), text=piece)
        for i, piece in enumerate(split_text(text, abbreviations))
    ]


def render_user_prompt(case: Case, q_clin: Optional[str]) -> str:
    parts = [f"Patient question:\n{case.patient_question}"]
    if q_clin:
        parts.append(f"Clinician question:\n{q_clin}")
    parts.append(f"Clinical note excerpt:\n{render_note_block(case)}")
    return "\n\n".join(parts)


def generate_answer(
    case: Case,
    q_clin: Optional[str],
    mode: str,
    backend,
    reviser=None,
    prompt_id: str = "answer_generation",
    revision_prompt_id: str = "answer_revision",
) -> GeneratedAnswer:
    """Generate and segment one grounded answer.

    ``zero_shot_full`` prompts once with q, q_clin, and the note;
    ``two_step`` drafts from q and the note only, then revises with the
    same grounding constraints (the reviser defaults to the main backend).
    """
    if mode not in ANSWER_MODES:
        raise ConfigError(f"unknown answer mode '{mode}'")
    if not case.patient_question:
        raise GenerationError(f"case '{case.case_id}': empty patient question")

    system = prompts.get_template(prompt_id)
    user = render_user_prompt(case, q_clin if mode == "zero_shot_full" else None)
    text = backend.chat(chat_request(user, system=system)).strip()
    if not text:
        raise GenerationError(f"case '{case.case_id}': model produced an empty answer")

    if mode == "two_step":
        revision = prompts.fill(
            prompts.get_template(revision_prompt_id),
            {
                "note_block": render_note_block(case),
                "patient_question": case.patient_question,
                "draft": text,
            },
        )
        text = (reviser or backend).chat(chat_request(revision)).strip()
        if not text:
            raise GenerationError(f"case '{case.case_id}': revision produced an empty answer")

    text = strip_citation_markers(text).strip()
    text = enforce_word_limit(text, ANSWER_WORD_LIMIT)
    sentences = split_sentences(text)
    return GeneratedAnswer(
        case_id=case.case_id,
        text=text,
        sentences=sentences,
        word_count=word_count(text),
    )


def answer_to_dict(ans: GeneratedAnswer) -> dict:
    return {
        "case_id": ans.case_id,
        "answer": ans.text,
        "sentences": [{"id": s.id, "text": s.text} for s in ans.sentences],
    }


def answer_from_dict(obj: dict) -> GeneratedAnswer:
    text = obj["answer"]
    sentences = [AnswerSentence(id=s["id"], text=s["text"]) for s in obj.get("sentences", [])]
    if not sentences:
        sentences = split_sentences(text)
    return GeneratedAnswer(
        case_id=obj["case_id"],
        text=text,
        sentences=sentences,
        word_count=word_count(text),
    )
