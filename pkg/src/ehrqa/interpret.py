"""Question interpretation: rewrite a patient narrative into a clinician-style
question of at most 15 words.

Three strategies: plain few-shot (3 or 5 examples, taken from the first dev
cases in corpus order), double-query (the question block rendered twice in
one user message), and two-step (a drafting model followed by a revising
model that re-checks the length rule). Whatever the model returns, the
15-word cap is enforced by truncation as the deterministic fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from . import prompts
from .backends import chat_request
from .corpus import Case, word_count
from .errors import ConfigError, GenerationError

CLIN_QUESTION_WORD_LIMIT = 15

STRATEGY_KINDS = ("few_shot", "double_query", "two_step")


@dataclass
class InterpretStrategy:
    kind: str
    k: int = 3
    shots: list[tuple[str, str]] = field(default_factory=list)  # (patient q, clinician q)
    prompt_id: str = "question_rewrite"
    revision_prompt_id: str = "question_rewrite_revision"
    # Backend handles for the two_step draft/revision calls; the draft call
    # falls back to the main backend when unset.
    drafter: Any = None
    reviser: Any = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"unknown interpret strategy '{self.kind}'")
        if self.kind in ("few_shot", "double_query", "two_step"):
            if self.k not in (3, 5):
                raise ConfigError(f"shot count must be 3 or 5, got {self.k}")
            if self.shots and len(self.shots) != self.k:
                raise ConfigError(
                    f"strategy declares k={self.k} but carries {len(self.shots)} shots"
                )


@dataclass(frozen=True)
class ClinQuestion:
    text: str
    word_count: int


def shots_from_cases(cases: list[Case], k: int) -> list[tuple[str, str]]:
    """First k labeled dev cases, in corpus order, as (patient q, clinician q)."""
    shots = []
    for case in cases:
        if case.clinician_question is None:
            continue
        shots.append((case.patient_question, case.clinician_question))
        if len(shots) == k:
            return shots
    raise ConfigError(f"need {k} cases with clinician questions, found {len(shots)}")


def render_examples(shots: list[tuple[str, str]]) -> str:
    blocks = [f"Question: {pq}\nRewritten: {cq}" for pq, cq in shots]
    return "\n\n".join(blocks)


def render_system_prompt(strategy: InterpretStrategy) -> str:
    template = prompts.get_template(strategy.prompt_id)
    return prompts.fill(template, {"examples": render_examples(strategy.shots)})


def render_user_prompt(q: str, strategy: InterpretStrategy) -> str:
    block = f"Question: {q}\nRewritten:"
    if strategy.kind == "double_query":
        # Question block repeated back-to-back in the same user message.
        return f"{q}\n\n{block}"
    return block


def enforce_word_limit(text: str, limit: int) -> str:
    """Cap whitespace word count at ``limit`` by truncation.

    Compliant input is returned unchanged. When truncating, the original
    text's terminal sentence punctuation carries over to the last kept word.
    """
    if limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    words = text.split()
    if len(words) <= limit:
        return text
    kept = words[:limit]
    stripped = text.rstrip()
    tail = stripped[-1] if stripped else ""
    if tail in ".!?" and not kept[-1].endswith(tail):
        kept[-1] = kept[-1].rstrip(".,;:!?") + tail
    return " ".join(kept)


def interpret(q: str, strategy: InterpretStrategy, backend) -> ClinQuestion:
    """Rewrite one patient question per the chosen strategy."""
    if not q:
        raise GenerationError("cannot interpret an empty patient question")
    system = render_system_prompt(strategy)
    user = render_user_prompt(q, strategy)
    drafter = strategy.drafter if strategy.kind == "two_step" and strategy.drafter else backend
    draft = drafter.chat(chat_request(user, system=system)).strip()
    if not draft:
        raise GenerationError("model produced an empty question")

    text = draft
    if strategy.kind == "two_step":
        reviser = strategy.reviser or backend
        revision_prompt = prompts.fill(
            prompts.get_template(strategy.revision_prompt_id),
            {"patient_question": q, "draft": draft},
        )
        text = reviser.chat(chat_request(revision_prompt)).strip()
        if not text:
            raise GenerationError("revision step produced an empty question")

    text = enforce_word_limit(text, CLIN_QUESTION_WORD_LIMIT)
    return ClinQuestion(text=text, word_count=word_count(text))
