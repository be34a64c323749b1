"""Deterministic schema-compatible fixture corpora.

The licensed clinical dataset cannot ship with this package, so tests and
demos run on generated stand-ins. ``build_dev_corpus`` reproduces the dev
split's published shape exactly: 20 cases, 428 note sentences (121 of them
essential), 6418 note words, 95 answer sentences totalling 1472 words, and
166 gold citation pairs over 2035 possible (answer, note) pairs. Everything
is seeded; repeated builds are identical.
"""

from __future__ import annotations

import random

from .corpus import AlignmentMap, AnswerSentence, Case, NoteSentence

FIXTURE_SEED = 20260810

_TOPICS = [
    ("pneumonia", "antibiotics"), ("sepsis", "vancomycin"), ("anemia", "transfusion"),
    ("hypertension", "lisinopril"), ("diabetes", "insulin"), ("pancreatitis", "fluids"),
    ("appendicitis", "surgery"), ("asthma", "albuterol"), ("cellulitis", "cefazolin"),
    ("migraine", "sumatriptan"), ("gout", "colchicine"), ("bronchitis", "azithromycin"),
    ("hypothyroidism", "levothyroxine"), ("arrhythmia", "amiodarone"), ("stroke", "alteplase"),
    ("fracture", "fixation"), ("colitis", "mesalamine"), ("nephrolithiasis", "lithotripsy"),
    ("endocarditis", "gentamicin"), ("meningitis", "ceftriaxone"),
]

_NOTE_FILLER = [
    "vitals", "remained", "stable", "overnight", "labs", "were", "unremarkable",
    "patient", "tolerated", "diet", "well", "ambulating", "without", "assistance",
    "plan", "reviewed", "with", "team", "family", "updated", "at", "bedside",
    "followup", "scheduled", "after", "discharge", "monitoring", "continued",
    "during", "admission", "course", "uncomplicated", "daily", "assessment",
    "documented", "nursing", "notes", "reviewed", "on", "rounds",
]

_QUESTION_FILLER = [
    "please", "kindly", "wondering", "about", "my", "recent", "hospital", "stay",
    "and", "what", "happened", "overall", "because", "still", "confused",
]

_SPECIALTIES = ["cardiology", "pulmonology", "nephrology", "oncology", "neurology"]


def _sentence(rng: random.Random, n_words: int, lead: list[str], pool: list[str]) -> str:
    words = list(lead)
    while len(words) < n_words:
        words.append(rng.choice(pool))
    words = words[:n_words]
    text = " ".join(words) + "."
    return text[0].upper() + text[1:]


def _question(rng: random.Random, n_words: int, lead: list[str]) -> str:
    words = list(lead)
    while len(words) < n_words:
        words.append(rng.choice(_QUESTION_FILLER))
    words = words[:n_words]
    text = " ".join(words) + "?"
    return text[0].upper() + text[1:]


def _build_case(
    rng: random.Random,
    case_id: str,
    topic: tuple[str, str],
    n_sentences: int,
    n_essential: int,
    n_supplementary: int,
    n_answers: int,
    pq_words: int,
    cq_words: int,
    sentence_words: list[int],
    answer_words: list[int],
    citations_per_answer: list[int],
    specialty: str,
) -> Case:
    condition, treatment = topic
    labeled = rng.sample(range(n_sentences), n_essential + n_supplementary)
    essential_idx = set(labeled[:n_essential])
    supplementary_idx = set(labeled[n_essential:])

    sentences = []
    for i in range(n_sentences):
        if i in essential_idx:
            lead = [condition, "required", treatment, "during", "the", "stay"]
            label = "essential"
        elif i in supplementary_idx:
            lead = ["history", "of", condition, "was", "noted"]
            label = "supplementary"
        else:
            lead = []
            label = "not-relevant"
        sentences.append(
            NoteSentence(
                id=str(i + 1),
                text=_sentence(rng, sentence_words[i], lead, _NOTE_FILLER),
                relevance=label,
            )
        )

    patient_question = _question(
        rng, pq_words, ["i", "want", "to", "know", "why", "the", condition, "needed", treatment]
    )
    clinician_question = _question(
        rng, cq_words, ["did", treatment, "resolve", "the", "patient's", condition]
    )

    essential_ids = [str(i + 1) for i in sorted(essential_idx)]
    answers = []
    links = []
    for j in range(n_answers):
        answers.append(
            AnswerSentence(
                id=str(j + 1),
                text=_sentence(
                    rng, answer_words[j],
                    [treatment, "was", "given", "for", condition], _NOTE_FILLER,
                ),
            )
        )
        cited = {
            essential_ids[(2 * j + k) % len(essential_ids)]
            for k in range(citations_per_answer[j])
        }
        links.append((str(j + 1), cited))

    return Case(
        case_id=case_id,
        patient_question=patient_question,
        clinician_question=clinician_question,
        sentences=sentences,
        reference_answer=answers,
        evidence_links=AlignmentMap(case_id=case_id, links=links),
        specialty=specialty,
    )


def build_dev_corpus() -> list[Case]:
    """The 20-case dev-shaped fixture with exact published-shape statistics."""
    rng = random.Random(FIXTURE_SEED)
    cases = []
    answer_counter = 0  # flattened answer-sentence index across the corpus
    for i in range(20):
        n_sentences = 21 if i < 12 else 22
        n_answers = 4 if 7 <= i <= 11 else 5
        n_essential = 7 if i == 0 else 6

        sentence_words = [15] * n_sentences
        if i in (0, 1):
            sentence_words[20] = 14  # two short sentences -> 6418 note words total

        answer_words = []
        citations = []
        for _ in range(n_answers):
            answer_words.append(16 if answer_counter < 47 else 15)
            citations.append(2 if answer_counter < 71 else 1)
            answer_counter += 1

        cases.append(
            _build_case(
                rng,
                case_id=f"dev-{i + 1:02d}",
                topic=_TOPICS[i],
                n_sentences=n_sentences,
                n_essential=n_essential,
                n_supplementary=2,
                n_answers=n_answers,
                pq_words=17 if i < 4 else 16,
                cq_words=11 if i < 15 else 10,
                sentence_words=sentence_words,
                answer_words=answer_words,
                citations_per_answer=citations,
                specialty=_SPECIALTIES[i % len(_SPECIALTIES)],
            )
        )
    return cases


def build_mini_corpus(n_cases: int = 5) -> list[Case]:
    """A small labeled corpus for fast end-to-end runs."""
    rng = random.Random(FIXTURE_SEED + 1)
    cases = []
    for i in range(n_cases):
        cases.append(
            _build_case(
                rng,
                case_id=f"mini-{i + 1:02d}",
                topic=_TOPICS[i % len(_TOPICS)],
                n_sentences=12,
                n_essential=3,
                n_supplementary=2,
                n_answers=3,
                pq_words=14,
                cq_words=9,
                sentence_words=[12] * 12,
                answer_words=[12] * 3,
                citations_per_answer=[2, 1, 1],
                specialty=_SPECIALTIES[i % len(_SPECIALTIES)],
            )
        )
    return cases


def build_unlabeled_corpus(n_cases: int = 3) -> list[Case]:
    """Test-split shape: no relevance labels, no answers, no evidence."""
    labeled = build_mini_corpus(n_cases)
    stripped = []
    for case in labeled:
        stripped.append(
            Case(
                case_id=case.case_id.replace("mini-", "test-"),
                patient_question=case.patient_question,
                clinician_question=None,
                sentences=[NoteSentence(id=s.id, text=s.text) for s in case.sentences],
                specialty=case.specialty,
            )
        )
    return stripped
