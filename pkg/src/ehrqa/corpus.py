"""QA corpus: domain records, JSON (de)serialization, and summary statistics.

Canonical corpus format is a UTF-8 JSON file holding an array of case
objects:

    [
      {
        "case_id": "dev-01",
        "patient_question": "...",
        "clinician_question": "...",          // optional
        "sentences": [{"id": "1", "text": "...", "relevance": "essential"}],
        "answer": [{"id": "1", "text": "..."}],          // optional
        "evidence": [{"answer_id": "1", "evidence_ids": ["1", "4"]}],  // optional
        "specialty": "cardiology",            // optional
        "provenance": {...}                   // optional, synthetic cases only
      }
    ]

All ids are strings. Relevance, answers, and evidence may be absent
(unlabeled test splits withhold them). Parsed corpora are treated as
immutable after load and are safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import CorpusError

RELEVANCE_LABELS = ("essential", "supplementary", "not-relevant")


def word_count(text: str) -> int:
    """Number of non-empty whitespace-separated tokens."""
    return len(text.split())


@dataclass
class NoteSentence:
    """One numbered sentence of a clinical note excerpt."""

    id: str
    text: str
    relevance: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise CorpusError("note sentence with empty id")
        if not self.text:
            raise CorpusError(f"note sentence '{self.id}': empty text")
        if self.relevance is not None and self.relevance not in RELEVANCE_LABELS:
            raise CorpusError(
                f"note sentence '{self.id}': unknown relevance '{self.relevance}'"
            )


@dataclass
class AnswerSentence:
    """One sentence of a (reference or generated) answer."""

    id: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise CorpusError("answer sentence with empty id")
        if not self.text:
            raise CorpusError(f"answer sentence '{self.id}': empty text")


@dataclass
class AlignmentMap:
    """Many-to-many citation map from answer-sentence ids to note-sentence ids.

    Each answer id appears exactly once; an empty evidence set is legal.
    """

    case_id: str
    links: list[tuple[str, set[str]]] = field(default_factory=list)

    def evidence_for(self, answer_id: str) -> set[str]:
        for aid, ids in self.links:
            if aid == answer_id:
                return ids
        return set()

    def pairs(self) -> set[tuple[str, str]]:
        """All (answer_id, sentence_id) citation pairs."""
        return {(aid, sid) for aid, ids in self.links for sid in ids}

    def answer_ids(self) -> list[str]:
        return [aid for aid, _ in self.links]


@dataclass
class Case:
    """One QA instance: patient question, note sentences, and optional gold data."""

    case_id: str
    patient_question: str
    sentences: list[NoteSentence]
    clinician_question: Optional[str] = None
    reference_answer: Optional[list[AnswerSentence]] = None
    evidence_links: Optional[AlignmentMap] = None
    specialty: Optional[str] = None
    provenance: Optional[dict] = None

    def __post_init__(self):
        if not self.case_id:
            raise CorpusError("case with empty case_id")
        if not self.sentences:
            raise CorpusError(f"case '{self.case_id}': no sentences")
        seen = set()
        for s in self.sentences:
            if s.id in seen:
                raise CorpusError(f"case '{self.case_id}': duplicate sentence id '{s.id}'")
            seen.add(s.id)
        if self.reference_answer is not None:
            aseen = set()
            for a in self.reference_answer:
                if a.id in aseen:
                    raise CorpusError(
                        f"case '{self.case_id}': duplicate answer id '{a.id}'"
                    )
                aseen.add(a.id)
        if self.evidence_links is not None:
            answer_ids = {a.id for a in self.reference_answer or []}
            for aid, sids in self.evidence_links.links:
                if self.reference_answer is not None and aid not in answer_ids:
                    raise CorpusError(
                        f"case '{self.case_id}': evidence for unknown answer id '{aid}'"
                    )
                for sid in sids:
                    if sid not in seen:
                        raise CorpusError(
                            f"case '{self.case_id}': evidence cites unknown sentence id '{sid}'"
                        )

    @property
    def sentence_ids(self) -> list[str]:
        return [s.id for s in self.sentences]

    def sentence_by_id(self, sid: str) -> NoteSentence:
        for s in self.sentences:
            if s.id == sid:
                return s
        raise CorpusError(f"case '{self.case_id}': no sentence with id '{sid}'")

    def is_labeled(self) -> bool:
        return all(s.relevance is not None for s in self.sentences)

    def note_text(self) -> str:
        """The full note excerpt as one whitespace-joined string."""
        return " ".join(s.text for s in self.sentences)


@dataclass(frozen=True)
class CorpusStats:
    """Aggregate corpus statistics; all text lengths are whitespace word counts."""

    case_count: int
    total_note_sentences: int
    avg_note_sentences_per_case: float
    avg_note_sentence_length_words: float
    avg_note_length_per_case_words: float
    avg_patient_question_length_words: float
    avg_clinician_question_length_words: float
    avg_answer_sentences_per_case: float
    avg_answer_sentence_length_words: float


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise CorpusError(f"{where}: missing required field '{key}'")
    return obj[key]


def case_from_dict(obj: dict, where: str = "case") -> Case:
    """Build one validated Case from its JSON object form."""
    if not isinstance(obj, dict):
        raise CorpusError(f"{where}: expected an object, got {type(obj).__name__}")
    case_id = str(_require(obj, "case_id", where))
    where = f"case '{case_id}'"

    sentences = []
    raw_sentences = _require(obj, "sentences", where)
    if not isinstance(raw_sentences, list):
        raise CorpusError(f"{where}: 'sentences' must be an array")
    for i, s in enumerate(raw_sentences):
        sentences.append(
            NoteSentence(
                id=str(_require(s, "id", f"{where} sentence #{i}")),
                text=str(_require(s, "text", f"{where} sentence #{i}")),
                relevance=s.get("relevance"),
            )
        )

    answer = None
    if obj.get("answer") is not None:
        answer = [
            AnswerSentence(
                id=str(_require(a, "id", f"{where} answer #{i}")),
                text=str(_require(a, "text", f"{where} answer #{i}")),
            )
            for i, a in enumerate(obj["answer"])
        ]

    evidence = None
    if obj.get("evidence") is not None:
        links = []
        for i, link in enumerate(obj["evidence"]):
            aid = str(_require(link, "answer_id", f"{where} evidence #{i}"))
            sids = _require(link, "evidence_ids", f"{where} evidence #{i}")
            links.append((aid, {str(s) for s in sids}))
        evidence = AlignmentMap(case_id=case_id, links=links)

    return Case(
        case_id=case_id,
        patient_question=str(_require(obj, "patient_question", where)),
        clinician_question=obj.get("clinician_question"),
        sentences=sentences,
        reference_answer=answer,
        evidence_links=evidence,
        specialty=obj.get("specialty"),
        provenance=obj.get("provenance"),
    )


def case_to_dict(case: Case) -> dict:
    """Inverse of case_from_dict; omits absent optional fields."""
    obj: dict[str, Any] = {
        "case_id": case.case_id,
        "patient_question": case.patient_question,
    }
    if case.clinician_question is not None:
        obj["clinician_question"] = case.clinician_question
    obj["sentences"] = [
        {"id": s.id, "text": s.text, **({"relevance": s.relevance} if s.relevance else {})}
        for s in case.sentences
    ]
    if case.reference_answer is not None:
        obj["answer"] = [{"id": a.id, "text": a.text} for a in case.reference_answer]
    if case.evidence_links is not None:
        obj["evidence"] = [
            {"answer_id": aid, "evidence_ids": sorted(sids, key=_id_sort_key)}
            for aid, sids in case.evidence_links.links
        ]
    if case.specialty is not None:
        obj["specialty"] = case.specialty
    if case.provenance is not None:
        obj["provenance"] = case.provenance
    return obj


def _id_sort_key(sid: str):
    return (0, int(sid)) if sid.isdigit() else (1, sid)


def parse_corpus(path: str | Path, format: str = "json") -> list[Case]:
    """Load and validate a corpus file. Order of cases is preserved."""
    if format != "json":
        raise CorpusError(f"unsupported corpus format '{format}'")
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CorpusError(f"corpus file not found: {path}")
    except json.JSONDecodeError as e:
        raise CorpusError(f"{path}: not valid JSON ({e})")
    if not isinstance(data, list):
        raise CorpusError(f"{path}: top level must be an array of cases")
    cases = [case_from_dict(obj, where=f"case #{i}") for i, obj in enumerate(data)]
    seen: set[str] = set()
    for c in cases:
        if c.case_id in seen:
            raise CorpusError(f"duplicate case_id '{c.case_id}' in corpus")
        seen.add(c.case_id)
    return cases


def save_corpus(cases: list[Case], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([case_to_dict(c) for c in cases], indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def compute_stats(cases: list[Case]) -> CorpusStats:
    """Arithmetic-mean statistics over a corpus.

    Word counts use whitespace tokenization; empty texts count as 0 words.
    Clinician-question and answer averages are taken over the cases that
    carry those fields.
    """
    if not cases:
        raise CorpusError("cannot compute statistics of an empty corpus")

    def mean(xs: list[float]) -> float:
        return sum(xs) / len(xs) if xs else 0.0

    sentence_counts = [len(c.sentences) for c in cases]
    sentence_lengths = [word_count(s.text) for c in cases for s in c.sentences]
    note_lengths = [sum(word_count(s.text) for s in c.sentences) for c in cases]
    pq_lengths = [word_count(c.patient_question) for c in cases]
    cq_lengths = [
        word_count(c.clinician_question) for c in cases if c.clinician_question is not None
    ]
    answered = [c for c in cases if c.reference_answer is not None]
    ans_counts = [len(c.reference_answer) for c in answered]
    ans_lengths = [word_count(a.text) for c in answered for a in c.reference_answer]

    return CorpusStats(
        case_count=len(cases),
        total_note_sentences=sum(sentence_counts),
        avg_note_sentences_per_case=mean(sentence_counts),
        avg_note_sentence_length_words=mean(sentence_lengths),
        avg_note_length_per_case_words=mean(note_lengths),
        avg_patient_question_length_words=mean(pq_lengths),
        avg_clinician_question_length_words=mean(cq_lengths),
        avg_answer_sentences_per_case=mean(ans_counts),
        avg_answer_sentence_length_words=mean(ans_lengths),
    )
