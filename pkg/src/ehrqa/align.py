"""Evidence alignment: cite each answer sentence to the note sentences that
support it.

Four strategies:

* threshold: link (answer sentence, note sentence) when the cosine of
  their role-tagged embeddings exceeds t (answer side encoded as query,
  note side as document).
* listwise one-step: one prompt carrying the questions, the numbered note,
  and the numbered answer, with one worked example, parsed as strict JSON.
* listwise two-step: same first call; if its output fails to parse, a
  second reformatting call converts it to strict JSON.
* pairwise: one YES/NO chat call per (answer sentence, note sentence)
  pair; unparseable verdicts count as NO and are logged.

All strategies produce an AlignmentMap covering exactly the answer's
sentence ids and are checked by the same validator.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from . import prompts
from .answer import GeneratedAnswer, render_note_block
from .backends import chat_request, cosine
from .corpus import AlignmentMap, Case
from .errors import AlignmentParseError, ConfigError
from .jsontools import extract_json_value

log = logging.getLogger(__name__)

ALIGN_STRATEGIES = ("threshold", "listwise_two_step", "pairwise_zero_shot", "listwise_one_shot")


@dataclass
class AlignStrategy:
    kind: str
    t: float = 0.0  # threshold strategy only
    exemplar: Optional[Case] = None  # 1-shot example for the listwise prompts

    def __post_init__(self):
        if self.kind not in ALIGN_STRATEGIES:
            raise ConfigError(f"unknown alignment strategy '{self.kind}'")
        if self.kind == "threshold" and not math.isfinite(self.t):
            raise ConfigError("threshold strategy needs a finite t")


def validate_alignment(amap: AlignmentMap, case: Case, answer: GeneratedAnswer) -> None:
    """Reject maps that miss/duplicate answer ids or cite out-of-case sentences."""
    expected = [s.id for s in answer.sentences]
    got = amap.answer_ids()
    if got != expected:
        raise AlignmentParseError(
            f"case '{case.case_id}': alignment covers answer ids {got}, expected {expected}"
        )
    valid = set(case.sentence_ids)
    for aid, sids in amap.links:
        unknown = sids - valid
        if unknown:
            raise AlignmentParseError(
                f"case '{case.case_id}': alignment cites unknown sentence id(s) "
                f"{sorted(unknown)}"
            )


def align_threshold(answer: GeneratedAnswer, case: Case, t: float, backend) -> AlignmentMap:
    """Embedding-similarity alignment; raising t never adds a link."""
    if not answer.sentences:
        return AlignmentMap(case_id=case.case_id, links=[])
    answer_vecs = backend.embed([s.text for s in answer.sentences], role="query")
    note_vecs = backend.embed([s.text for s in case.sentences], role="document")
    links = []
    for a_sent, a_vec in zip(answer.sentences, answer_vecs):
        ids = {
            n_sent.id
            for n_sent, n_vec in zip(case.sentences, note_vecs)
            if cosine(a_vec, n_vec) > t
        }
        links.append((a_sent.id, ids))
    amap = AlignmentMap(case_id=case.case_id, links=links)
    validate_alignment(amap, case, answer)
    return amap


def render_answer_block(answer: GeneratedAnswer) -> str:
    return "\n".join(f"{s.id}. {s.text}" for s in answer.sentences)


def render_exemplar(case: Case) -> str:
    """A worked example: numbered note + numbered answer + the expected JSON."""
    if case.reference_answer is None or case.evidence_links is None:
        raise ConfigError(
            f"exemplar case '{case.case_id}' needs a reference answer and evidence links"
        )
    answer_block = "\n".join(f"{a.id}. {a.text}" for a in case.reference_answer)
    expected = [
        {
            "case_id": case.case_id,
            "prediction": [
                {"answer_id": aid, "evidence_id": sorted(sids, key=_id_key)}
                for aid, sids in case.evidence_links.links
            ],
        }
    ]
    return (
        f"Clinical note excerpt:\n{render_note_block(case)}\n\n"
        f"Answer sentences:\n{answer_block}\n\n"
        f"Output:\n{json.dumps(expected, indent=2)}"
    )


def _id_key(sid: str):
    return (0, int(sid)) if sid.isdigit() else (1, sid)


def render_listwise_prompts(
    answer: GeneratedAnswer,
    case: Case,
    q: str,
    q_clin: Optional[str],
    exemplar: Optional[Case],
) -> tuple[str, str]:
    template = prompts.get_template("evidence_alignment")
    example = render_exemplar(exemplar) if exemplar is not None else "(none)"
    system = prompts.fill(template, {"example": example})
    parts = [f"Case ID: {case.case_id}", f"Patient question:\n{q}"]
    if q_clin:
        parts.append(f"Clinician question:\n{q_clin}")
    parts.append(f"Clinical note excerpt:\n{render_note_block(case)}")
    parts.append(f"Answer sentences:\n{render_answer_block(answer)}")
    return system, "\n\n".join(parts)


def align_listwise(
    answer: GeneratedAnswer,
    case: Case,
    q: str,
    q_clin: Optional[str],
    variant: str,
    backend,
    exemplar: Optional[Case] = None,
) -> AlignmentMap:
    """List-wise alignment; the two_step variant repairs unparseable output
    with one reformatting call."""
    if variant not in ("one_step", "two_step"):
        raise ConfigError(f"unknown listwise variant '{variant}'")
    system, user = render_listwise_prompts(answer, case, q, q_clin, exemplar)
    raw = backend.chat(chat_request(user, system=system))
    try:
        amap = parse_alignment_json(raw, case, answer)
    except AlignmentParseError:
        if variant != "two_step":
            raise
        reformat = prompts.fill(
            prompts.get_template("alignment_reformat"),
            {
                "case_id": case.case_id,
                "answer_ids": ", ".join(s.id for s in answer.sentences),
                "note_ids": ", ".join(case.sentence_ids),
                "raw_output": raw,
            },
        )
        raw = backend.chat(chat_request(reformat))
        amap = parse_alignment_json(raw, case, answer)
    validate_alignment(amap, case, answer)
    return amap


def align_pairwise(answer: GeneratedAnswer, case: Case, backend) -> AlignmentMap:
    """One binary chat decision per (answer sentence, note sentence) pair."""
    template = prompts.get_template("alignment_pairwise")
    links = []
    for a_sent in answer.sentences:
        ids = set()
        for n_sent in case.sentences:
            prompt = prompts.fill(
                template,
                {"answer_sentence": a_sent.text, "note_sentence": n_sent.text},
            )
            verdict = backend.chat(chat_request(prompt))
            decision = parse_verdict(verdict)
            if decision is None:
                log.warning(
                    "case %s: unparseable verdict for pair (%s, %s): %r; counting as NO",
                    case.case_id, a_sent.id, n_sent.id, verdict[:80],
                )
                decision = False
            if decision:
                ids.add(n_sent.id)
        links.append((a_sent.id, ids))
    amap = AlignmentMap(case_id=case.case_id, links=links)
    validate_alignment(amap, case, answer)
    return amap


def parse_verdict(text: str) -> Optional[bool]:
    """Leading YES/NO token, case-insensitive; None when neither."""
    token = text.strip().split()[0].strip(".,:;!") if text.strip() else ""
    if token.upper() == "YES":
        return True
    if token.upper() == "NO":
        return False
    return None


def parse_alignment_json(text: str, case: Case, answer: GeneratedAnswer) -> AlignmentMap:
    """Tolerantly parse model output into an AlignmentMap.

    Accepts the submission array shape, a bare {case_id, prediction} object,
    or a bare list of {answer_id, evidence_id} links. Integer ids are
    coerced to strings; answer ids missing from the output get empty
    evidence sets; evidence ids outside the case are an error.
    """
    try:
        value = extract_json_value(text)
    except ValueError as e:
        raise AlignmentParseError(f"case '{case.case_id}': {e}", raw_output=text)

    prediction = _find_prediction(value, case.case_id)
    if prediction is None:
        raise AlignmentParseError(
            f"case '{case.case_id}': JSON holds no prediction list", raw_output=text
        )

    by_answer: dict[str, set[str]] = {}
    for entry in prediction:
        if not isinstance(entry, dict) or "answer_id" not in entry:
            raise AlignmentParseError(
                f"case '{case.case_id}': malformed prediction entry {entry!r}",
                raw_output=text,
            )
        aid = str(entry["answer_id"])
        raw_ids = entry.get("evidence_id", entry.get("evidence_ids", []))
        if not isinstance(raw_ids, list):
            raw_ids = [raw_ids]
        by_answer.setdefault(aid, set()).update(str(s) for s in raw_ids)

    valid = set(case.sentence_ids)
    answer_ids = [s.id for s in answer.sentences]
    for aid, sids in by_answer.items():
        unknown = sids - valid
        if unknown:
            raise AlignmentParseError(
                f"case '{case.case_id}': alignment cites unknown sentence id(s) "
                f"{sorted(unknown)}",
                raw_output=text,
            )
        if aid not in answer_ids:
            log.warning(
                "case %s: dropping alignment for unknown answer id '%s'", case.case_id, aid
            )
    links = [(aid, by_answer.get(aid, set())) for aid in answer_ids]
    return AlignmentMap(case_id=case.case_id, links=links)


def _find_prediction(value, case_id: str) -> Optional[list]:
    if isinstance(value, dict):
        pred = value.get("prediction")
        return pred if isinstance(pred, list) else None
    if isinstance(value, list):
        if all(isinstance(e, dict) and "prediction" in e for e in value) and value:
            for entry in value:
                if str(entry.get("case_id")) == case_id:
                    return entry["prediction"]
            return value[0]["prediction"]
        if all(isinstance(e, dict) and "answer_id" in e for e in value):
            return value
        if not value:
            return []
    return None


def maps_to_submission(maps: Sequence[AlignmentMap]) -> list[dict]:
    """The submission array shape: one {case_id, prediction} entry per case."""
    return [
        {
            "case_id": m.case_id,
            "prediction": [
                {"answer_id": aid, "evidence_id": sorted(sids, key=_id_key)}
                for aid, sids in m.links
            ],
        }
        for m in maps
    ]


def submission_to_maps(data: list[dict]) -> list[AlignmentMap]:
    maps = []
    for entry in data:
        links = [
            (str(p["answer_id"]), {str(s) for s in p.get("evidence_id", [])})
            for p in entry["prediction"]
        ]
        maps.append(AlignmentMap(case_id=str(entry["case_id"]), links=links))
    return maps


def alignment_units(maps: Sequence[AlignmentMap]) -> set[tuple[str, str, str]]:
    """Pooled (case_id, answer_id, sentence_id) units for micro scoring."""
    return {(m.case_id, aid, sid) for m in maps for aid, sids in m.links for sid in sids}
