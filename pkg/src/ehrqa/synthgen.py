"""Synthetic case pipeline: generate labeled variations from seed cases,
validate them against the structural quality gate, and run targeted LLM
repairs until a case passes or the repair budget runs out.

The gate is purely structural: sentence count 10-20, sentence length 10-500
characters, essential label ratio in [0.10, 0.40], supplementary ratio at
most 0.15, not-relevant ratio at least 0.45 (all bounds inclusive). No
factual-plausibility checking happens here.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

from . import prompts
from .backends import chat_request
from .corpus import Case, NoteSentence, case_to_dict
from .errors import CorpusError, EhrqaError
from .jsontools import extract_json_value

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QualityGate:
    min_sentences: int = 10
    max_sentences: int = 20
    min_sentence_chars: int = 10
    max_sentence_chars: int = 500
    essential_ratio_min: float = 0.10
    essential_ratio_max: float = 0.40
    supplementary_ratio_max: float = 0.15
    not_relevant_ratio_min: float = 0.45

    def __post_init__(self):
        if self.min_sentences > self.max_sentences:
            raise ValueError("min_sentences > max_sentences")
        if self.min_sentence_chars > self.max_sentence_chars:
            raise ValueError("min_sentence_chars > max_sentence_chars")
        for name in ("essential_ratio_min", "essential_ratio_max",
                     "supplementary_ratio_max", "not_relevant_ratio_min"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {value}")


@dataclass(frozen=True)
class Violation:
    rule_id: str
    observed: float
    bound: str


@dataclass
class QualityReport:
    case_id: str
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


@dataclass
class SynthBatch:
    seed_case_id: str
    generated: list[Case] = field(default_factory=list)
    per_case_reports: list[QualityReport] = field(default_factory=list)
    repair_attempts: list[int] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def accepted(self) -> list[Case]:
        return [
            case
            for case, report in zip(self.generated, self.per_case_reports)
            if report.passed
        ]

    def rejected(self) -> list[tuple[Case, QualityReport]]:
        return [
            (case, report)
            for case, report in zip(self.generated, self.per_case_reports)
            if not report.passed
        ]


def validate_case(case: Case, gate: QualityGate = QualityGate()) -> QualityReport:
    """Check every gate predicate; empty violations means the case passes."""
    violations: list[Violation] = []
    n = len(case.sentences)
    if not gate.min_sentences <= n <= gate.max_sentences:
        violations.append(
            Violation("sentence_count", n, f"{gate.min_sentences}..{gate.max_sentences}")
        )
    counts = {"essential": 0, "supplementary": 0, "not-relevant": 0}
    for s in case.sentences:
        if s.relevance is None:
            raise CorpusError(
                f"case '{case.case_id}': sentence '{s.id}' is unlabeled, cannot validate"
            )
        counts[s.relevance] += 1
        if not gate.min_sentence_chars <= len(s.text) <= gate.max_sentence_chars:
            violations.append(
                Violation(
                    f"sentence_chars[{s.id}]",
                    len(s.text),
                    f"{gate.min_sentence_chars}..{gate.max_sentence_chars}",
                )
            )
    r_ess = counts["essential"] / n
    r_sup = counts["supplementary"] / n
    r_nr = counts["not-relevant"] / n
    if not gate.essential_ratio_min <= r_ess <= gate.essential_ratio_max:
        violations.append(
            Violation(
                "essential_ratio", r_ess,
                f"{gate.essential_ratio_min:.2f}..{gate.essential_ratio_max:.2f}",
            )
        )
    if r_sup > gate.supplementary_ratio_max:
        violations.append(
            Violation("supplementary_ratio", r_sup, f"<= {gate.supplementary_ratio_max:.2f}")
        )
    if r_nr < gate.not_relevant_ratio_min:
        violations.append(
            Violation("not_relevant_ratio", r_nr, f">= {gate.not_relevant_ratio_min:.2f}")
        )
    return QualityReport(case_id=case.case_id, violations=violations)


def render_seed_block(seed: Case) -> str:
    """The seed case in the same JSON shape the generator must output."""
    obj = {
        "patient_question": seed.patient_question,
        "clinician_question": seed.clinician_question or "",
        "sentences": [{"id": s.id, "text": s.text} for s in seed.sentences],
        "relevance_labels": [
            {"sentence_id": s.id, "relevance": s.relevance} for s in seed.sentences
        ],
    }
    return f"EXAMPLE 1:\n{json.dumps(obj, indent=2, ensure_ascii=False)}"


def parse_synthetic_case(raw: str, case_id: str) -> Case:
    """Parse generator output (patient/clinician question, sentences,
    relevance_labels) into a fully labeled Case."""
    try:
        obj = extract_json_value(raw)
    except ValueError as e:
        raise CorpusError(f"synthetic case '{case_id}': {e}")
    if not isinstance(obj, dict):
        raise CorpusError(f"synthetic case '{case_id}': expected a JSON object")
    for key in ("patient_question", "sentences", "relevance_labels"):
        if key not in obj:
            raise CorpusError(f"synthetic case '{case_id}': missing field '{key}'")
    labels = {
        str(entry["sentence_id"]): entry["relevance"] for entry in obj["relevance_labels"]
    }
    sentences = []
    for s in obj["sentences"]:
        sid = str(s["id"])
        if sid not in labels:
            raise CorpusError(f"synthetic case '{case_id}': sentence '{sid}' has no label")
        sentences.append(NoteSentence(id=sid, text=str(s["text"]), relevance=labels[sid]))
    return Case(
        case_id=case_id,
        patient_question=str(obj["patient_question"]),
        clinician_question=obj.get("clinician_question") or None,
        sentences=sentences,
    )


def render_violations(violations: Sequence[Violation]) -> str:
    lines = []
    for v in violations:
        observed = f"{v.observed:.3f}" if isinstance(v.observed, float) else str(v.observed)
        lines.append(f"- {v.rule_id}: observed {observed}, allowed {v.bound}")
    return "\n".join(lines)


def render_repair_prompt(case: Case, report: QualityReport, gate: QualityGate) -> str:
    return prompts.fill(
        prompts.get_template("synthetic_repair"),
        {
            "violations_block": render_violations(report.violations),
            "min_sentences": str(gate.min_sentences),
            "max_sentences": str(gate.max_sentences),
            "min_chars": str(gate.min_sentence_chars),
            "max_chars": str(gate.max_sentence_chars),
            "ess_min": f"{gate.essential_ratio_min:.2f}",
            "ess_max": f"{gate.essential_ratio_max:.2f}",
            "sup_max": f"{gate.supplementary_ratio_max:.2f}",
            "nr_min": f"{gate.not_relevant_ratio_min:.2f}",
            "case_json": json.dumps(_repair_view(case), indent=2, ensure_ascii=False),
        },
    )


def _repair_view(case: Case) -> dict:
    return {
        "patient_question": case.patient_question,
        "clinician_question": case.clinician_question or "",
        "sentences": [{"id": s.id, "text": s.text} for s in case.sentences],
        "relevance_labels": [
            {"sentence_id": s.id, "relevance": s.relevance} for s in case.sentences
        ],
    }


def repair_case(
    case: Case,
    report: QualityReport,
    backend,
    gate: QualityGate = QualityGate(),
    max_repairs: int = 3,
) -> tuple[Case, QualityReport, int]:
    """Targeted repair loop: prompt with the violated rules, re-validate,
    stop at pass or after max_repairs attempts. Returns the final case,
    report, and attempt count."""
    if report.passed:
        return case, report, 0
    attempts = 0
    while attempts < max_repairs and not report.passed:
        attempts += 1
        prompt = render_repair_prompt(case, report, gate)
        try:
            raw = backend.chat(chat_request(prompt))
            case = parse_synthetic_case(raw, case.case_id)
            report = validate_case(case, gate)
        except EhrqaError as e:
            log.warning("repair attempt %d for case %s failed: %s", attempts, case.case_id, e)
            # keep the previous case/report and spend the attempt
    return case, report, attempts


def generate_synthetic(
    seed: Case,
    n: int,
    backend,
    gate: QualityGate = QualityGate(),
    max_repairs: int = 3,
) -> SynthBatch:
    """Generate up to n labeled variations of one seed case and push each
    through the validate/repair loop. Parse failures are recorded in
    ``errors`` and do not abort the batch."""
    if n < 1:
        raise ValueError(f"variations per seed must be >= 1, got {n}")
    if not seed.is_labeled():
        raise CorpusError(f"seed case '{seed.case_id}' is not fully labeled")
    template = prompts.get_template("synthetic_case")
    prompt = prompts.fill(template, {"examples_block": render_seed_block(seed)})

    batch = SynthBatch(seed_case_id=seed.case_id)
    for i in range(n):
        case_id = f"{seed.case_id}-synth-{i + 1:02d}"
        try:
            # The variation index rides the request seed so distinct
            # variations get distinct cache entries and server samples.
            raw = backend.chat(chat_request(prompt, seed=i))
            case = parse_synthetic_case(raw, case_id)
        except EhrqaError as e:
            batch.errors.append(f"{case_id}: {e}")
            continue
        report = validate_case(case, gate)
        attempts = 0
        if not report.passed:
            case, report, attempts = repair_case(
                case, report, backend, gate=gate, max_repairs=max_repairs
            )
        provenance = {"seed_case_id": seed.case_id, "repair_attempts": attempts}
        case = Case(
            case_id=case.case_id,
            patient_question=case.patient_question,
            clinician_question=case.clinician_question,
            sentences=case.sentences,
            provenance=provenance,
        )
        batch.generated.append(case)
        batch.per_case_reports.append(report)
        batch.repair_attempts.append(attempts)
    return batch


def synthesize_corpus(
    seeds: Sequence[Case],
    n_per_seed: int,
    backend,
    gate: QualityGate = QualityGate(),
    max_repairs: int = 3,
) -> tuple[list[Case], list[SynthBatch]]:
    """Run the full pipeline over every seed; returns (accepted cases, batches)."""
    accepted: list[Case] = []
    batches: list[SynthBatch] = []
    for seed in seeds:
        batch = generate_synthetic(seed, n_per_seed, backend, gate=gate, max_repairs=max_repairs)
        batches.append(batch)
        accepted.extend(batch.accepted())
    return accepted, batches


def audit_records(batches: Sequence[SynthBatch]) -> list[dict]:
    """JSONL-ready audit rows for rejected cases and generation errors."""
    rows: list[dict] = []
    for batch in batches:
        for case, report in batch.rejected():
            rows.append(
                {
                    "seed_case_id": batch.seed_case_id,
                    "case_id": case.case_id,
                    "status": "rejected",
                    "violations": [
                        {"rule_id": v.rule_id, "observed": v.observed, "bound": v.bound}
                        for v in report.violations
                    ],
                    "case": case_to_dict(case),
                }
            )
        for err in batch.errors:
            rows.append(
                {"seed_case_id": batch.seed_case_id, "status": "generation_error", "error": err}
            )
    return rows
