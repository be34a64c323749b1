"""Evidence identification: score note sentences against the clinician
question, pick a decision threshold by strict micro F1 on labeled data, and
emit the evidence set.

Selection is strictly greater-than: a sentence whose score equals the
threshold is excluded, so a threshold below every score reproduces the
all-relevant baseline. Strict scoring counts only "essential" sentences as
gold-positive; "supplementary" is a negative for these scores.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .backends import cosine
from .corpus import Case
from .errors import ConfigError, CorpusError
from .metrics import micro_prf

STRICT_POSITIVE_LABELS = frozenset({"essential"})

SCORER_IDS = ("embedding-cosine", "pair-encoder", "classifier")


@dataclass(frozen=True)
class ScoredSentence:
    sentence_id: str
    score: float
    scorer_id: str


@dataclass(frozen=True)
class EvidenceSet:
    case_id: str
    sentence_ids: frozenset[str]


class EmbeddingScorer:
    """Cosine of role-tagged embeddings: question as query, sentences as documents."""

    scorer_id = "embedding-cosine"

    def __init__(self, backend):
        self.backend = backend

    def score(self, question: str, texts: Sequence[str]) -> list[float]:
        query = self.backend.embed([question], role="query")[0]
        docs = self.backend.embed(list(texts), role="document")
        return [cosine(query, d) for d in docs]


class PairScorer:
    """Direct pair scores from a cross-encoder style backend."""

    def __init__(self, backend, scorer_id: str = "pair-encoder"):
        self.backend = backend
        self.scorer_id = scorer_id

    def score(self, question: str, texts: Sequence[str]) -> list[float]:
        return self.backend.pair_score_batch(question, list(texts))


def classifier_scorer(backend) -> PairScorer:
    """Scores from the trained sentence classifier's binary-head probability."""
    return PairScorer(backend, scorer_id="classifier")


def make_scorer(name: str, backend):
    if name == "embedding-cosine":
        return EmbeddingScorer(backend)
    if name == "pair-encoder":
        return PairScorer(backend)
    if name == "classifier":
        return classifier_scorer(backend)
    raise ConfigError(f"unknown scorer '{name}' (expected one of {SCORER_IDS})")


def score_case(case: Case, question: str, scorer) -> list[ScoredSentence]:
    """One score per note sentence, in note order."""
    if not question:
        raise CorpusError(f"case '{case.case_id}': empty question for scoring")
    scores = scorer.score(question, [s.text for s in case.sentences])
    if len(scores) != len(case.sentences):
        raise CorpusError(
            f"case '{case.case_id}': scorer returned {len(scores)} scores "
            f"for {len(case.sentences)} sentences"
        )
    for s, value in zip(case.sentences, scores):
        if not math.isfinite(value):
            raise CorpusError(f"case '{case.case_id}': non-finite score for sentence '{s.id}'")
    return [
        ScoredSentence(sentence_id=s.id, score=float(v), scorer_id=scorer.scorer_id)
        for s, v in zip(case.sentences, scores)
    ]


def select_evidence(scored: Sequence[ScoredSentence], t: float, case_id: str = "") -> EvidenceSet:
    """Sentences scoring strictly above t. t = -inf selects everything."""
    return EvidenceSet(
        case_id=case_id,
        sentence_ids=frozenset(s.sentence_id for s in scored if s.score > t),
    )


def gold_units(cases: Sequence[Case]) -> set[tuple[str, str]]:
    """Pooled (case_id, sentence_id) units labeled essential."""
    units = set()
    for case in cases:
        for s in case.sentences:
            if s.relevance is None:
                raise CorpusError(f"case '{case.case_id}': sentence '{s.id}' is unlabeled")
            if s.relevance in STRICT_POSITIVE_LABELS:
                units.add((case.case_id, s.id))
    return units


@dataclass(frozen=True)
class ThresholdPoint:
    t: float
    precision: float
    recall: float
    f1: float


@dataclass
class ThresholdCurve:
    """Strict micro P/R/F1 swept over a threshold grid, plus the operating point."""

    grid: list[float]
    points: list[ThresholdPoint]
    best_t: float
    baseline_f1: float  # F1 of the all-relevant rule on the same cases

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "precision", "recall", "f1"])
            for p in self.points:
                writer.writerow([f"{p.t:.10g}", f"{p.precision:.6f}",
                                 f"{p.recall:.6f}", f"{p.f1:.6f}"])


def default_grid(scores: Sequence[float], n: int = 101) -> list[float]:
    """n evenly spaced thresholds spanning [min score, max score]."""
    lo, hi = min(scores), max(scores)
    if n < 2 or lo == hi:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def calibrate_threshold(
    labeled_cases: Sequence[Case],
    scorer,
    grid: Optional[Sequence[float]] = None,
    grid_points: int = 101,
    questions: Optional[dict[str, str]] = None,
) -> ThresholdCurve:
    """Sweep thresholds over pooled strict micro scores and pick the best F1.

    Ties break toward the smaller threshold (favoring recall). ``questions``
    overrides the scoring question per case; the default is the case's
    clinician question, falling back to the patient question.
    """
    if not labeled_cases:
        raise CorpusError("calibration needs at least one labeled case")
    gold = gold_units(labeled_cases)

    scored: dict[str, list[ScoredSentence]] = {}
    for case in labeled_cases:
        question = (questions or {}).get(case.case_id) or (
            case.clinician_question or case.patient_question
        )
        scored[case.case_id] = score_case(case, question, scorer)

    all_scores = [s.score for ss in scored.values() for s in ss]
    if grid is None:
        grid = default_grid(all_scores, grid_points)
    if not grid:
        raise ConfigError("threshold grid is empty")
    grid = sorted(set(float(t) for t in grid))

    all_units = {(cid, s.sentence_id) for cid, ss in scored.items() for s in ss}
    baseline = micro_prf(all_units, gold)

    points: list[ThresholdPoint] = []
    best_t = grid[0]
    best_f1 = -1.0
    for t in grid:
        predicted = {
            (cid, s.sentence_id) for cid, ss in scored.items() for s in ss if s.score > t
        }
        m = micro_prf(predicted, gold)
        points.append(ThresholdPoint(t=t, precision=m.precision, recall=m.recall, f1=m.f1))
        if m.f1 > best_f1:
            best_f1 = m.f1
            best_t = t
    return ThresholdCurve(grid=list(grid), points=points, best_t=best_t,
                          baseline_f1=baseline.f1)
