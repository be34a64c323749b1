"""Evaluation metrics: pooled micro P/R/F1 and lexical generation scores.

Lexical metric conventions (documented because every reimplementation
differs somewhere):

* bleu: whitespace tokens, case-sensitive, n-grams up to 4 with clipped
  (multi-reference max) counts, uniform weights over the orders the
  candidate is long enough to have, brevity penalty against the closest
  reference length (ties to the shorter). Zero unigram overlap scores 0;
  a zero count at order n >= 2 is smoothed to 1 / (2^k * total_n) where k
  counts the zero orders seen so far.
* rouge_lsum: both sides sentence-split, tokens are [a-z0-9]+ runs of the
  lowercased text. Per reference sentence, the union of canonical-LCS token
  positions against all candidate sentences is counted; the summed hits are
  divided by total reference tokens (recall) and total candidate tokens
  (precision, clipped at 1), combined as F1.
* sari: lowercased whitespace tokens, n-grams 1..4. Keep and add are
  F1-scored, delete is precision-only, empty-set components default to 1,
  final score is the mean of the three components averaged over orders.

All scores live in [0, 1]; reports multiply by 100.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

# Named slots for model-based scores computed outside this package; report
# assembly accepts values for them but nothing here populates them.
EXTERNAL_SLOTS = ("bertscore", "alignscore", "medcon")


@dataclass(frozen=True)
class MicroScores:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def micro_prf(predicted: set, gold: set) -> MicroScores:
    """Pooled micro precision/recall/F1 over hashable prediction units.

    Units are whatever the caller pools: (case_id, sentence_id) for evidence
    selection, (case_id, answer_id, sentence_id) for citation alignment.
    Zero denominators score 0.
    """
    tp = len(predicted & gold)
    fp = len(predicted - gold)
    fn = len(gold - predicted)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MicroScores(tp, fp, fn, precision, recall, f1)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, references: Sequence[str], max_order: int = 4) -> float:
    if not references:
        raise ValueError("bleu needs at least one reference")
    cand = candidate.split()
    refs = [r.split() for r in references]
    if not cand:
        return 0.0

    log_sum = 0.0
    orders = 0
    smooth = 1.0
    for n in range(1, max_order + 1):
        cand_counts = _ngram_counts(cand, n)
        total = sum(cand_counts.values())
        if total == 0:
            continue
        ref_max: Counter = Counter()
        for ref in refs:
            for gram, count in _ngram_counts(ref, n).items():
                ref_max[gram] = max(ref_max[gram], count)
        matched = sum(min(count, ref_max[gram]) for gram, count in cand_counts.items())
        if matched == 0:
            if n == 1:
                return 0.0
            smooth *= 2.0
            precision = 1.0 / (smooth * total)
        else:
            precision = matched / total
        log_sum += math.log(precision)
        orders += 1
    if orders == 0:
        return 0.0

    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / orders)


def _rouge_tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def _lcs_reference_indices(ref: Sequence[str], cand: Sequence[str]) -> set[int]:
    """Reference-token indices of the canonical LCS (backtrace prefers the
    reference side on ties)."""
    m, n = len(ref), len(cand)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        row, prev = dp[i], dp[i - 1]
        for j in range(1, n + 1):
            if ref[i - 1] == cand[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = prev[j] if prev[j] >= row[j - 1] else row[j - 1]
    out: set[int] = set()
    i, j = m, n
    while i > 0 and j > 0:
        if ref[i - 1] == cand[j - 1]:
            out.add(i - 1)
            i -= 1
            j -= 1
        elif dp[i - 1][j] >= dp[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return out


def rouge_lsum(candidate: str, reference: str) -> float:
    # Imported here: answer owns the deterministic sentence segmenter.
    from .answer import split_text

    cand_sents = [_rouge_tokens(s) for s in split_text(candidate)]
    ref_sents = [_rouge_tokens(s) for s in split_text(reference)]
    cand_total = sum(len(s) for s in cand_sents)
    ref_total = sum(len(s) for s in ref_sents)
    if cand_total == 0 or ref_total == 0:
        return 0.0
    hits = 0
    for ref_sent in ref_sents:
        union: set[int] = set()
        for cand_sent in cand_sents:
            union |= _lcs_reference_indices(ref_sent, cand_sent)
        hits += len(union)
    precision = min(1.0, hits / cand_total)
    recall = hits / ref_total
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _sari_tokens(text: str) -> list[str]:
    return text.lower().split()


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _sari_order(
    src: Counter, cand: Counter, refs: list[Counter], numref: int
) -> tuple[float, float, float]:
    """(keep F1, delete precision, add F1) for one n-gram order."""
    ref_all: Counter = Counter()
    for rc in refs:
        ref_all.update(rc)
    src_rep = Counter({g: c * numref for g, c in src.items()})
    cand_rep = Counter({g: c * numref for g, c in cand.items()})

    keep = src_rep & cand_rep
    keep_good = keep & ref_all
    keep_all = src_rep & ref_all
    keep_p = sum(keep_good[g] / keep[g] for g in keep) / len(keep) if keep else 1.0
    keep_r = (
        sum(keep_good.values()) / sum(keep_all.values()) if sum(keep_all.values()) else 1.0
    )

    dele = src_rep - cand_rep
    dele_good = dele - ref_all
    dele_p = sum(dele_good[g] / dele[g] for g in dele) / len(dele) if dele else 1.0

    add = set(cand) - set(src)
    add_good = add & set(ref_all)
    add_all = set(ref_all) - set(src)
    add_p = len(add_good) / len(add) if add else 1.0
    add_r = len(add_good) / len(add_all) if add_all else 1.0

    return _f1(keep_p, keep_r), dele_p, _f1(add_p, add_r)


def sari(source: str, candidate: str, references: Sequence[str], max_order: int = 4) -> float:
    if not references:
        raise ValueError("sari needs at least one reference")
    src_tokens = _sari_tokens(source)
    cand_tokens = _sari_tokens(candidate)
    ref_tokens = [_sari_tokens(r) for r in references]
    numref = len(references)

    keep_scores, del_scores, add_scores = [], [], []
    for n in range(1, max_order + 1):
        keep, dele, add = _sari_order(
            _ngram_counts(src_tokens, n),
            _ngram_counts(cand_tokens, n),
            [_ngram_counts(r, n) for r in ref_tokens],
            numref,
        )
        keep_scores.append(keep)
        del_scores.append(dele)
        add_scores.append(add)
    mean = lambda xs: sum(xs) / len(xs)
    return (mean(keep_scores) + mean(del_scores) + mean(add_scores)) / 3.0


@dataclass
class GenScores:
    """Lexical scores plus externally supplied model-based slots, all in [0, 1]."""

    bleu: float
    rouge_lsum: float
    sari: float
    external: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in {"bleu": self.bleu, "rouge_lsum": self.rouge_lsum,
                            "sari": self.sari, **self.external}.items():
            if not 0.0 <= value <= 1.0 + 1e-9:
                raise ValueError(f"score '{name}' out of [0, 1]: {value}")

    def available(self) -> dict[str, float]:
        return {"bleu": self.bleu, "rouge_lsum": self.rouge_lsum, "sari": self.sari,
                **self.external}

    def overall(self) -> float:
        """Arithmetic mean of every populated score; missing slots are excluded."""
        scores = self.available()
        return sum(scores.values()) / len(scores)


def gen_scores(
    source: str,
    candidate: str,
    references: Sequence[str],
    external: Optional[dict[str, float]] = None,
) -> GenScores:
    return GenScores(
        bleu=bleu(candidate, references),
        rouge_lsum=rouge_lsum(candidate, references[0]),
        sari=sari(source, candidate, references),
        external=dict(external or {}),
    )


def mean_gen_scores(per_case: Sequence[GenScores], external: Optional[dict[str, float]] = None) -> GenScores:
    """Macro-average per-case scores into one report row."""
    if not per_case:
        raise ValueError("no per-case scores to average")
    mean = lambda xs: sum(xs) / len(xs)
    return GenScores(
        bleu=mean([g.bleu for g in per_case]),
        rouge_lsum=mean([g.rouge_lsum for g in per_case]),
        sari=mean([g.sari for g in per_case]),
        external=dict(external or {}),
    )


def format_table(rows: Iterable[tuple[str, str]], title: str = "") -> str:
    """Two-column aligned text table for terminal reports."""
    rows = list(rows)
    width = max((len(name) for name, _ in rows), default=0)
    lines = [title] if title else []
    lines += [f"{name.ljust(width)}  {value}" for name, value in rows]
    return "\n".join(lines)
