"""Training data: corpus JSON loading, (query, sentence) pair extraction,
and real/synthetic balancing.

The corpus format is the QA pipeline's documented JSON schema (an array of
case objects with string ids and per-sentence relevance labels); this
package reads the files directly rather than importing the pipeline.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

LABELS3 = ("essential", "supplementary", "not-relevant")
RELEVANT = "relevant"
NOT_RELEVANT = "not-relevant"


@dataclass(frozen=True)
class PairExample:
    query: str
    sentence: str
    label3: str
    label2: str  # relevant iff label3 != not-relevant
    origin: str  # real | synthetic
    case_id: str


def make_example(query: str, sentence: str, label3: str, origin: str, case_id: str) -> PairExample:
    if label3 not in LABELS3:
        raise ValueError(f"case '{case_id}': unknown relevance label '{label3}'")
    label2 = NOT_RELEVANT if label3 == "not-relevant" else RELEVANT
    return PairExample(query=query, sentence=sentence, label3=label3, label2=label2,
                       origin=origin, case_id=case_id)


def load_corpus(path: str | Path) -> list[dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValueError(f"{path}: top level must be an array of cases")
    return data


def pairs_from_case(case: dict, origin: str) -> list[PairExample]:
    """One example per labeled note sentence; the query is the clinician
    question, falling back to the patient question."""
    case_id = str(case["case_id"])
    query = case.get("clinician_question") or case["patient_question"]
    examples = []
    for sentence in case["sentences"]:
        label = sentence.get("relevance")
        if label is None:
            raise ValueError(f"case '{case_id}': sentence '{sentence.get('id')}' is unlabeled")
        examples.append(make_example(query, str(sentence["text"]), label, origin, case_id))
    return examples


def pairs_from_corpus(cases: Sequence[dict], origin: str) -> list[PairExample]:
    return [ex for case in cases for ex in pairs_from_case(case, origin)]


def _resample(pool: list[PairExample], target: int, rng: random.Random) -> list[PairExample]:
    if target <= len(pool):
        return rng.sample(pool, target)  # downsample, without replacement
    return rng.choices(pool, k=target)  # upsample, with replacement


def build_training_set(
    real_cases: Sequence[dict],
    synthetic_cases: Optional[Sequence[dict]] = None,
    balance: float = 1.0,
    seed: int = 0,
) -> list[PairExample]:
    """Pair examples with the real:synthetic ratio resampled to ``balance``.

    With synthetic data present, both sides are resampled (real typically up,
    synthetic down) so that |real| : |synthetic| == balance while the
    combined size stays close to the original total; at balance 1.0 the two
    counts are exactly equal. Without synthetic data the real pairs are
    returned unresampled. Deterministic for a fixed seed.
    """
    if balance <= 0:
        raise ValueError(f"balance must be positive, got {balance}")
    real = pairs_from_corpus(real_cases, "real")
    if not real:
        raise ValueError("no labeled real examples")
    if not synthetic_cases:
        return real
    synthetic = pairs_from_corpus(synthetic_cases, "synthetic")
    if not synthetic:
        return real

    rng = random.Random(seed)
    total = len(real) + len(synthetic)
    if balance == 1.0:
        real_target = synth_target = total // 2
    else:
        real_target = int(total * balance / (1.0 + balance))
        synth_target = int(real_target / balance)
    combined = (_resample(real, real_target, rng)
                + _resample(synthetic, synth_target, rng))
    rng.shuffle(combined)
    return combined
