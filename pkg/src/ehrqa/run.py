"""Run orchestration: layered configuration, per-subtask runners, evaluation,
and reproducibility manifests.

Configuration layers, lowest to highest precedence: built-in defaults, the
JSON config file, environment (``EHRQA_ENDPOINT`` overrides the backend
base URL), then CLI flag overrides. A run owns its output directory; the
manifest written at the end records the config snapshot, backend call
counts, cache hit ratio, per-case timing, and output file digests.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import __version__, align as align_mod, answer as answer_mod
from .backends import CachedBackend, HttpBackend, MockBackend
from .corpus import Case, parse_corpus
from .errors import ConfigError, CorpusError, DependencyError
from .evidence import calibrate_threshold, make_scorer, score_case, select_evidence
from .interpret import InterpretStrategy, interpret, shots_from_cases
from .metrics import (
    GenScores,
    format_table,
    gen_scores,
    mean_gen_scores,
    micro_prf,
)

ENDPOINT_ENV_VAR = "EHRQA_ENDPOINT"

_DEFAULTS: dict[str, Any] = {
    "corpus": {},
    "backend": {"kind": "mock"},
    "interpret": {"kind": "few_shot", "k": 3},
    "evidence": {"scorer": "embedding-cosine", "threshold": "calibrate", "grid_points": 101},
    "answer": {"mode": "zero_shot_full"},
    "align": {"strategy": "threshold", "t": 0.5},
    "cache_dir": "cache",
    "out_dir": "out",
    "fan_out": 1,
    "seed": 0,
}


@dataclass
class RunConfig:
    corpus: dict[str, str]
    backend: dict[str, Any]
    interpret: dict[str, Any]
    evidence: dict[str, Any]
    answer: dict[str, Any]
    align: dict[str, Any]
    cache_dir: str
    out_dir: str
    fan_out: int = 1
    seed: int = 0

    def validate(self) -> None:
        if not self.corpus:
            raise ConfigError("config names no corpus files")
        for split, path in self.corpus.items():
            if not Path(path).exists():
                raise ConfigError(f"corpus file for split '{split}' not found: {path}")
        if self.fan_out < 1:
            raise ConfigError(f"fan_out must be >= 1, got {self.fan_out}")
        if self.backend.get("kind") not in ("mock", "http"):
            raise ConfigError(f"unknown backend kind '{self.backend.get('kind')}'")

    def snapshot(self) -> dict:
        return {
            "corpus": dict(self.corpus),
            "backend": copy.deepcopy(self.backend),
            "interpret": copy.deepcopy(self.interpret),
            "evidence": copy.deepcopy(self.evidence),
            "answer": copy.deepcopy(self.answer),
            "align": copy.deepcopy(self.align),
            "cache_dir": self.cache_dir,
            "out_dir": self.out_dir,
            "fan_out": self.fan_out,
            "seed": self.seed,
        }


def load_config(
    path: Optional[str | Path] = None,
    env: Optional[dict[str, str]] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> RunConfig:
    """Merge defaults < file < env < overrides into a validated RunConfig."""
    merged = copy.deepcopy(_DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        _deep_merge(merged, data)
    env = dict(os.environ if env is None else env)
    if env.get(ENDPOINT_ENV_VAR):
        merged["backend"]["base_url"] = env[ENDPOINT_ENV_VAR]
    if overrides:
        _deep_merge(merged, overrides)
    known = set(_DEFAULTS)
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config = RunConfig(**merged)
    config.validate()
    return config


def _deep_merge(base: dict, extra: dict) -> None:
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value


def make_backend(backend_cfg: dict[str, Any], cache_dir: str | Path) -> CachedBackend:
    kind = backend_cfg.get("kind", "mock")
    if kind == "mock":
        inner = MockBackend(
            chat_rules=[tuple(rule) for rule in backend_cfg.get("chat_rules", [])],
            default_response=backend_cfg.get("default_response"),
            query_prefix=backend_cfg.get("query_prefix", ""),
            document_prefix=backend_cfg.get("document_prefix", ""),
        )
    elif kind == "http":
        if "base_url" not in backend_cfg:
            raise ConfigError("http backend needs a base_url (or EHRQA_ENDPOINT)")
        inner = HttpBackend(
            base_url=backend_cfg["base_url"],
            model=backend_cfg.get("model", "default"),
            embed_model=backend_cfg.get("embed_model"),
            score_url=backend_cfg.get("score_url"),
            query_prefix=backend_cfg.get("query_prefix", ""),
            document_prefix=backend_cfg.get("document_prefix", ""),
        )
    else:
        raise ConfigError(f"unknown backend kind '{kind}'")
    return CachedBackend(inner, cache_dir)


def _map_cases(fn: Callable, items: Sequence, fan_out: int) -> list:
    """Apply fn to each item, optionally with bounded parallelism; order preserved."""
    if fan_out <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=fan_out) as pool:
        return list(pool.map(fn, items))


@dataclass
class RunManifest:
    config: dict
    version: str
    subtask: str
    split: str
    per_case_seconds: dict[str, float] = field(default_factory=dict)
    backend_calls: int = 0
    cache_hits: int = 0
    cache_hit_ratio: float = 0.0
    outputs: dict[str, str] = field(default_factory=dict)  # filename -> sha256
    extra: dict[str, Any] = field(default_factory=dict)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, name: str, manifest: RunManifest) -> Path:
    path = out_dir / name
    tmp = path.with_suffix(".tmp")
    payload = {
        "config": manifest.config,
        "version": manifest.version,
        "subtask": manifest.subtask,
        "split": manifest.split,
        "per_case_seconds": manifest.per_case_seconds,
        "backend_calls": manifest.backend_calls,
        "cache_hits": manifest.cache_hits,
        "cache_hit_ratio": manifest.cache_hit_ratio,
        "outputs": manifest.outputs,
        **({"extra": manifest.extra} if manifest.extra else {}),
    }
    tmp.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def _load_questions(path: str | Path) -> dict[str, str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return {str(row["case_id"]): row["text"] for row in data}
    except (KeyError, TypeError):
        raise CorpusError(f"{path}: expected an array of {{case_id, text}} objects")


def _question_for(case: Case, questions: Optional[dict[str, str]]) -> str:
    if questions is not None:
        if case.case_id not in questions:
            raise DependencyError(f"no interpreted question for case '{case.case_id}'")
        return questions[case.case_id]
    return case.clinician_question or case.patient_question


def _timed(fn: Callable, case_id: str, timings: dict[str, float]):
    start = time.perf_counter()
    result = fn()
    timings[case_id] = time.perf_counter() - start
    return result


# -- stage runners ----------------------------------------------------------

def stage_interpret(
    cases: Sequence[Case],
    dev_cases: Sequence[Case],
    cfg: dict[str, Any],
    backend,
    fan_out: int = 1,
) -> tuple[dict[str, str], dict[str, float]]:
    k = int(cfg.get("k", 3))
    strategy = InterpretStrategy(
        kind=cfg.get("kind", "few_shot"),
        k=k,
        shots=shots_from_cases(list(dev_cases), k),
        prompt_id=cfg.get("prompt_id", "question_rewrite"),
    )
    timings: dict[str, float] = {}

    def one(case: Case) -> tuple[str, str]:
        result = _timed(
            lambda: interpret(case.patient_question, strategy, backend), case.case_id, timings
        )
        return case.case_id, result.text

    return dict(_map_cases(one, list(cases), fan_out)), timings


def stage_evidence(
    cases: Sequence[Case],
    cfg: dict[str, Any],
    backend,
    questions: Optional[dict[str, str]] = None,
    fan_out: int = 1,
):
    """Returns ({case_id: sorted evidence ids}, curve or None, timings)."""
    scorer = make_scorer(cfg.get("scorer", "embedding-cosine"), backend)
    threshold = cfg.get("threshold", "calibrate")
    curve = None
    if threshold == "calibrate":
        curve = calibrate_threshold(
            list(cases), scorer, grid_points=int(cfg.get("grid_points", 101)),
            questions=questions,
        )
        threshold = curve.best_t
    threshold = float(threshold)

    timings: dict[str, float] = {}

    def one(case: Case) -> tuple[str, list[str]]:
        def work():
            scored = score_case(case, _question_for(case, questions), scorer)
            selected = select_evidence(scored, threshold, case_id=case.case_id)
            return sorted(selected.sentence_ids, key=_id_key)

        return case.case_id, _timed(work, case.case_id, timings)

    results = dict(_map_cases(one, list(cases), fan_out))
    return results, curve, threshold, timings


def _id_key(sid: str):
    return (0, int(sid)) if sid.isdigit() else (1, sid)


def stage_answer(
    cases: Sequence[Case],
    cfg: dict[str, Any],
    backend,
    questions: Optional[dict[str, str]] = None,
    fan_out: int = 1,
):
    mode = cfg.get("mode", "zero_shot_full")
    timings: dict[str, float] = {}

    def one(case: Case):
        q_clin = None
        if questions is not None:
            q_clin = questions.get(case.case_id)
        elif case.clinician_question:
            q_clin = case.clinician_question
        return _timed(
            lambda: answer_mod.generate_answer(case, q_clin, mode, backend),
            case.case_id,
            timings,
        )

    return _map_cases(one, list(cases), fan_out), timings


def stage_align(
    cases: Sequence[Case],
    answers: dict[str, answer_mod.GeneratedAnswer],
    cfg: dict[str, Any],
    backend,
    questions: Optional[dict[str, str]] = None,
    exemplar: Optional[Case] = None,
    fan_out: int = 1,
):
    strategy = cfg.get("strategy", "threshold")
    timings: dict[str, float] = {}

    def one(case: Case):
        if case.case_id not in answers:
            raise DependencyError(f"no generated answer for case '{case.case_id}'")
        ans = answers[case.case_id]
        q_clin = (questions or {}).get(case.case_id) or case.clinician_question

        def work():
            if strategy == "threshold":
                return align_mod.align_threshold(ans, case, float(cfg.get("t", 0.5)), backend)
            if strategy == "pairwise_zero_shot":
                return align_mod.align_pairwise(ans, case, backend)
            if strategy in ("listwise_one_shot", "listwise_two_step"):
                variant = "two_step" if strategy == "listwise_two_step" else "one_step"
                return align_mod.align_listwise(
                    ans, case, case.patient_question, q_clin, variant, backend,
                    exemplar=exemplar,
                )
            raise ConfigError(f"unknown alignment strategy '{strategy}'")

        return _timed(work, case.case_id, timings)

    return _map_cases(one, list(cases), fan_out), timings


# -- subtask entry points ---------------------------------------------------

def run_subtask(
    config: RunConfig,
    subtask: int,
    split: str = "dev",
    questions_path: Optional[str] = None,
    answers_path: Optional[str] = None,
) -> dict[str, Any]:
    """Run one subtask end to end: read corpus, call the backend, write the
    submission-format predictions and a manifest. Returns output paths."""
    if split not in config.corpus:
        raise ConfigError(f"config has no corpus for split '{split}'")
    cases = parse_corpus(config.corpus[split])
    dev_cases = parse_corpus(config.corpus.get("dev", config.corpus[split]))
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = make_backend(config.backend, config.cache_dir)

    questions = _load_questions(questions_path) if questions_path else None
    manifest = RunManifest(
        config=config.snapshot(), version=__version__, subtask=str(subtask), split=split
    )
    outputs: dict[str, Path] = {}

    if subtask == 1:
        predictions, timings = stage_interpret(
            cases, dev_cases, config.interpret, backend, config.fan_out
        )
        pred_path = out_dir / f"subtask1_{split}.json"
        _write_json(pred_path, [{"case_id": cid, "text": text}
                                for cid, text in predictions.items()])
        outputs["predictions"] = pred_path
    elif subtask == 2:
        results, curve, threshold, timings = stage_evidence(
            cases, config.evidence, backend, questions=questions, fan_out=config.fan_out
        )
        pred_path = out_dir / f"subtask2_{split}.json"
        _write_json(pred_path, [{"case_id": cid, "evidence_ids": ids}
                                for cid, ids in results.items()])
        outputs["predictions"] = pred_path
        manifest.extra["threshold"] = threshold
        if curve is not None:
            curve_path = out_dir / f"threshold_curve_{split}.csv"
            curve.to_csv(curve_path)
            outputs["threshold_curve"] = curve_path
            manifest.extra["baseline_f1"] = curve.baseline_f1
    elif subtask == 3:
        answers, timings = stage_answer(
            cases, config.answer, backend, questions=questions, fan_out=config.fan_out
        )
        pred_path = out_dir / f"subtask3_{split}.json"
        detail_path = out_dir / f"answers_{split}.json"
        _write_json(pred_path, [{"case_id": a.case_id, "text": a.text} for a in answers])
        _write_json(detail_path, [answer_mod.answer_to_dict(a) for a in answers])
        outputs["predictions"] = pred_path
        outputs["answers"] = detail_path
    elif subtask == 4:
        answers = _resolve_answers(cases, answers_path)
        exemplar = dev_cases[0] if dev_cases else None
        maps, timings = stage_align(
            cases, answers, config.align, backend,
            questions=questions, exemplar=exemplar, fan_out=config.fan_out,
        )
        pred_path = out_dir / f"subtask4_{split}.json"
        _write_json(pred_path, align_mod.maps_to_submission(maps))
        outputs["predictions"] = pred_path
    else:
        raise ConfigError(f"subtask must be 1..4, got {subtask}")

    manifest.per_case_seconds = timings
    manifest.backend_calls = backend.stats.misses
    manifest.cache_hits = backend.stats.hits
    manifest.cache_hit_ratio = backend.stats.hit_ratio
    manifest.outputs = {p.name: _digest(p) for p in outputs.values()}
    manifest_path = _write_manifest(out_dir, f"manifest_subtask{subtask}_{split}.json", manifest)

    return {"outputs": {k: str(v) for k, v in outputs.items()},
            "manifest": str(manifest_path)}


def _resolve_answers(
    cases: Sequence[Case], answers_path: Optional[str]
) -> dict[str, answer_mod.GeneratedAnswer]:
    """Generated answers from a detail file, else gold reference answers."""
    if answers_path:
        data = json.loads(Path(answers_path).read_text(encoding="utf-8"))
        answers = {}
        for row in data:
            if "answer" in row:
                parsed = answer_mod.answer_from_dict(row)
            elif "text" in row:  # submission shape; re-segment deterministically
                parsed = answer_mod.answer_from_dict(
                    {"case_id": row["case_id"], "answer": row["text"]}
                )
            else:
                raise CorpusError(f"{answers_path}: row without 'answer' or 'text'")
            answers[parsed.case_id] = parsed
        return answers
    answers = {}
    for case in cases:
        if case.reference_answer is None:
            raise DependencyError(
                f"case '{case.case_id}' has no gold answer; run subtask 3 first and pass "
                "its answers file"
            )
        text = " ".join(a.text for a in case.reference_answer)
        answers[case.case_id] = answer_mod.GeneratedAnswer(
            case_id=case.case_id,
            text=text,
            sentences=list(case.reference_answer),
            word_count=len(text.split()),
        )
    return answers


def run_pipeline(config: RunConfig, split: str = "dev") -> dict[str, Any]:
    """All four subtasks in sequence, feeding each stage's predictions to the
    next: interpreted questions drive evidence scoring and answer generation,
    and generated answers drive alignment."""
    if split not in config.corpus:
        raise ConfigError(f"config has no corpus for split '{split}'")
    cases = parse_corpus(config.corpus[split])
    dev_cases = parse_corpus(config.corpus.get("dev", config.corpus[split]))
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = make_backend(config.backend, config.cache_dir)

    timings: dict[str, dict[str, float]] = {}

    questions, t1 = stage_interpret(cases, dev_cases, config.interpret, backend, config.fan_out)
    timings["interpret"] = t1

    evidence_results, curve, threshold, t2 = stage_evidence(
        cases, config.evidence, backend, questions=questions, fan_out=config.fan_out
    )
    timings["evidence"] = t2

    answers_list, t3 = stage_answer(
        cases, config.answer, backend, questions=questions, fan_out=config.fan_out
    )
    answers = {a.case_id: a for a in answers_list}
    timings["answer"] = t3

    exemplar = dev_cases[0] if dev_cases else None
    maps, t4 = stage_align(
        cases, answers, config.align, backend,
        questions=questions, exemplar=exemplar, fan_out=config.fan_out,
    )
    timings["align"] = t4

    outputs = {
        "subtask1": out_dir / f"subtask1_{split}.json",
        "subtask2": out_dir / f"subtask2_{split}.json",
        "subtask3": out_dir / f"subtask3_{split}.json",
        "answers": out_dir / f"answers_{split}.json",
        "subtask4": out_dir / f"subtask4_{split}.json",
    }
    _write_json(outputs["subtask1"],
                [{"case_id": cid, "text": text} for cid, text in questions.items()])
    _write_json(outputs["subtask2"],
                [{"case_id": cid, "evidence_ids": ids} for cid, ids in evidence_results.items()])
    _write_json(outputs["subtask3"],
                [{"case_id": a.case_id, "text": a.text} for a in answers_list])
    _write_json(outputs["answers"], [answer_mod.answer_to_dict(a) for a in answers_list])
    _write_json(outputs["subtask4"], align_mod.maps_to_submission(maps))
    if curve is not None:
        curve_path = out_dir / f"threshold_curve_{split}.csv"
        curve.to_csv(curve_path)
        outputs["threshold_curve"] = curve_path

    manifest = RunManifest(
        config=config.snapshot(), version=__version__, subtask="pipeline", split=split
    )
    manifest.per_case_seconds = {
        f"{stage}:{cid}": secs for stage, ts in timings.items() for cid, secs in ts.items()
    }
    manifest.backend_calls = backend.stats.misses
    manifest.cache_hits = backend.stats.hits
    manifest.cache_hit_ratio = backend.stats.hit_ratio
    manifest.outputs = {p.name: _digest(p) for p in outputs.values()}
    manifest.extra["threshold"] = threshold
    manifest_path = _write_manifest(out_dir, f"manifest_pipeline_{split}.json", manifest)

    return {
        "outputs": {k: str(v) for k, v in outputs.items()},
        "manifest": str(manifest_path),
        "backend_calls": backend.stats.misses,
        "cache_hits": backend.stats.hits,
    }


# -- evaluation -------------------------------------------------------------

def evaluate_predictions(
    predictions_path: str | Path,
    gold_path: str | Path,
    subtask: int,
    external: Optional[dict[str, float]] = None,
) -> dict[str, Any]:
    """Score a predictions file against a labeled corpus.

    External model-based scores (bertscore, alignscore, medcon) are accepted
    on the 0-100 scale and join the overall mean; nothing here computes them.
    """
    cases = parse_corpus(gold_path)
    by_id = {c.case_id: c for c in cases}
    try:
        data = json.loads(Path(predictions_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CorpusError(f"{predictions_path}: not valid JSON ({e})")
    external_unit = {k: v / 100.0 for k, v in (external or {}).items()}

    if subtask in (1, 3):
        rows = _index_predictions(data, predictions_path, key="text")
        per_case: list[GenScores] = []
        for cid, text in rows.items():
            case = _gold_case(by_id, cid, predictions_path)
            if subtask == 1:
                if case.clinician_question is None:
                    raise CorpusError(f"case '{cid}': no gold clinician question to score against")
                source, reference = case.patient_question, case.clinician_question
            else:
                if case.reference_answer is None:
                    raise CorpusError(f"case '{cid}': no gold answer to score against")
                source = case.note_text()
                reference = " ".join(a.text for a in case.reference_answer)
            per_case.append(gen_scores(source, text, [reference]))
        agg = mean_gen_scores(per_case, external=external_unit)
        metrics = {name: round(value * 100, 2) for name, value in agg.available().items()}
        return {
            "subtask": subtask,
            "cases": len(per_case),
            "metrics": metrics,
            "overall": round(agg.overall() * 100, 2),
        }

    if subtask == 2:
        rows = _index_predictions(data, predictions_path, key="evidence_ids")
        predicted = set()
        gold = set()
        for case in cases:
            for s in case.sentences:
                if s.relevance is None:
                    raise CorpusError(f"case '{case.case_id}': unlabeled sentence '{s.id}'")
                if s.relevance == "essential":
                    gold.add((case.case_id, s.id))
        for cid, ids in rows.items():
            case = _gold_case(by_id, cid, predictions_path)
            valid = set(case.sentence_ids)
            for sid in ids:
                if str(sid) not in valid:
                    raise CorpusError(f"case '{cid}': predicted unknown sentence id '{sid}'")
                predicted.add((cid, str(sid)))
        m = micro_prf(predicted, gold)
        return _micro_report(subtask, m, len(rows))

    if subtask == 4:
        maps = align_mod.submission_to_maps(data)
        predicted = align_mod.alignment_units(maps)
        gold = set()
        for case in cases:
            if case.evidence_links is None:
                raise CorpusError(f"case '{case.case_id}': no gold evidence links")
            for aid, sids in case.evidence_links.links:
                gold.update((case.case_id, aid, sid) for sid in sids)
        m = micro_prf(predicted, gold)
        return _micro_report(subtask, m, len(maps))

    raise ConfigError(f"subtask must be 1..4, got {subtask}")


def _gold_case(by_id: dict[str, Case], cid: str, where) -> Case:
    if cid not in by_id:
        raise CorpusError(f"{where}: prediction for unknown case '{cid}'")
    return by_id[cid]


def _index_predictions(data, where, key: str) -> dict[str, Any]:
    if not isinstance(data, list):
        raise CorpusError(f"{where}: expected a JSON array of predictions")
    rows = {}
    for i, row in enumerate(data):
        if not isinstance(row, dict) or "case_id" not in row or key not in row:
            raise CorpusError(f"{where}: entry #{i} needs 'case_id' and '{key}'")
        rows[str(row["case_id"])] = row[key]
    return rows


def _micro_report(subtask: int, m, case_count: int) -> dict[str, Any]:
    return {
        "subtask": subtask,
        "cases": case_count,
        "counts": {"tp": m.tp, "fp": m.fp, "fn": m.fn},
        "metrics": {
            "precision": round(m.precision * 100, 2),
            "recall": round(m.recall * 100, 2),
            "f1": round(m.f1 * 100, 2),
        },
        "overall": round(m.f1 * 100, 2),
    }


def report_table(report: dict[str, Any]) -> str:
    rows = [("cases", str(report["cases"]))]
    rows += [(name, f"{value:.2f}") for name, value in report["metrics"].items()]
    rows.append(("overall", f"{report['overall']:.2f}"))
    return format_table(rows, title=f"subtask {report['subtask']}")
