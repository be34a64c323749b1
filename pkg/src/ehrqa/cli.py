"""Command-line interface.

One subcommand per pipeline stage (interpret, evidence, answer, align), plus
synth, calibrate, evaluate, stats, and pipeline. Exit codes: 0 success,
2 configuration/usage, 3 corpus or prediction format, 4 backend transport,
5 missing upstream artifact, 1 anything else.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__, run as run_mod
from .corpus import compute_stats, parse_corpus, save_corpus
from .errors import (
    BackendError,
    ConfigError,
    CorpusError,
    DependencyError,
    EhrqaError,
)
from .evidence import calibrate_threshold, make_scorer
from .metrics import format_table
from .synthgen import QualityGate, audit_records, synthesize_corpus

_EXIT_CODES = [
    (ConfigError, 2),
    (CorpusError, 3),
    (BackendError, 4),
    (DependencyError, 5),
    (EhrqaError, 1),
]


def _fail(error: Exception) -> None:
    for cls, code in _EXIT_CODES:
        if isinstance(error, cls):
            click.echo(f"error: {error}", err=True)
            sys.exit(code)
    raise error


def _config(config_path, **overrides):
    clean = {k: v for k, v in overrides.items() if v is not None}
    return run_mod.load_config(config_path, overrides=clean or None)


@click.group()
@click.version_option(__version__)
def main():
    """Evidence-grounded question answering over clinical notes."""


_config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True), default=None,
    help="JSON run config; flags override it.",
)
_split_option = click.option("--split", default="dev", show_default=True)
_out_option = click.option("--out-dir", default=None, help="Output directory.")
_cache_option = click.option("--cache-dir", default=None, help="Response cache directory.")


def _run(config_path, subtask, split, out_dir, cache_dir, questions=None, answers=None,
         **section_overrides):
    overrides = {k: v for k, v in {"out_dir": out_dir, "cache_dir": cache_dir}.items() if v}
    for section, values in section_overrides.items():
        values = {k: v for k, v in values.items() if v is not None}
        if values:
            overrides[section] = values
    try:
        config = _config(config_path, **overrides)
        result = run_mod.run_subtask(
            config, subtask, split=split, questions_path=questions, answers_path=answers
        )
    except EhrqaError as e:
        _fail(e)
    click.echo(json.dumps(result, indent=2))


@main.command()
@_config_option
@_split_option
@_out_option
@_cache_option
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None,
              help="Corpus file for the chosen split (shortcut for config.corpus).")
@click.option("--kind", default=None, help="Strategy: few_shot | double_query | two_step.")
@click.option("--k", type=int, default=None, help="Shot count (3 or 5).")
def interpret(config_path, split, out_dir, cache_dir, corpus_path, kind, k):
    """Subtask 1: rewrite patient questions into clinician-style questions."""
    extra = {}
    if corpus_path:
        extra["corpus"] = {split: corpus_path}
    try:
        config = _config(config_path, out_dir=out_dir, cache_dir=cache_dir,
                         interpret={k2: v for k2, v in {"kind": kind, "k": k}.items() if v},
                         **extra)
        result = run_mod.run_subtask(config, 1, split=split)
    except EhrqaError as e:
        _fail(e)
    click.echo(json.dumps(result, indent=2))


@main.command()
@_config_option
@_split_option
@_out_option
@_cache_option
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--scorer", default=None,
              help="embedding-cosine | pair-encoder | classifier.")
@click.option("--threshold", default=None,
              help="Decision threshold, or 'calibrate' to sweep on labels.")
@click.option("--questions", type=click.Path(exists=True), default=None,
              help="Subtask-1 predictions to use as clinician questions.")
def evidence(config_path, split, out_dir, cache_dir, corpus_path, scorer, threshold, questions):
    """Subtask 2: select the note sentences that answer the question."""
    extra = {}
    if corpus_path:
        extra["corpus"] = {split: corpus_path}
    if threshold is not None and threshold != "calibrate":
        threshold = float(threshold)
    try:
        config = _config(
            config_path, out_dir=out_dir, cache_dir=cache_dir,
            evidence={k: v for k, v in
                      {"scorer": scorer, "threshold": threshold}.items() if v is not None},
            **extra,
        )
        result = run_mod.run_subtask(config, 2, split=split, questions_path=questions)
    except EhrqaError as e:
        _fail(e)
    click.echo(json.dumps(result, indent=2))


@main.command()
@_config_option
@_split_option
@_out_option
@_cache_option
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--mode", default=None, help="zero_shot_full | two_step.")
@click.option("--questions", type=click.Path(exists=True), default=None)
def answer(config_path, split, out_dir, cache_dir, corpus_path, mode, questions):
    """Subtask 3: generate grounded answers of at most 75 words."""
    extra = {}
    if corpus_path:
        extra["corpus"] = {split: corpus_path}
    try:
        config = _config(config_path, out_dir=out_dir, cache_dir=cache_dir,
                         answer={"mode": mode} if mode else {}, **extra)
        result = run_mod.run_subtask(config, 3, split=split, questions_path=questions)
    except EhrqaError as e:
        _fail(e)
    click.echo(json.dumps(result, indent=2))


@main.command()
@_config_option
@_split_option
@_out_option
@_cache_option
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), default=None)
@click.option("--strategy", default=None,
              help="threshold | listwise_one_shot | listwise_two_step | pairwise_zero_shot.")
@click.option("--t", type=float, default=None, help="Similarity threshold.")
@click.option("--answers", type=click.Path(exists=True), default=None,
              help="Answers file from subtask 3 (detail or submission shape).")
@click.option("--questions", type=click.Path(exists=True), default=None)
def align(config_path, split, out_dir, cache_dir, corpus_path, strategy, t, answers, questions):
    """Subtask 4: cite each answer sentence to its supporting note sentences."""
    extra = {}
    if corpus_path:
        extra["corpus"] = {split: corpus_path}
    try:
        config = _config(
            config_path, out_dir=out_dir, cache_dir=cache_dir,
            align={k: v for k, v in {"strategy": strategy, "t": t}.items() if v is not None},
            **extra,
        )
        result = run_mod.run_subtask(
            config, 4, split=split, questions_path=questions, answers_path=answers
        )
    except EhrqaError as e:
        _fail(e)
    click.echo(json.dumps(result, indent=2))


@main.command()
@_config_option
@_split_option
@_out_option
@_cache_option
def pipeline(config_path, split, out_dir, cache_dir):
    """Run all four subtasks in sequence, feeding each stage to the next."""
    try:
        config = _config(config_path, out_dir=out_dir, cache_dir=cache_dir)
        result = run_mod.run_pipeline(config, split=split)
    except EhrqaError as e:
        _fail(e)
    click.echo(json.dumps(result, indent=2))


@main.command()
@_config_option
@_cache_option
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True,
              help="Labeled seed corpus.")
@click.option("--n", default=10, show_default=True, help="Variations per seed case.")
@click.option("--max-repairs", default=3, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Corpus JSON file to write accepted cases to (appends).")
@click.option("--audit", "audit_path", type=click.Path(), default=None,
              help="JSONL audit log for rejected cases and errors.")
def synth(config_path, cache_dir, corpus_path, n, max_repairs, out_path, audit_path):
    """Generate gate-checked synthetic cases from labeled seed cases."""
    try:
        config = _config(config_path, cache_dir=cache_dir,
                         corpus={"seeds": corpus_path})
        seeds = parse_corpus(corpus_path)
        backend = run_mod.make_backend(config.backend, config.cache_dir)
        accepted, batches = synthesize_corpus(
            seeds, n, backend, gate=QualityGate(), max_repairs=max_repairs
        )
        existing = parse_corpus(out_path) if Path(out_path).exists() else []
        save_corpus(existing + accepted, out_path)
        if audit_path:
            with open(audit_path, "a", encoding="utf-8") as f:
                for row in audit_records(batches):
                    f.write(json.dumps(row, ensure_ascii=False) + "\n")
    except EhrqaError as e:
        _fail(e)
    total_sentences = sum(len(c.sentences) for c in accepted)
    click.echo(json.dumps({
        "seeds": len(seeds),
        "accepted": len(accepted),
        "accepted_sentences": total_sentences,
        "rejected": sum(len(b.rejected()) for b in batches),
        "generation_errors": sum(len(b.errors) for b in batches),
        "out": str(out_path),
    }, indent=2))


@main.command()
@_config_option
@_cache_option
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True)
@click.option("--scorer", default="embedding-cosine", show_default=True)
@click.option("--grid-points", default=101, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True, help="Curve CSV path.")
def calibrate(config_path, cache_dir, corpus_path, scorer, grid_points, out_path):
    """Sweep evidence thresholds on a labeled corpus and report the best F1."""
    try:
        config = _config(config_path, cache_dir=cache_dir, corpus={"dev": corpus_path})
        cases = parse_corpus(corpus_path)
        backend = run_mod.make_backend(config.backend, config.cache_dir)
        curve = calibrate_threshold(
            cases, make_scorer(scorer, backend), grid_points=grid_points
        )
        curve.to_csv(out_path)
    except EhrqaError as e:
        _fail(e)
    best = max(curve.points, key=lambda p: p.f1)
    click.echo(json.dumps({
        "best_t": curve.best_t,
        "best_f1": round(best.f1 * 100, 2),
        "baseline_f1": round(curve.baseline_f1 * 100, 2),
        "curve": str(out_path),
    }, indent=2))


@main.command()
@click.option("--predictions", type=click.Path(exists=True), required=True)
@click.option("--gold", type=click.Path(exists=True), required=True,
              help="Labeled corpus JSON.")
@click.option("--subtask", type=click.IntRange(1, 4), required=True)
@click.option("--external", type=click.Path(exists=True), default=None,
              help="JSON file of externally computed scores on the 0-100 scale, "
                   "e.g. {\"bertscore\": 41.15}.")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
def evaluate(predictions, gold, subtask, external, as_json):
    """Score predictions against a labeled corpus."""
    try:
        external_scores = (
            json.loads(Path(external).read_text(encoding="utf-8")) if external else None
        )
        report = run_mod.evaluate_predictions(predictions, gold, subtask,
                                              external=external_scores)
    except EhrqaError as e:
        _fail(e)
    if as_json:
        click.echo(json.dumps(report, indent=2))
    else:
        click.echo(run_mod.report_table(report))


@main.command()
@click.argument("corpus_path", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def stats(corpus_path, as_json):
    """Summary statistics of a corpus file."""
    try:
        s = compute_stats(parse_corpus(corpus_path))
    except EhrqaError as e:
        _fail(e)
    fields = {
        "cases": s.case_count,
        "note_sentences": s.total_note_sentences,
        "avg_note_sentences_per_case": round(s.avg_note_sentences_per_case, 2),
        "avg_note_sentence_length": round(s.avg_note_sentence_length_words, 2),
        "avg_note_length_per_case": round(s.avg_note_length_per_case_words, 2),
        "avg_patient_question_length": round(s.avg_patient_question_length_words, 2),
        "avg_clinician_question_length": round(s.avg_clinician_question_length_words, 2),
        "avg_answer_sentences_per_case": round(s.avg_answer_sentences_per_case, 2),
        "avg_answer_sentence_length": round(s.avg_answer_sentence_length_words, 2),
    }
    if as_json:
        click.echo(json.dumps(fields, indent=2))
    else:
        click.echo(format_table([(k, str(v)) for k, v in fields.items()]))


if __name__ == "__main__":
    main()
