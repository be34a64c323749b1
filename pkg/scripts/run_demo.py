#!/usr/bin/env python3
"""End-to-end demo on the bundled fixture with the deterministic mock backend.

Runs all four pipeline stages twice against one cache directory to show the
zero-network replay, then evaluates each stage against the fixture labels.

Usage:
    python scripts/run_demo.py [workdir]
"""

import json
import sys
from pathlib import Path

from ehrqa.corpus import save_corpus
from ehrqa.fixtures import build_mini_corpus
from ehrqa.run import evaluate_predictions, load_config, report_table, run_pipeline


def main():
    workdir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    workdir.mkdir(parents=True, exist_ok=True)
    corpus_path = workdir / "mini.json"
    save_corpus(build_mini_corpus(), corpus_path)

    config_path = workdir / "config.json"
    config_path.write_text(json.dumps({
        "corpus": {"dev": str(corpus_path)},
        "backend": {
            "kind": "mock",
            "chat_rules": [
                ["rewrite long, messy questions",
                 "What treatment did the patient receive?"],
                ["clinical documentation assistant",
                 "The patient was treated and monitored. "
                 "Symptoms improved before discharge."],
            ],
            "default_response": "NO",
        },
        "evidence": {"scorer": "embedding-cosine", "threshold": "calibrate",
                     "grid_points": 41},
        "align": {"strategy": "threshold", "t": 0.2},
        "cache_dir": str(workdir / "cache"),
        "out_dir": str(workdir / "run1"),
    }, indent=2))

    first = run_pipeline(load_config(config_path))
    print(f"run 1: {first['backend_calls']} backend calls, "
          f"{first['cache_hits']} cache hits")

    second = run_pipeline(load_config(config_path,
                                      overrides={"out_dir": str(workdir / "run2")}))
    print(f"run 2: {second['backend_calls']} backend calls, "
          f"{second['cache_hits']} cache hits (warm cache)")

    for subtask, key in ((2, "subtask2"), (4, "subtask4")):
        report = evaluate_predictions(first["outputs"][key], corpus_path, subtask)
        print()
        print(report_table(report))


if __name__ == "__main__":
    main()
