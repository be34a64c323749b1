#!/usr/bin/env python3
"""Threshold sweep for evidence selection: compute the strict micro P/R/F1
curve on a labeled corpus, export it as CSV, and (with matplotlib present)
plot it against the all-relevant baseline.

Usage:
    python scripts/sweep_thresholds.py data/dev.json curve.csv [curve.png]

Uses the deterministic mock embedder unless EHRQA_ENDPOINT points at a real
server (then pass a model name as the 4th argument).
"""

import os
import sys

from ehrqa.backends import HttpBackend, MockBackend
from ehrqa.corpus import parse_corpus
from ehrqa.evidence import EmbeddingScorer, calibrate_threshold


def main():
    corpus_path = sys.argv[1] if len(sys.argv) > 1 else "data/dev.json"
    csv_path = sys.argv[2] if len(sys.argv) > 2 else "curve.csv"
    png_path = sys.argv[3] if len(sys.argv) > 3 else None

    endpoint = os.environ.get("EHRQA_ENDPOINT")
    if endpoint:
        model = sys.argv[4] if len(sys.argv) > 4 else "default"
        backend = HttpBackend(endpoint, model=model)
    else:
        backend = MockBackend()

    cases = parse_corpus(corpus_path)
    curve = calibrate_threshold(cases, EmbeddingScorer(backend), grid_points=101)
    curve.to_csv(csv_path)
    best = max(curve.points, key=lambda p: p.f1)
    print(f"best t = {curve.best_t:.4f}  "
          f"P/R/F1 = {best.precision * 100:.2f}/{best.recall * 100:.2f}/{best.f1 * 100:.2f}  "
          f"baseline F1 = {curve.baseline_f1 * 100:.2f}")
    print(f"curve written to {csv_path}")

    if png_path:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not installed; skipping plot")
            return
        ts = [p.t for p in curve.points]
        plt.figure(figsize=(7, 4))
        plt.plot(ts, [p.precision for p in curve.points], label="precision")
        plt.plot(ts, [p.recall for p in curve.points], label="recall")
        plt.plot(ts, [p.f1 for p in curve.points], label="F1")
        plt.axhline(curve.baseline_f1, color="red", linestyle="--",
                    label="all-relevant baseline F1")
        plt.axvline(curve.best_t, color="gray", linestyle=":", label="best t")
        plt.xlabel("threshold t")
        plt.ylabel("strict micro score")
        plt.legend()
        plt.tight_layout()
        plt.savefig(png_path, dpi=120)
        print(f"plot written to {png_path}")


if __name__ == "__main__":
    main()
