#!/usr/bin/env python3
"""Write the bundled fixture corpora to JSON files.

Usage:
    python scripts/make_fixture.py data/
"""

import sys
from pathlib import Path

from ehrqa.corpus import compute_stats, save_corpus
from ehrqa.fixtures import build_dev_corpus, build_mini_corpus, build_unlabeled_corpus


def main():
    out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "data")
    out_dir.mkdir(parents=True, exist_ok=True)

    dev = build_dev_corpus()
    save_corpus(dev, out_dir / "dev.json")
    save_corpus(build_mini_corpus(), out_dir / "mini.json")
    save_corpus(build_unlabeled_corpus(), out_dir / "test_unlabeled.json")

    stats = compute_stats(dev)
    print(f"wrote {out_dir}/dev.json: {stats.case_count} cases, "
          f"{stats.total_note_sentences} sentences "
          f"(avg {stats.avg_note_sentences_per_case:.2f}/case)")
    print(f"wrote {out_dir}/mini.json and {out_dir}/test_unlabeled.json")


if __name__ == "__main__":
    main()
