"""Versioned prompt template assets and rendering helpers.

Templates live as plain text files under ``assets/``. Slots are filled with
literal string replacement (never ``str.format``) because several templates
contain JSON braces. ``get_template`` also accepts a filesystem path ending
in ``.txt`` so users can supply their own template variants.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..errors import ConfigError

# Shipped template assets, keyed by what the prompt does.
TEMPLATES = (
    "question_rewrite",          # subtask 1: patient narrative -> clinician question
    "question_rewrite_revision", # subtask 1 two-step: revise a draft question
    "answer_generation",         # subtask 3: grounded answer from the note excerpt
    "answer_revision",           # subtask 3 two-step: revise a draft answer
    "evidence_alignment",        # subtask 4: list-wise citation alignment
    "alignment_reformat",        # subtask 4 two-step: free text -> strict JSON
    "alignment_pairwise",        # subtask 4: one YES/NO decision per pair
    "synthetic_case",            # synthetic-case generation from seed examples
    "synthetic_repair",          # targeted repair of a failed synthetic case
)


def get_template(name: str) -> str:
    """Load a shipped template by name, or a user template by .txt path."""
    if name.endswith(".txt"):
        path = Path(name)
        if not path.exists():
            raise ConfigError(f"prompt template file not found: {name}")
        return path.read_text(encoding="utf-8")
    if name not in TEMPLATES:
        raise ConfigError(f"unknown prompt template '{name}'")
    return (
        resources.files(__package__).joinpath("assets", f"{name}.txt").read_text(encoding="utf-8")
    )


def fill(template: str, slots: dict[str, str]) -> str:
    """Replace each ``{key}`` slot literally; leaves other braces untouched."""
    out = template
    for key, value in slots.items():
        out = out.replace("{" + key + "}", value)
    return out
