"""Tolerant extraction of JSON values from model output.

Models wrap JSON in code fences or lead with prose; this strips fences and
scans for the first parseable JSON array/object.
"""

from __future__ import annotations

import json
import re
from typing import Any

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)\s*```", re.DOTALL | re.IGNORECASE)


def strip_code_fences(text: str) -> str:
    """Return the first fenced block's content, or the text unchanged."""
    m = _FENCE_RE.search(text)
    return m.group(1) if m else text


def extract_json_value(text: str) -> Any:
    """Parse the first JSON array or object found in ``text``.

    Tries a direct parse first, then strips code fences, then scans for the
    first '[' or '{' and decodes from there. Raises ValueError when nothing
    parses.
    """
    candidate = text.strip()
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        pass

    candidate = strip_code_fences(candidate)
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        pass

    decoder = json.JSONDecoder()
    for i, ch in enumerate(candidate):
        if ch in "[{":
            try:
                value, _ = decoder.raw_decode(candidate[i:])
                return value
            except json.JSONDecodeError:
                continue
    raise ValueError(f"no JSON value found in model output: {text[:200]!r}")
