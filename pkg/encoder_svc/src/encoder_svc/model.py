"""The pair encoder: hashed lexical features of a (query, sentence) pair fed
through a shared representation into two classification heads.

Features are stable blake2b hashes of salted lowercased tokens: ``q:`` for
query tokens, ``s:`` for sentence tokens, and ``b:`` for tokens occurring on
both sides (the cross-encoder interaction signal). The sentence side is
truncated first when the pair exceeds the length budget. The built-in
``hash-bow`` base encoder is the default; heavier encoders can be added to
BASE_ENCODERS behind the same interface.
"""

from __future__ import annotations

import hashlib
from typing import Sequence

import torch
from torch import nn

_HASH_KEY = b"encoder-svc-v1"

MAX_QUERY_TOKENS = 64
MAX_SENTENCE_TOKENS = 192

BASE_ENCODERS = ("hash-bow",)


def _bucket(token: str, buckets: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), key=_HASH_KEY, digest_size=8)
    return int.from_bytes(digest.digest(), "big") % buckets


def featurize(query: str, sentence: str, buckets: int) -> list[int]:
    """Hashed feature ids for one pair; never empty."""
    q_tokens = query.lower().split()[:MAX_QUERY_TOKENS]
    s_tokens = sentence.lower().split()[:MAX_SENTENCE_TOKENS]
    shared = set(q_tokens) & set(s_tokens)
    ids = [_bucket("q:" + t, buckets) for t in q_tokens]
    ids += [_bucket("s:" + t, buckets) for t in s_tokens]
    ids += [_bucket("b:" + t, buckets) for t in sorted(shared)]
    if not ids:
        ids = [_bucket("<empty>", buckets)]
    return ids


def collate(feature_lists: Sequence[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    """Flatten variable-length feature lists into EmbeddingBag input."""
    offsets = [0]
    for ids in feature_lists[:-1]:
        offsets.append(offsets[-1] + len(ids))
    flat = torch.tensor([i for ids in feature_lists for i in ids], dtype=torch.long)
    return flat, torch.tensor(offsets, dtype=torch.long)


class PairEncoder(nn.Module):
    """Shared mean-pooled embedding + MLP trunk with a 3-way head and a
    2-way head on top."""

    def __init__(self, buckets: int = 16384, dim: int = 64, hidden: int = 64,
                 dropout: float = 0.1):
        super().__init__()
        self.buckets = buckets
        self.embedding = nn.EmbeddingBag(buckets, dim, mode="mean")
        self.trunk = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.ReLU(),
            nn.Dropout(dropout),
        )
        self.head3 = nn.Linear(hidden, 3)  # essential / supplementary / not-relevant
        self.head2 = nn.Linear(hidden, 2)  # relevant / not-relevant

    def forward(self, flat: torch.Tensor, offsets: torch.Tensor):
        shared = self.trunk(self.embedding(flat, offsets))
        return self.head3(shared), self.head2(shared)


def build_model(base_encoder: str, buckets: int, dim: int, hidden: int,
                dropout: float) -> PairEncoder:
    if base_encoder not in BASE_ENCODERS:
        raise ValueError(
            f"unknown base encoder '{base_encoder}' (available: {BASE_ENCODERS})"
        )
    return PairEncoder(buckets=buckets, dim=dim, hidden=hidden, dropout=dropout)


@torch.no_grad()
def predict_probs(model: PairEncoder, pairs: Sequence[tuple[str, str]]):
    """(probs3, probs2) arrays for a batch of (query, sentence) pairs;
    deterministic (eval mode, no sampling)."""
    model.eval()
    flat, offsets = collate([featurize(q, s, model.buckets) for q, s in pairs])
    logits3, logits2 = model(flat, offsets)
    return (torch.softmax(logits3, dim=1).numpy(),
            torch.softmax(logits2, dim=1).numpy())
