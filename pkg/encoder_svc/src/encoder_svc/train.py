"""Training: configuration, case-level k-fold cross-validation with
out-of-fold predictions, and the dual-head loss.

Folds partition case ids (never individual sentences), so every example's
out-of-fold prediction comes from a model that never saw that example's
case. The dual-head loss is the sum of the two cross-entropies; the
``binary_only`` head setting trains only the 2-way head.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .data import LABELS3, RELEVANT, PairExample
from .model import BASE_ENCODERS, build_model, collate, featurize

# Default hyperparameter search space; selected defaults below come from the
# grid's best-performing row. Explicit learning-rate overrides are allowed.
LEARNING_RATE_GRID = (1e-5, 2e-5, 3e-5, 5e-5)
EPOCH_CHOICES = (1, 2)
DROPOUT_CHOICES = (0.10, 0.20)

HEAD_MODES = ("binary_only", "hydra_dual")

_LABEL3_INDEX = {label: i for i, label in enumerate(LABELS3)}


@dataclass
class TrainConfig:
    base_encoder: str = "hash-bow"
    learning_rate: float = 2e-5
    epochs: int = 1
    dropout: float = 0.1
    folds: int = 5
    balance: float = 1.0
    heads: str = "hydra_dual"
    seed: int = 0
    batch_size: int = 32
    buckets: int = 16384
    dim: int = 64
    hidden: int = 64
    head3_weight: float = 1.0  # loss weighting between the two heads
    head2_weight: float = 1.0

    def __post_init__(self):
        if self.base_encoder not in BASE_ENCODERS:
            raise ValueError(f"unknown base encoder '{self.base_encoder}'")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs not in EPOCH_CHOICES:
            raise ValueError(f"epochs must be one of {EPOCH_CHOICES}, got {self.epochs}")
        if not any(abs(self.dropout - d) < 1e-9 for d in DROPOUT_CHOICES):
            raise ValueError(f"dropout must be one of {DROPOUT_CHOICES}, got {self.dropout}")
        if self.heads not in HEAD_MODES:
            raise ValueError(f"heads must be one of {HEAD_MODES}, got '{self.heads}'")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")


def start_loss(history: Sequence[float]) -> float:
    """Mean loss over the first quarter of training batches."""
    k = max(1, len(history) // 4)
    return float(sum(history[:k]) / k)


def end_loss(history: Sequence[float]) -> float:
    """Mean loss over the last quarter of training batches."""
    k = max(1, len(history) // 4)
    return float(sum(history[-k:]) / k)


@dataclass
class KFoldResult:
    fold_heldout_case_ids: list[list[str]]
    fold_train_case_ids: list[set[str]]
    oof_probs3: np.ndarray  # (n_examples, 3), aligned with the input examples
    oof_probs2: np.ndarray  # (n_examples, 2)
    oof_fold: list[int]  # which fold model produced each prediction
    loss_histories: list[list[float]] = field(default_factory=list)  # per-batch, per fold

    def oof_binary_accuracy(self, examples: Sequence[PairExample]) -> float:
        predicted_relevant = self.oof_probs2[:, 1] >= 0.5
        gold = np.array([ex.label2 == RELEVANT for ex in examples])
        return float((predicted_relevant == gold).mean())

    def mean_start_loss(self) -> float:
        return float(np.mean([start_loss(h) for h in self.loss_histories]))

    def mean_end_loss(self) -> float:
        return float(np.mean([end_loss(h) for h in self.loss_histories]))


def partition_cases(case_ids: Sequence[str], folds: int, seed: int) -> list[list[str]]:
    """Deterministic case-level partition: seeded shuffle, round-robin."""
    unique = sorted(set(case_ids))
    rng = random.Random(seed)
    rng.shuffle(unique)
    buckets: list[list[str]] = [[] for _ in range(folds)]
    for i, cid in enumerate(unique):
        buckets[i % folds].append(cid)
    return buckets


def _targets(examples: Sequence[PairExample]) -> tuple[torch.Tensor, torch.Tensor]:
    y3 = torch.tensor([_LABEL3_INDEX[ex.label3] for ex in examples], dtype=torch.long)
    y2 = torch.tensor([1 if ex.label2 == RELEVANT else 0 for ex in examples],
                      dtype=torch.long)
    return y3, y2


def train_single(examples: Sequence[PairExample], config: TrainConfig,
                 seed_offset: int = 0):
    """Fit one model on the given examples; returns (model, per-batch losses)."""
    if not examples:
        raise ValueError("no training examples")
    torch.manual_seed(config.seed + seed_offset)
    model = build_model(config.base_encoder, config.buckets, config.dim,
                        config.hidden, config.dropout)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    criterion = nn.CrossEntropyLoss()

    features = [featurize(ex.query, ex.sentence, config.buckets) for ex in examples]
    y3_all, y2_all = _targets(examples)
    rng = random.Random(config.seed + seed_offset)

    losses: list[float] = []
    model.train()
    for _ in range(config.epochs):
        order = list(range(len(examples)))
        rng.shuffle(order)
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            flat, offsets = collate([features[i] for i in batch])
            logits3, logits2 = model(flat, offsets)
            loss = config.head2_weight * criterion(logits2, y2_all[batch])
            if config.heads == "hydra_dual":
                loss = loss + config.head3_weight * criterion(logits3, y3_all[batch])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
    return model, losses


def train_kfold(examples: Sequence[PairExample], config: TrainConfig) -> KFoldResult:
    """Case-level k-fold: k models, each scoring only its held-out cases."""
    examples = list(examples)
    real_case_ids = {ex.case_id for ex in examples if ex.origin == "real"}
    if len(real_case_ids) < config.folds:
        raise ValueError(
            f"need at least {config.folds} distinct real cases, found {len(real_case_ids)}"
        )
    heldout = partition_cases([ex.case_id for ex in examples], config.folds, config.seed)

    oof3 = np.zeros((len(examples), 3))
    oof2 = np.zeros((len(examples), 2))
    oof_fold = [-1] * len(examples)
    fold_train_case_ids: list[set[str]] = []
    loss_histories: list[list[float]] = []

    for fold, heldout_ids in enumerate(heldout):
        heldout_set = set(heldout_ids)
        train_examples = [ex for ex in examples if ex.case_id not in heldout_set]
        fold_train_case_ids.append({ex.case_id for ex in train_examples})
        model, losses = train_single(train_examples, config, seed_offset=fold)
        loss_histories.append(losses)

        eval_indices = [i for i, ex in enumerate(examples) if ex.case_id in heldout_set]
        if eval_indices:
            from .model import predict_probs

            probs3, probs2 = predict_probs(
                model, [(examples[i].query, examples[i].sentence) for i in eval_indices]
            )
            for row, i in enumerate(eval_indices):
                oof3[i] = probs3[row]
                oof2[i] = probs2[row]
                oof_fold[i] = fold

    return KFoldResult(
        fold_heldout_case_ids=heldout,
        fold_train_case_ids=fold_train_case_ids,
        oof_probs3=oof3,
        oof_probs2=oof2,
        oof_fold=oof_fold,
        loss_histories=loss_histories,
    )
