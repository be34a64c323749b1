"""HTTP scoring service.

POST /score {query, sentences[]} -> per-sentence probabilities from both
heads, in input order. POST /train fits a model from corpus files (k-fold
validation metrics plus a final model on all examples); training is a
single exclusive job. GET /health reports liveness and whether a model is
loaded. The QA pipeline consumes only /score.
"""

from __future__ import annotations

import threading
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .data import build_training_set, load_corpus
from .model import PairEncoder, predict_probs
from .train import TrainConfig, train_kfold, train_single


class ScoreRequest(BaseModel):
    query: str
    sentences: list[str] = Field(min_length=1)


class ScoreEntry(BaseModel):
    p_essential: float
    p_supplementary: float
    p_not_relevant: float
    p_relevant: float


class TrainRequest(BaseModel):
    real_corpus: str
    synthetic_corpus: Optional[str] = None
    config: dict = Field(default_factory=dict)


class TrainSummary(BaseModel):
    examples: int
    real_examples: int
    synthetic_examples: int
    folds: int
    oof_binary_accuracy: float
    loss_first: float
    loss_last: float


def create_app() -> FastAPI:
    app = FastAPI(title="encoder-svc")
    state: dict = {"model": None}
    train_lock = threading.Lock()

    @app.get("/health")
    def health():
        return {"status": "ok", "model_loaded": state["model"] is not None}

    @app.post("/score", response_model=list[ScoreEntry])
    def score(request: ScoreRequest):
        model: Optional[PairEncoder] = state["model"]
        if model is None:
            raise HTTPException(status_code=503, detail="no model loaded; train first")
        probs3, probs2 = predict_probs(
            model, [(request.query, s) for s in request.sentences]
        )
        return [
            ScoreEntry(
                p_essential=float(p3[0]),
                p_supplementary=float(p3[1]),
                p_not_relevant=float(p3[2]),
                p_relevant=float(p2[1]),
            )
            for p3, p2 in zip(probs3, probs2)
        ]

    @app.post("/train", response_model=TrainSummary)
    def train(request: TrainRequest):
        if not train_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a training job is already running")
        try:
            try:
                config = TrainConfig(**request.config)
            except (TypeError, ValueError) as e:
                raise HTTPException(status_code=422, detail=str(e))
            try:
                real = load_corpus(request.real_corpus)
                synthetic = (load_corpus(request.synthetic_corpus)
                             if request.synthetic_corpus else None)
                examples = build_training_set(
                    real, synthetic, balance=config.balance, seed=config.seed
                )
                result = train_kfold(examples, config)
                final_model, _ = train_single(examples, config, seed_offset=config.folds)
            except (ValueError, FileNotFoundError) as e:
                raise HTTPException(status_code=422, detail=str(e))
            state["model"] = final_model
            return TrainSummary(
                examples=len(examples),
                real_examples=sum(1 for ex in examples if ex.origin == "real"),
                synthetic_examples=sum(1 for ex in examples if ex.origin == "synthetic"),
                folds=config.folds,
                oof_binary_accuracy=result.oof_binary_accuracy(examples),
                loss_first=result.mean_start_loss(),
                loss_last=result.mean_end_loss(),
            )
        finally:
            train_lock.release()

    return app


app = create_app()


def serve():
    """Console entry point: run the service with uvicorn."""
    import uvicorn

    uvicorn.run(app, host="127.0.0.1", port=8400)
