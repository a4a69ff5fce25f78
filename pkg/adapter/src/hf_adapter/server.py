"""FastAPI server exposing a seq2seq model over the backend wire protocol.

Endpoints: POST /capabilities, /finetune, /generate, /embed, /score.
All errors are non-2xx responses with a JSON body {"error": str}.
"""

from __future__ import annotations

import math
from typing import Literal, Union

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException
from pydantic import BaseModel, Field, field_validator

from hf_adapter.config import AdapterConfig
from hf_adapter.modeling import AdapterError, ModelManager


class FinetunePair(BaseModel):
    input: str
    target: str


class FinetuneSpec(BaseModel):
    epochs: int = Field(ge=1)
    learning_rate: float
    train_batch_size: int = Field(ge=1)
    seed: int


class FinetuneRequest(BaseModel):
    base_model_id: str
    examples: list[FinetunePair]
    spec: FinetuneSpec


class InputItem(BaseModel):
    id: str
    text: str


class StochasticSettings(BaseModel):
    num_samples: int = Field(ge=2)
    seed: int


class StochasticMode(BaseModel):
    stochastic: StochasticSettings


class GenerateRequest(BaseModel):
    model_id: str
    inputs: list[InputItem]
    mode: Union[Literal["deterministic"], StochasticMode]


class EmbedRequest(BaseModel):
    inputs: list[InputItem]


class ScoreItem(BaseModel):
    candidate: str
    reference: str | None = None


class ScoreRequest(BaseModel):
    kind: Literal["formality", "similarity"]
    items: list[ScoreItem]

    @field_validator("items")
    @classmethod
    def references_present_for_similarity(cls, items, info):
        if info.data.get("kind") == "similarity":
            if any(item.reference is None for item in items):
                raise ValueError("similarity items need a reference")
        return items


def create_app(config: AdapterConfig | None = None, manager: ModelManager | None = None) -> FastAPI:
    config = config or AdapterConfig.from_env()
    manager = manager or ModelManager(config)
    app = FastAPI(title="hf-backend-adapter")
    app.state.manager = manager

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:1])})

    @app.exception_handler(StarletteHTTPException)
    async def http_error(request: Request, exc: StarletteHTTPException):
        # protocol errors always travel as {"error": str}
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    @app.exception_handler(AdapterError)
    async def adapter_error(request: Request, exc: AdapterError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": f"internal error: {exc}"})

    @app.post("/capabilities")
    def capabilities():
        return {"flags": manager.capabilities()}

    @app.post("/finetune")
    def finetune(body: FinetuneRequest):
        model_id = manager.finetune(
            body.base_model_id,
            [{"input": p.input, "target": p.target} for p in body.examples],
            body.spec.model_dump(),
        )
        return {"model_id": model_id}

    @app.post("/generate")
    def generate(body: GenerateRequest):
        mode = body.mode if body.mode == "deterministic" else body.mode.model_dump()
        generations = manager.generate(
            body.model_id, [item.model_dump() for item in body.inputs], mode
        )
        for items in generations.values():
            for g in items:
                if any(not math.isfinite(e) for e in g["token_entropies"]):
                    raise AdapterError("non-finite entropy produced")
        return {"generations": generations}

    @app.post("/embed")
    def embed(body: EmbedRequest):
        dim, vectors = manager.embed([item.model_dump() for item in body.inputs])
        return {"dim": dim, "vectors": vectors}

    @app.post("/score")
    def score(body: ScoreRequest):
        return {"scores": manager.score(body.kind, [item.model_dump() for item in body.items])}

    return app


def serve(config: AdapterConfig | None = None):
    import uvicorn

    config = config or AdapterConfig.from_env()
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
