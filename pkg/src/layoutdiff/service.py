"""JSON-over-HTTP inference service.

Endpoints:

* ``GET /health``    -> {status, schema, T}
* ``GET /schema``    -> {classes, n_max}
* ``POST /generate`` -> layouts for a condition; body per `layoutdiff.wire`
* ``POST /score``    -> per-layout overlap/pIOU/alignment (+DocSim when a
                        reference is given, paired by index)

Request validation problems return 400 with field-level messages.  A bounded
concurrency gate returns 429 when all generation slots are busy.  The model
is loaded once at startup and never mutated; each request derives its own
rng stream, and when no seed is supplied the server picks one and returns it
so a result can be reproduced later.
"""
from __future__ import annotations

import secrets
import threading
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .core import Layout, LayoutError
from .metrics import alignment, docsim, overlap, piou
from .sampler import Sampler
from .wire import WireError, condition_to_spec

MAX_SAMPLES = 16


class ConditionItem(BaseModel):
    index: int
    cls: str | None = Field(default=None, alias="class")
    box: list[float] | None = None
    size_only: bool = False

    model_config = {"populate_by_name": True}


class GenerateRequest(BaseModel):
    n_components: int
    condition: list[ConditionItem] = Field(default_factory=list)
    seed: int | None = None
    num_samples: int = 1
    edit_only: bool = False


class ScoreRequest(BaseModel):
    layouts: list[dict]
    reference: list[dict] | None = None


def _error(status: int, message: str, field: str | None = None) -> JSONResponse:
    detail: dict[str, Any] = {"error": message}
    if field:
        detail["field"] = field
    return JSONResponse(status_code=status, content=detail)


def build_app(checkpoint_path, max_concurrency: int = 4) -> FastAPI:
    sampler = Sampler.from_path(checkpoint_path)
    schema = sampler.schema
    gate = threading.Semaphore(max_concurrency)

    app = FastAPI(title="layoutdiff inference service", version="1.0.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(p) for p in first.get("loc", []) if p != "body")
        return _error(400, first.get("msg", "invalid request"), field or None)

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "schema": schema.to_dict(),
            "T": sampler.schedule.T,
        }

    @app.get("/schema")
    def get_schema():
        return {"classes": list(schema.classes), "n_max": schema.n_max}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        if not 1 <= req.num_samples <= MAX_SAMPLES:
            return _error(400, f"num_samples must lie in [1, {MAX_SAMPLES}]", "num_samples")
        try:
            spec = condition_to_spec(
                req.n_components,
                [item.model_dump(by_alias=True) for item in req.condition],
                schema,
            )
        except WireError as exc:
            return _error(400, exc.message, exc.field)

        seed = req.seed if req.seed is not None else secrets.randbelow(2**31)
        if not gate.acquire(blocking=False):
            return _error(429, "all generation slots are busy; retry shortly")
        try:
            layouts = sampler.generate_batch(
                [spec] * req.num_samples, seed=seed, edit_only=req.edit_only
            )
        finally:
            gate.release()
        return {
            "seed": seed,
            "layouts": [layout.to_dict() for layout in layouts],
        }

    @app.post("/score")
    def score(req: ScoreRequest):
        try:
            layouts = [Layout.from_dict(d, schema) for d in req.layouts]
            for layout in layouts:
                layout.validate(schema)
            refs = None
            if req.reference is not None:
                refs = [Layout.from_dict(d, schema) for d in req.reference]
        except (LayoutError, KeyError, TypeError, ValueError) as exc:
            return _error(400, str(exc), "layouts")
        if not layouts:
            return _error(400, "layouts must be non-empty", "layouts")
        rows = []
        for i, layout in enumerate(layouts):
            row = {
                "overlap": overlap(layout),
                "piou": piou(layout),
                "alignment": alignment(layout),
            }
            if refs:
                row["docsim"] = docsim(layout, refs[i % len(refs)])
            rows.append(row)
        return {"scores": rows}

    return app
