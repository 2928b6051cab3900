"""HTTP layer of the campaign service.

JSON in, JSON out; errors are {code, message, details} at an appropriate
status.  The built UI bundle, when present, is served under /ui.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from gpal._threads import limit_blas_threads
from gpal.service.core import ApiError, CampaignStore, ServiceConfig

__all__ = ["create_app"]


class SchemaModel(BaseModel):
    numeric: list[str] = Field(default_factory=list)
    categorical: list[str] = Field(default_factory=list)
    labels: list[str] = Field(default_factory=list)
    id: str | None = None
    categories: dict[str, list[str]] = Field(default_factory=dict)


class ConfigModel(BaseModel):
    strategy: str = "mi-alk"
    budget: int
    seed: int = 0
    epsilon: float = 0.95
    d: int | None = None
    refit: bool = True
    refit_restarts: int = 1
    refit_max_iters: int = 50
    restart_every: int = 1


class CreateCampaignRequest(BaseModel):
    csv_text: str | None = None
    csv_path: str | None = None
    schema_: SchemaModel | None = Field(default=None, alias="schema")
    label: str | None = None
    config: ConfigModel

    model_config = {"populate_by_name": True}


class LabelRequest(BaseModel):
    point_id: str
    value: float
    override: bool = False


class WhatIfRequest(BaseModel):
    point_id: str
    value: float


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    limit_blas_threads(1)
    config = config or ServiceConfig()
    store = CampaignStore(config)
    app = FastAPI(title="gpal campaign service")
    app.state.store = store
    app.state.config = config

    @app.exception_handler(ApiError)
    async def api_error_handler(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "details": exc.details},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={
                "code": "validation_error",
                "message": "request body failed validation",
                "details": {"errors": exc.errors()},
            },
        )

    @app.post("/campaigns", status_code=201)
    def create_campaign(body: CreateCampaignRequest):
        campaign = store.create(
            csv_text=body.csv_text,
            csv_path=body.csv_path,
            schema_raw=body.schema_.model_dump() if body.schema_ else None,
            label=body.label,
            config_raw=body.config.model_dump(),
        )
        return campaign.summary()

    @app.get("/campaigns")
    def list_campaigns():
        return {"campaigns": store.list_campaigns()}

    @app.get("/campaigns/{campaign_id}")
    def get_campaign(campaign_id: str):
        return store.get(campaign_id).summary()

    @app.get("/campaigns/{campaign_id}/recommendation")
    def get_recommendation(campaign_id: str):
        return store.get(campaign_id).recommendation_payload()

    @app.post("/campaigns/{campaign_id}/labels")
    def submit_label(campaign_id: str, body: LabelRequest):
        return store.submit_label(campaign_id, body.point_id, body.value, body.override)

    @app.get("/campaigns/{campaign_id}/predictions")
    def get_predictions(campaign_id: str):
        return store.get(campaign_id).predictions_payload()

    @app.get("/campaigns/{campaign_id}/metrics")
    def get_metrics(campaign_id: str):
        return store.get(campaign_id).metrics_payload()

    @app.post("/campaigns/{campaign_id}/what-if")
    def what_if(campaign_id: str, body: WhatIfRequest):
        campaign = store.get(campaign_id)
        with campaign.lock:
            return campaign.what_if(body.point_id, body.value)

    @app.delete("/campaigns/{campaign_id}")
    def close_campaign(campaign_id: str):
        return store.close(campaign_id)

    ui_dir = config.ui_dir or str(Path(__file__).resolve().parents[3] / "frontend" / "dist")
    if Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
