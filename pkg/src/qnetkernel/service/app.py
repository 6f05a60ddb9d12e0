"""FastAPI application wrapping the simulator and verifier."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import ParseError, ValidationError
from . import handlers
from .schemas import (
    ExportDotRequest,
    ExportDotResponse,
    HealthResponse,
    RunRequest,
    RunResponse,
    ScenarioInfo,
    VerifyRequest,
    VerifyResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="qnetkernel",
        version=__version__,
        description="Simulation-as-a-service for commit-stamped entanglement "
        "distribution: run scenarios, verify traces, export commit graphs.",
    )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(version=__version__)

    @app.get("/scenarios", response_model=list[ScenarioInfo])
    def scenarios() -> list[ScenarioInfo]:
        return handlers.list_scenarios()

    @app.post("/run", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        try:
            return handlers.handle_run(request)
        except (ParseError, ValidationError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/verify", response_model=VerifyResponse)
    def verify(request: VerifyRequest) -> VerifyResponse:
        try:
            return handlers.handle_verify(request)
        except (ParseError, ValidationError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/export-dot", response_model=ExportDotResponse)
    def export_dot_route(request: ExportDotRequest) -> ExportDotResponse:
        try:
            return handlers.handle_export_dot(request)
        except (ParseError, ValidationError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    return app


app = create_app()
