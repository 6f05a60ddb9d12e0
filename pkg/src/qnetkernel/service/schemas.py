"""Request/response models for the HTTP service (and the CLI client)."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class ScenarioInfo(BaseModel):
    name: str
    nodes: list[str]
    intents: int
    description: str = ""


class RunRequest(BaseModel):
    """One simulation (or a seed batch) of an inline or bundled scenario."""

    scenario: dict | None = None
    scenario_name: str | None = None
    seed: int | None = None
    batch: int | None = Field(default=None, ge=1, le=100_000)
    no_hints: bool = False
    verbose: bool = False
    collapse_transport: bool = False


class VerificationModel(BaseModel):
    acyclic: bool
    monotone: bool
    single_writer: bool
    commit_bounded: bool
    no_local_leak: bool
    ok: bool
    violations: list[dict]


class BatchItem(BaseModel):
    seed: int
    verified: bool
    stamps: int
    mp_retries: int
    dispositions: dict[str, str]
    limit_exceeded: bool = False


class BatchResult(BaseModel):
    runs: int
    passed: int
    pass_rate: float
    items: list[BatchItem]


class RunResponse(BaseModel):
    scenario: str
    seed: int
    summary: dict | None = None
    report: VerificationModel | None = None
    trace: list[dict] | None = None
    dot: str | None = None
    limit_exceeded: bool = False
    error: str | None = None
    batch: BatchResult | None = None


class VerifyRequest(BaseModel):
    trace: list[dict]


class VerifyResponse(BaseModel):
    ok: bool
    report: VerificationModel


class ExportDotRequest(BaseModel):
    trace: list[dict]
    collapse_transport: bool = False


class ExportDotResponse(BaseModel):
    dot: str
