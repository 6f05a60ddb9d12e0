"""Service handlers: the core package behind a request/response surface.

Plain functions so the FastAPI routes and the CLI client share one code
path; everything here is synchronous because a run completes in seconds.
"""

from __future__ import annotations

from ..dag import collapse_transport, export_dot, verify_trace
from ..errors import LimitExceeded, ParseError
from ..scenario import (
    BUNDLED,
    ScenarioConfig,
    build_run,
    bundled_scenario,
    parse_scenario,
)
from ..sim import build_summary
from .schemas import (
    BatchItem,
    BatchResult,
    ExportDotRequest,
    ExportDotResponse,
    RunRequest,
    RunResponse,
    ScenarioInfo,
    VerificationModel,
    VerifyRequest,
    VerifyResponse,
)


def _resolve_config(request: RunRequest) -> ScenarioConfig:
    if request.scenario is not None:
        return parse_scenario(request.scenario)
    if request.scenario_name:
        return bundled_scenario(request.scenario_name)
    raise ParseError("run request needs either 'scenario' or 'scenario_name'")


def _single_run(config: ScenarioConfig, request: RunRequest, seed: int) -> RunResponse:
    run = build_run(config, seed=seed, no_hints=request.no_hints, verbose=request.verbose)
    limit_hit = False
    error = None
    try:
        run.run_until_quiescent()
    except LimitExceeded as exc:
        limit_hit = True
        error = str(exc)
    dag, report, _view = verify_trace(run.trace)
    if request.collapse_transport:
        dag = collapse_transport(dag)
    return RunResponse(
        scenario=config.name,
        seed=seed,
        summary=build_summary(run),
        report=VerificationModel(**report.to_json()),
        trace=list(run.trace),
        dot=export_dot(dag),
        limit_exceeded=limit_hit,
        error=error,
    )


def handle_run(request: RunRequest) -> RunResponse:
    config = _resolve_config(request)
    base_seed = config.seed if request.seed is None else request.seed
    if request.batch is None:
        return _single_run(config, request, base_seed)

    items: list[BatchItem] = []
    for offset in range(request.batch):
        seed = base_seed + offset
        result = _single_run(config, request, seed)
        items.append(
            BatchItem(
                seed=seed,
                verified=bool(result.report and result.report.ok),
                stamps=result.summary["stamps"] if result.summary else 0,
                mp_retries=result.summary["mp_retries"] if result.summary else 0,
                dispositions={
                    hid: entry["disposition"]
                    for hid, entry in (result.summary or {}).get("headers", {}).items()
                },
                limit_exceeded=result.limit_exceeded,
            )
        )
    passed = sum(1 for item in items if item.verified and not item.limit_exceeded)
    return RunResponse(
        scenario=config.name,
        seed=base_seed,
        batch=BatchResult(
            runs=len(items),
            passed=passed,
            pass_rate=passed / len(items),
            items=items,
        ),
    )


def handle_verify(request: VerifyRequest) -> VerifyResponse:
    _dag, report, _view = verify_trace(request.trace)
    model = VerificationModel(**report.to_json())
    return VerifyResponse(ok=model.ok, report=model)


def handle_export_dot(request: ExportDotRequest) -> ExportDotResponse:
    dag, _report, _view = verify_trace(request.trace)
    if request.collapse_transport:
        dag = collapse_transport(dag)
    return ExportDotResponse(dot=export_dot(dag))


def list_scenarios() -> list[ScenarioInfo]:
    infos = []
    for name in BUNDLED:
        config = bundled_scenario(name)
        infos.append(
            ScenarioInfo(
                name=name,
                nodes=list(config.topology.nodes),
                intents=len(config.intents),
                description=config.raw.get("description", ""),
            )
        )
    return infos
