"""Command-line client.

The CLI holds no simulation logic: it builds service requests, dispatches
them to the in-process handlers (or to a remote service with --server),
and writes the response artifacts to disk.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import LimitExceeded, ParseError, QnkError, ValidationError
from .scenario import resolve_scenario
from .service import handlers
from .service.schemas import (
    ExportDotRequest,
    ExportDotResponse,
    RunRequest,
    RunResponse,
    VerifyRequest,
    VerifyResponse,
)
from .trace import dump_jsonl, parse_jsonl

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_LIMIT = 3


def _post(server: str, route: str, payload: dict) -> dict:
    import httpx

    response = httpx.post(f"{server.rstrip('/')}{route}", json=payload, timeout=300.0)
    if response.status_code != 200:
        raise ParseError(f"server returned {response.status_code}: {response.text}")
    return response.json()


def _dispatch_run(request: RunRequest, server: str | None) -> RunResponse:
    if server:
        return RunResponse(**_post(server, "/run", request.model_dump()))
    return handlers.handle_run(request)


def _dispatch_verify(request: VerifyRequest, server: str | None) -> VerifyResponse:
    if server:
        return VerifyResponse(**_post(server, "/verify", request.model_dump()))
    return handlers.handle_verify(request)


def _dispatch_export(request: ExportDotRequest, server: str | None) -> ExportDotResponse:
    if server:
        return ExportDotResponse(**_post(server, "/export-dot", request.model_dump()))
    return handlers.handle_export_dot(request)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_run(args: argparse.Namespace) -> int:
    config = resolve_scenario(args.scenario)
    request = RunRequest(
        scenario=config.raw,
        seed=args.seed,
        batch=args.batch,
        no_hints=args.no_hints,
        verbose=args.verbose,
        collapse_transport=args.collapse_transport,
    )
    result = _dispatch_run(request, args.server)
    out_dir = Path(args.out_dir)
    stem = config.name

    if result.batch is not None:
        batch_path = Path(args.batch_out) if args.batch_out else out_dir / f"{stem}.batch.json"
        _write(batch_path, _json_text(result.batch.model_dump()))
        print(
            f"{stem}: {result.batch.passed}/{result.batch.runs} runs verified "
            f"(pass rate {result.batch.pass_rate:.2f}) -> {batch_path}"
        )
        if args.strict and result.batch.passed != result.batch.runs:
            return EXIT_VERIFY_FAILED
        return EXIT_OK

    trace_path = Path(args.trace_out) if args.trace_out else out_dir / f"{stem}.trace.jsonl"
    dot_path = Path(args.dot_out) if args.dot_out else out_dir / f"{stem}.dag.dot"
    report_path = Path(args.report_out) if args.report_out else out_dir / f"{stem}.report.json"
    summary_path = Path(args.summary_out) if args.summary_out else out_dir / f"{stem}.summary.json"

    _write(trace_path, dump_jsonl(result.trace or []))
    _write(dot_path, result.dot or "")
    _write(report_path, _json_text(result.report.model_dump() if result.report else {}))
    _write(summary_path, _json_text(result.summary or {}))

    report_ok = bool(result.report and result.report.ok)
    print(
        f"{stem} seed={result.seed}: {result.summary['stamps']} stamps, "
        f"verification {'ok' if report_ok else 'FAILED'} -> {trace_path}"
    )
    if result.limit_exceeded:
        print(f"limit exceeded: {result.error}", file=sys.stderr)
        return EXIT_LIMIT
    if args.strict and not report_ok:
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        records = parse_jsonl(Path(args.trace).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {args.trace}: {exc}") from exc
    result = _dispatch_verify(VerifyRequest(trace=records), args.server)
    if args.report_out:
        _write(Path(args.report_out), _json_text(result.report.model_dump()))
    print(_json_text(result.report.model_dump()), end="")
    return EXIT_OK if result.ok else EXIT_VERIFY_FAILED


def cmd_export_dot(args: argparse.Namespace) -> int:
    try:
        records = parse_jsonl(Path(args.trace).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {args.trace}: {exc}") from exc
    request = ExportDotRequest(trace=records, collapse_transport=args.collapse_transport)
    result = _dispatch_export(request, args.server)
    if args.dot_out:
        _write(Path(args.dot_out), result.dot)
        print(f"wrote {args.dot_out}")
    else:
        print(result.dot, end="")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnetkernel",
        description="Run, verify and export commit-stamped entanglement simulations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write artifacts")
    run.add_argument("scenario", help="scenario JSON path or bundled name")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--batch", type=int, default=None, metavar="N", help="run N seeds from --seed upward")
    run.add_argument("--strict", action="store_true", help="nonzero exit when verification fails")
    run.add_argument("--no-hints", action="store_true", help="strip all control-plane hints")
    run.add_argument("--collapse-transport", action="store_true", help="hide forward commits in the DOT view")
    run.add_argument("--verbose", action="store_true", help="include kernel debug records in the trace")
    run.add_argument("--out-dir", default=".", help="directory for default artifact paths")
    run.add_argument("--trace-out", default=None)
    run.add_argument("--dot-out", default=None)
    run.add_argument("--report-out", default=None)
    run.add_argument("--summary-out", default=None)
    run.add_argument("--batch-out", default=None)
    run.add_argument("--server", default=None, help="POST to a running service instead of in-process")
    run.set_defaults(fn=cmd_run)

    verify = sub.add_parser("verify", help="verify a trace file's commit-graph guarantees")
    verify.add_argument("trace", help="trace JSONL path")
    verify.add_argument("--report-out", default=None)
    verify.add_argument("--server", default=None)
    verify.set_defaults(fn=cmd_verify)

    export = sub.add_parser("export-dot", help="render a trace's commit graph as DOT")
    export.add_argument("trace", help="trace JSONL path")
    export.add_argument("--collapse-transport", action="store_true")
    export.add_argument("--dot-out", default=None)
    export.add_argument("--server", default=None)
    export.set_defaults(fn=cmd_export_dot)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except LimitExceeded as exc:
        print(f"limit exceeded: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except QnkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
