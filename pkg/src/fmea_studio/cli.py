"""Command line entry points: evaluate, serve, openapi.

Service wiring comes from FMEA_* environment variables (see
``AppConfig.from_env``); flags cover the per-invocation knobs.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .api import AppConfig, build_embedder, build_text_service, create_app
from .errors import FmeaError
from .evaluation import DEFAULT_THRESHOLD, run_benchmark
from .generation import ContextMode, RetryPolicy
from .persistence import StudyRepository
from .vector_index import VectorStore


def _parse_scenarios(text: str) -> list[ContextMode]:
    return [ContextMode.parse(part) for part in text.split(",") if part.strip()]


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = AppConfig.from_env()
    text_service = build_text_service(config)
    if text_service is None:
        print(
            "evaluate needs a text service; set FMEA_TEXT_SERVICE_URL or"
            " FMEA_TEXT_FIXTURE",
            file=sys.stderr,
        )
        return 2
    embedder = build_embedder(config)
    repository = StudyRepository(args.db)
    report, table = run_benchmark(
        args.cases,
        _parse_scenarios(args.scenarios),
        repository=repository,
        vector_store=VectorStore(),
        text_service=text_service,
        embedder=embedder,
        threshold=args.threshold,
        retry_policy=RetryPolicy(
            timeout_seconds=config.timeout_seconds,
            max_retries=config.max_retries,
            backoff_base_seconds=config.backoff_base_seconds,
        ),
    )
    sys.stdout.write(table)
    if args.out:
        _write_output(Path(args.out), json.dumps(report.to_dict(), indent=2) + "\n")
    return 0


def _write_output(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    app = create_app(AppConfig.from_env())
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_openapi(args: argparse.Namespace) -> int:
    app = create_app(AppConfig())
    text = json.dumps(app.openapi(), indent=2, sort_keys=True) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _write_output(Path(args.out), text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmea-studio",
        description="Interactive FMEA tree building with retrieval-grounded generation.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    evaluate = sub.add_parser(
        "evaluate", help="score generated failure locations against gold lists"
    )
    evaluate.add_argument("--cases", required=True, help="JSON case file")
    evaluate.add_argument(
        "--scenarios",
        default="zero-shot,chunks:3,chunks:5,long",
        help="comma-separated: zero-shot, chunks:N, long",
    )
    evaluate.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    evaluate.add_argument("--out", default=None, help="also write a JSON report here")
    evaluate.add_argument("--db", default=":memory:", help="working database path")
    evaluate.set_defaults(func=_cmd_evaluate)

    serve = sub.add_parser("serve", help="run the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=_cmd_serve)

    openapi = sub.add_parser("openapi", help="print the API schema as JSON")
    openapi.add_argument("--out", default="-", help="output file, - for stdout")
    openapi.set_defaults(func=_cmd_openapi)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except FmeaError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
