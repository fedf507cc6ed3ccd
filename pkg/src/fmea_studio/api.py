"""HTTP facade over ingestion, generation, and export.

Every domain error maps to one structured body: ``{code, message,
details}`` with the code drawn from the published set. The app factory
takes a config object so tests can wire scripted services and an
in-memory database.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping
from uuid import uuid4

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import __version__
from .errors import (
    EMPTY_DOCUMENT,
    EMPTY_TREE,
    NOT_FOUND,
    PUBLISHED_CODES,
    SERVICE_UNAVAILABLE,
    STEP_ORDER_VIOLATION,
    UNPARSEABLE,
    VALIDATION_FAILED,
    FmeaError,
    ServiceUnavailableError,
    ValidationFailedError,
)
from .generation import ContextMode, EditOp, Orchestrator, RetryPolicy
from .ingestion import (
    CLEANING_INSTRUCTION,
    TABLE_SUMMARY_INSTRUCTION,
    DocumentFormat,
    index_document,
    make_document,
)
from .model import GenerationStep, Study, study_to_dict, tree_to_dict
from .persistence import StudyRepository
from .providers import (
    EmbeddingProvider,
    EntityMarkerTextService,
    HashEmbeddingProvider,
    HttpEmbeddingProvider,
    HttpTextService,
    ScriptedEmbeddingProvider,
    ScriptedTextService,
    TextService,
)
from .vector_index import VectorStore

logger = logging.getLogger(__name__)

_STATUS_BY_CODE = {
    VALIDATION_FAILED: 400,
    EMPTY_DOCUMENT: 400,
    NOT_FOUND: 404,
    STEP_ORDER_VIOLATION: 409,
    EMPTY_TREE: 409,
    UNPARSEABLE: 422,
    SERVICE_UNAVAILABLE: 503,
}


@dataclass
class AppConfig:
    """Wiring for one server process; every field has an env var twin."""

    db_path: str = ":memory:"
    vector_store_path: str | None = None
    text_fixture: str | None = None
    text_service_url: str | None = None
    text_service_token: str | None = None
    text_marker: bool = False
    embed_fixture: str | None = None
    embed_service_url: str | None = None
    embed_service_token: str | None = None
    embed_dim: int = 64
    default_k: int = 5
    timeout_seconds: float = 30.0
    max_retries: int = 2
    backoff_base_seconds: float = 0.5
    frontend_dist: str | None = None

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> "AppConfig":
        env = os.environ if env is None else env
        return cls(
            db_path=env.get("FMEA_DB_PATH", ":memory:"),
            vector_store_path=env.get("FMEA_VECTOR_STORE_PATH"),
            text_fixture=env.get("FMEA_TEXT_FIXTURE"),
            text_service_url=env.get("FMEA_TEXT_SERVICE_URL"),
            text_service_token=env.get("FMEA_TEXT_SERVICE_TOKEN"),
            text_marker=env.get("FMEA_TEXT_MARKER", "") == "1",
            embed_fixture=env.get("FMEA_EMBED_FIXTURE"),
            embed_service_url=env.get("FMEA_EMBED_SERVICE_URL"),
            embed_service_token=env.get("FMEA_EMBED_SERVICE_TOKEN"),
            embed_dim=int(env.get("FMEA_EMBED_DIM", "64")),
            default_k=int(env.get("FMEA_DEFAULT_K", "5")),
            timeout_seconds=float(env.get("FMEA_TIMEOUT_SECONDS", "30")),
            max_retries=int(env.get("FMEA_MAX_RETRIES", "2")),
            backoff_base_seconds=float(env.get("FMEA_BACKOFF_SECONDS", "0.5")),
            frontend_dist=env.get("FMEA_FRONTEND_DIST"),
        )


def build_text_service(config: AppConfig) -> TextService | None:
    """The configured text service, or None when generation is unavailable."""
    if config.text_fixture:
        return ScriptedTextService.from_file(config.text_fixture)
    if config.text_service_url:
        return HttpTextService(
            config.text_service_url,
            token=config.text_service_token,
            timeout=config.timeout_seconds,
        )
    if config.text_marker:
        return EntityMarkerTextService(
            passthrough_instructions=(CLEANING_INSTRUCTION, TABLE_SUMMARY_INSTRUCTION)
        )
    return None


def build_embedder(config: AppConfig) -> EmbeddingProvider:
    if config.embed_fixture:
        return ScriptedEmbeddingProvider.from_file(config.embed_fixture)
    if config.embed_service_url:
        return HttpEmbeddingProvider(
            config.embed_service_url,
            token=config.embed_service_token,
            timeout=config.timeout_seconds,
        )
    return HashEmbeddingProvider(dim=config.embed_dim)


class _UnconfiguredTextService:
    """Stands in when no text service is wired; ingestion still works degraded."""

    def complete(self, request: Any) -> str:
        raise ServiceUnavailableError("no text service is configured")


class DocumentUploadBody(BaseModel):
    title: str
    content: str
    format: str = "PlainText"


class StudyCreateBody(BaseModel):
    asset_name: str
    asset_description: str = ""
    document_ids: list[str] = []


class GenerateBody(BaseModel):
    mode: str | None = None
    k: int | None = None
    parent_node_id: str | None = None


class EditOpBody(BaseModel):
    kind: str
    target: str | None = None
    new_text: str | None = None


class AcceptBody(BaseModel):
    result_ref: str
    edits: list[EditOpBody] = []
    complete_level: bool = True


def _error_body(code: str, message: str, details: dict[str, Any]) -> dict[str, Any]:
    if code not in PUBLISHED_CODES:
        logger.error("unpublished error code %r; reporting VALIDATION_FAILED", code)
        code = VALIDATION_FAILED
    return {"code": code, "message": message, "details": details}


def create_app(config: AppConfig | None = None) -> FastAPI:
    config = config or AppConfig()
    repository = StudyRepository(config.db_path)
    if config.vector_store_path and Path(config.vector_store_path).is_file():
        store = VectorStore.load(config.vector_store_path)
    else:
        store = VectorStore()
    text_service = build_text_service(config)
    embedder = build_embedder(config)
    orchestrator = Orchestrator(
        repository,
        store,
        text_service or _UnconfiguredTextService(),
        embedder,
        retry_policy=RetryPolicy(
            timeout_seconds=config.timeout_seconds,
            max_retries=config.max_retries,
            backoff_base_seconds=config.backoff_base_seconds,
        ),
        default_k=config.default_k,
    )

    app = FastAPI(title="FMEA Studio API", version=__version__)
    app.state.config = config
    app.state.repository = repository
    app.state.vector_store = store
    app.state.orchestrator = orchestrator

    @app.exception_handler(FmeaError)
    async def fmea_error_handler(request: Request, exc: FmeaError) -> JSONResponse:
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(
            status_code=status,
            content=_error_body(exc.code, exc.message, exc.details),
        )

    @app.exception_handler(RequestValidationError)
    async def body_error_handler(
        request: Request, exc: RequestValidationError
    ) -> JSONResponse:
        details = {
            "errors": [
                {"loc": [str(x) for x in err.get("loc", ())], "msg": str(err.get("msg", ""))}
                for err in exc.errors()
            ]
        }
        return JSONResponse(
            status_code=400,
            content=_error_body(VALIDATION_FAILED, "request body is invalid", details),
        )

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok", "version": __version__}

    @app.post("/documents", status_code=201)
    def upload_document(body: DocumentUploadBody) -> dict[str, Any]:
        try:
            fmt = DocumentFormat(body.format)
        except ValueError as exc:
            raise ValidationFailedError(f"unknown document format {body.format!r}") from exc
        document = make_document(body.title, body.content, fmt)
        receipt = index_document(document, text_service, embedder, store, repository)
        if config.vector_store_path:
            store.save(config.vector_store_path)
        return {
            "document_id": receipt.document_id,
            "title": document.title,
            "format": fmt.value,
            "chunk_count": receipt.chunk_count,
            "table_count": receipt.table_count,
            "degraded": receipt.degraded,
        }

    @app.get("/documents")
    def list_documents() -> dict[str, Any]:
        return {
            "documents": [
                {
                    "document_id": d.document_id,
                    "title": d.title,
                    "format": d.format.value,
                    "chunk_count": d.chunk_count,
                    "table_count": d.table_count,
                }
                for d in repository.list_documents()
            ]
        }

    @app.post("/studies", status_code=201)
    def create_study(body: StudyCreateBody) -> dict[str, Any]:
        study = Study(
            study_id=uuid4().hex[:12],
            asset_name=body.asset_name,
            asset_description=body.asset_description,
            selected_document_ids=set(body.document_ids),
        )
        repository.create_study(study)
        return study_to_dict(study)

    @app.get("/studies")
    def list_studies() -> dict[str, Any]:
        return {"studies": [study_to_dict(s) for s in repository.list_studies()]}

    @app.get("/studies/{study_id}")
    def get_study(study_id: str) -> dict[str, Any]:
        study = repository.get_study(study_id)
        tree = repository.load_tree(study_id)
        return {
            "study": study_to_dict(study),
            "tree": tree_to_dict(tree) if tree is not None else None,
        }

    @app.get("/studies/{study_id}/tree")
    def get_tree(study_id: str) -> dict[str, Any]:
        tree = repository.load_tree(study_id)
        return {"tree": tree_to_dict(tree) if tree is not None else None}

    @app.post("/studies/{study_id}/steps/{step}/generate")
    def generate(study_id: str, step: str, body: GenerateBody) -> dict[str, Any]:
        step_enum = GenerationStep.from_text(step)
        mode: ContextMode | None = None
        if body.mode is not None:
            mode = ContextMode.parse(body.mode, default_k=body.k or config.default_k)
        elif body.k is not None:
            mode = ContextMode.top_k(body.k)
        result, token = orchestrator.run_step(
            study_id, step_enum, mode=mode, parent_node_id=body.parent_node_id
        )
        return {"result": result.to_dict(), "result_ref": token}

    @app.post("/studies/{study_id}/steps/{step}/accept")
    def accept(study_id: str, step: str, body: AcceptBody) -> dict[str, Any]:
        step_enum = GenerationStep.from_text(step)
        edits = [EditOp.from_dict(e.model_dump()) for e in body.edits]
        tree = orchestrator.accept_step(
            study_id,
            step_enum,
            body.result_ref,
            edits,
            complete_level=body.complete_level,
        )
        study = repository.get_study(study_id)
        return {"tree": tree_to_dict(tree), "study": study_to_dict(study)}

    @app.get("/studies/{study_id}/export")
    def export(study_id: str, format: str = "csv") -> Response:
        payload = repository.export_fmea(study_id, format)
        media = "text/csv; charset=utf-8" if format == "csv" else "application/json"
        extension = "csv" if format == "csv" else "json"
        return Response(
            content=payload,
            media_type=media,
            headers={
                "Content-Disposition": f'attachment; filename="fmea_{study_id}.{extension}"'
            },
        )

    if config.frontend_dist and Path(config.frontend_dist).is_dir():
        app.mount(
            "/ui", StaticFiles(directory=config.frontend_dist, html=True), name="ui"
        )

    return app
