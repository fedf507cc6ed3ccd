"""SQLite-backed storage for studies, documents, and committed trees.

A single `StudyRepository` owns one database file (or an in-memory
database for tests). Tree commits are transactional: `save_tree` either
replaces the whole stored tree or leaves the previous one untouched.
Exports render the committed tree as canonical JSON or as the flat
failure-mode CSV.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import re
import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources

from .errors import (
    EmptyTreeError,
    IntegrityViolationError,
    NotFoundError,
    StorageUnavailableError,
    ValidationFailedError,
)
from .ingestion import Chunk, Document, DocumentFormat, TableArtifact
from .model import (
    Boundary,
    DegradationInfluence,
    DegradationMechanism,
    FailureLocation,
    FmeaTree,
    GenerationStep,
    NodeOrigin,
    PreventiveTask,
    ProvenanceTag,
    Study,
    tree_to_dict,
    validate_tree,
)

logger = logging.getLogger(__name__)

EXPORT_CSV_HEADER = (
    "asset,failure_location,degradation_mechanism,degradation_influence,preventive_task"
)

_MIGRATION_NAME_RE = re.compile(r"^(\d{4})_[a-z0-9_]+\.sql$")


@dataclass(frozen=True)
class DocumentSummary:
    """Listing row for a stored document."""

    document_id: str
    title: str
    format: DocumentFormat
    chunk_count: int
    table_count: int


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _migration_scripts() -> list[tuple[int, str]]:
    """All packaged migrations as (version, sql), ordered by version."""
    root = resources.files(__package__).joinpath("migrations")
    scripts: list[tuple[int, str]] = []
    for entry in root.iterdir():
        m = _MIGRATION_NAME_RE.match(entry.name)
        if not m:
            continue
        scripts.append((int(m.group(1)), entry.read_text(encoding="utf-8")))
    scripts.sort(key=lambda pair: pair[0])
    return scripts


class StudyRepository:
    """All reads and writes for one FMEA database.

    Thread-safe for the API's worker pool: a single process-wide write
    lock serializes mutations, and the connection is shared across
    threads. SQLite enforces the sibling-uniqueness and cascade rules a
    second time underneath the Python-level validation.
    """

    def __init__(self, path: str = ":memory:") -> None:
        self._path = path
        self._lock = threading.RLock()
        try:
            self._conn = sqlite3.connect(path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise StorageUnavailableError(f"cannot open database at {path!r}: {exc}") from exc
        self._conn.row_factory = sqlite3.Row
        self._conn.execute("PRAGMA foreign_keys = ON")
        self._migrate()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def _migrate(self) -> None:
        with self._lock, self._conn:
            cur = self._conn.execute(
                "SELECT name FROM sqlite_master WHERE type = 'table' AND name = 'schema_version'"
            )
            current = 0
            if cur.fetchone() is not None:
                row = self._conn.execute("SELECT MAX(version) AS v FROM schema_version").fetchone()
                current = row["v"] or 0
            for version, sql in _migration_scripts():
                if version <= current:
                    continue
                self._conn.executescript(sql)
                self._conn.execute("INSERT INTO schema_version (version) VALUES (?)", (version,))
                logger.info("applied schema migration %04d", version)

    # ------------------------------------------------------------------ studies

    def create_study(self, study: Study) -> Study:
        with self._lock, self._conn:
            for document_id in study.selected_document_ids:
                if not self._document_exists(document_id):
                    raise NotFoundError(f"document {document_id!r} does not exist")
            try:
                self._conn.execute(
                    "INSERT INTO studies (study_id, asset_name, asset_description,"
                    " current_step, created_at) VALUES (?, ?, ?, ?, ?)",
                    (
                        study.study_id,
                        study.asset_name,
                        study.asset_description,
                        study.current_step.value,
                        study.created_at.isoformat(),
                    ),
                )
            except sqlite3.IntegrityError as exc:
                raise IntegrityViolationError(f"study {study.study_id!r} already exists") from exc
            self._conn.executemany(
                "INSERT INTO study_documents (study_id, document_id) VALUES (?, ?)",
                [(study.study_id, d) for d in study.selected_document_ids],
            )
        return study

    def get_study(self, study_id: str) -> Study:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM studies WHERE study_id = ?", (study_id,)
            ).fetchone()
            if row is None:
                raise NotFoundError(f"study {study_id!r} does not exist")
            docs = self._conn.execute(
                "SELECT document_id FROM study_documents WHERE study_id = ? ORDER BY document_id",
                (study_id,),
            ).fetchall()
        return Study(
            study_id=row["study_id"],
            asset_name=row["asset_name"],
            asset_description=row["asset_description"],
            selected_document_ids={r["document_id"] for r in docs},
            current_step=GenerationStep.from_text(row["current_step"]),
            created_at=datetime.fromisoformat(row["created_at"]),
        )

    def list_studies(self) -> list[Study]:
        with self._lock:
            rows = self._conn.execute("SELECT study_id FROM studies ORDER BY created_at").fetchall()
        return [self.get_study(r["study_id"]) for r in rows]

    def set_current_step(self, study_id: str, step: GenerationStep) -> None:
        with self._lock, self._conn:
            cur = self._conn.execute(
                "UPDATE studies SET current_step = ? WHERE study_id = ?",
                (step.value, study_id),
            )
            if cur.rowcount == 0:
                raise NotFoundError(f"study {study_id!r} does not exist")

    # ---------------------------------------------------------------- documents

    def _document_exists(self, document_id: str) -> bool:
        row = self._conn.execute(
            "SELECT 1 FROM documents WHERE document_id = ?", (document_id,)
        ).fetchone()
        return row is not None

    def save_document(
        self,
        document: Document,
        chunks: list[Chunk],
        tables: list[TableArtifact] | None = None,
    ) -> None:
        """Store a document with its derived chunks and table artifacts.

        Re-saving the same document id replaces the derived rows, so
        re-ingestion stays idempotent.
        """
        tables = tables or []
        for chunk in chunks:
            if chunk.document_id != document.document_id:
                raise ValidationFailedError(
                    f"chunk {chunk.chunk_id!r} belongs to document {chunk.document_id!r}"
                )
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO documents (document_id, title, format, raw_text, created_at)"
                " VALUES (?, ?, ?, ?, ?)"
                " ON CONFLICT (document_id) DO UPDATE SET"
                " title = excluded.title, format = excluded.format, raw_text = excluded.raw_text",
                (
                    document.document_id,
                    document.title,
                    document.format.value,
                    document.raw_text,
                    _now(),
                ),
            )
            self._conn.execute(
                "DELETE FROM chunks WHERE document_id = ?", (document.document_id,)
            )
            self._conn.execute(
                "DELETE FROM tables_artifacts WHERE document_id = ?", (document.document_id,)
            )
            self._conn.executemany(
                "INSERT INTO chunks (chunk_id, document_id, ordinal, text, char_length)"
                " VALUES (?, ?, ?, ?, ?)",
                [
                    (c.chunk_id, c.document_id, c.ordinal, c.text, c.char_length)
                    for c in chunks
                ],
            )
            self._conn.executemany(
                "INSERT INTO tables_artifacts (table_id, document_id, position, markdown,"
                " caption, summary) VALUES (?, ?, ?, ?, ?, ?)",
                [
                    (t.table_id, t.document_id, i, t.markdown, t.caption, t.summary)
                    for i, t in enumerate(tables)
                ],
            )

    def get_document(self, document_id: str) -> Document:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM documents WHERE document_id = ?", (document_id,)
            ).fetchone()
        if row is None:
            raise NotFoundError(f"document {document_id!r} does not exist")
        return Document(
            document_id=row["document_id"],
            title=row["title"],
            format=DocumentFormat(row["format"]),
            raw_text=row["raw_text"],
        )

    def list_documents(self) -> list[DocumentSummary]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT d.document_id, d.title, d.format,"
                " (SELECT COUNT(*) FROM chunks c WHERE c.document_id = d.document_id)"
                "   AS chunk_count,"
                " (SELECT COUNT(*) FROM tables_artifacts t WHERE t.document_id = d.document_id)"
                "   AS table_count"
                " FROM documents d ORDER BY d.created_at, d.document_id"
            ).fetchall()
        return [
            DocumentSummary(
                document_id=r["document_id"],
                title=r["title"],
                format=DocumentFormat(r["format"]),
                chunk_count=r["chunk_count"],
                table_count=r["table_count"],
            )
            for r in rows
        ]

    def document_text(self, document_id: str) -> str:
        """Filtered document text, reassembled from stored chunks in order."""
        with self._lock:
            if not self._document_exists(document_id):
                raise NotFoundError(f"document {document_id!r} does not exist")
            rows = self._conn.execute(
                "SELECT text FROM chunks WHERE document_id = ? ORDER BY ordinal",
                (document_id,),
            ).fetchall()
        return "".join(r["text"] for r in rows)

    # -------------------------------------------------------------------- trees

    def save_tree(
        self,
        study_id: str,
        tree: FmeaTree,
        *,
        current_step: GenerationStep | None = None,
    ) -> None:
        """Replace the committed tree for a study in one transaction.

        Optionally advances the stored current step in the same
        transaction so a commit-plus-advance cannot end up half applied.
        """
        validate_tree(tree)
        with self._lock:
            try:
                with self._conn:
                    if not self._study_exists(study_id):
                        raise NotFoundError(f"study {study_id!r} does not exist")
                    self._delete_tree_rows(study_id)
                    self._insert_tree_rows(study_id, tree)
                    self._conn.execute(
                        "UPDATE studies SET has_boundary = 1, functional_overview = ?"
                        " WHERE study_id = ?",
                        (tree.boundary.functional_overview, study_id),
                    )
                    if current_step is not None:
                        self._conn.execute(
                            "UPDATE studies SET current_step = ? WHERE study_id = ?",
                            (current_step.value, study_id),
                        )
            except sqlite3.IntegrityError as exc:
                raise IntegrityViolationError(f"tree violates a storage constraint: {exc}") from exc

    def _study_exists(self, study_id: str) -> bool:
        row = self._conn.execute(
            "SELECT 1 FROM studies WHERE study_id = ?", (study_id,)
        ).fetchone()
        return row is not None

    def _delete_tree_rows(self, study_id: str) -> None:
        self._conn.execute("DELETE FROM boundary_parts WHERE study_id = ?", (study_id,))
        self._conn.execute("DELETE FROM failure_locations WHERE study_id = ?", (study_id,))
        self._conn.execute("DELETE FROM node_provenance WHERE study_id = ?", (study_id,))

    def _insert_tree_rows(self, study_id: str, tree: FmeaTree) -> None:
        self._conn.executemany(
            "INSERT INTO boundary_parts (study_id, position, name) VALUES (?, ?, ?)",
            [(study_id, i, name) for i, name in enumerate(tree.boundary.main_parts)],
        )
        provenance_rows: list[tuple[str, str, str, str]] = []

        def tag_row(node_id: str, tag: ProvenanceTag) -> None:
            provenance_rows.append(
                (study_id, node_id, tag.origin.value, json.dumps(list(tag.source_chunk_ids)))
            )

        for li, location in enumerate(tree.locations):
            self._conn.execute(
                "INSERT INTO failure_locations (node_id, study_id, position, name)"
                " VALUES (?, ?, ?, ?)",
                (location.node_id, study_id, li, location.name),
            )
            tag_row(location.node_id, location.provenance)
            for mi, mechanism in enumerate(location.mechanisms):
                self._conn.execute(
                    "INSERT INTO degradation_mechanisms (node_id, location_id, position, name)"
                    " VALUES (?, ?, ?, ?)",
                    (mechanism.node_id, location.node_id, mi, mechanism.name),
                )
                tag_row(mechanism.node_id, mechanism.provenance)
                for ii, influence in enumerate(mechanism.influences):
                    self._conn.execute(
                        "INSERT INTO degradation_influences (node_id, mechanism_id, position,"
                        " name) VALUES (?, ?, ?, ?)",
                        (influence.node_id, mechanism.node_id, ii, influence.name),
                    )
                    tag_row(influence.node_id, influence.provenance)
                    for ti, task in enumerate(influence.tasks):
                        self._conn.execute(
                            "INSERT INTO preventive_tasks (node_id, influence_id, position,"
                            " description) VALUES (?, ?, ?, ?)",
                            (task.node_id, influence.node_id, ti, task.description),
                        )
                        tag_row(task.node_id, task.provenance)
        self._conn.executemany(
            "INSERT INTO node_provenance (study_id, node_id, origin, source_chunk_ids)"
            " VALUES (?, ?, ?, ?)",
            provenance_rows,
        )

    def load_tree(self, study_id: str) -> FmeaTree | None:
        """The committed tree, or None when nothing has been committed."""
        with self._lock:
            row = self._conn.execute(
                "SELECT has_boundary, functional_overview FROM studies WHERE study_id = ?",
                (study_id,),
            ).fetchone()
            if row is None:
                raise NotFoundError(f"study {study_id!r} does not exist")
            if not row["has_boundary"]:
                return None
            parts = [
                r["name"]
                for r in self._conn.execute(
                    "SELECT name FROM boundary_parts WHERE study_id = ? ORDER BY position",
                    (study_id,),
                )
            ]
            tags: dict[str, ProvenanceTag] = {}
            for r in self._conn.execute(
                "SELECT node_id, origin, source_chunk_ids FROM node_provenance"
                " WHERE study_id = ?",
                (study_id,),
            ):
                tags[r["node_id"]] = ProvenanceTag(
                    origin=NodeOrigin(r["origin"]),
                    source_chunk_ids=tuple(json.loads(r["source_chunk_ids"])),
                )
            locations = [
                self._load_location(r, tags)
                for r in self._conn.execute(
                    "SELECT node_id, name FROM failure_locations WHERE study_id = ?"
                    " ORDER BY position",
                    (study_id,),
                ).fetchall()
            ]
        tree = FmeaTree(
            boundary=Boundary(functional_overview=row["functional_overview"], main_parts=parts),
            locations=locations,
        )
        validate_tree(tree)
        return tree

    def _tag(self, tags: dict[str, ProvenanceTag], node_id: str) -> ProvenanceTag:
        tag = tags.get(node_id)
        if tag is None:
            logger.warning("node %s has no provenance row; treating as generated", node_id)
            return ProvenanceTag(origin=NodeOrigin.GENERATED, source_chunk_ids=())
        return tag

    def _load_location(
        self, row: sqlite3.Row, tags: dict[str, ProvenanceTag]
    ) -> FailureLocation:
        mechanisms = [
            self._load_mechanism(r, tags)
            for r in self._conn.execute(
                "SELECT node_id, name FROM degradation_mechanisms WHERE location_id = ?"
                " ORDER BY position",
                (row["node_id"],),
            ).fetchall()
        ]
        return FailureLocation(
            node_id=row["node_id"],
            name=row["name"],
            mechanisms=mechanisms,
            provenance=self._tag(tags, row["node_id"]),
        )

    def _load_mechanism(
        self, row: sqlite3.Row, tags: dict[str, ProvenanceTag]
    ) -> DegradationMechanism:
        influences = [
            self._load_influence(r, tags)
            for r in self._conn.execute(
                "SELECT node_id, name FROM degradation_influences WHERE mechanism_id = ?"
                " ORDER BY position",
                (row["node_id"],),
            ).fetchall()
        ]
        return DegradationMechanism(
            node_id=row["node_id"],
            name=row["name"],
            influences=influences,
            provenance=self._tag(tags, row["node_id"]),
        )

    def _load_influence(
        self, row: sqlite3.Row, tags: dict[str, ProvenanceTag]
    ) -> DegradationInfluence:
        tasks = [
            PreventiveTask(
                node_id=r["node_id"],
                description=r["description"],
                provenance=self._tag(tags, r["node_id"]),
            )
            for r in self._conn.execute(
                "SELECT node_id, description FROM preventive_tasks WHERE influence_id = ?"
                " ORDER BY position",
                (row["node_id"],),
            ).fetchall()
        ]
        return DegradationInfluence(
            node_id=row["node_id"],
            name=row["name"],
            tasks=tasks,
            provenance=self._tag(tags, row["node_id"]),
        )

    # ------------------------------------------------------------------ exports

    def export_fmea(self, study_id: str, format: str = "csv") -> bytes:
        """Render the committed tree as UTF-8 CSV or JSON bytes."""
        study = self.get_study(study_id)
        tree = self.load_tree(study_id)
        if tree is None:
            raise EmptyTreeError(f"study {study_id!r} has no committed tree to export")
        if format == "csv":
            return self._export_csv(study, tree)
        if format == "json":
            return self._export_json(tree)
        raise ValidationFailedError(f"unknown export format {format!r}")

    def _export_csv(self, study: Study, tree: FmeaTree) -> bytes:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(EXPORT_CSV_HEADER.split(","))
        for location in tree.locations:
            for mechanism in location.mechanisms:
                for influence in mechanism.influences:
                    descriptions = [t.description for t in influence.tasks] or [""]
                    for description in descriptions:
                        writer.writerow(
                            [
                                study.asset_name,
                                location.name,
                                mechanism.name,
                                influence.name,
                                description,
                            ]
                        )
        return buffer.getvalue().encode("utf-8")

    def _export_json(self, tree: FmeaTree) -> bytes:
        # The JSON export IS the canonical tree serialization, nothing more,
        # so a re-import and the live tree endpoint agree byte for byte.
        payload = tree_to_dict(tree)
        return (json.dumps(payload, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
