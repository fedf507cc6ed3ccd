"""Document preprocessing: blocks, noise filtering, chunking, table artifacts.

Pipeline per document: parse the raw text into typed blocks, drop page
furniture, merge surviving text into cohesive paragraphs (service-assisted
with a deterministic rule-based fallback), cut size-bounded chunks, and turn
pipe tables into markdown artifacts indexed by a written summary.

Inputs are UTF-8 plain text or markdown; GitHub-style pipe tables are the
only recognized table syntax.
"""

from __future__ import annotations

import bisect
import hashlib
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import EmptyDocumentError, FmeaError, ValidationFailedError
from .providers import TextRequest, TextService
from .vector_index import EmbeddingProvider, EntryKind, IndexEntry, VectorStore, embed

logger = logging.getLogger(__name__)

DEFAULT_MAX_CHUNK_LEN = 1024
MIN_CHUNK_LEN = 64

CLEANING_INSTRUCTION = (
    "You reassemble noisy text extracted from a technical document into cohesive "
    "paragraphs. Rejoin fragments that belong together, keep the original wording, "
    "and separate paragraphs with blank lines. Return only the cleaned text."
)

TABLE_SUMMARY_INSTRUCTION = (
    "Write one short paragraph describing what the following table contains, so the "
    "description can serve as a search key for it. Return only that paragraph."
)


class DocumentFormat(Enum):
    PLAIN_TEXT = "PlainText"
    MARKDOWN = "Markdown"


class BlockKind(Enum):
    TEXT = "Text"
    TABLE = "Table"
    HEADING = "Heading"
    PAGE_FURNITURE = "PageFurniture"


@dataclass
class Document:
    document_id: str
    title: str
    raw_text: str
    format: DocumentFormat
    page_markers: list[int] | None = None

    def __post_init__(self) -> None:
        if not self.raw_text.strip():
            raise EmptyDocumentError(f"document {self.title!r} has no content")
        if self.page_markers is not None:
            if any(b <= a for a, b in zip(self.page_markers, self.page_markers[1:])):
                raise ValidationFailedError("page_markers must be strictly increasing")


def make_document(
    title: str,
    raw_text: str,
    format: DocumentFormat = DocumentFormat.PLAIN_TEXT,
    page_markers: list[int] | None = None,
) -> Document:
    """Build a document with a content-derived id, so re-uploads are idempotent."""
    digest = hashlib.sha1(
        f"{title}\x00{format.value}\x00{raw_text}".encode("utf-8")
    ).hexdigest()
    return Document(
        document_id=digest[:12],
        title=title,
        raw_text=raw_text,
        format=format,
        page_markers=page_markers,
    )


@dataclass
class Block:
    block_id: str
    kind: BlockKind
    content: str
    source_span: tuple[int, int]


@dataclass
class Paragraph:
    paragraph_id: str
    text: str
    source_block_ids: list[str] = field(default_factory=list)


@dataclass
class Chunk:
    chunk_id: str
    document_id: str
    text: str
    char_length: int
    ordinal: int


@dataclass
class TableArtifact:
    table_id: str
    document_id: str
    markdown: str
    caption: str | None = None
    summary: str = ""


@dataclass
class FilterResult:
    paragraphs: list[Paragraph]
    degraded: bool = False


@dataclass
class IngestionReceipt:
    document_id: str
    chunk_count: int
    table_count: int
    degraded: bool


# --- block parsing ------------------------------------------------------------

_PAGE_NUMBER_RE = re.compile(r"^page \d+( of \d+)?$", re.IGNORECASE)
_BARE_INTEGER_RE = re.compile(r"^\d+$")
_FOOTNOTE_RE = re.compile(r"^(†|\*|\[\d+\])")
_CAPTION_RE = re.compile(r"^(table|figure|fig\.?)\s+\d+", re.IGNORECASE)
_HEADING_RE = re.compile(r"^#{1,6}\s+\S")
_PIPE_ROW_RE = re.compile(r"^\s*\|.*\|\s*$")
_SEPARATOR_CELL_RE = re.compile(r"^:?-{3,}:?$")


def _split_lines_with_spans(raw_text: str) -> list[tuple[str, int, int]]:
    """Lines with (start, end) character offsets; end excludes the newline."""
    lines = []
    start = 0
    for line in raw_text.splitlines(keepends=True):
        body = line.rstrip("\n").rstrip("\r")
        lines.append((body, start, start + len(body)))
        start += len(line)
    return lines


def _repeated_across_pages(
    lines: list[tuple[str, int, int]], page_markers: list[int] | None
) -> set[str]:
    """Trimmed line texts appearing verbatim on three or more pages."""
    if not page_markers:
        return set()
    pages_of: dict[str, set[int]] = {}
    for body, start, _ in lines:
        text = body.strip()
        if not text:
            continue
        page = bisect.bisect_right(page_markers, start)
        pages_of.setdefault(text, set()).add(page)
    return {text for text, pages in pages_of.items() if len(pages) >= 3}


def _is_page_furniture(trimmed: str, repeated: set[str]) -> bool:
    if _PAGE_NUMBER_RE.match(trimmed):
        return True
    if _BARE_INTEGER_RE.match(trimmed):
        return True
    if len(trimmed) < 80 and _FOOTNOTE_RE.match(trimmed):
        return True
    if len(trimmed) < 120 and _CAPTION_RE.match(trimmed):
        return True
    return trimmed in repeated


def _parse_pipe_cells(line: str) -> list[str]:
    inner = line.strip()
    if inner.startswith("|"):
        inner = inner[1:]
    if inner.endswith("|"):
        inner = inner[:-1]
    return [cell.strip() for cell in inner.split("|")]


def _is_separator_row(cells: list[str]) -> bool:
    return bool(cells) and all(_SEPARATOR_CELL_RE.match(c) for c in cells)


def normalize_table(rows: list[list[str]]) -> str:
    """Rebuild a rectangular pipe table with trimmed cells and a separator row."""
    header, *body = rows
    lines = ["| " + " | ".join(header) + " |"]
    lines.append("| " + " | ".join("---" for _ in header) + " |")
    for row in body:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def parse_document(
    raw_text: str,
    format: DocumentFormat = DocumentFormat.PLAIN_TEXT,
    page_markers: list[int] | None = None,
) -> list[Block]:
    """Split raw text into ordered, non-overlapping typed blocks.

    Spans tile the document: every non-whitespace character falls inside
    exactly one block span. A ragged pipe-table row is demoted to Text with a
    warning rather than failing the parse.
    """
    if not raw_text.strip():
        raise EmptyDocumentError("document text is blank")

    lines = _split_lines_with_spans(raw_text)
    repeated = _repeated_across_pages(lines, page_markers)

    blocks: list[Block] = []
    text_run: list[tuple[str, int, int]] = []

    def emit(kind: BlockKind, content: str, span: tuple[int, int]) -> None:
        blocks.append(Block(f"b{len(blocks)}", kind, content, span))

    def flush_text_run() -> None:
        if not text_run:
            return
        start = text_run[0][1]
        end = text_run[-1][2]
        emit(BlockKind.TEXT, raw_text[start:end], (start, end))
        text_run.clear()

    i = 0
    while i < len(lines):
        body, start, end = lines[i]
        trimmed = body.strip()

        if not trimmed:
            flush_text_run()
            i += 1
            continue

        # Pipe table: header row + separator row, then data rows.
        if _PIPE_ROW_RE.match(body) and i + 1 < len(lines):
            next_cells = _parse_pipe_cells(lines[i + 1][0])
            if _PIPE_ROW_RE.match(lines[i + 1][0]) and _is_separator_row(next_cells):
                flush_text_run()
                header = _parse_pipe_cells(body)
                width = len(header)
                rows = [header]
                table_end = lines[i + 1][2]
                j = i + 2
                ragged: tuple[str, int, int] | None = None
                while j < len(lines) and _PIPE_ROW_RE.match(lines[j][0]):
                    cells = _parse_pipe_cells(lines[j][0])
                    if len(cells) != width:
                        # Ragged row: close the table here and demote the row.
                        logger.warning(
                            "malformed table: row with %d cells in a %d-column "
                            "table; emitting row as text",
                            len(cells),
                            width,
                        )
                        ragged = lines[j]
                        j += 1
                        break
                    rows.append(cells)
                    table_end = lines[j][2]
                    j += 1
                emit(BlockKind.TABLE, normalize_table(rows), (start, table_end))
                if ragged is not None:
                    emit(BlockKind.TEXT, ragged[0], (ragged[1], ragged[2]))
                i = j
                continue

        if format is DocumentFormat.MARKDOWN and _HEADING_RE.match(trimmed):
            flush_text_run()
            emit(BlockKind.HEADING, body, (start, end))
            i += 1
            continue

        if _is_page_furniture(trimmed, repeated):
            flush_text_run()
            emit(BlockKind.PAGE_FURNITURE, body, (start, end))
            i += 1
            continue

        text_run.append((body, start, end))
        i += 1

    flush_text_run()
    return blocks


# --- noise filtering ----------------------------------------------------------

_SENTENCE_END = (".", "!", "?", ":", ";")


def _unwrap_block_lines(content: str) -> str:
    """Join soft-wrapped lines of one block, mending hyphen-broken words."""
    lines = [ln.strip() for ln in content.splitlines() if ln.strip()]
    out = ""
    for line in lines:
        if not out:
            out = line
        elif out.endswith("-") and line[:1].islower():
            out = out[:-1] + line
        else:
            out += " " + line
    return out


def _rule_based_paragraphs(run: list[Block]) -> list[tuple[str, list[str]]]:
    """Deterministic cohesion merge: (text, contributing block ids) pairs."""
    merged: list[tuple[str, list[str]]] = []
    for block in run:
        text = _unwrap_block_lines(block.content)
        if not text:
            continue
        if merged:
            prev_text, prev_ids = merged[-1]
            if prev_text.endswith("-") and text[:1].islower():
                merged[-1] = (prev_text[:-1] + text, prev_ids + [block.block_id])
                continue
            if not prev_text.endswith(_SENTENCE_END) and text[:1].islower():
                merged[-1] = (prev_text + " " + text, prev_ids + [block.block_id])
                continue
        merged.append((text, [block.block_id]))
    return merged


def _service_paragraphs(
    run: list[Block], text_service: TextService
) -> list[tuple[str, list[str]]]:
    request = TextRequest(
        system_instruction=CLEANING_INSTRUCTION,
        user_content="\n\n".join(block.content for block in run),
    )
    reply = text_service.complete(request)
    run_ids = [block.block_id for block in run]
    paragraphs = []
    for piece in re.split(r"\n\s*\n", reply):
        text = piece.strip()
        if text:
            paragraphs.append((text, list(run_ids)))
    return paragraphs


def filter_noise(blocks: Sequence[Block], text_service: TextService | None) -> FilterResult:
    """Drop furniture and merge surviving text into cohesive paragraphs.

    Service-assisted when a text service is given; any service failure flips
    the degraded flag and that run falls back to the deterministic merge.
    Output order follows input order.
    """
    result = FilterResult(paragraphs=[], degraded=False)

    def add(pairs: list[tuple[str, list[str]]]) -> None:
        for text, block_ids in pairs:
            result.paragraphs.append(
                Paragraph(f"p{len(result.paragraphs)}", text, block_ids)
            )

    run: list[Block] = []

    def flush_run() -> None:
        if not run:
            return
        if text_service is None:
            result.degraded = True
            add(_rule_based_paragraphs(run))
        else:
            try:
                add(_service_paragraphs(run, text_service))
            except FmeaError:
                result.degraded = True
                add(_rule_based_paragraphs(run))
        run.clear()

    for block in blocks:
        if block.kind is BlockKind.TEXT:
            run.append(block)
            continue
        flush_run()
        if block.kind is BlockKind.HEADING:
            heading = block.content.lstrip("#").strip()
            if heading:
                add([(heading, [block.block_id])])
        # PageFurniture and Table blocks leave the paragraph stream here.
    flush_run()
    return result


# --- chunking -------------------------------------------------------------------

_SENTENCE_BOUNDARY_RE = re.compile(r"[.!?][\"')\]]*\s")


def chunk_paragraphs(
    paragraphs: Sequence[Paragraph],
    max_chunk_len: int = DEFAULT_MAX_CHUNK_LEN,
    document_id: str = "",
) -> list[Chunk]:
    """Cut paragraphs into chunks of at most max_chunk_len characters.

    The chunks partition the paragraph texts joined by single newlines, with
    nothing dropped: ``"".join(chunk.text) == "\\n".join(paragraph.text)``.
    Split points prefer paragraph boundaries, then the last sentence boundary
    before the limit, then the last whitespace, then a hard cut.
    """
    if max_chunk_len < MIN_CHUNK_LEN:
        raise ValidationFailedError(f"max_chunk_len must be >= {MIN_CHUNK_LEN}")
    texts = [p.text for p in paragraphs]
    if not texts:
        return []
    full = "\n".join(texts)

    # Positions just past each joining newline: preferred split points.
    paragraph_boundaries: list[int] = []
    offset = 0
    for text in texts[:-1]:
        offset += len(text) + 1
        paragraph_boundaries.append(offset)

    chunks: list[Chunk] = []
    pos = 0
    while pos < len(full):
        remaining = len(full) - pos
        if remaining <= max_chunk_len:
            cut = len(full)
        else:
            limit = pos + max_chunk_len
            idx = bisect.bisect_right(paragraph_boundaries, limit) - 1
            if idx >= 0 and paragraph_boundaries[idx] > pos:
                cut = paragraph_boundaries[idx]
            else:
                window = full[pos:limit]
                sentence_ends = [m.end() for m in _SENTENCE_BOUNDARY_RE.finditer(window)]
                if sentence_ends:
                    cut = pos + sentence_ends[-1]
                else:
                    space_at = max(
                        (i for i, ch in enumerate(window) if ch.isspace()), default=-1
                    )
                    cut = pos + space_at + 1 if space_at > 0 else limit
        text = full[pos:cut]
        chunks.append(
            Chunk(
                chunk_id=f"{document_id}:c{len(chunks)}",
                document_id=document_id,
                text=text,
                char_length=len(text),
                ordinal=len(chunks),
            )
        )
        pos = cut
    return chunks


# --- tables ---------------------------------------------------------------------


def extract_tables(blocks: Sequence[Block], document_id: str) -> list[TableArtifact]:
    """Collect Table blocks as artifacts, picking up adjacent caption lines."""
    artifacts: list[TableArtifact] = []
    block_list = list(blocks)
    for i, block in enumerate(block_list):
        if block.kind is not BlockKind.TABLE:
            continue
        caption = None
        if i > 0:
            prev = block_list[i - 1]
            if prev.kind is BlockKind.PAGE_FURNITURE and _CAPTION_RE.match(
                prev.content.strip()
            ):
                caption = prev.content.strip()
        artifacts.append(
            TableArtifact(
                table_id=f"{document_id}:t{len(artifacts)}",
                document_id=document_id,
                markdown=block.content,
                caption=caption,
            )
        )
    return artifacts


def _table_header_cells(markdown: str) -> list[str]:
    first = markdown.splitlines()[0] if markdown else ""
    return _parse_pipe_cells(first)


def summarize_table(
    table: TableArtifact, text_service: TextService | None
) -> tuple[TableArtifact, bool]:
    """Fill in the table summary; returns (artifact, degraded-flag).

    Fallback when the service is absent or fails: the caption when present,
    else the header cells joined by commas.
    """
    degraded = False
    summary = ""
    if text_service is not None:
        user_content = (
            f"{table.caption}\n{table.markdown}" if table.caption else table.markdown
        )
        try:
            reply = text_service.complete(
                TextRequest(TABLE_SUMMARY_INSTRUCTION, user_content)
            )
            pieces = [p.strip() for p in re.split(r"\n\s*\n", reply) if p.strip()]
            summary = pieces[0] if pieces else ""
        except FmeaError:
            degraded = True
    else:
        degraded = True
    if not summary:
        degraded = True
        summary = table.caption or ", ".join(_table_header_cells(table.markdown))
    table.summary = summary
    return table, degraded


# --- full pipeline ----------------------------------------------------------------


def processed_text(chunks: Sequence[Chunk]) -> str:
    """Cleaned document text, reassembled exactly from its chunks."""
    return "".join(c.text for c in sorted(chunks, key=lambda c: c.ordinal))


def index_document(
    document: Document,
    text_service: TextService | None,
    embedder: EmbeddingProvider,
    store: VectorStore,
    repository=None,
) -> IngestionReceipt:
    """Run parse -> filter -> chunk -> embed for one document and upsert it.

    Chunks index by their own text; tables index by their summary but carry
    the markdown as the retrieval payload. Re-ingesting a document replaces
    its prior entries atomically, so the operation is idempotent per
    document id.
    """
    blocks = parse_document(document.raw_text, document.format, document.page_markers)
    filtered = filter_noise(blocks, text_service)
    chunks = chunk_paragraphs(
        filtered.paragraphs, DEFAULT_MAX_CHUNK_LEN, document.document_id
    )
    degraded = filtered.degraded

    tables = extract_tables(blocks, document.document_id)
    for table in tables:
        _, table_degraded = summarize_table(table, text_service)
        degraded = degraded or table_degraded

    entries: list[IndexEntry] = []
    for chunk in chunks:
        entries.append(
            IndexEntry(
                entry_id=chunk.chunk_id,
                document_id=document.document_id,
                vector=embed(chunk.text, embedder),
                payload=chunk.text,
                kind=EntryKind.CHUNK,
            )
        )
    for table in tables:
        entries.append(
            IndexEntry(
                entry_id=table.table_id,
                document_id=document.document_id,
                vector=embed(table.summary, embedder),
                payload=table.markdown,
                kind=EntryKind.TABLE,
            )
        )
    store.replace_document(document.document_id, entries)

    if repository is not None:
        repository.save_document(document, chunks, tables)

    return IngestionReceipt(
        document_id=document.document_id,
        chunk_count=len(chunks),
        table_count=len(tables),
        degraded=degraded,
    )
