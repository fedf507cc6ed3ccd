"""Benchmark harness scoring generated failure locations against gold lists.

Scoring uses semantic similarity entity evaluation: candidates and gold
entries are embedded, pairs are matched greedily one-to-one by
descending cosine similarity above a threshold, and precision/recall
follow from the match count. Four context scenarios are compared per
run: no context, top-3 chunks, top-5 chunks, and the whole document.
"""
from __future__ import annotations

import json
import logging
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .errors import CaseFileInvalidError, EmptyGoldError, FmeaError, ValidationFailedError
from .generation import ContextMode, Orchestrator, RetryPolicy
from .ingestion import DocumentFormat, index_document, make_document
from .model import Boundary, FmeaTree, GenerationStep, Study
from .persistence import StudyRepository
from .providers import EmbeddingProvider, TextService
from .vector_index import VectorStore, cosine_similarity, embed

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.8

DEFAULT_SCENARIOS: tuple[ContextMode, ...] = (
    ContextMode.zero_shot(),
    ContextMode.top_k(3),
    ContextMode.top_k(5),
    ContextMode.long_context(),
)


@dataclass(frozen=True)
class EvalCase:
    """One asset with its guide document and gold failure locations."""

    asset_name: str
    asset_description: str
    guide_path: Path
    gold_failure_locations: tuple[str, ...]
    format: DocumentFormat = DocumentFormat.PLAIN_TEXT

    def __post_init__(self) -> None:
        if not self.asset_name.strip():
            raise CaseFileInvalidError("case asset_name must be non-empty")
        if not self.gold_failure_locations:
            raise CaseFileInvalidError(
                f"case {self.asset_name!r} has an empty gold set"
            )
        seen: set[str] = set()
        for entry in self.gold_failure_locations:
            key = entry.strip().casefold()
            if not key:
                raise CaseFileInvalidError(
                    f"case {self.asset_name!r} has a blank gold entry"
                )
            if key in seen:
                raise CaseFileInvalidError(
                    f"case {self.asset_name!r} repeats gold entry {entry!r}"
                )
            seen.add(key)


def load_cases(path: str | Path) -> list[EvalCase]:
    """Read a JSON case file; guide paths resolve relative to the file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CaseFileInvalidError(f"cannot read case file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CaseFileInvalidError(f"case file {path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("cases")
    if not isinstance(data, list) or not data:
        raise CaseFileInvalidError(f"case file {path} must hold a non-empty case list")
    cases: list[EvalCase] = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise CaseFileInvalidError(f"case {i} is not an object")
        try:
            fmt = DocumentFormat(entry.get("format", DocumentFormat.PLAIN_TEXT.value))
            case = EvalCase(
                asset_name=entry["asset_name"],
                asset_description=entry.get("asset_description", ""),
                guide_path=(path.parent / entry["guide_document_path"]).resolve(),
                gold_failure_locations=tuple(entry["gold_failure_locations"]),
                format=fmt,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseFileInvalidError(f"case {i} is malformed: {exc}") from exc
        if not case.guide_path.is_file():
            raise CaseFileInvalidError(f"case {i}: no such guide document {case.guide_path}")
        cases.append(case)
    return cases


# --- matching ---------------------------------------------------------------------


def ssee_match(
    candidates: Sequence[str],
    gold: Sequence[str],
    threshold: float,
    embedder: EmbeddingProvider,
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching by descending similarity.

    Returns (candidate_index, gold_index, similarity) triples. Every
    pair scores at least the threshold and no index repeats; ties break
    on the lower candidate index, then the lower gold index, so the
    matching is deterministic.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValidationFailedError("threshold must be in (0, 1]")
    if not candidates or not gold:
        return []
    candidate_vecs = [embed(text, embedder) for text in candidates]
    gold_vecs = [embed(text, embedder) for text in gold]
    pairs = [
        (cosine_similarity(cv, gv), ci, gi)
        for ci, cv in enumerate(candidate_vecs)
        for gi, gv in enumerate(gold_vecs)
    ]
    pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
    used_candidates: set[int] = set()
    used_gold: set[int] = set()
    matches: list[tuple[int, int, float]] = []
    for sim, ci, gi in pairs:
        if sim < threshold:
            break
        if ci in used_candidates or gi in used_gold:
            continue
        used_candidates.add(ci)
        used_gold.add(gi)
        matches.append((ci, gi, sim))
    return matches


def ssee_precision_recall(
    candidates: Sequence[str],
    gold: Sequence[str],
    threshold: float,
    embedder: EmbeddingProvider,
) -> tuple[float, float]:
    """(precision, recall) for one candidate list against one gold list."""
    if not gold:
        raise EmptyGoldError("cannot score against an empty gold set")
    if not candidates:
        return 0.0, 0.0
    matches = ssee_match(candidates, gold, threshold, embedder)
    return len(matches) / len(candidates), len(matches) / len(gold)


# --- scenario runs ----------------------------------------------------------------


@dataclass(frozen=True)
class CaseResult:
    asset_name: str
    precision: float = 0.0
    recall: float = 0.0
    candidate_count: int = 0
    gold_count: int = 0
    error: str | None = None


@dataclass(frozen=True)
class ScenarioRow:
    mode: ContextMode
    precision: float
    recall: float
    cases: tuple[CaseResult, ...]

    @property
    def n_cases(self) -> int:
        return len(self.cases)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.mode.canonical(),
            "method": self.mode.method_label,
            "context_length": self.mode.context_label,
            "precision": round(self.precision, 4),
            "recall": round(self.recall, 4),
            "n_cases": self.n_cases,
            "cases": [
                {
                    "asset_name": c.asset_name,
                    "precision": round(c.precision, 4),
                    "recall": round(c.recall, 4),
                    "candidate_count": c.candidate_count,
                    "gold_count": c.gold_count,
                    "error": c.error,
                }
                for c in self.cases
            ],
        }


@dataclass(frozen=True)
class SseeReport:
    threshold: float
    rows: tuple[ScenarioRow, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "rows": [row.to_dict() for row in self.rows],
        }


def _seed_boundary(repository: StudyRepository, case: EvalCase) -> str:
    """Create a study already advanced past the boundary step."""
    document_text = case.guide_path.read_text(encoding="utf-8")
    document = make_document(f"{case.asset_name} guide", document_text, case.format)
    study = Study(
        study_id=uuid.uuid4().hex[:12],
        asset_name=case.asset_name,
        asset_description=case.asset_description,
        selected_document_ids={document.document_id},
    )
    repository.create_study(study)
    tree = FmeaTree(
        boundary=Boundary(
            functional_overview=case.asset_description or case.asset_name,
            main_parts=[],
        )
    )
    repository.save_tree(
        study.study_id, tree, current_step=GenerationStep.FAILURE_LOCATIONS
    )
    return study.study_id


def run_scenario(
    cases: Sequence[EvalCase],
    mode: ContextMode,
    orchestrator: Orchestrator,
    repository: StudyRepository,
    embedder: EmbeddingProvider,
    threshold: float = DEFAULT_THRESHOLD,
) -> ScenarioRow:
    """Generate failure locations for every case under one context mode.

    A case that errors contributes a zero-score row and keeps its error
    message; the macro average runs over all cases so a failure drags
    the scenario down instead of silently shrinking the denominator.
    """
    results: list[CaseResult] = []
    for case in cases:
        try:
            study_id = _seed_boundary(repository, case)
            result, token = orchestrator.run_step(
                study_id, GenerationStep.FAILURE_LOCATIONS, mode=mode
            )
            orchestrator.accept_step(
                study_id, GenerationStep.FAILURE_LOCATIONS, token
            )
            precision, recall = ssee_precision_recall(
                list(result.items), case.gold_failure_locations, threshold, embedder
            )
            results.append(
                CaseResult(
                    asset_name=case.asset_name,
                    precision=precision,
                    recall=recall,
                    candidate_count=len(result.items),
                    gold_count=len(case.gold_failure_locations),
                )
            )
        except FmeaError as exc:
            logger.warning(
                "case %r failed under %s: %s", case.asset_name, mode.canonical(), exc
            )
            results.append(
                CaseResult(
                    asset_name=case.asset_name,
                    gold_count=len(case.gold_failure_locations),
                    error=str(exc),
                )
            )
    n = len(results)
    precision = sum(r.precision for r in results) / n if n else 0.0
    recall = sum(r.recall for r in results) / n if n else 0.0
    return ScenarioRow(mode=mode, precision=precision, recall=recall, cases=tuple(results))


def run_benchmark(
    cases: Sequence[EvalCase] | str | Path,
    scenarios: Sequence[ContextMode] = DEFAULT_SCENARIOS,
    *,
    repository: StudyRepository,
    vector_store: VectorStore,
    text_service: TextService,
    embedder: EmbeddingProvider,
    threshold: float = DEFAULT_THRESHOLD,
    retry_policy: RetryPolicy | None = None,
) -> tuple[SseeReport, str]:
    """Ingest every guide document once, then score every scenario.

    Returns the machine-readable report and its rendered table.
    Ingestion runs rule-based (no text service) so benchmark inputs do
    not depend on the generation service under test.
    """
    if isinstance(cases, (str, Path)):
        cases = load_cases(cases)
    if not cases:
        raise CaseFileInvalidError("no evaluation cases given")
    if not scenarios:
        raise CaseFileInvalidError("no scenarios given")

    ingested: set[Path] = set()
    for case in cases:
        if case.guide_path in ingested:
            continue
        document = make_document(
            f"{case.asset_name} guide",
            case.guide_path.read_text(encoding="utf-8"),
            case.format,
        )
        index_document(document, None, embedder, vector_store, repository)
        ingested.add(case.guide_path)

    orchestrator = Orchestrator(
        repository,
        vector_store,
        text_service,
        embedder,
        retry_policy=retry_policy or RetryPolicy(),
    )
    rows = tuple(
        run_scenario(cases, mode, orchestrator, repository, embedder, threshold)
        for mode in scenarios
    )
    report = SseeReport(threshold=threshold, rows=rows)
    return report, render_table(report)


def render_table(report: SseeReport) -> str:
    """Fixed-width text table over the scenario rows, ready for a terminal."""
    header = ("Method", "Context Length", "SSEE Precision", "SSEE Recall")
    rows = [
        (
            row.mode.method_label,
            row.mode.context_label,
            f"{row.precision:.2f}",
            f"{row.recall:.2f}",
        )
        for row in report.rows
    ]
    widths = [
        max(len(header[col]), *(len(r[col]) for r in rows)) if rows else len(header[col])
        for col in range(4)
    ]
    lines = [
        "  ".join(header[col].ljust(widths[col]) for col in range(4)).rstrip(),
        "  ".join("-" * widths[col] for col in range(4)).rstrip(),
    ]
    for r in rows:
        lines.append("  ".join(r[col].ljust(widths[col]) for col in range(4)).rstrip())
    return "\n".join(lines) + "\n"
