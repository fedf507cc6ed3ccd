"""Supervised step-by-step generation of the five-level tree.

The orchestrator runs one level at a time: gather context, build the
prompt from a packaged template, call the text service, parse the reply
into a flat list, and stage it. Nothing reaches the tree until the user
accepts the staged list, optionally after edits; the accept commits the
whole level transactionally and only then advances the study.
"""
from __future__ import annotations

import copy
import json
import logging
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Any, Sequence

from .errors import (
    NotFoundError,
    ServiceUnavailableError,
    StepOrderViolationError,
    TimeoutExceededError,
    UnparseableResponseError,
    ValidationFailedError,
)
from .model import (
    CHILD_STEPS,
    Boundary,
    DegradationInfluence,
    DegradationMechanism,
    FailureLocation,
    FmeaTree,
    GenerationStep,
    NodeOrigin,
    PreventiveTask,
    ProvenanceTag,
    STEP_ORDER,
    Study,
    find_node,
    new_node_id,
    next_step,
    parent_path,
    validate_tree,
)
from .persistence import StudyRepository
from .providers import EmbeddingProvider, TextRequest, TextService
from .vector_index import VectorStore

logger = logging.getLogger(__name__)

REFORMAT_INSTRUCTION = (
    "Reformat the following answer as a numbered list, one item per line,"
    " with no prose before or after the list. Keep the items unchanged."
)

# The step each child level attaches under.
PARENT_STEP: dict[GenerationStep, GenerationStep] = {
    GenerationStep.DEGRADATION_MECHANISMS: GenerationStep.FAILURE_LOCATIONS,
    GenerationStep.DEGRADATION_INFLUENCES: GenerationStep.DEGRADATION_MECHANISMS,
    GenerationStep.PREVENTIVE_TASKS: GenerationStep.DEGRADATION_INFLUENCES,
}


class ContextModeKind(Enum):
    ZERO_SHOT = "ZeroShot"
    TOP_K = "TopK"
    LONG_CONTEXT = "LongContext"


@dataclass(frozen=True)
class ContextMode:
    """How much retrieved material goes into the prompt."""

    kind: ContextModeKind
    k: int | None = None

    def __post_init__(self) -> None:
        if self.kind is ContextModeKind.TOP_K:
            if self.k is None or self.k < 1:
                raise ValidationFailedError("top-k mode requires k >= 1")
        elif self.k is not None:
            raise ValidationFailedError(f"{self.kind.value} mode does not take k")

    @classmethod
    def zero_shot(cls) -> "ContextMode":
        return cls(ContextModeKind.ZERO_SHOT)

    @classmethod
    def top_k(cls, k: int) -> "ContextMode":
        return cls(ContextModeKind.TOP_K, k)

    @classmethod
    def long_context(cls) -> "ContextMode":
        return cls(ContextModeKind.LONG_CONTEXT)

    @classmethod
    def parse(cls, text: str, default_k: int = 5) -> "ContextMode":
        """Accept ``zero-shot``, ``top-k``, ``chunks:N``, or ``long``."""
        cleaned = text.strip().lower()
        if cleaned in ("zero-shot", "zeroshot", "none"):
            return cls.zero_shot()
        if cleaned in ("top-k", "topk"):
            return cls.top_k(default_k)
        if cleaned.startswith("chunks:"):
            try:
                return cls.top_k(int(cleaned.split(":", 1)[1]))
            except ValueError as exc:
                raise ValidationFailedError(f"bad chunk count in {text!r}") from exc
        if cleaned in ("long", "long-context", "longcontext"):
            return cls.long_context()
        raise ValidationFailedError(f"unknown context mode: {text!r}")

    def canonical(self) -> str:
        if self.kind is ContextModeKind.ZERO_SHOT:
            return "zero-shot"
        if self.kind is ContextModeKind.TOP_K:
            return f"chunks:{self.k}"
        return "long"

    @property
    def method_label(self) -> str:
        return "Zero-shot" if self.kind is ContextModeKind.ZERO_SHOT else "RAG system"

    @property
    def context_label(self) -> str:
        if self.kind is ContextModeKind.ZERO_SHOT:
            return "--"
        if self.kind is ContextModeKind.TOP_K:
            return f"{self.k} chunks"
        return "Long"


@dataclass(frozen=True)
class RetryPolicy:
    """Wall-clock budget and retry shape for one text service call."""

    timeout_seconds: float = 30.0
    max_retries: int = 2
    backoff_base_seconds: float = 0.5

    def __post_init__(self) -> None:
        if self.timeout_seconds <= 0:
            raise ValidationFailedError("timeout_seconds must be positive")
        if self.max_retries < 0:
            raise ValidationFailedError("max_retries must be >= 0")
        if self.backoff_base_seconds < 0:
            raise ValidationFailedError("backoff_base_seconds must be >= 0")


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered prompt plus the ids of the context it embeds."""

    step: GenerationStep
    system_instruction: str
    user_content: str
    context_refs: tuple[str, ...] = ()
    context_mode: ContextMode = field(default_factory=ContextMode.zero_shot)

    def __post_init__(self) -> None:
        if self.context_mode.kind is ContextModeKind.ZERO_SHOT and self.context_refs:
            raise ValidationFailedError("zero-shot prompts must not carry context")
        if (
            self.context_mode.kind is ContextModeKind.TOP_K
            and len(self.context_refs) > self.context_mode.k
        ):
            raise ValidationFailedError(
                f"{len(self.context_refs)} context refs exceed k={self.context_mode.k}"
            )


@dataclass(frozen=True)
class GenerationStepResult:
    """One staged model proposal: a flat list of items for one level."""

    step: GenerationStep
    items: tuple[str, ...]
    raw_response: str
    context_refs: tuple[str, ...] = ()
    parent_node_id: str | None = None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for item in self.items:
            if not item.strip():
                raise ValidationFailedError("result items must be non-empty")
            key = item.strip().casefold()
            if key in seen:
                raise ValidationFailedError(f"duplicate result item: {item!r}")
            seen.add(key)

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step.value,
            "items": list(self.items),
            "raw_response": self.raw_response,
            "context_refs": list(self.context_refs),
            "parent_node_id": self.parent_node_id,
        }


class EditKind(Enum):
    ADD_ITEM = "AddItem"
    REMOVE_ITEM = "RemoveItem"
    RENAME_ITEM = "RenameItem"


@dataclass(frozen=True)
class EditOp:
    """One user edit applied to a staged list before it is committed.

    ``target`` locates an existing staged item by its text
    (case-insensitive, whitespace-trimmed); ``new_text`` supplies the
    added or renamed text.
    """

    kind: EditKind
    target: str | None = None
    new_text: str | None = None

    def __post_init__(self) -> None:
        if self.kind in (EditKind.REMOVE_ITEM, EditKind.RENAME_ITEM):
            if not (self.target or "").strip():
                raise ValidationFailedError(f"{self.kind.value} requires a target")
        if self.kind in (EditKind.ADD_ITEM, EditKind.RENAME_ITEM):
            if not (self.new_text or "").strip():
                raise ValidationFailedError(f"{self.kind.value} requires new_text")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EditOp":
        try:
            kind = EditKind(data["kind"])
        except (KeyError, ValueError) as exc:
            raise ValidationFailedError(f"unknown edit kind: {data.get('kind')!r}") from exc
        return cls(kind=kind, target=data.get("target"), new_text=data.get("new_text"))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value}
        if self.target is not None:
            out["target"] = self.target
        if self.new_text is not None:
            out["new_text"] = self.new_text
        return out


def _item_key(text: str) -> str:
    return text.strip().casefold()


def apply_edits(
    items: Sequence[str], edits: Sequence[EditOp]
) -> list[tuple[str, NodeOrigin]]:
    """Apply edits in order; returns (text, origin) pairs for the final list.

    Unedited items keep the Generated origin, added items are UserAdded,
    renamed items become UserEdited. The result must stay free of
    case-insensitive duplicates.
    """
    entries: list[tuple[str, NodeOrigin]] = [
        (item.strip(), NodeOrigin.GENERATED) for item in items
    ]

    def locate(target: str) -> int:
        key = _item_key(target)
        for i, (text, _) in enumerate(entries):
            if _item_key(text) == key:
                return i
        raise ValidationFailedError(f"no staged item matches {target!r}")

    for op in edits:
        if op.kind is EditKind.REMOVE_ITEM:
            entries.pop(locate(op.target or ""))
        elif op.kind is EditKind.RENAME_ITEM:
            idx = locate(op.target or "")
            entries[idx] = ((op.new_text or "").strip(), NodeOrigin.USER_EDITED)
        else:
            entries.append(((op.new_text or "").strip(), NodeOrigin.USER_ADDED))

    seen: set[str] = set()
    for text, _ in entries:
        key = _item_key(text)
        if key in seen:
            raise ValidationFailedError(f"edits produce a duplicate item: {text!r}")
        seen.add(key)
    return entries


# --- reply parsing --------------------------------------------------------------

_NUMBERED_RE = re.compile(r"^\s*\d+\s*[.)]\s+(.*\S)\s*$")
_BULLET_RE = re.compile(r"^\s*[-*•]\s+(.*\S)\s*$")
_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)
_LIST_START_RE = re.compile(r"^\s*(\d+\s*[.)]\s+|[-*•]\s+|\[|```)")


def _clean_item(text: str) -> str:
    # The three strips interleave until stable so mixed decorations like
    # "**Fan**," come fully apart regardless of nesting order.
    out = text.strip()
    changed = True
    while changed:
        changed = False
        stripped = out.rstrip(".,;:").strip()
        if stripped != out:
            out = stripped
            changed = True
        if len(out) >= 2 and out[0] == out[-1] and out[0] in "\"'":
            out = out[1:-1].strip()
            changed = True
        for wrap in ("**", "__", "*", "_", "`"):
            n = len(wrap)
            if len(out) > 2 * n and out.startswith(wrap) and out.endswith(wrap):
                out = out[n:-n].strip()
                changed = True
    return out


_SENTENCE_SPLIT_RE = re.compile(r"[.!?](?:\s|$)|\n")


def _has_long_prose(text: str) -> bool:
    """True when any sentence runs past 120 chars; guards the bare-lines rule.

    A line break ends a sentence here, so a stack of short unpunctuated
    lines still reads as a list rather than prose.
    """
    return any(len(part.strip()) > 120 for part in _SENTENCE_SPLIT_RE.split(text))


def _dedupe(items: list[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        key = _item_key(item)
        if item and key not in seen:
            seen.add(key)
            out.append(item)
    return out


def _json_items(raw: str) -> list[str] | None:
    candidates = [raw.strip()]
    for fenced in _FENCE_RE.findall(raw):
        candidates.append(fenced.strip())
    start, end = raw.find("["), raw.rfind("]")
    if 0 <= start < end:
        candidates.append(raw[start : end + 1])
    for candidate in candidates:
        try:
            data = json.loads(candidate)
        except (json.JSONDecodeError, ValueError):
            continue
        if isinstance(data, list) and all(isinstance(x, str) for x in data):
            return data
    return None


def parse_structured(raw_response: str, step: GenerationStep) -> list[str]:
    """Extract a flat item list from a model reply.

    Accepted shapes, tried in this order: numbered lines, bulleted
    lines, a JSON array of strings (possibly fenced), and finally one
    item per non-empty line when there are at least two lines and no
    prose sentence runs past 120 chars. Items are cleaned of numbering
    residue, markdown emphasis, surrounding quotes, and trailing
    punctuation, then de-duplicated case-insensitively keeping first
    occurrences.
    """
    lines = raw_response.splitlines()

    numbered = [m.group(1) for m in map(_NUMBERED_RE.match, lines) if m]
    if numbered:
        items = _dedupe([_clean_item(x) for x in numbered])
        if items:
            return items

    bulleted = [m.group(1) for m in map(_BULLET_RE.match, lines) if m]
    if bulleted:
        items = _dedupe([_clean_item(x) for x in bulleted])
        if items:
            return items

    from_json = _json_items(raw_response)
    if from_json is not None:
        items = _dedupe([_clean_item(x) for x in from_json])
        if items:
            return items

    plain = [line.strip() for line in lines if line.strip()]
    if len(plain) >= 2 and not _has_long_prose(raw_response):
        items = _dedupe([_clean_item(x) for x in plain])
        if items:
            return items

    raise UnparseableResponseError(
        f"reply for step {step.value} contains no recognizable list",
        raw_response=raw_response,
    )


def leading_prose(raw_response: str) -> str:
    """Prose lines before the first list-like line, unwrapped to one paragraph."""
    collected: list[str] = []
    for line in raw_response.splitlines():
        if _LIST_START_RE.match(line):
            break
        if line.strip():
            collected.append(line.strip())
    return " ".join(collected)


# --- prompt construction ---------------------------------------------------------

_TEMPLATE_CACHE: dict[GenerationStep, tuple[str, str]] = {}


def load_template(step: GenerationStep) -> tuple[str, str]:
    """(system_instruction, user_template) for a step, from package data."""
    if step not in _TEMPLATE_CACHE:
        raw = (
            resources.files(__package__)
            .joinpath(f"prompts/{step.slug}.txt")
            .read_text(encoding="utf-8")
        )
        if not raw.startswith("SYSTEM:\n") or "\nUSER:\n" not in raw:
            raise ValidationFailedError(f"template for {step.value} is malformed")
        system, user = raw[len("SYSTEM:\n") :].split("\nUSER:\n", 1)
        _TEMPLATE_CACHE[step] = (system.strip(), user.strip())
    return _TEMPLATE_CACHE[step]


def _ensure_predecessors(step: GenerationStep, tree: FmeaTree | None) -> None:
    if step is GenerationStep.BOUNDARY:
        return
    if tree is None:
        raise StepOrderViolationError("no boundary has been committed yet")
    if step is GenerationStep.FAILURE_LOCATIONS:
        return
    counts = _level_counts(tree)
    for predecessor in STEP_ORDER[1 : STEP_ORDER.index(step)]:
        if counts[predecessor] == 0:
            raise StepOrderViolationError(
                f"level {predecessor.value} is empty; cannot run {step.value}"
            )


def _level_counts(tree: FmeaTree) -> dict[GenerationStep, int]:
    counts = {step: 0 for step in STEP_ORDER}
    counts[GenerationStep.BOUNDARY] = 1
    counts[GenerationStep.FAILURE_LOCATIONS] = len(tree.locations)
    for loc in tree.locations:
        counts[GenerationStep.DEGRADATION_MECHANISMS] += len(loc.mechanisms)
        for mech in loc.mechanisms:
            counts[GenerationStep.DEGRADATION_INFLUENCES] += len(mech.influences)
            for infl in mech.influences:
                counts[GenerationStep.PREVENTIVE_TASKS] += len(infl.tasks)
    return counts


def build_prompt(
    step: GenerationStep,
    study: Study,
    prior_tree: FmeaTree | None,
    context: Sequence[tuple[str, str]],
    mode: ContextMode,
    parent_node_id: str | None = None,
) -> PromptBundle:
    """Render the prompt for one step deterministically.

    ``context`` is an ordered list of (ref_id, text) pairs; each pair
    becomes a delimited block carrying its id so generated nodes can be
    traced back to the material that grounded them.
    """
    _ensure_predecessors(step, prior_tree)

    parent_section = ""
    if step in CHILD_STEPS:
        if not parent_node_id:
            raise ValidationFailedError(f"step {step.value} requires parent_node_id")
        if prior_tree is None:
            raise StepOrderViolationError("no boundary has been committed yet")
        found = find_node(prior_tree, parent_node_id)
        if found is None:
            raise NotFoundError(f"parent node {parent_node_id!r} is not in the tree")
        level, _ = found
        if level is not PARENT_STEP[step]:
            raise ValidationFailedError(
                f"step {step.value} attaches under a {PARENT_STEP[step].value} node,"
                f" not a {level.value} node"
            )
        names = parent_path(prior_tree, parent_node_id)
        parent_section = "Parent path: " + " > ".join(names) + "\n\n"
    elif parent_node_id is not None:
        raise ValidationFailedError(f"step {step.value} does not take a parent node")

    asset_section = f"Asset: {study.asset_name}\n"
    if study.asset_description.strip():
        asset_section += f"Asset description: {study.asset_description.strip()}\n"
    asset_section += "\n"

    context_section = ""
    if context:
        blocks = [
            f"<<<context {ref_id}\n{text}\n>>>" for ref_id, text in context
        ]
        context_section = (
            "Documentation extracts:\n" + "\n".join(blocks) + "\n\n"
        )

    system_instruction, user_template = load_template(step)
    user_content = user_template.format(
        asset_section=asset_section,
        parent_section=parent_section,
        context_section=context_section,
    )
    return PromptBundle(
        step=step,
        system_instruction=system_instruction,
        user_content=user_content,
        context_refs=tuple(ref_id for ref_id, _ in context),
        context_mode=mode,
    )


def infer(bundle: PromptBundle, service: TextService, policy: RetryPolicy) -> str:
    """Call the text service with retries.

    Total wall clock is bounded by timeout_seconds * (max_retries + 1);
    transient failures back off exponentially inside that budget.
    """
    deadline = time.monotonic() + policy.timeout_seconds * (policy.max_retries + 1)
    request = TextRequest(
        system_instruction=bundle.system_instruction,
        user_content=bundle.user_content,
    )
    last: ServiceUnavailableError | None = None
    for attempt in range(policy.max_retries + 1):
        if time.monotonic() >= deadline:
            raise TimeoutExceededError(
                f"text service budget of {policy.timeout_seconds}s exhausted"
            ) from last
        try:
            return service.complete(request)
        except ServiceUnavailableError as exc:
            last = exc
            logger.warning("text service attempt %d failed: %s", attempt + 1, exc)
            if attempt < policy.max_retries:
                pause = policy.backoff_base_seconds * (2**attempt)
                pause = min(pause, max(0.0, deadline - time.monotonic()))
                if pause > 0:
                    time.sleep(pause)
    assert last is not None
    raise last


# --- committing a staged result ---------------------------------------------------


def apply_step_result(
    tree: FmeaTree | None,
    result: GenerationStepResult,
    edits: Sequence[EditOp],
) -> FmeaTree:
    """A new tree with the edited result written into its level.

    The affected level (for child steps: the children of the result's
    parent) is replaced wholesale; re-accepting a level overwrites the
    previous accept. The input tree is never mutated.
    """
    entries = apply_edits(result.items, edits)

    def tag(origin: NodeOrigin) -> ProvenanceTag:
        refs = result.context_refs if origin is not NodeOrigin.USER_ADDED else ()
        return ProvenanceTag(origin=origin, source_chunk_ids=tuple(refs))

    if result.step is GenerationStep.BOUNDARY:
        overview = leading_prose(result.raw_response)
        if not overview and tree is not None:
            overview = tree.boundary.functional_overview
        boundary = Boundary(
            functional_overview=overview,
            main_parts=[text for text, _ in entries],
        )
        return FmeaTree(
            boundary=boundary,
            locations=copy.deepcopy(tree.locations) if tree else [],
        )

    if tree is None:
        raise StepOrderViolationError("no boundary has been committed yet")
    new_tree = copy.deepcopy(tree)

    if result.step is GenerationStep.FAILURE_LOCATIONS:
        new_tree.locations = [
            FailureLocation(node_id=new_node_id(), name=text, provenance=tag(origin))
            for text, origin in entries
        ]
        return new_tree

    if not result.parent_node_id:
        raise ValidationFailedError(f"step {result.step.value} requires parent_node_id")
    found = find_node(new_tree, result.parent_node_id)
    if found is None:
        raise NotFoundError(f"parent node {result.parent_node_id!r} is not in the tree")
    level, parent = found
    if level is not PARENT_STEP[result.step]:
        raise ValidationFailedError(
            f"step {result.step.value} attaches under a {PARENT_STEP[result.step].value}"
            f" node, not a {level.value} node"
        )

    if result.step is GenerationStep.DEGRADATION_MECHANISMS:
        parent.mechanisms = [
            DegradationMechanism(node_id=new_node_id(), name=text, provenance=tag(origin))
            for text, origin in entries
        ]
    elif result.step is GenerationStep.DEGRADATION_INFLUENCES:
        parent.influences = [
            DegradationInfluence(node_id=new_node_id(), name=text, provenance=tag(origin))
            for text, origin in entries
        ]
    else:
        parent.tasks = [
            PreventiveTask(node_id=new_node_id(), description=text, provenance=tag(origin))
            for text, origin in entries
        ]
    return new_tree


@dataclass(frozen=True)
class _Staged:
    token: str
    study_id: str
    result: GenerationStepResult


class Orchestrator:
    """Ties retrieval, prompting, parsing, staging, and persistence together.

    Calls for one study are serialized; staged results live in process
    memory only and every token is single-use.
    """

    def __init__(
        self,
        repository: StudyRepository,
        vector_store: VectorStore,
        text_service: TextService,
        embedder: EmbeddingProvider,
        *,
        retry_policy: RetryPolicy | None = None,
        default_k: int = 5,
        reformat_on_unparseable: bool = False,
    ) -> None:
        self._repo = repository
        self._store = vector_store
        self._text = text_service
        self._embedder = embedder
        self._policy = retry_policy or RetryPolicy()
        self._default_k = default_k
        self._reformat = reformat_on_unparseable
        # Single-use staged results, one slot per (study_id, step): a fresh
        # run_step for the same step invalidates the previous token.
        self._staged: dict[str, _Staged] = {}
        self._staged_by_key: dict[tuple[str, str], str] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, study_id: str) -> threading.Lock:
        with self._locks_guard:
            if study_id not in self._locks:
                self._locks[study_id] = threading.Lock()
            return self._locks[study_id]

    def default_mode(self, study: Study) -> ContextMode:
        if study.selected_document_ids:
            return ContextMode.top_k(self._default_k)
        return ContextMode.zero_shot()

    def run_step(
        self,
        study_id: str,
        step: GenerationStep,
        *,
        mode: ContextMode | None = None,
        parent_node_id: str | None = None,
    ) -> tuple[GenerationStepResult, str]:
        """Generate one level's proposal and stage it; returns (result, token)."""
        with self._lock_for(study_id):
            study = self._repo.get_study(study_id)
            if step is not study.current_step:
                raise StepOrderViolationError(
                    f"study is at step {study.current_step.value}; cannot run {step.value}"
                )
            tree = self._repo.load_tree(study_id)
            mode = mode or self.default_mode(study)
            context = self._gather_context(study, tree, step, parent_node_id, mode)
            bundle = build_prompt(step, study, tree, context, mode, parent_node_id)
            raw = infer(bundle, self._text, self._policy)
            try:
                items = parse_structured(raw, step)
            except UnparseableResponseError:
                if not self._reformat:
                    raise
                logger.info("reformat retry for step %s", step.value)
                retry_bundle = PromptBundle(
                    step=step,
                    system_instruction=REFORMAT_INSTRUCTION,
                    user_content=raw,
                    context_refs=(),
                    context_mode=ContextMode.zero_shot(),
                )
                raw = infer(retry_bundle, self._text, self._policy)
                items = parse_structured(raw, step)
            result = GenerationStepResult(
                step=step,
                items=tuple(items),
                raw_response=raw,
                context_refs=bundle.context_refs,
                parent_node_id=parent_node_id,
            )
            token = uuid.uuid4().hex
            key = (study_id, step.value)
            stale = self._staged_by_key.pop(key, None)
            if stale is not None:
                self._staged.pop(stale, None)
            self._staged[token] = _Staged(token=token, study_id=study_id, result=result)
            self._staged_by_key[key] = token
            return result, token

    def _gather_context(
        self,
        study: Study,
        tree: FmeaTree | None,
        step: GenerationStep,
        parent_node_id: str | None,
        mode: ContextMode,
    ) -> list[tuple[str, str]]:
        if mode.kind is ContextModeKind.ZERO_SHOT:
            return []
        if mode.kind is ContextModeKind.LONG_CONTEXT:
            pairs: list[tuple[str, str]] = []
            for document_id in sorted(study.selected_document_ids):
                text = self._repo.document_text(document_id)
                if text:
                    pairs.append((document_id, text))
            return pairs
        if not study.selected_document_ids:
            return []
        # Query text: the asset description (name when the description is
        # blank) plus the parent path, so child-level retrieval narrows.
        terms = [study.asset_description.strip() or study.asset_name]
        if parent_node_id and tree is not None and step in CHILD_STEPS:
            found = find_node(tree, parent_node_id)
            if found is not None:
                terms.extend(parent_path(tree, parent_node_id))
        query_text = " ".join(t for t in terms if t and t.strip())
        results = self._store.query(
            query_text,
            k=mode.k or self._default_k,
            provider=self._embedder,
            document_filter=set(study.selected_document_ids),
        )
        return [(r.entry_id, r.payload) for r in results]

    def staged_result(self, study_id: str, token: str) -> GenerationStepResult:
        staged = self._staged.get(token)
        if staged is None or staged.study_id != study_id:
            raise NotFoundError("no staged result for this reference")
        return staged.result

    def accept_step(
        self,
        study_id: str,
        step: GenerationStep,
        token: str,
        edits: Sequence[EditOp] = (),
        *,
        complete_level: bool = True,
    ) -> FmeaTree:
        """Commit a staged result (after edits) and optionally advance the study.

        The token is consumed on success; a failed validation leaves the
        staged result in place so the user can fix the edits and retry.
        """
        with self._lock_for(study_id):
            staged = self._staged.get(token)
            if staged is None or staged.study_id != study_id or staged.result.step is not step:
                raise NotFoundError("no staged result for this reference")
            study = self._repo.get_study(study_id)
            if step is not study.current_step:
                raise StepOrderViolationError(
                    f"study is at step {study.current_step.value}; cannot accept {step.value}"
                )
            tree = self._repo.load_tree(study_id)
            new_tree = apply_step_result(tree, staged.result, edits)
            validate_tree(new_tree)

            advance_to: GenerationStep | None = None
            if complete_level:
                if _level_counts(new_tree)[step] == 0:
                    raise ValidationFailedError(
                        f"cannot complete level {step.value} with no entries"
                    )
                advance_to = next_step(step)
            self._repo.save_tree(study_id, new_tree, current_step=advance_to)

            self._staged.pop(token, None)
            self._staged_by_key.pop((study_id, step.value), None)
            return new_tree
