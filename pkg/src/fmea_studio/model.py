"""Domain model: five-level FMEA trees, study lifecycle, step ordering.

The tree is strictly five levels deep: boundary at the root, then failure
locations, degradation mechanisms, degradation influences, and preventive
tasks. Parent/child relationships are one-to-many at every level. All types
here are plain values; edits happen by building a validated replacement.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterator

from .errors import ValidationFailedError


class GenerationStep(Enum):
    """The five generation levels, in the only order they may run."""

    BOUNDARY = "Boundary"
    FAILURE_LOCATIONS = "FailureLocations"
    DEGRADATION_MECHANISMS = "DegradationMechanisms"
    DEGRADATION_INFLUENCES = "DegradationInfluences"
    PREVENTIVE_TASKS = "PreventiveTasks"

    @property
    def slug(self) -> str:
        """URL-safe kebab-case name, e.g. ``failure-locations``."""
        out = []
        for i, ch in enumerate(self.value):
            if ch.isupper() and i > 0:
                out.append("-")
            out.append(ch.lower())
        return "".join(out)

    @classmethod
    def from_text(cls, text: str) -> "GenerationStep":
        """Accept either the canonical name or the kebab-case slug."""
        for step in cls:
            if text == step.value or text == step.slug:
                return step
        raise ValidationFailedError(f"unknown generation step: {text!r}")


STEP_ORDER: tuple[GenerationStep, ...] = tuple(GenerationStep)

# Steps whose items attach under a parent node chosen by the user.
CHILD_STEPS = frozenset(
    {
        GenerationStep.DEGRADATION_MECHANISMS,
        GenerationStep.DEGRADATION_INFLUENCES,
        GenerationStep.PREVENTIVE_TASKS,
    }
)


def next_step(step: GenerationStep) -> GenerationStep | None:
    """Successor in the fixed five-step order; None after the last step."""
    idx = STEP_ORDER.index(step)
    if idx + 1 == len(STEP_ORDER):
        return None
    return STEP_ORDER[idx + 1]


class NodeOrigin(Enum):
    GENERATED = "Generated"
    USER_ADDED = "UserAdded"
    USER_EDITED = "UserEdited"


@dataclass(frozen=True)
class ProvenanceTag:
    """Audit trail for one node: where it came from and what grounded it."""

    origin: NodeOrigin
    source_chunk_ids: tuple[str, ...] = ()


GENERATED_EMPTY = ProvenanceTag(NodeOrigin.GENERATED)


def new_node_id() -> str:
    """Opaque node id, assigned once and never reused."""
    return uuid.uuid4().hex[:12]


@dataclass
class Boundary:
    """Functional overview and the main parts of the asset."""

    functional_overview: str = ""
    main_parts: list[str] = field(default_factory=list)


@dataclass
class PreventiveTask:
    node_id: str
    description: str
    provenance: ProvenanceTag = GENERATED_EMPTY


@dataclass
class DegradationInfluence:
    node_id: str
    name: str
    tasks: list[PreventiveTask] = field(default_factory=list)
    provenance: ProvenanceTag = GENERATED_EMPTY


@dataclass
class DegradationMechanism:
    node_id: str
    name: str
    influences: list[DegradationInfluence] = field(default_factory=list)
    provenance: ProvenanceTag = GENERATED_EMPTY


@dataclass
class FailureLocation:
    node_id: str
    name: str
    mechanisms: list[DegradationMechanism] = field(default_factory=list)
    provenance: ProvenanceTag = GENERATED_EMPTY


@dataclass
class FmeaTree:
    boundary: Boundary
    locations: list[FailureLocation] = field(default_factory=list)


@dataclass(frozen=True)
class FailureMode:
    """Derived triple view: one root-to-influence path segment."""

    location_ref: str
    mechanism_ref: str
    influence_ref: str


@dataclass
class Study:
    study_id: str
    asset_name: str
    asset_description: str = ""
    selected_document_ids: set[str] = field(default_factory=set)
    current_step: GenerationStep = GenerationStep.BOUNDARY
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def __post_init__(self) -> None:
        if not self.asset_name.strip():
            raise ValidationFailedError("asset_name must be non-empty")

    def advanced(self) -> "Study":
        """Copy with current_step moved to its successor (no-op on the last step)."""
        nxt = next_step(self.current_step)
        if nxt is None:
            return self
        return replace(self, current_step=nxt)


def _norm(name: str) -> str:
    return name.strip().casefold()


def _check_siblings(names: list[str], level: str) -> None:
    seen: set[str] = set()
    for name in names:
        if not name.strip():
            raise ValidationFailedError(f"{level} name must be non-empty")
        key = _norm(name)
        if key in seen:
            raise ValidationFailedError(
                f"duplicate {level} name (case-insensitive): {name!r}"
            )
        seen.add(key)


def validate_tree(tree: FmeaTree) -> None:
    """Raise ValidationFailedError unless every tree invariant holds.

    Checked: unique node ids across the tree, non-empty names/descriptions,
    sibling-name uniqueness (case-insensitive, whitespace-trimmed), and
    de-duplicated non-empty boundary parts.
    """
    _check_siblings(list(tree.boundary.main_parts), "boundary part")

    ids: set[str] = set()

    def claim(node_id: str) -> None:
        if not node_id:
            raise ValidationFailedError("node_id must be non-empty")
        if node_id in ids:
            raise ValidationFailedError(f"duplicate node_id: {node_id!r}")
        ids.add(node_id)

    _check_siblings([loc.name for loc in tree.locations], "failure location")
    for loc in tree.locations:
        claim(loc.node_id)
        _check_siblings([m.name for m in loc.mechanisms], "degradation mechanism")
        for mech in loc.mechanisms:
            claim(mech.node_id)
            _check_siblings([i.name for i in mech.influences], "degradation influence")
            for infl in mech.influences:
                claim(infl.node_id)
                for task in infl.tasks:
                    claim(task.node_id)
                    if not task.description.strip():
                        raise ValidationFailedError(
                            "preventive task description must be non-empty"
                        )


def derive_failure_modes(tree: FmeaTree) -> list[FailureMode]:
    """One failure mode per degradation influence, depth-first in tree order."""
    modes: list[FailureMode] = []
    for loc in tree.locations:
        for mech in loc.mechanisms:
            for infl in mech.influences:
                modes.append(FailureMode(loc.node_id, mech.node_id, infl.node_id))
    return modes


def iter_nodes(tree: FmeaTree) -> Iterator[tuple[GenerationStep, Any]]:
    """Yield (level, node) pairs depth-first in tree order."""
    for loc in tree.locations:
        yield GenerationStep.FAILURE_LOCATIONS, loc
        for mech in loc.mechanisms:
            yield GenerationStep.DEGRADATION_MECHANISMS, mech
            for infl in mech.influences:
                yield GenerationStep.DEGRADATION_INFLUENCES, infl
                for task in infl.tasks:
                    yield GenerationStep.PREVENTIVE_TASKS, task


def find_node(tree: FmeaTree, node_id: str) -> tuple[GenerationStep, Any] | None:
    for level, node in iter_nodes(tree):
        if node.node_id == node_id:
            return level, node
    return None


def parent_path(tree: FmeaTree, node_id: str) -> list[str]:
    """Names from the failure location down to the given node, inclusive."""
    for loc in tree.locations:
        if loc.node_id == node_id:
            return [loc.name]
        for mech in loc.mechanisms:
            if mech.node_id == node_id:
                return [loc.name, mech.name]
            for infl in mech.influences:
                if infl.node_id == node_id:
                    return [loc.name, mech.name, infl.name]
    raise ValidationFailedError(f"node not in tree: {node_id!r}")


# --- canonical JSON -----------------------------------------------------------
#
# Field names match the type definitions exactly; arrays keep tree order. This
# is the one serialization shared by the HTTP API, exports, and the UI.


def _provenance_to_dict(tag: ProvenanceTag) -> dict[str, Any]:
    return {
        "origin": tag.origin.value,
        "source_chunk_ids": list(tag.source_chunk_ids),
    }


def _provenance_from_dict(data: dict[str, Any]) -> ProvenanceTag:
    return ProvenanceTag(
        origin=NodeOrigin(data["origin"]),
        source_chunk_ids=tuple(data.get("source_chunk_ids", ())),
    )


def tree_to_dict(tree: FmeaTree) -> dict[str, Any]:
    return {
        "boundary": {
            "functional_overview": tree.boundary.functional_overview,
            "main_parts": list(tree.boundary.main_parts),
        },
        "locations": [
            {
                "node_id": loc.node_id,
                "name": loc.name,
                "provenance": _provenance_to_dict(loc.provenance),
                "mechanisms": [
                    {
                        "node_id": mech.node_id,
                        "name": mech.name,
                        "provenance": _provenance_to_dict(mech.provenance),
                        "influences": [
                            {
                                "node_id": infl.node_id,
                                "name": infl.name,
                                "provenance": _provenance_to_dict(infl.provenance),
                                "tasks": [
                                    {
                                        "node_id": task.node_id,
                                        "description": task.description,
                                        "provenance": _provenance_to_dict(task.provenance),
                                    }
                                    for task in infl.tasks
                                ],
                            }
                            for infl in mech.influences
                        ],
                    }
                    for mech in loc.mechanisms
                ],
            }
            for loc in tree.locations
        ],
    }


def tree_from_dict(data: dict[str, Any]) -> FmeaTree:
    """Inverse of tree_to_dict; validates the result."""
    try:
        boundary = Boundary(
            functional_overview=data["boundary"]["functional_overview"],
            main_parts=list(data["boundary"]["main_parts"]),
        )
        locations = [
            FailureLocation(
                node_id=loc["node_id"],
                name=loc["name"],
                provenance=_provenance_from_dict(loc["provenance"]),
                mechanisms=[
                    DegradationMechanism(
                        node_id=mech["node_id"],
                        name=mech["name"],
                        provenance=_provenance_from_dict(mech["provenance"]),
                        influences=[
                            DegradationInfluence(
                                node_id=infl["node_id"],
                                name=infl["name"],
                                provenance=_provenance_from_dict(infl["provenance"]),
                                tasks=[
                                    PreventiveTask(
                                        node_id=task["node_id"],
                                        description=task["description"],
                                        provenance=_provenance_from_dict(task["provenance"]),
                                    )
                                    for task in infl["tasks"]
                                ],
                            )
                            for infl in mech["influences"]
                        ],
                    )
                    for mech in loc["mechanisms"]
                ],
            )
            for loc in data["locations"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationFailedError(f"malformed tree payload: {exc}") from exc
    tree = FmeaTree(boundary=boundary, locations=locations)
    validate_tree(tree)
    return tree


def study_to_dict(study: Study) -> dict[str, Any]:
    return {
        "study_id": study.study_id,
        "asset_name": study.asset_name,
        "asset_description": study.asset_description,
        "selected_document_ids": sorted(study.selected_document_ids),
        "current_step": study.current_step.value,
        "created_at": study.created_at.isoformat(),
    }
