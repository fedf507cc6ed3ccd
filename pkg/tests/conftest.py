"""Shared fixtures: providers, stores, and random tree generators."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from fmea_studio.generation import RetryPolicy
from fmea_studio.model import (
    Boundary,
    DegradationInfluence,
    DegradationMechanism,
    FailureLocation,
    FmeaTree,
    NodeOrigin,
    PreventiveTask,
    ProvenanceTag,
)
from fmea_studio.persistence import StudyRepository
from fmea_studio.providers import HashEmbeddingProvider
from fmea_studio.vector_index import VectorStore

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def embedder() -> HashEmbeddingProvider:
    return HashEmbeddingProvider(dim=64)


@pytest.fixture
def repo() -> StudyRepository:
    return StudyRepository(":memory:")


@pytest.fixture
def store() -> VectorStore:
    return VectorStore()


@pytest.fixture
def fast_retry() -> RetryPolicy:
    # Keep generation failures cheap in tests.
    return RetryPolicy(timeout_seconds=2.0, max_retries=0, backoff_base_seconds=0.01)


# --- random valid trees -----------------------------------------------------------

_WORDS = (
    "bearing casing shaft seal rotor stator valve coil fan belt filter gasket "
    "impeller housing coupling sensor wiring duct damper motor gearbox brush "
    "nozzle plate frame spring bolt flange liner vane"
).split()


def random_tree(
    rng: random.Random, max_children: int = 3, id_prefix: str = ""
) -> FmeaTree:
    """A structurally random tree satisfying every model invariant.

    Node ids are sequential, names are drawn word pairs made unique per
    sibling group, provenance varies across all three origins. Pass an
    id_prefix when several trees share one repository; stored node ids
    are globally unique, like the uuid ids production assigns.
    """
    counter = [0]

    def nid() -> str:
        counter[0] += 1
        return f"{id_prefix}n{counter[0]:04d}"

    def tag() -> ProvenanceTag:
        origin = rng.choice(list(NodeOrigin))
        refs = tuple(
            f"doc{rng.randrange(3)}:c{rng.randrange(9)}"
            for _ in range(rng.randrange(3))
        )
        return ProvenanceTag(origin, refs if origin is not NodeOrigin.USER_ADDED else ())

    def names(n: int) -> list[str]:
        out: list[str] = []
        seen: set[str] = set()
        while len(out) < n:
            name = f"{rng.choice(_WORDS)} {rng.choice(_WORDS)} {rng.randrange(100)}"
            if rng.random() < 0.3:
                name = name.title()
            if name.casefold() not in seen:
                seen.add(name.casefold())
                out.append(name)
        return out

    locations = []
    for loc_name in names(rng.randint(1, max_children)):
        mechanisms = []
        for mech_name in names(rng.randint(0, max_children)):
            influences = []
            for infl_name in names(rng.randint(0, max_children)):
                tasks = [
                    PreventiveTask(nid(), f"inspect {t}", tag())
                    for t in names(rng.randint(0, max_children))
                ]
                influences.append(DegradationInfluence(nid(), infl_name, tasks, tag()))
            mechanisms.append(DegradationMechanism(nid(), mech_name, influences, tag()))
        locations.append(FailureLocation(nid(), loc_name, mechanisms, tag()))

    overview = "" if rng.random() < 0.2 else "Moves fluid through the loop."
    return FmeaTree(
        boundary=Boundary(functional_overview=overview, main_parts=names(rng.randint(0, 4))),
        locations=locations,
    )


def small_tree() -> FmeaTree:
    """Fixed two-location tree used by exact-value tests."""
    return FmeaTree(
        boundary=Boundary(
            functional_overview="Circulates coolant.",
            main_parts=["Pump", "Motor"],
        ),
        locations=[
            FailureLocation(
                "loc1",
                "Bearing",
                [
                    DegradationMechanism(
                        "mech1",
                        "Wear",
                        [
                            DegradationInfluence(
                                "infl1",
                                "Contamination",
                                [PreventiveTask("task1", "Replace lubricant")],
                            ),
                            DegradationInfluence("infl2", "Vibration", []),
                        ],
                    )
                ],
            ),
            FailureLocation("loc2", "Casing", []),
        ],
    )
