"""End-to-end acceptance checks.

Each test prints one PASS/FAIL line (visible even without -s) and then
asserts, so a run shows the verdict per criterion at a glance. Tolerances
are exact unless a line says otherwise; randomized checks use frozen
seeds and integer-valued vectors so scores compare exactly.
"""

from __future__ import annotations

import json
import math
import random
import string
import time
from pathlib import Path

import pytest

from fmea_studio.errors import StepOrderViolationError
from fmea_studio.evaluation import run_benchmark, ssee_match
from fmea_studio.generation import (
    ContextMode,
    Orchestrator,
    RetryPolicy,
    parse_structured,
)
from fmea_studio.ingestion import Paragraph, chunk_paragraphs
from fmea_studio.model import GenerationStep, Study, tree_to_dict
from fmea_studio.persistence import StudyRepository
from fmea_studio.providers import (
    EntityMarkerTextService,
    HashEmbeddingProvider,
    ScriptedEmbeddingProvider,
    ScriptedTextService,
)
from fmea_studio.vector_index import EmbeddingVector, EntryKind, IndexEntry, VectorStore
from tests.conftest import FIXTURES, random_tree
from tests.fuzz_corpus import make_corpus
from tests.oracles import brute_force_topk, greedy_match

TAU_GRID = (0.5, 0.7, 0.8, 0.9, 0.99)


def report(capsys, name: str, ok: bool) -> None:
    with capsys.disabled():
        print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}")


def fresh_policy() -> RetryPolicy:
    return RetryPolicy(timeout_seconds=5.0, max_retries=0, backoff_base_seconds=0.01)


def test_oracle_end_to_end(capsys):
    """Marker-planted guides, marker-listing service: perfect scores, fast."""
    started = time.monotonic()
    result_report, _ = run_benchmark(
        FIXTURES / "oracle_cases.json",
        scenarios=(ContextMode.top_k(5),),
        repository=StudyRepository(":memory:"),
        vector_store=VectorStore(),
        text_service=EntityMarkerTextService(),
        embedder=HashEmbeddingProvider(dim=64),
        retry_policy=fresh_policy(),
    )
    elapsed = time.monotonic() - started
    row = result_report.rows[0]
    per_case_perfect = all(
        c.precision == 1.0 and c.recall == 1.0 and c.error is None
        for c in row.cases
    )
    ok = (
        row.precision == 1.0
        and row.recall == 1.0
        and row.n_cases == 3
        and per_case_perfect
        and elapsed < 10.0
    )
    report(capsys, "oracle-end-to-end", ok)
    assert row.precision == 1.0 and row.recall == 1.0
    assert row.n_cases == 3 and per_case_perfect
    assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_ssee_matching_properties(capsys):
    """200 random small instances: valid matching, bounds, tau monotone."""
    rng = random.Random(20260818)
    violations: list[str] = []
    for idx in range(200):
        n_candidates = rng.randint(1, 8)
        n_gold = rng.randint(1, 8)
        vectors: dict[str, list[float]] = {}
        for name in [f"c{i}" for i in range(n_candidates)] + [
            f"g{j}" for j in range(n_gold)
        ]:
            vec = [float(rng.randint(-3, 3)) for _ in range(6)]
            if all(v == 0.0 for v in vec):
                vec[rng.randrange(6)] = 1.0
            vectors[name] = vec
        embedder = ScriptedEmbeddingProvider(vectors)
        candidates = [f"c{i}" for i in range(n_candidates)]
        gold = [f"g{j}" for j in range(n_gold)]

        def cos(a: list[float], b: list[float]) -> float:
            dot = sum(x * y for x, y in zip(a, b))
            return dot / (
                math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
            )

        matrix = [[cos(vectors[c], vectors[g]) for g in gold] for c in candidates]

        counts = []
        for tau in TAU_GRID:
            matches = ssee_match(candidates, gold, tau, embedder)
            cis = [ci for ci, _, _ in matches]
            gis = [gi for _, gi, _ in matches]
            if len(set(cis)) != len(cis) or len(set(gis)) != len(gis):
                violations.append(f"instance {idx}: repeated index at tau={tau}")
            if len(matches) > min(n_candidates, n_gold):
                violations.append(f"instance {idx}: count over bound at tau={tau}")
            if any(sim < tau for _, _, sim in matches):
                violations.append(f"instance {idx}: match under tau={tau}")
            if [(ci, gi) for ci, gi, _ in matches] != greedy_match(matrix, tau):
                violations.append(f"instance {idx}: disagrees with oracle at tau={tau}")
            counts.append(len(matches))
        if counts != sorted(counts, reverse=True):
            violations.append(f"instance {idx}: counts not monotone {counts}")
    ok = not violations
    report(capsys, "ssee-matching-properties", ok)
    assert ok, violations[:5]


def test_benchmark_recall_ordering(capsys):
    """Relevant content split across six chunks: recall climbs with context."""
    result_report, table = run_benchmark(
        FIXTURES / "directional_cases.json",
        repository=StudyRepository(":memory:"),
        vector_store=VectorStore(),
        text_service=ScriptedTextService.from_file(
            FIXTURES / "directional_replies.json"
        ),
        embedder=HashEmbeddingProvider(dim=64),
        retry_policy=fresh_policy(),
    )
    by_scenario = {row.mode.canonical(): row for row in result_report.rows}
    zero = by_scenario["zero-shot"].recall
    top3 = by_scenario["chunks:3"].recall
    top5 = by_scenario["chunks:5"].recall
    long_ctx = by_scenario["long"].recall

    lines = table.rstrip("\n").split("\n")
    data_lines = lines[2:]
    labels = [(" ".join(ln.split()[:2]) if ln.startswith("RAG") else ln.split()[0]) for ln in data_lines]

    ok = (
        len(result_report.rows) == 4
        and top5 > top3 > zero
        and long_ctx >= top5
        and (zero, top3, top5, long_ctx) == (0.1, 0.6, 0.8, 1.0)
        and labels == ["Zero-shot", "RAG system", "RAG system", "RAG system"]
        and len(data_lines) == 4
    )
    report(capsys, "benchmark-recall-ordering", ok)
    assert top5 > top3 > zero, (zero, top3, top5)
    assert long_ctx >= top5, (top5, long_ctx)
    assert (zero, top3, top5, long_ctx) == (0.1, 0.6, 0.8, 1.0)
    assert len(result_report.rows) == 4 and len(data_lines) == 4
    assert labels == ["Zero-shot", "RAG system", "RAG system", "RAG system"]


def _random_paragraphs(rng: random.Random) -> list[Paragraph]:
    paragraphs = []
    for i in range(rng.randint(0, 8)):
        style = rng.random()
        if style < 0.15:
            # One unbroken run forces hard cuts.
            text = rng.choice(string.ascii_lowercase) * rng.randint(1, 2600)
        else:
            target = rng.randint(1, 2200)
            pieces = []
            length = 0
            while length < target:
                word = "".join(
                    rng.choice(string.ascii_lowercase)
                    for _ in range(rng.randint(1, 12))
                )
                pieces.append(word)
                length += len(word) + 1
                if rng.random() < 0.12:
                    pieces[-1] += "."
            text = " ".join(pieces)
        paragraphs.append(Paragraph(paragraph_id=f"p{i}", text=text))
    return paragraphs


def test_chunker_partition(capsys):
    """1,000 random paragraph sets: bounded chunks, lossless concatenation."""
    rng = random.Random(424242)
    violations: list[str] = []
    for trial in range(1000):
        paragraphs = _random_paragraphs(rng)
        chunks = chunk_paragraphs(paragraphs, 1024, document_id=f"doc{trial}")
        joined = "\n".join(p.text for p in paragraphs)
        if any(len(c.text) > 1024 for c in chunks):
            violations.append(f"trial {trial}: oversized chunk")
        if "".join(c.text for c in chunks) != joined:
            violations.append(f"trial {trial}: concatenation mismatch")
    ok = not violations
    report(capsys, "chunker-partition", ok)
    assert ok, violations[:5]


def test_retrieval_exactness(capsys):
    """100 random stores: exact brute-force agreement and prefix stability."""
    violations: list[str] = []
    for seed in range(100):
        rng = random.Random(7000 + seed)
        dim = rng.choice([4, 8, 16])
        size = rng.randint(1, 60)
        raw: list[tuple[str, list[float], str]] = []
        batch = []
        for i in range(size):
            vec = [float(rng.randint(-3, 3)) for _ in range(dim)]
            doc = f"d{rng.randrange(4)}"
            raw.append((f"e{i:03d}", vec, doc))
            batch.append(
                IndexEntry(
                    f"e{i:03d}",
                    doc,
                    EmbeddingVector(tuple(vec)),
                    f"payload {i}",
                    EntryKind.CHUNK,
                )
            )
        store = VectorStore()
        store.upsert_batch(batch)
        query = [float(rng.randint(-3, 3)) for _ in range(dim)]
        if all(v == 0.0 for v in query):
            query[0] = 1.0
        qv = EmbeddingVector(tuple(query))
        for k in (1, 3, 5, 50):
            got = [r.entry_id for r in store.query_by_vector(qv, k)]
            if got != brute_force_topk(raw, query, k):
                violations.append(f"seed {seed}: k={k} mismatch")
        previous: list[str] | None = None
        for k in range(1, min(size, 12) + 1):
            got = [r.entry_id for r in store.query_by_vector(qv, k)]
            if previous is not None and got[: len(previous)] != previous:
                violations.append(f"seed {seed}: prefix break at k={k}")
            previous = got
    ok = not violations
    report(capsys, "retrieval-exactness", ok)
    assert ok, violations[:5]


def test_parser_corpus(capsys):
    """200 fuzzed responses: >=95% overall, 100% on the named families."""
    corpus = make_corpus(200, seed=20260818)
    step = GenerationStep.FAILURE_LOCATIONS
    total_hits = 0
    family_misses: dict[str, int] = {}
    for entry in corpus:
        try:
            parsed = parse_structured(entry.raw, step)
        except Exception:
            parsed = None
        if parsed == list(entry.expected):
            total_hits += 1
        else:
            family_misses[entry.family] = family_misses.get(entry.family, 0) + 1
    named_ok = all(
        family_misses.get(family, 0) == 0
        for family in ("numbered", "bulleted", "json")
    )
    ok = total_hits >= 190 and named_ok
    report(capsys, "parser-corpus", ok)
    assert total_hits >= 190, f"{total_hits}/200 parsed, misses={family_misses}"
    assert named_ok, family_misses


def test_persistence_round_trip(capsys):
    """100 random trees: exact round-trip plus the CSV row counting rule."""
    repo = StudyRepository(":memory:")
    violations: list[str] = []
    for seed in range(100):
        rng = random.Random(31000 + seed)
        tree = random_tree(rng, id_prefix=f"t{seed}-")
        study_id = f"s{seed:03d}"
        repo.create_study(Study(study_id=study_id, asset_name=f"Asset {seed}"))
        repo.save_tree(study_id, tree)
        loaded = repo.load_tree(study_id)
        if tree_to_dict(loaded) != tree_to_dict(tree):
            violations.append(f"seed {seed}: round-trip mismatch")
        influences = [
            infl
            for loc in tree.locations
            for mech in loc.mechanisms
            for infl in mech.influences
        ]
        expected_rows = sum(max(1, len(infl.tasks)) for infl in influences)
        if expected_rows:
            csv_text = repo.export_fmea(study_id, "csv").decode("utf-8")
            got_rows = csv_text.count("\n") - 1
            if got_rows != expected_rows:
                violations.append(
                    f"seed {seed}: csv rows {got_rows} != {expected_rows}"
                )
    ok = not violations
    report(capsys, "persistence-round-trip", ok)
    assert ok, violations[:5]


GATING_REPLIES = [
    {
        "match": "Define the analysis boundary",
        "reply": "The asset moves air.\n1. Fan\n2. Motor",
    },
    {"match": "Identify the failure locations", "reply": "1. Bearing\n2. Casing"},
    {"match": "list the degradation mechanisms", "reply": "1. Wear"},
    {"match": "list the influences", "reply": "1. Contamination"},
    {"match": "list preventive maintenance tasks", "reply": "1. Replace lubricant"},
]


def test_step_gating(capsys):
    """Every out-of-order generate is refused and commits nothing."""
    repo = StudyRepository(":memory:")
    orchestrator = Orchestrator(
        repo,
        VectorStore(),
        ScriptedTextService(GATING_REPLIES),
        HashEmbeddingProvider(dim=64),
        retry_policy=fresh_policy(),
    )
    study_id = "gating01"
    repo.create_study(Study(study_id=study_id, asset_name="Blower"))

    all_steps = list(GenerationStep)
    violations: list[str] = []
    attempts = 0

    def snapshot():
        tree = repo.load_tree(study_id)
        return (
            repo.get_study(study_id).current_step,
            tree_to_dict(tree) if tree is not None else None,
        )

    def probe_out_of_order():
        nonlocal attempts
        current = repo.get_study(study_id).current_step
        for step in all_steps:
            if step is current:
                continue
            attempts += 1
            before = snapshot()
            try:
                orchestrator.run_step(study_id, step)
                violations.append(f"{step.value} allowed while at {current.value}")
            except StepOrderViolationError:
                pass
            except Exception as exc:
                violations.append(f"{step.value} raised {type(exc).__name__}")
            if snapshot() != before:
                violations.append(f"{step.value} left a partial commit")

    def advance(step: GenerationStep, parent_node_id: str | None = None):
        _, token = orchestrator.run_step(study_id, step, parent_node_id=parent_node_id)
        orchestrator.accept_step(study_id, step, token)

    probe_out_of_order()
    advance(GenerationStep.BOUNDARY)
    probe_out_of_order()
    advance(GenerationStep.FAILURE_LOCATIONS)
    probe_out_of_order()
    tree = repo.load_tree(study_id)
    advance(GenerationStep.DEGRADATION_MECHANISMS, tree.locations[0].node_id)
    probe_out_of_order()
    tree = repo.load_tree(study_id)
    advance(
        GenerationStep.DEGRADATION_INFLUENCES,
        tree.locations[0].mechanisms[0].node_id,
    )
    probe_out_of_order()
    tree = repo.load_tree(study_id)
    advance(
        GenerationStep.PREVENTIVE_TASKS,
        tree.locations[0].mechanisms[0].influences[0].node_id,
    )
    probe_out_of_order()

    ok = not violations and attempts == 24
    report(capsys, "step-gating", ok)
    assert attempts == 24
    assert not violations, violations[:5]
