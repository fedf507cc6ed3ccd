"""Scripted fixtures and the deterministic hash embedder."""

from __future__ import annotations

import hashlib
import math

import pytest

from fmea_studio.errors import ProviderUnavailableError, ServiceUnavailableError
from fmea_studio.providers import (
    EntityMarkerTextService,
    HashEmbeddingProvider,
    ScriptedEmbeddingProvider,
    ScriptedTextService,
    TextRequest,
)


def req(content: str, system: str = "sys") -> TextRequest:
    return TextRequest(system_instruction=system, user_content=content)


class TestScriptedTextService:
    def test_first_match_wins(self):
        svc = ScriptedTextService(
            [
                {"match": "pump", "reply": "A"},
                {"match": "pump bearing", "reply": "B"},
            ]
        )
        assert svc.complete(req("the pump bearing failed")) == "A"

    def test_no_match_raises_service_unavailable(self):
        svc = ScriptedTextService([{"match": "x", "reply": "y"}])
        with pytest.raises(ServiceUnavailableError):
            svc.complete(req("nothing here"))

    def test_calls_recorded(self):
        svc = ScriptedTextService([{"match": "a", "reply": "r"}])
        svc.complete(req("a"))
        svc.complete(req("again a"))
        assert [c.user_content for c in svc.calls] == ["a", "again a"]

    def test_missing_keys_rejected(self):
        with pytest.raises(ValueError):
            ScriptedTextService([{"match": "a"}])


class TestEntityMarkerTextService:
    def test_lists_marked_entities_in_order(self):
        svc = EntityMarkerTextService()
        reply = svc.complete(req("a [[Bearing]] b [[Shaft seal]] c [[bearing]]"))
        assert reply == "1. Bearing\n2. Shaft seal"

    def test_no_markers(self):
        svc = EntityMarkerTextService()
        assert "No entities" in svc.complete(req("plain text"))

    def test_passthrough_instruction_echoes(self):
        svc = EntityMarkerTextService(passthrough_instructions=("CLEAN",))
        assert svc.complete(req("raw [[X]] text", system="CLEAN")) == "raw [[X]] text"
        assert svc.complete(req("raw [[X]] text", system="other")) == "1. X"


class TestScriptedEmbeddingProvider:
    def test_lookup(self):
        svc = ScriptedEmbeddingProvider({"a": [1.0, 0.0], "b": [0.0, 1.0]})
        assert svc.embed_batch(["b", "a"]) == [[0.0, 1.0], [1.0, 0.0]]
        assert svc.dim == 2

    def test_unknown_text_raises(self):
        svc = ScriptedEmbeddingProvider({"a": [1.0]})
        with pytest.raises(ProviderUnavailableError):
            svc.embed_batch(["missing"])


class TestHashEmbeddingProvider:
    def test_deterministic_across_instances(self):
        a = HashEmbeddingProvider(dim=32)
        b = HashEmbeddingProvider(dim=32)
        assert a.embed_batch(["Bearing wear"]) == b.embed_batch(["Bearing wear"])

    def test_unit_norm(self):
        vec = HashEmbeddingProvider(dim=64).embed_batch(["shaft seal leakage"])[0]
        assert len(vec) == 64
        assert math.isclose(sum(v * v for v in vec), 1.0, rel_tol=1e-12)

    def test_single_token_vector_matches_md5_oracle(self):
        # Independent recomputation of the token placement rule.
        dim = 16
        token = "bearing"
        digest = hashlib.md5(token.encode()).digest()
        index = int.from_bytes(digest[:8], "little") % dim
        sign = 1.0 if digest[8] & 1 else -1.0
        vec = HashEmbeddingProvider(dim=dim).embed_batch(["Bearing"])[0]
        expected = [0.0] * dim
        expected[index] = sign
        assert vec == expected

    def test_tokenization_case_and_punctuation_insensitive(self):
        p = HashEmbeddingProvider(dim=64)
        assert p.embed_batch(["Shaft-Seal!"]) == p.embed_batch(["shaft seal"])

    def test_token_order_irrelevant(self):
        p = HashEmbeddingProvider(dim=64)
        assert p.embed_batch(["wear bearing"]) == p.embed_batch(["bearing wear"])

    def test_no_tokens_gives_zero_vector(self):
        vec = HashEmbeddingProvider(dim=8).embed_batch(["???"])[0]
        assert vec == [0.0] * 8

    def test_rejects_nonpositive_dim(self):
        with pytest.raises(ValueError):
            HashEmbeddingProvider(dim=0)
