"""Pluggable text-generation and embedding providers.

Wire contracts:

* text service — request ``{system_instruction, user_content, max_output_chars}``,
  response ``{text}``.
* embedding service — request ``{texts: [...]}``, response ``{vectors: [[...]]}``.

Besides HTTP transports, two offline families are built in: scripted fixtures
for tests (literal request->response tables) and a deterministic token-hash
embedder so the whole system runs with no network at all.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import ProviderUnavailableError, ServiceUnavailableError

DEFAULT_MAX_OUTPUT_CHARS = 4000


@dataclass(frozen=True)
class TextRequest:
    system_instruction: str
    user_content: str
    max_output_chars: int = DEFAULT_MAX_OUTPUT_CHARS


class TextService(Protocol):
    def complete(self, request: TextRequest) -> str:
        """Return the service's reply text for one request."""
        ...


class EmbeddingProvider(Protocol):
    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        """Return one vector per input text, in order."""
        ...


class ScriptedTextService:
    """Replays canned replies from an ordered ``[{match, reply}, ...]`` table.

    The first entry whose ``match`` string occurs in the request's user
    content wins. No match raises ServiceUnavailableError, which exercises
    the callers' fallback paths.
    """

    def __init__(self, entries: Sequence[dict[str, str]]):
        for entry in entries:
            if "match" not in entry or "reply" not in entry:
                raise ValueError("scripted entry needs 'match' and 'reply' keys")
        self.entries = list(entries)
        self.calls: list[TextRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedTextService":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def complete(self, request: TextRequest) -> str:
        self.calls.append(request)
        for entry in self.entries:
            if entry["match"] in request.user_content:
                return entry["reply"]
        raise ServiceUnavailableError(
            "no scripted reply matches the request", details={"entries": len(self.entries)}
        )


_MARKER_RE = re.compile(r"\[\[([^\[\]]+?)\]\]")


class EntityMarkerTextService:
    """Oracle service: answers by listing ``[[...]]``-marked entities.

    Generation prompts get back a numbered list of every marked entity found
    in the prompt, first occurrence order, de-duplicated. Requests whose
    system instruction is in ``passthrough_instructions`` (the ingestion
    cleaning and table-summary prompts) are echoed back verbatim so documents
    survive preprocessing unchanged.
    """

    def __init__(self, passthrough_instructions: Sequence[str] = ()):
        self.passthrough_instructions = tuple(passthrough_instructions)
        self.calls: list[TextRequest] = []

    def complete(self, request: TextRequest) -> str:
        self.calls.append(request)
        if request.system_instruction in self.passthrough_instructions:
            return request.user_content
        seen: set[str] = set()
        items: list[str] = []
        for match in _MARKER_RE.finditer(request.user_content):
            name = match.group(1).strip()
            key = name.casefold()
            if name and key not in seen:
                seen.add(key)
                items.append(name)
        if not items:
            return "No entities found in the provided context."
        return "\n".join(f"{i}. {name}" for i, name in enumerate(items, start=1))


class HttpTextService:
    """JSON-over-HTTP transport for the text-service contract."""

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self.token = token
        self.timeout = timeout

    def complete(self, request: TextRequest) -> str:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = httpx.post(
                self.endpoint,
                json={
                    "system_instruction": request.system_instruction,
                    "user_content": request.user_content,
                    "max_output_chars": request.max_output_chars,
                },
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            return str(resp.json()["text"])
        except httpx.HTTPError as exc:
            raise ServiceUnavailableError(f"text service request failed: {exc}") from exc


class ScriptedEmbeddingProvider:
    """Literal text->vector lookup table for tests.

    File form: ``{"dim": 8, "vectors": {"some text": [..], ...}}``.
    """

    def __init__(self, vectors: dict[str, Sequence[float]], dim: int | None = None):
        self.vectors = {text: [float(v) for v in vec] for text, vec in vectors.items()}
        if dim is None and self.vectors:
            dim = len(next(iter(self.vectors.values())))
        self.dim = dim

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedEmbeddingProvider":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["vectors"], dim=data.get("dim"))

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            if text not in self.vectors:
                raise ProviderUnavailableError(
                    f"no scripted vector for text: {text[:80]!r}"
                )
            out.append(list(self.vectors[text]))
        return out


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashEmbeddingProvider:
    """Deterministic bag-of-hashed-tokens embedder (offline default).

    Tokens are lowercased alphanumeric runs; each token is folded into a
    fixed-dimension vector at an md5-derived index with an md5-derived sign,
    and the sum is L2-normalized. Identical texts always embed identically,
    across processes and platforms.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def _embed_one(self, text: str) -> list[float]:
        vec = [0.0] * self.dim
        for token in _TOKEN_RE.findall(text.lower()):
            digest = hashlib.md5(token.encode("utf-8")).digest()
            index = int.from_bytes(digest[:8], "little") % self.dim
            sign = 1.0 if digest[8] & 1 else -1.0
            vec[index] += sign
        norm = sum(v * v for v in vec) ** 0.5
        if norm > 0.0:
            vec = [v / norm for v in vec]
        return vec

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        return [self._embed_one(text) for text in texts]


class HttpEmbeddingProvider:
    """JSON-over-HTTP transport for the embedding contract."""

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self.token = token
        self.timeout = timeout

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = httpx.post(
                self.endpoint,
                json={"texts": list(texts)},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
            return [[float(v) for v in vec] for vec in vectors]
        except httpx.HTTPError as exc:
            raise ProviderUnavailableError(f"embedding request failed: {exc}") from exc
