"""Client for external AMR parsers, with a persistent on-disk cache.

Every passage's graph is obtained once and cached as Penman text (one file
per passage id), so training and evaluation never depend on parser
availability.  Three backends implement the one-shot text-in/Penman-out
exchange: a subprocess command, an HTTP endpoint, and an in-process
deterministic stub used by tests and the synthetic corpus.
"""

from __future__ import annotations

import json
import os
import re
import subprocess
import tempfile
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol

from .amr import AMRGraph, parse_penman
from .errors import ArgexError, BackendUnavailable, InvalidBackendOutput


@dataclass(frozen=True)
class ParseRequest:
    passage_id: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"empty text for passage {self.passage_id!r}")


class ParserBackend(Protocol):
    def parse(self, text: str) -> str:
        """Return Penman text for one passage."""


class StubBackend:
    """Deterministic rule-based parser stand-in.

    Known passages (e.g. from the synthetic generator) are answered from the
    ``responses`` map; anything else gets a flat placeholder graph built from
    the first few sanitized words, so output is always valid Penman.
    """

    def __init__(self, responses: Optional[Mapping[str, str]] = None):
        self.responses = dict(responses or {})
        self.call_count = 0

    def parse(self, text: str) -> str:
        self.call_count += 1
        hit = self.responses.get(text)
        if hit is not None:
            return hit
        words = []
        for raw in text.split():
            w = re.sub(r"[^a-z0-9-]", "", raw.lower()).strip("-")
            if w:
                words.append(w)
            if len(words) == 5:
                break
        if not words:
            return "(s0 / stub-parse)"
        body = " ".join(
            f":op{i + 1} (w{i} / {w})" for i, w in enumerate(words)
        )
        return f"(s0 / stub-parse {body})"


class SubprocessBackend:
    """Runs a command per request; passage text on stdin, Penman on stdout."""

    def __init__(self, command: list[str], timeout: float = 120.0):
        if isinstance(command, str):
            command = [command]
        self.command = list(command)
        self.timeout = timeout

    def parse(self, text: str) -> str:
        try:
            proc = subprocess.run(
                self.command,
                input=text,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendUnavailable(f"parser command failed: {exc}") from exc
        if proc.returncode != 0:
            raise BackendUnavailable(
                f"parser command exited with {proc.returncode}: {proc.stderr.strip()}"
            )
        return proc.stdout.strip()


class HttpBackend:
    """POSTs {"text": ...} as JSON; the response body is the Penman string."""

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout

    def parse(self, text: str) -> str:
        payload = json.dumps({"text": text}).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                return resp.read().decode("utf-8").strip()
        except (urllib.error.URLError, OSError) as exc:
            raise BackendUnavailable(f"parser endpoint unreachable: {exc}") from exc


def make_backend(descriptor: Mapping[str, object]) -> ParserBackend:
    """Build a backend from a config descriptor {kind, command-or-url}."""
    kind = descriptor.get("kind")
    if kind == "stub":
        responses = descriptor.get("responses")
        return StubBackend(responses)  # type: ignore[arg-type]
    if kind == "subprocess":
        return SubprocessBackend(descriptor["command"])  # type: ignore[index,arg-type]
    if kind == "http":
        return HttpBackend(str(descriptor["url"]))  # type: ignore[index]
    raise ValueError(f"unknown backend kind {kind!r}")


class AMRCache:
    """Directory of Penman files keyed by passage id.

    Writes go through a temp file plus :func:`os.replace`, so concurrent
    fetchers may duplicate work but can never leave a torn entry.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, passage_id: str) -> Path:
        # percent-encoding keeps arbitrary ids bijective with file names
        return self.directory / (urllib.parse.quote(passage_id, safe="") + ".penman")

    def get(self, passage_id: str) -> Optional[str]:
        path = self._path(passage_id)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, passage_id: str, penman_text: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(penman_text)
            os.replace(tmp, self._path(passage_id))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def __contains__(self, passage_id: str) -> bool:
        return self._path(passage_id).exists()

    def ids(self) -> list[str]:
        return sorted(
            urllib.parse.unquote(p.name[: -len(".penman")])
            for p in self.directory.glob("*.penman")
        )


def fetch_amr(
    req: ParseRequest, cache: AMRCache, backend: Optional[ParserBackend] = None
) -> AMRGraph:
    """Return the graph for one passage, consulting the cache first.

    A cache hit never touches the backend.  On a miss the backend response
    is validated before being stored, so the cache only ever holds parseable
    Penman text.
    """
    cached = cache.get(req.passage_id)
    if cached is not None:
        return parse_penman(cached)
    if backend is None:
        raise BackendUnavailable(
            f"no cached AMR for {req.passage_id!r} and no backend configured"
        )
    response = backend.parse(req.text)
    try:
        graph = parse_penman(response)
    except ArgexError as exc:
        raise InvalidBackendOutput(
            f"backend returned unparseable Penman for {req.passage_id!r}: {exc}"
        ) from exc
    cache.put(req.passage_id, response)
    return graph


def precompute_corpus(dataset: Iterable, cache: AMRCache,
                      backend: Optional[ParserBackend] = None) -> int:
    """Ensure every passage in the dataset has a cache entry.

    Instances that embed their own ``amr`` text are validated and stored
    without a backend call.  Returns the number of newly cached passages;
    a second run over the same dataset returns 0.
    """
    new = 0
    for inst in dataset:
        pid = inst.doc_id
        if pid in cache:
            continue
        try:
            embedded = getattr(inst, "amr", None)
            if embedded is not None:
                parse_penman(embedded)
                cache.put(pid, embedded)
            else:
                fetch_amr(ParseRequest(pid, " ".join(inst.tokens)), cache, backend)
        except (ArgexError, ValueError) as exc:
            raise type(exc)(f"passage {pid!r}: {exc}") from exc
        new += 1
    return new
