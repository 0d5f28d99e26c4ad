"""HTTP backend clients for scoring, generation, and embedding.

Wire contract (JSON over HTTP, paths relative to the handle's endpoint):

- POST /v1/score    {model, text, context?} -> {tokens: [str], logprobs: [num]}
  (logprobs cover the text only; context tokens are conditioned on but
  excluded)
- POST /v1/generate {model, prompt, temperature, top_p, top_k?, max_tokens}
                    -> {text, finish_reason}
- POST /v1/embed    {model, texts: [str]} -> {vectors: [[num]]}

Requests retry a bounded number of times on transport failures; each client
enforces its handle's in-flight limit with a semaphore, so callers may fan
out across threads freely.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import ProtocolError, TransportError
from .scoring import GenerationParams, GenerationResult, ScoredText

_RETRY_BACKOFF = 0.2  # seconds, multiplied by the attempt number


@dataclass(frozen=True)
class BackendHandle:
    """Where and how to reach one model endpoint.

    ``api_key_env`` names an environment variable holding a bearer token;
    secrets never live in config files.
    """

    endpoint: str
    model: str
    timeout: float = 30.0
    max_in_flight: int = 4
    retries: int = 2
    max_context_chars: int | None = None
    api_key_env: str | None = None

    def __post_init__(self):
        if not self.endpoint:
            raise ValueError("endpoint must be non-empty")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


class _HttpClient:
    def __init__(self, handle: BackendHandle):
        self.handle = handle
        self._session = requests.Session()
        if handle.api_key_env and os.environ.get(handle.api_key_env):
            self._session.headers["Authorization"] = (
                f"Bearer {os.environ[handle.api_key_env]}"
            )
        self._slots = threading.BoundedSemaphore(handle.max_in_flight)

    def _post(self, path: str, payload: dict) -> dict:
        url = self.handle.endpoint.rstrip("/") + path
        attempts = self.handle.retries + 1
        last_error: Exception | None = None
        for attempt in range(1, attempts + 1):
            try:
                with self._slots:
                    response = self._session.post(
                        url, json=payload, timeout=self.handle.timeout
                    )
                response.raise_for_status()
                return response.json()
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                if attempt < attempts:
                    time.sleep(_RETRY_BACKOFF * attempt)
            except requests.HTTPError as exc:
                raise TransportError(f"{url}: {exc}", attempts=attempt) from exc
            except ValueError as exc:  # non-JSON body
                raise ProtocolError(f"{url}: response is not JSON: {exc}") from exc
        raise TransportError(f"{url}: {last_error}", attempts=attempts)


class HttpScorer(_HttpClient):
    """Log-probability scoring against a remote /v1/score endpoint."""

    def score(self, text: str, context: str | None = None) -> ScoredText:
        if not text:
            raise ValueError("cannot score empty text")
        truncated = False
        limit = self.handle.max_context_chars
        if context and limit is not None and len(context) > limit:
            # keep the most recent context; mark the result
            context = context[len(context) - limit:]
            truncated = True
        payload: dict = {"model": self.handle.model, "text": text}
        if context is not None:
            payload["context"] = context
        data = self._post("/v1/score", payload)
        tokens = data.get("tokens")
        logprobs = data.get("logprobs")
        if not isinstance(tokens, list) or not isinstance(logprobs, list):
            raise ProtocolError("score response needs 'tokens' and 'logprobs' lists")
        if len(tokens) != len(logprobs):
            raise ProtocolError(
                f"token/logprob length mismatch: {len(tokens)} vs {len(logprobs)}"
            )
        try:
            return ScoredText(
                tokens=tuple(str(t) for t in tokens),
                logprobs=tuple(min(float(x), 0.0) for x in logprobs),
                context_len=len(context) if context else 0,
                truncated=truncated,
            )
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"invalid score response: {exc}") from exc


class HttpGenerator(_HttpClient):
    """Text generation against a remote /v1/generate endpoint."""

    @property
    def model(self) -> str:
        return self.handle.model

    def generate(
        self, prompt: str, params: GenerationParams | None = None
    ) -> GenerationResult:
        if not prompt:
            raise ValueError("cannot generate from an empty prompt")
        params = params or GenerationParams()
        payload: dict = {
            "model": self.handle.model,
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if params.top_k is not None:
            payload["top_k"] = params.top_k
        data = self._post("/v1/generate", payload)
        if "text" not in data:
            raise ProtocolError("generate response needs 'text'")
        return GenerationResult(
            text=str(data["text"]),
            finish_reason=str(data.get("finish_reason", "stop")),
        )


class HttpEmbedder(_HttpClient):
    """Embedding against a remote /v1/embed endpoint."""

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            return []
        if any(not t for t in texts):
            raise ValueError("cannot embed empty text")
        data = self._post(
            "/v1/embed", {"model": self.handle.model, "texts": list(texts)}
        )
        vectors = data.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProtocolError(
                "embed response needs one vector per input text"
            )
        try:
            return [np.asarray(v, dtype=float) for v in vectors]
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"invalid embed response: {exc}") from exc

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]
