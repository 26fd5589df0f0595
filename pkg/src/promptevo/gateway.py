"""Evaluator boundary: a JSON-over-HTTP model client and a synthetic oracle.

Wire protocol (UTF-8 JSON bodies):

    POST /v1/score_labels  {"text": str, "label_words": [str, ...]}
                        -> {"scores": {word: number, ...}}
    POST /v1/generate      {"text": str, "max_new_tokens": int}
                        -> {"text": str}

Failures come back as a non-2xx status with ``{"error": str}``.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import requests

from promptevo.prompt import Prompt, PromptTemplate, Verbalizer

log = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    pass


class TransportError(GatewayError):
    """Connection failure, timeout or 5xx; retried."""


class ProtocolError(GatewayError):
    """Response does not follow the wire schema; never retried."""


class RemoteError(GatewayError):
    """Server reported an error for this request; never retried."""


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str
    timeout: float = 30.0
    max_attempts: int = 3
    backoff: float = 0.5
    token_env: Optional[str] = None
    token: Optional[str] = None
    max_new_tokens: int = 128


class HttpGateway:
    def __init__(self, config: GatewayConfig, session: Optional[requests.Session] = None):
        if config.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.config = config
        self.session = session or requests.Session()
        token = config.token
        if token is None and config.token_env:
            token = os.environ.get(config.token_env)
        self._headers = {"Content-Type": "application/json"}
        if token:
            self._headers["Authorization"] = f"Bearer {token}"

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        last: Optional[Exception] = None
        for attempt in range(self.config.max_attempts):
            if attempt:
                time.sleep(self.config.backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    url, json=payload, headers=self._headers, timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last = TransportError(f"{url}: {exc}")
                log.warning("attempt %d/%d failed: %s", attempt + 1, self.config.max_attempts, exc)
                continue
            if resp.status_code >= 500:
                last = TransportError(f"{url}: HTTP {resp.status_code} {_error_text(resp)}")
                log.warning("attempt %d/%d failed: %s", attempt + 1, self.config.max_attempts, last)
                continue
            if not 200 <= resp.status_code < 300:
                raise RemoteError(f"{url}: HTTP {resp.status_code} {_error_text(resp)}")
            try:
                body = resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{url}: response is not JSON") from exc
            if not isinstance(body, dict):
                raise ProtocolError(f"{url}: response is not a JSON object")
            return body
        raise last

    def score_label_words(self, text: str, label_words: Sequence[str]) -> dict[str, float]:
        words = list(label_words)
        if not words or len(set(words)) != len(words):
            raise ValueError("label_words must be non-empty and unique")
        body = self._post("/v1/score_labels", {"text": text, "label_words": words})
        scores = body.get("scores")
        if not isinstance(scores, dict):
            raise ProtocolError("response lacks a 'scores' object")
        out = {}
        for w in words:
            if w not in scores:
                raise ProtocolError(f"response has no score for {w!r}")
            v = scores[w]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ProtocolError(f"score for {w!r} is not a non-negative number: {v!r}")
            out[w] = float(v)
        return out

    def generate(self, text: str, max_new_tokens: Optional[int] = None) -> str:
        n = max_new_tokens or self.config.max_new_tokens
        if n < 1 or n > self.config.max_new_tokens:
            raise ValueError(f"max_new_tokens must lie in [1, {self.config.max_new_tokens}]")
        body = self._post("/v1/generate", {"text": text, "max_new_tokens": n})
        out = body.get("text")
        if not isinstance(out, str):
            raise ProtocolError("response lacks a string 'text' field")
        return out


def _error_text(resp) -> str:
    try:
        return str(resp.json().get("error", ""))
    except (ValueError, AttributeError):
        return resp.text[:200]


# -- synthetic oracle --------------------------------------------------------


@dataclass(frozen=True)
class SyntheticOracleSpec:
    target_template: PromptTemplate
    target_verbalizer: Optional[Verbalizer] = None
    w_words: float = 0.5
    w_order: float = 0.25
    w_verb: float = 0.25

    def __post_init__(self):
        if abs(self.w_words + self.w_order + self.w_verb - 1.0) > 1e-12:
            raise ValueError("synthetic oracle weights must sum to 1")


def _jaccard(a, b) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def synthetic_fitness(prompt: Prompt, spec: SyntheticOracleSpec) -> float:
    """Similarity of ``prompt`` to a planted target, in [0, 1].

    Combines word-set overlap, exact order match and per-class label-word
    overlap. Without verbalizers on both sides the verbalizer weight is folded
    back into the other two terms.
    """
    t, target = prompt.template, spec.target_template
    words = _jaccard(t.words, target.words)
    order = 1.0 if t.order == target.order else 0.0
    if prompt.verbalizer is not None and spec.target_verbalizer is not None:
        v, tv = prompt.verbalizer, spec.target_verbalizer
        verb = 0.5 * (_jaccard(v.positive, tv.positive) + _jaccard(v.negative, tv.negative))
        return spec.w_words * words + spec.w_order * order + spec.w_verb * verb
    scale = spec.w_words + spec.w_order
    return (spec.w_words * words + spec.w_order * order) / scale


class SyntheticEvaluator:
    """Callable evaluator backed by :func:`synthetic_fitness`."""

    def __init__(self, spec: SyntheticOracleSpec):
        self.spec = spec

    def __call__(self, prompt: Prompt) -> float:
        return synthetic_fitness(prompt, self.spec)
