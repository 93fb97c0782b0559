"""Chat-completion gateway: prompt templates, providers, retries and usage accounting.

Every natural-language generation step goes through :class:`Gateway`.  Two
providers ship with it: :class:`OpenAIChatProvider` for any OpenAI-compatible
HTTP endpoint, and :class:`ScriptedProvider`, which replays canned responses
and makes whole pipeline runs reproducible offline.
"""
from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence, Union

import httpx

log = logging.getLogger(__name__)

__all__ = [
    "GatewayError",
    "RequestError",
    "ProviderError",
    "TransientProviderError",
    "ScriptExhaustedError",
    "ChatRequest",
    "Usage",
    "Completion",
    "ScriptEntry",
    "ScriptedProvider",
    "OpenAIChatProvider",
    "Gateway",
    "load_templates",
    "render_template",
    "extract_block",
    "parse_list",
]


class GatewayError(RuntimeError):
    pass


class RequestError(GatewayError, ValueError):
    pass


class ProviderError(GatewayError):
    pass


class TransientProviderError(ProviderError):
    """Raised by providers for failures worth retrying (transport, 429, 5xx)."""


class ScriptExhaustedError(ProviderError):
    pass


_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def load_templates() -> dict[str, str]:
    pkg = resources.files("coevolve") / "prompts"
    return {
        p.name[:-4]: p.read_text(encoding="utf-8")
        for p in pkg.iterdir()
        if p.name.endswith(".txt")
    }


def render_template(template: str, variables: Mapping[str, Any]) -> str:
    """Substitute ``{name}`` placeholders; braces around anything else are left alone."""
    missing = [name for name in _PLACEHOLDER.findall(template) if name not in variables]
    if missing:
        raise RequestError(f"unbound template variables: {sorted(set(missing))}")
    return _PLACEHOLDER.sub(lambda m: str(variables[m.group(1)]), template)


@dataclass(frozen=True)
class ChatRequest:
    template_id: str
    variables: Mapping[str, Any] = field(default_factory=dict)
    sample_count: int = 1
    temperature: float = 0.8
    top_p: float = 0.95
    top_k: int = 40
    max_tokens: int = 2048
    seed: Optional[int] = None


@dataclass
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    call_count: int = 0

    def add(self, other: "Usage") -> None:
        self.prompt_tokens += other.prompt_tokens
        self.completion_tokens += other.completion_tokens
        self.call_count += other.call_count

    def to_dict(self) -> dict[str, int]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "call_count": self.call_count,
        }


@dataclass(frozen=True)
class Completion:
    texts: tuple[str, ...]
    usage: Usage


Responder = Callable[[Mapping[str, Any], int], Sequence[str]]


@dataclass
class ScriptEntry:
    """One canned answer.

    ``when`` maps variable names to substrings that must occur in the bound
    value.  ``responses`` is either a list of texts or a callable
    ``(variables, n) -> texts``.  Non-repeating entries are consumed on use.
    """

    template_id: str
    responses: Union[Sequence[str], Responder]
    when: Mapping[str, str] = field(default_factory=dict)
    repeat: bool = False

    def matches(self, template_id: str, variables: Mapping[str, Any]) -> bool:
        if self.template_id not in ("*", template_id):
            return False
        return all(k in variables and v in str(variables[k]) for k, v in self.when.items())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScriptEntry":
        responses = d["responses"]
        if not callable(responses):
            responses = list(responses)
        return cls(d["template"], responses, dict(d.get("when", {})), bool(d.get("repeat", False)))


class ScriptedProvider:
    """Deterministic provider that serves responses from an ordered script."""

    serial = True

    def __init__(self, entries: Iterable[Union[ScriptEntry, Mapping[str, Any]]]):
        self._entries = [e if isinstance(e, ScriptEntry) else ScriptEntry.from_dict(e) for e in entries]
        self._used = [False] * len(self._entries)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Union[str, os.PathLike]) -> "ScriptedProvider":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def reset(self) -> None:
        self._used = [False] * len(self._entries)

    def generate(self, request: ChatRequest, prompt: str) -> tuple[list[str], Usage]:
        with self._lock:
            for k, entry in enumerate(self._entries):
                if self._used[k] or not entry.matches(request.template_id, request.variables):
                    continue
                if not entry.repeat:
                    self._used[k] = True
                if callable(entry.responses):
                    texts = list(entry.responses(request.variables, request.sample_count))
                else:
                    texts = list(entry.responses)
                if len(texts) < request.sample_count:
                    raise ScriptExhaustedError(
                        f"script entry for {request.template_id!r} has {len(texts)} responses, "
                        f"{request.sample_count} requested"
                    )
                texts = texts[: request.sample_count]
                usage = Usage(len(prompt.split()), sum(len(t.split()) for t in texts), 1)
                return texts, usage
        raise ScriptExhaustedError(f"no script entry left for template {request.template_id!r}")


class OpenAIChatProvider:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    serial = False

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 120.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, request: ChatRequest, prompt: str) -> tuple[list[str], Usage]:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "n": request.sample_count,
            "temperature": request.temperature,
            "top_p": request.top_p,
            "top_k": request.top_k,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        try:
            resp = self._client.post(f"{self.endpoint}/chat/completions", json=payload, headers=self._headers())
        except httpx.TransportError as exc:
            raise TransientProviderError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        texts = [choice["message"]["content"] or "" for choice in body.get("choices", [])]
        # some servers ignore n; the gateway tops up with extra calls
        u = body.get("usage") or {}
        usage = Usage(int(u.get("prompt_tokens", 0)), int(u.get("completion_tokens", 0)), 1)
        return texts, usage


class Gateway:
    """Renders templates and dispatches them to a provider with retries.

    Token usage accumulates in :attr:`usage`.
    """

    def __init__(
        self,
        provider,
        templates: Optional[Mapping[str, str]] = None,
        max_in_flight: int = 8,
        retries: int = 3,
        base_delay: float = 0.5,
        backoff: float = 2.0,
        max_delay: float = 8.0,
        defaults: Optional[Mapping[str, Any]] = None,
    ):
        self.provider = provider
        self.templates = dict(load_templates() if templates is None else templates)
        self.max_in_flight = max_in_flight
        self.retries = retries
        self.base_delay = base_delay
        self.backoff = backoff
        self.max_delay = max_delay
        self.defaults = dict(defaults or {})
        self.usage = Usage()
        self.prompt_hooks: list[Callable[[str, str], None]] = []
        self._usage_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def request(self, template_id: str, variables: Mapping[str, Any], **kwargs) -> ChatRequest:
        return ChatRequest(template_id, dict(variables), **{**self.defaults, **kwargs})

    def render(self, template_id: str, variables: Mapping[str, Any]) -> str:
        try:
            template = self.templates[template_id]
        except KeyError:
            raise RequestError(f"unknown template {template_id!r}") from None
        return render_template(template, variables)

    def _call(self, request: ChatRequest, prompt: str) -> tuple[list[str], Usage]:
        delay = self.base_delay
        for attempt in range(1, self.retries + 1):
            try:
                with self._slots:
                    return self.provider.generate(request, prompt)
            except TransientProviderError as exc:
                if attempt == self.retries:
                    raise ProviderError(f"giving up after {attempt} attempts: {exc}") from exc
                log.warning("transient provider failure (attempt %d): %s", attempt, exc)
                time.sleep(min(delay, self.max_delay))
                delay *= self.backoff
        raise AssertionError("unreachable")

    def complete(self, request: ChatRequest) -> Completion:
        if request.sample_count < 1:
            raise RequestError("sample_count must be >= 1")
        prompt = self.render(request.template_id, request.variables)
        for hook in self.prompt_hooks:
            hook(request.template_id, prompt)
        texts: list[str] = []
        usage = Usage()
        while len(texts) < request.sample_count:
            remaining = request.sample_count - len(texts)
            sub = request if remaining == request.sample_count else _with_count(request, remaining)
            got, u = self._call(sub, prompt)
            if not got:
                raise ProviderError("provider returned no completions")
            texts.extend(got[:remaining])
            usage.add(u)
        with self._usage_lock:
            self.usage.add(usage)
        return Completion(tuple(texts), usage)

    def complete_many(self, requests: Sequence[ChatRequest]) -> list[Completion]:
        """Run requests with bounded fan-out; results keep request order."""
        if getattr(self.provider, "serial", True) or len(requests) <= 1:
            return [self.complete(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self.complete, requests))


def _with_count(request: ChatRequest, n: int) -> ChatRequest:
    return replace(request, sample_count=n)


_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def extract_block(text: str) -> str:
    """Body of the last fenced block, or the whole text when there is none."""
    blocks = _FENCE.findall(text)
    if blocks:
        return blocks[-1].rstrip("\n")
    return text.strip()


_BULLET = re.compile(r"^\s*(?:[-*•]|\(?\d+[.)]|\d+\s*[:-])\s*")


def parse_list(text: str) -> list[str]:
    """Split a numbered or bulleted list into items, one per non-empty line."""
    items = []
    for line in text.splitlines():
        item = _BULLET.sub("", line, count=1).strip()
        if item:
            items.append(item)
    return items
