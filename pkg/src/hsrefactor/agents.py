"""Agent roles, the four-section prompt template, and text-generation backends.

Every agent prompt has the same shape: a role statement, instructions, a
context block built from earlier artifacts, and a validation clause. The
output of one agent is stored as an ``AgentMessage`` and becomes a context
slot of the next.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx
import yaml

from . import checklist
from .errors import (
    AuthFailure,
    BackendRefusal,
    BackendUnavailable,
    ContextOverflow,
    MissingSlot,
    PipelineWiring,
    ScriptMiss,
)

log = logging.getLogger(__name__)

# artifact kinds
SOURCE_CODE = "SourceCode"
STATIC_SMELLS = "StaticSmellReport"
VERIFICATION = "VerificationReport"
STRUCTURE = "StructureOverview"
SMELL_ANALYSIS = "SmellAnalysis"
STRATEGY = "RefactoringStrategy"
EXPERT_OUT = "ExpertRefactoring"
LEAD_OUT = "LeadRefactoring"
VALIDATION = "ValidationReport"
DEBUG_OUT = "DebugVerdict"

# produced by the pipeline itself rather than by an agent
SYSTEM_KINDS = frozenset({SOURCE_CODE, STATIC_SMELLS, VERIFICATION})

SLOT_FOR_KIND = {
    SOURCE_CODE: "source_code",
    STATIC_SMELLS: "smell_report",
    VERIFICATION: "verification_report",
    STRUCTURE: "structure_overview",
    SMELL_ANALYSIS: "smell_analysis",
    STRATEGY: "strategy",
    EXPERT_OUT: "expert_changes",
    LEAD_OUT: "lead_changes",
    VALIDATION: "validation_report",
}

_MARKER = re.compile(r"\{\{\s*(\w+)\s*\}\}")
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 4096
DEFAULT_CONTEXT_WINDOW = 128_000

FILE_BLOCK_CONTRACT = (
    "Return every file you change in full, each introduced by a header line of the form\n"
    "=== FILE: <relative path> ===\n"
    "followed by the complete new file content. Do not wrap blocks in code fences. "
    "Files you do not change must not appear."
)


def estimate_tokens(text: str) -> int:
    # rough heuristic: about four characters per token
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class PromptTemplate:
    role_section: str
    instruction_section: str
    context_slots: tuple[str, ...]
    validation_section: str | None = None

    def skeleton(self) -> str:
        parts = [
            "## Role\n" + self.role_section.strip(),
            "## Instructions\n" + self.instruction_section.strip(),
            "## Context\n" + "\n\n".join(f"### {slot}\n{{{{{slot}}}}}" for slot in self.context_slots),
            "## Validation\n" + (self.validation_section or "Check your answer against the instructions before replying.").strip(),
        ]
        return "\n\n".join(parts) + "\n"


@dataclass(frozen=True)
class AgentRole:
    name: str
    template: PromptTemplate
    input_kinds: tuple[str, ...]
    output_kind: str


@dataclass(frozen=True)
class AgentMessage:
    from_role: str
    kind: str
    payload: str
    token_estimate: int = 0

    @classmethod
    def make(cls, from_role: str, kind: str, payload: str) -> "AgentMessage":
        return cls(from_role, kind, payload, estimate_tokens(payload))


@dataclass(frozen=True)
class BackendRequest:
    prompt: str
    role: str
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE


@dataclass(frozen=True)
class BackendResponse:
    completion: str
    usage: Mapping[str, int] = field(default_factory=dict)
    backend: str = ""


class Backend(Protocol):
    name: str
    context_window: int

    def complete(self, request: BackendRequest) -> BackendResponse: ...


def render_prompt(role: AgentRole, bindings: Mapping[str, str]) -> str:
    """Substitute every context slot; values are inserted verbatim, never rescanned."""
    for slot in role.template.context_slots:
        if slot not in bindings:
            raise MissingSlot(slot)

    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in bindings:
            raise MissingSlot(name)
        return str(bindings[name]).rstrip("\n")

    return _MARKER.sub(sub, role.template.skeleton())


# ---------------------------------------------------------------- roles

_CHECKLIST_TEXT = "\n".join(
    f"{it.id}. [{it.category_name}] {it.description}" for it in checklist.load_checklist()
)

ROLES: dict[str, AgentRole] = {}


def _role(name, role_text, instructions, inputs, output, validation):
    slots = tuple(SLOT_FOR_KIND[k] for k in inputs)
    ROLES[name] = AgentRole(name, PromptTemplate(role_text, instructions, slots, validation), tuple(inputs), output)


_role(
    "ContextStructure",
    "You are a Haskell architect who maps an unfamiliar codebase before anyone edits it.",
    "Describe the project's structure: its modules and what each is responsible for, the main data "
    "types, the important functions and how they call each other, and the external libraries it leans on. "
    "Name the architectural style if one is apparent (layered, hexagonal, onion or none); this is "
    "informational only. Keep the overview compact; later agents read it as context.",
    [SOURCE_CODE],
    STRUCTURE,
    "Every module you mention must exist in the supplied source. Do not propose changes yet.",
)
_role(
    "CodeSmells",
    "You are a Haskell reviewer who finds maintainability problems using a fixed checklist.",
    "Review the project against this checklist and report the smells you find. The static findings "
    "below were produced by a tool and are already confirmed; add the smells that need judgement.\n\n"
    + _CHECKLIST_TEXT
    + "\n\nFor each smell give the checklist number, the file and function, and one line of evidence.",
    [STRUCTURE, STATIC_SMELLS],
    SMELL_ANALYSIS,
    "Only cite checklist numbers from the list above. Do not invent files or functions.",
)
_role(
    "RefactorStrategy",
    "You are a senior Haskell engineer who plans refactorings.",
    "Turn the smell analysis into an ordered refactoring plan. Prefer small behaviour-preserving steps. "
    "Mark each step as simple (renaming, splitting large functions, merging duplicates) or advanced "
    "(type-level redesign, performance, idiomatic abstractions). Useful patterns:\n\n"
    + checklist.render_catalog(),
    [STRUCTURE, SMELL_ANALYSIS],
    STRATEGY,
    "Every step must name the smell it addresses and the files it touches.",
)
_role(
    "RefactorExpert",
    "You are a Haskell developer who carries out the simple steps of a refactoring plan.",
    "Apply only the simple steps of the plan to the code below: break up large functions, consolidate "
    "duplicated code and improve names. Keep exported names and behaviour unchanged.\n\n" + FILE_BLOCK_CONTRACT,
    [STRATEGY, SOURCE_CODE],
    EXPERT_OUT,
    "The result must compile and every file must be complete. If nothing needs changing, return no blocks.",
)
_role(
    "RefactorLead",
    "You are the lead Haskell engineer who finishes a refactoring to project standards.",
    "Review the expert's changes and the current code, then apply the advanced steps of the plan: "
    "stronger types, idiomatic abstractions, strictness and performance fixes, and consistent style. "
    "Fix anything the expert got wrong.\n\n" + FILE_BLOCK_CONTRACT,
    [STRUCTURE, STRATEGY, EXPERT_OUT, SOURCE_CODE],
    LEAD_OUT,
    "Preserve observable behaviour and public interfaces. Every file must be complete.",
)
_role(
    "TestingValidation",
    "You are a Haskell test engineer who judges whether a refactoring is safe to ship.",
    "Read the verification results (compiler, test suite, lint comparison) and the lead's changes. "
    "Summarise what passed, what failed and which files are responsible for each failure.",
    [LEAD_OUT, VERIFICATION],
    VALIDATION,
    "Base every statement on the verification results; do not speculate about untested behaviour.",
)
_role(
    "Debug",
    "You are a Haskell debugger who repairs code that failed verification.",
    "Fix the failures listed in the verification report with the smallest change that keeps the "
    "refactoring's intent. Start with compiler errors.\n\n" + FILE_BLOCK_CONTRACT,
    [VALIDATION, VERIFICATION, SOURCE_CODE],
    DEBUG_OUT,
    "Address every listed failure. Do not reintroduce smells the refactoring removed.",
)

PIPELINE_ORDER = (
    "ContextStructure",
    "CodeSmells",
    "RefactorStrategy",
    "RefactorExpert",
    "RefactorLead",
    "TestingValidation",
    "Debug",
)


def check_chain(order: Sequence[str] = PIPELINE_ORDER, initial=SYSTEM_KINDS) -> None:
    """Raise PipelineWiring unless each role's inputs exist by the time it runs."""
    available = set(initial)
    for name in order:
        role = ROLES[name]
        missing = [k for k in role.input_kinds if k not in available]
        if missing:
            raise PipelineWiring(f"{name} needs {missing} which no earlier step produces")
        available.add(role.output_kind)


# ---------------------------------------------------------------- audit


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


class AuditLog:
    """Append-only record of every backend call, optionally mirrored to NDJSON."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.entries: list[dict] = []
        self._lock = threading.Lock()

    def record(self, request: BackendRequest, response: BackendResponse | None, error: str | None = None) -> None:
        with self._lock:
            entry = {
                "seq": len(self.entries) + 1,
                "role": request.role,
                "digest": prompt_digest(request.prompt),
                "params": {"max_tokens": request.max_tokens, "temperature": request.temperature},
                "prompt": request.prompt,
                "completion": response.completion if response else None,
                "usage": dict(response.usage) if response else None,
                "backend": response.backend if response else None,
                "error": error,
            }
            self.entries.append(entry)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")


def latest(history: Sequence[AgentMessage], kind: str) -> AgentMessage | None:
    for msg in reversed(history):
        if msg.kind == kind:
            return msg
    return None


def invoke(
    role: AgentRole,
    history: Sequence[AgentMessage],
    backend: Backend,
    *,
    audit: AuditLog | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    temperature: float = DEFAULT_TEMPERATURE,
) -> AgentMessage:
    bindings = {}
    for kind in role.input_kinds:
        msg = latest(history, kind)
        if msg is None:
            raise PipelineWiring(f"{role.name} needs a {kind} artifact but none was produced")
        bindings[SLOT_FOR_KIND[kind]] = msg.payload
    prompt = render_prompt(role, bindings)
    tokens = estimate_tokens(prompt)
    window = getattr(backend, "context_window", DEFAULT_CONTEXT_WINDOW)
    if tokens + max_tokens > window:
        raise ContextOverflow(tokens, window)
    request = BackendRequest(prompt, role.name, max_tokens, temperature)
    try:
        response = backend.complete(request)
    except Exception as exc:
        if audit is not None:
            audit.record(request, None, error=f"{type(exc).__name__}: {exc}")
        raise
    if not response.completion.strip():
        if audit is not None:
            audit.record(request, response, error="empty completion")
        raise BackendRefusal(f"{role.name}: backend returned an empty completion")
    if audit is not None:
        audit.record(request, response)
    return AgentMessage.make(role.name, role.output_kind, response.completion)


# ---------------------------------------------------------------- backends

_SCRIPTED_ERRORS = {
    "unavailable": BackendUnavailable,
    "refusal": BackendRefusal,
}


class MockBackend:
    """Scripted backend keyed by (role, prompt digest); ``"*"`` matches any digest.

    A list of completions is replayed in order, the last one repeating.
    """

    name = "mock"

    def __init__(
        self,
        script: Mapping[tuple[str, str], Any],
        *,
        strict: bool = True,
        default: str = "error",
        context_window: int = DEFAULT_CONTEXT_WINDOW,
    ):
        if default not in ("error", "echo"):
            raise ValueError("default must be 'error' or 'echo'")
        self.script = dict(script)
        self.strict = strict
        self.default = default
        self.context_window = context_window
        self._calls: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()

    def _lookup(self, role: str, digest: str):
        for key in ((role, digest), (role, "*")):
            if key in self.script:
                value = self.script[key]
                if isinstance(value, list):
                    with self._lock:
                        n = self._calls.get(key, 0)
                        self._calls[key] = n + 1
                    value = value[min(n, len(value) - 1)]
                return value
        return None

    def complete(self, request: BackendRequest) -> BackendResponse:
        digest = prompt_digest(request.prompt)
        value = self._lookup(request.role, digest)
        if value is None:
            if self.strict or self.default == "error":
                raise ScriptMiss(f"no scripted completion for ({request.role}, {digest})")
            value = request.prompt
        if isinstance(value, Mapping) and "error" in value:
            raise _SCRIPTED_ERRORS[value["error"]](value.get("message", "scripted failure"))
        text = str(value)
        usage = {"prompt_tokens": estimate_tokens(request.prompt), "completion_tokens": estimate_tokens(text)}
        return BackendResponse(text, usage, self.name)


def mock_backend(script: Mapping[tuple[str, str], Any], **kwargs) -> MockBackend:
    return MockBackend(script, **kwargs)


def load_script(path: str | Path) -> MockBackend:
    """Build a MockBackend from a YAML script file.

    Format::

        strict: true
        default: error
        responses:
          - role: RefactorExpert
            digest: "*"
            completion: "..."        # or completions: [..] or error: unavailable
    """
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    script: dict[tuple[str, str], Any] = {}
    for entry in data.get("responses", []):
        key = (entry["role"], str(entry.get("digest", "*")))
        if "completions" in entry:
            script[key] = list(entry["completions"])
        elif "error" in entry:
            script[key] = {"error": entry["error"]}
        else:
            script[key] = entry["completion"]
    return MockBackend(
        script,
        strict=bool(data.get("strict", True)),
        default=data.get("default", "error"),
        context_window=int(data.get("context_window", DEFAULT_CONTEXT_WINDOW)),
    )


DEFAULT_API_KEY_ENV = "HSREFACTOR_API_KEY"


class RemoteBackend:
    """Chat-completion client over JSON/HTTP with bounded retries."""

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 120.0,
        context_window: int = DEFAULT_CONTEXT_WINDOW,
        max_attempts: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.context_window = context_window
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.transport = transport
        self.sleep = sleep

    def complete(self, request: BackendRequest) -> BackendResponse:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthFailure(f"credential variable {self.api_key_env} is not set")
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {key}"}
        last_error = "no attempt made"
        with httpx.Client(transport=self.transport, timeout=self.timeout) as client:
            for attempt in range(1, self.max_attempts + 1):
                try:
                    resp = client.post(self.endpoint, json=body, headers=headers)
                except httpx.TransportError as exc:
                    last_error = f"{type(exc).__name__}: {exc}"
                else:
                    if resp.status_code in (401, 403):
                        raise AuthFailure(f"endpoint rejected credential ({resp.status_code})")
                    if resp.status_code == 429 or resp.status_code >= 500:
                        last_error = f"HTTP {resp.status_code}"
                    elif resp.status_code >= 400:
                        raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
                    else:
                        return self._parse(resp)
                log.warning("backend attempt %d/%d failed: %s", attempt, self.max_attempts, last_error)
                if attempt < self.max_attempts:
                    self.sleep(self.backoff * 2 ** (attempt - 1))
        raise BackendUnavailable(f"gave up after {self.max_attempts} attempts: {last_error}")

    def _parse(self, resp: httpx.Response) -> BackendResponse:
        try:
            data = resp.json()
            choice = data["choices"][0]
            message = choice.get("message") or {}
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"unexpected response body: {exc}") from exc
        content = message.get("content") or ""
        if message.get("refusal") or choice.get("finish_reason") == "content_filter" or not content.strip():
            raise BackendRefusal(message.get("refusal") or "completion was empty or filtered")
        usage = {k: int(v) for k, v in (data.get("usage") or {}).items() if isinstance(v, int)}
        return BackendResponse(content, usage, f"{self.name}:{self.model}")


def remote_backend(config: Mapping[str, Any], **kwargs) -> RemoteBackend:
    try:
        endpoint, model = config["endpoint"], config["model"]
    except KeyError as exc:
        raise BackendUnavailable(f"remote backend config lacks {exc}") from exc
    opts = {k: config[k] for k in ("api_key_env", "timeout", "context_window", "max_attempts", "backoff") if k in config}
    opts.update(kwargs)
    return RemoteBackend(endpoint, model, **opts)
