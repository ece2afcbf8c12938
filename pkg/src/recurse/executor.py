"""Recursive generation: drive a backend, detect calls, recurse, splice returns.

The loop per context: generate; while the transcript holds an unexecuted
call, resolve it in a fresh child context (consulting the answer cache
first), splice the return, and keep generating; finish by extracting the
answer after the last ``Answer: `` marker.  Every context is captured in a
``Trace`` tree together with generation sizes and wall time.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field

from . import formats, parser
from .backends import GenerationRequest, ModelBackend
from .errors import (
    BackendError,
    ContextBudgetExceeded,
    DepthExceeded,
    ExecutorError,
    ExtractionError,
    GenerationBudgetExceeded,
    MalformedOutput,
)


@dataclass
class Limits:
    max_depth: int = 128
    max_contexts: int = 4096
    max_generation_units_per_context: int = 4096
    per_call_timeout_seconds: float | None = None

    def __post_init__(self):
        if min(self.max_depth, self.max_contexts, self.max_generation_units_per_context) < 1:
            raise ExecutorError("limits must be positive")


@dataclass
class Context:
    """One prompt plus everything generated and spliced into it."""

    prompt: str
    depth: int
    context_id: int = 0
    transcript: str = ""
    children: list[Context] = field(default_factory=list)
    answer: str | None = None
    gen_char_count: int = 0
    gen_token_count: int | None = None
    wall_seconds: float = 0.0
    cached_calls: int = 0
    stray_call_marks: int = 0
    # (kind, text) where kind is "generated" or "spliced"; transcript ==
    # prompt + concatenation of segment texts
    segments: list[tuple[str, str]] = field(default_factory=list)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def to_dict(self, stable: bool = False) -> dict:
        return {
            "prompt": self.prompt,
            "transcript": self.transcript,
            "answer": self.answer,
            "depth": self.depth,
            "context_id": self.context_id,
            "gen_char_count": self.gen_char_count,
            "gen_token_count": self.gen_token_count,
            "wall_seconds": 0.0 if stable else self.wall_seconds,
            "cached_calls": self.cached_calls,
            "stray_call_marks": self.stray_call_marks,
            "segments": [{"kind": k, "text": t} for k, t in self.segments],
            "children": [c.to_dict(stable) for c in self.children],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Context:
        ctx = cls(
            prompt=data["prompt"],
            depth=data["depth"],
            context_id=data.get("context_id", 0),
            transcript=data["transcript"],
            answer=data.get("answer"),
            gen_char_count=data.get("gen_char_count", 0),
            gen_token_count=data.get("gen_token_count"),
            wall_seconds=data.get("wall_seconds", 0.0),
            cached_calls=data.get("cached_calls", 0),
            stray_call_marks=data.get("stray_call_marks", 0),
            segments=[(seg["kind"], seg["text"]) for seg in data.get("segments", [])],
        )
        ctx.children = [cls.from_dict(c) for c in data.get("children", [])]
        return ctx


@dataclass
class Trace:
    root: Context
    task: str = ""
    format: str = "retuning"
    trace_id: str = ""
    backend_invocations: int = 0
    cache_hits: int = 0
    final_answer: str | None = None

    def contexts(self):
        yield from self.root.walk()

    def context_count(self) -> int:
        return sum(1 for _ in self.contexts())

    def to_dict(self, stable: bool = False) -> dict:
        return {
            "task": self.task,
            "format": self.format,
            "trace_id": self.trace_id,
            "backend_invocations": self.backend_invocations,
            "cache_hits": self.cache_hits,
            "final_answer": self.final_answer,
            "root": self.root.to_dict(stable),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Trace:
        return cls(
            root=Context.from_dict(data["root"]),
            task=data.get("task", ""),
            format=data.get("format", "retuning"),
            trace_id=data.get("trace_id", ""),
            backend_invocations=data.get("backend_invocations", 0),
            cache_hits=data.get("cache_hits", 0),
            final_answer=data.get("final_answer"),
        )

    def dump(self, path, stable: bool = False) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(stable), fh, ensure_ascii=False, indent=1)

    @classmethod
    def load(cls, path) -> Trace:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class AnswerCache:
    """Atomic get-or-insert map from call prompt to answer payload."""

    def __init__(self):
        self._data: dict[str, str] = {}
        self._lock = threading.Lock()

    def get(self, prompt: str) -> str | None:
        with self._lock:
            return self._data.get(prompt)

    def put(self, prompt: str, answer: str) -> None:
        with self._lock:
            self._data.setdefault(prompt, answer)

    def __len__(self) -> int:
        return len(self._data)


class _Run:
    def __init__(self, backend, task, limits, cache, trace_id):
        self.backend = backend
        self.task = task
        self.limits = limits
        self.cache = cache
        self.trace_id = trace_id
        self.invocations = 0
        self.cache_hits = 0
        self.context_count = 0
        self.trace: Trace | None = None


def _normalize_call_tail(text: str) -> str:
    """Re-append the newline a stop sequence stripped from a call line."""
    if text.endswith("\n"):
        return text
    last_line_start = text.rfind("\n") + 1
    line = text[last_line_start:]
    if line.startswith(parser.CALL_MARK) or (
        last_line_start == 0 and parser.CALL_MARK in line
    ):
        return text + "\n"
    return text


def recursive_generate(
    backend: ModelBackend,
    prompt: str,
    limits: Limits | None = None,
    cache: AnswerCache | None = None,
    task: str | None = None,
    trace_id: str = "",
) -> Trace:
    """Run the full recursive loop from ``prompt`` and return the trace.

    ``task`` selects the splice/stop grammar; when omitted it is inferred
    from the backend (oracle and faulty backends carry it).  Typed executor
    errors carry the partial trace on their ``trace`` attribute.
    """
    if not prompt:
        raise ExecutorError("empty prompt")
    task = task if task is not None else getattr(backend, "task", None)
    if task is None:
        raise ExecutorError("task is required to drive the marker grammar")
    run = _Run(backend, task, limits or Limits(), cache, trace_id)
    root = Context(prompt=prompt, depth=0, transcript=prompt)
    run.trace = Trace(root=root, task=task, trace_id=trace_id)
    try:
        _drive_context(run, root)
    except ExecutorError as exc:
        run.trace.backend_invocations = run.invocations
        run.trace.cache_hits = run.cache_hits
        exc.trace = run.trace
        raise
    run.trace.backend_invocations = run.invocations
    run.trace.cache_hits = run.cache_hits
    run.trace.final_answer = root.answer
    return run.trace


def _generate_step(run: _Run, ctx: Context) -> None:
    stop = tuple(formats.stop_sequences(run.task, "retuning"))
    budget = run.limits.max_generation_units_per_context - ctx.gen_char_count
    if budget <= 0:
        raise GenerationBudgetExceeded(
            f"context exceeded {run.limits.max_generation_units_per_context} generation units"
        )
    request = GenerationRequest(
        context=ctx.transcript,
        stop=stop,
        max_units=budget,
        timeout_seconds=run.limits.per_call_timeout_seconds,
        trace_id=run.trace_id,
        context_id=ctx.context_id,
        depth=ctx.depth,
    )
    started = time.perf_counter()
    try:
        text = run.backend.generate(request)
    finally:
        ctx.wall_seconds += time.perf_counter() - started
        run.invocations += 1
    text = _normalize_call_tail(text)
    ctx.segments.append(("generated", text))
    ctx.transcript += text
    ctx.gen_char_count += len(text)


def _drive_context(run: _Run, ctx: Context) -> None:
    if ctx.depth >= run.limits.max_depth:
        raise DepthExceeded(f"recursion depth {ctx.depth} reached max_depth {run.limits.max_depth}")
    run.context_count += 1
    if run.context_count > run.limits.max_contexts:
        raise ContextBudgetExceeded(f"trace exceeded max_contexts {run.limits.max_contexts}")
    ctx.context_id = run.context_count - 1
    _generate_step(run, ctx)
    retried = False
    while True:
        site = parser.find_unexecuted_call(ctx.transcript)
        if site is not None:
            child_prompt = formats.child_prompt_for_call(run.task, site.call_text)
            answer = run.cache.get(child_prompt) if run.cache is not None else None
            if answer is not None:
                run.cache_hits += 1
                ctx.cached_calls += 1
            else:
                child = Context(prompt=child_prompt, depth=ctx.depth + 1, transcript=child_prompt)
                ctx.children.append(child)
                _drive_context(run, child)
                assert child.answer is not None
                answer = child.answer
                if run.cache is not None:
                    run.cache.put(child_prompt, answer)
            continuation = formats.splice_continuation(run.task, ctx.transcript)
            spliced = parser.splice_return(ctx.transcript, answer, continuation)
            ctx.segments.append(("spliced", spliced[len(ctx.transcript) :]))
            ctx.transcript = spliced
            _generate_step(run, ctx)
            continue
        try:
            answer = parser.extract_answer_text(ctx.transcript)
        except ExtractionError:
            answer = ""
        if answer:
            ctx.answer = answer
            break
        if retried:
            raise MalformedOutput("no call and no answer in context after retry")
        # one retry: real servers occasionally truncate at stop sequences
        retried = True
        _generate_step(run, ctx)
    ctx.stray_call_marks = parser.stray_call_marks(ctx.transcript)


def final_answer(trace: Trace) -> str:
    """Canonical answer string of a finished trace (delegates to formats)."""
    if trace.final_answer is None:
        raise ExtractionError("trace has no final answer")
    return formats.extract_final(trace.task, trace.format, trace.root.transcript)
