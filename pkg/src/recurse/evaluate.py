"""Length-sweep evaluation, error-taxonomy classification, context statistics.

A problem's trace is classified by replaying every generated segment against
the oracle's continuation of the same context prefix.  Deviations are events:
a deviating call line is a call event, a deviating answer a compute event.
The first event's class names the trace unless the final answer is still
correct, in which case the trace is a restoration (and counts as correct).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import datagen, formats, parser, tasks
from .backends import BackendError, GenerationRequest, ModelBackend, OracleBackend
from .errors import ContractViolation, ExecutorError, ExtractionError
from .executor import AnswerCache, Limits, Trace, recursive_generate


class ErrorClass(Enum):
    CALL = "call"
    COMPUTE = "compute"
    RESTORATION = "restoration"
    NONE = "none"


@dataclass
class LengthStats:
    length: int
    n: int
    correct: int
    errors: dict[str, int]
    mean_generation_seconds: float
    mean_chars_per_context: float
    mean_contexts: float
    mean_tokens_per_context: float | None = None

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0

    def to_dict(self) -> dict:
        out = {
            "length": self.length,
            "n": self.n,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "errors": self.errors,
            "mean_generation_seconds": self.mean_generation_seconds,
            "mean_chars_per_context": self.mean_chars_per_context,
        }
        if self.mean_tokens_per_context is not None:
            out["mean_tokens_per_context"] = self.mean_tokens_per_context
        out["mean_contexts"] = self.mean_contexts
        return out


@dataclass
class EvalReport:
    task: str
    format: str
    backend: str
    rng_seed: int
    timestamp: str
    per_length: list[LengthStats]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "format": self.format,
            "backend": self.backend,
            "rng_seed": self.rng_seed,
            "timestamp": self.timestamp,
            "per_length": [stats.to_dict() for stats in self.per_length],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    def to_csv(self) -> str:
        header = (
            "length,n,correct,accuracy,errors_call,errors_compute,"
            "errors_restoration,errors_none,mean_generation_seconds,"
            "mean_chars_per_context,mean_contexts"
        )
        rows = [header]
        for s in self.per_length:
            rows.append(
                f"{s.length},{s.n},{s.correct},{s.accuracy:.6f},"
                f"{s.errors['call']},{s.errors['compute']},{s.errors['restoration']},"
                f"{s.errors['none']},{s.mean_generation_seconds:.6f},"
                f"{s.mean_chars_per_context:.3f},{s.mean_contexts:.3f}"
            )
        return "\n".join(rows) + "\n"


@dataclass
class ProblemResult:
    length: int
    index: int
    instance: tasks.TaskInstance
    expected: str
    predicted: str | None
    correct: bool
    error_class: ErrorClass
    generation_seconds: float
    context_count: int
    chars_per_context: float
    aborted: bool = False
    failure: str = ""
    trace: Trace | None = None


@dataclass
class EvalRun:
    """Report plus run-level detail that is not part of the report schema."""

    report: EvalReport
    problems: list[ProblemResult]
    backend_invocations: int = 0
    cache_hits: int = 0


# ---------------------------------------------------------------------------
# trace classification
# ---------------------------------------------------------------------------


def _deviations(trace: Trace, oracle: OracleBackend):
    """Yield (context, kind) for each generated segment that differs from the
    oracle's continuation of the same prefix, in chronological order."""

    def walk(ctx):
        prefix = ctx.prompt
        child_idx = 0
        for kind, text in ctx.segments:
            if kind == "spliced":
                if child_idx < len(ctx.children):
                    yield from walk(ctx.children[child_idx])
                    child_idx += 1
            else:
                try:
                    expected = oracle._continuation(prefix)
                except BackendError:
                    expected = None  # prefix corrupted upstream of the grammar
                if expected is None or text != expected:
                    is_call = text.startswith(parser.CALL_MARK) or (
                        expected is not None and expected.startswith(parser.CALL_MARK)
                    )
                    yield ctx, ("call" if is_call else "compute")
            prefix += text
        # children created by calls whose splice never landed (aborted runs)
        for child in ctx.children[child_idx:]:
            yield from walk(child)

    yield from walk(trace.root)


def true_answer_for_trace(trace: Trace) -> str:
    oracle = OracleBackend(trace.task, "retuning")
    inst = oracle._instance_from_prompt(trace.root.prompt)
    return tasks.instance_answer(inst)


def classify_trace(trace: Trace, task: str | None = None) -> ErrorClass:
    """Assign the error-taxonomy class to a recursive trace.

    Requires a retuning trace whose root prompt parses under the task
    grammar.  Restorations (some event, correct final) count as correct.
    """
    task = task or trace.task
    if trace.format != "retuning":
        raise ContractViolation("classification is defined for retuning traces only")
    oracle = OracleBackend(task, "retuning")
    events = [kind for _, kind in _deviations(trace, oracle)]
    try:
        predicted = formats.extract_final(task, "retuning", trace.root.transcript)
        correct = predicted == true_answer_for_trace(trace)
    except (ExtractionError, BackendError):
        correct = False
    if not events:
        return ErrorClass.NONE if correct else ErrorClass.COMPUTE
    if correct:
        return ErrorClass.RESTORATION
    return ErrorClass.CALL if events[0] == "call" else ErrorClass.COMPUTE


# ---------------------------------------------------------------------------
# context statistics
# ---------------------------------------------------------------------------


class WordPieceTokenizer:
    """Greedy longest-match tokenizer over an external vocabulary file.

    One token per line; ``##``-prefixed entries only match after the start of
    a word.  Unknown characters count as one token each.
    """

    def __init__(self, vocab_path):
        pieces = [ln.rstrip("\n") for ln in open(vocab_path, encoding="utf-8") if ln.strip()]
        self.heads = {p for p in pieces if not p.startswith("##")}
        self.tails = {p[2:] for p in pieces if p.startswith("##")}
        self.max_len = max((len(p) for p in self.heads | self.tails), default=1)

    def count(self, text: str) -> int:
        total = 0
        for word in text.split(" "):
            pos = 0
            at_start = True
            while pos < len(word):
                table = self.heads if at_start else self.tails
                for size in range(min(self.max_len, len(word) - pos), 0, -1):
                    if word[pos : pos + size] in table:
                        pos += size
                        break
                else:
                    pos += 1
                total += 1
                at_start = False
        return total


def context_stats(trace: Trace, tokenizer: WordPieceTokenizer | None = None) -> dict:
    """Character (and optionally token) sizes over a trace's contexts."""
    sizes = [len(ctx.transcript) for ctx in trace.contexts()]
    stats = {
        "context_count": len(sizes),
        "mean_chars_per_context": sum(sizes) / len(sizes),
        "max_chars_per_context": max(sizes),
    }
    if tokenizer is not None:
        token_sizes = [tokenizer.count(ctx.transcript) for ctx in trace.contexts()]
        stats["mean_tokens_per_context"] = sum(token_sizes) / len(token_sizes)
        stats["max_tokens_per_context"] = max(token_sizes)
    return stats


# ---------------------------------------------------------------------------
# evaluation sweep
# ---------------------------------------------------------------------------


def _evaluate_problem(
    backend: ModelBackend,
    task: str,
    fmt: str,
    inst: tasks.TaskInstance,
    length: int,
    index: int,
    template: str | None,
    limits: Limits,
    cache: AnswerCache | None,
    rng_seed: int,
) -> ProblemResult:
    prompt = formats.render_prompt(inst, fmt, template)
    expected = tasks.instance_answer(inst)
    trace = None
    predicted = None
    aborted = False
    failure = ""
    if fmt == "retuning":
        try:
            trace = recursive_generate(
                backend,
                prompt,
                limits=limits,
                cache=cache,
                task=task,
                trace_id=f"{rng_seed}-{length}-{index}",
            )
        except ExecutorError as exc:
            trace = exc.trace
            aborted = True
            failure = f"{type(exc).__name__}: {exc}"
        except BackendError as exc:
            aborted = True
            failure = f"BackendError: {exc}"
        if trace is not None:
            try:
                predicted = formats.extract_final(task, fmt, trace.root.transcript)
            except ExtractionError as exc:
                failure = failure or f"ExtractionError: {exc}"
        seconds = sum(c.wall_seconds for c in trace.contexts()) if trace else 0.0
        count = trace.context_count() if trace else 0
        chars = (
            sum(len(c.transcript) for c in trace.contexts()) / count if count else 0.0
        )
    else:
        started = time.perf_counter()
        text = ""
        try:
            text = backend.generate(
                GenerationRequest(
                    context=prompt,
                    stop=tuple(formats.stop_sequences(task, fmt)),
                    max_units=limits.max_generation_units_per_context,
                    timeout_seconds=limits.per_call_timeout_seconds,
                    trace_id=f"{rng_seed}-{length}-{index}",
                )
            )
        except BackendError as exc:
            aborted = True
            failure = f"BackendError: {exc}"
        seconds = time.perf_counter() - started
        count = 1
        chars = float(len(prompt) + len(text))
        if not aborted:
            try:
                predicted = formats.extract_final(task, fmt, text)
            except ExtractionError as exc:
                failure = f"ExtractionError: {exc}"
    correct = predicted is not None and predicted == expected
    if fmt == "retuning" and trace is not None:
        error_class = classify_trace(trace, task)
    elif fmt == "retuning":
        error_class = ErrorClass.COMPUTE  # no trace at all: failed before any call
    else:
        error_class = ErrorClass.NONE if correct else ErrorClass.COMPUTE
    return ProblemResult(
        length=length,
        index=index,
        instance=inst,
        expected=expected,
        predicted=predicted,
        correct=correct,
        error_class=error_class,
        generation_seconds=seconds,
        context_count=count,
        chars_per_context=chars,
        aborted=aborted,
        failure=failure,
        trace=trace,
    )


def run_eval(
    backend: ModelBackend,
    task: str,
    fmt: str,
    lengths,
    n: int = 100,
    template: str | None = None,
    limits: Limits | None = None,
    cache: bool = False,
    rng_seed: int = 0,
    traces_dir=None,
    workers: int = 1,
    stable: bool = False,
    tokenizer: WordPieceTokenizer | None = None,
) -> EvalRun:
    """Evaluate ``n`` fresh problems per length and aggregate a report.

    Problems are scored by canonical-string equality of the extracted final
    answer; backend failures abort only the affected problem.  Aggregation is
    a deterministic fold ordered by (length, index) regardless of workers.
    """
    lengths = sorted(set(lengths))
    if not lengths or n < 1:
        raise ContractViolation("lengths must be non-empty and n >= 1")
    limits = limits or Limits()
    answer_cache = AnswerCache() if cache else None
    jobs = []
    for length in lengths:
        for index, inst in enumerate(datagen.sample_eval_instances(task, length, n, rng_seed)):
            jobs.append((length, index, inst))

    def work(job):
        length, index, inst = job
        return _evaluate_problem(
            backend, task, fmt, inst, length, index, template, limits, answer_cache, rng_seed
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]
    results.sort(key=lambda r: (r.length, r.index))

    if traces_dir is not None:
        out_dir = Path(traces_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for res in results:
            if res.trace is None:
                continue
            payload = res.trace.to_dict(stable)
            payload.update(
                {
                    "length": res.length,
                    "index": res.index,
                    "expected": res.expected,
                    "predicted": res.predicted,
                    "correct": res.correct,
                    "error_class": res.error_class.value,
                    "aborted": res.aborted,
                    "failure": res.failure,
                }
            )
            name = f"trace-{task}-{fmt}-len{res.length:03d}-{res.index:04d}.json"
            with open(out_dir / name, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, ensure_ascii=False, indent=1)

    per_length = []
    for length in lengths:
        group = [r for r in results if r.length == length]
        errors = {cls.value: 0 for cls in ErrorClass}
        for r in group:
            errors[r.error_class.value] += 1
        token_means = None
        if tokenizer is not None and fmt == "retuning":
            counts = [
                context_stats(r.trace, tokenizer)["mean_tokens_per_context"]
                for r in group
                if r.trace is not None
            ]
            token_means = sum(counts) / len(counts) if counts else 0.0
        per_length.append(
            LengthStats(
                length=length,
                n=len(group),
                correct=sum(r.correct for r in group),
                errors=errors,
                mean_generation_seconds=0.0
                if stable
                else sum(r.generation_seconds for r in group) / len(group),
                mean_chars_per_context=sum(r.chars_per_context for r in group) / len(group),
                mean_contexts=sum(r.context_count for r in group) / len(group),
                mean_tokens_per_context=token_means,
            )
        )
    report = EvalReport(
        task=task,
        format=fmt,
        backend=getattr(backend, "name", type(backend).__name__),
        rng_seed=rng_seed,
        timestamp="" if stable else time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        per_length=per_length,
    )
    run = EvalRun(report=report, problems=results)
    total_invocations = sum(
        r.trace.backend_invocations for r in results if r.trace is not None
    )
    total_hits = sum(r.trace.cache_hits for r in results if r.trace is not None)
    run.backend_invocations = total_invocations
    run.cache_hits = total_hits
    return run
