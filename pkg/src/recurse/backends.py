"""Model backends: the generation contract plus three implementations.

* ``OracleBackend`` emits exactly the text a perfectly trained model would,
  re-deriving its position in the grammar from the context string alone.
* ``FaultyBackend`` wraps the oracle and injects single-symbol corruptions for
  error-taxonomy testing, with a complete ground-truth log.
* ``HttpBackend`` talks to any completion-style server over
  ``POST /v1/completions``.
"""

from __future__ import annotations

import os
import random
import re
import threading
from dataclasses import dataclass, field

import requests

from . import formats, parser, tasks
from .errors import BackendError
from .tasks import (
    AdditionNode,
    CarryOutput,
    DpArrayNode,
    DpIndicesNode,
    DpRootNode,
    ParityNode,
)

DEFAULT_TEMPERATURE = 0.01
ENDPOINT_ENV_VAR = "RECURSE_ENDPOINT"


@dataclass(frozen=True)
class GenerationRequest:
    """One generation step: continue ``context`` until a stop marker or budget.

    ``trace_id``/``context_id``/``depth`` identify the requesting context so
    that stateless-but-seeded backends (the fault injector) can key their rng
    streams and logs; plain backends ignore them.
    """

    context: str
    stop: tuple[str, ...] = ()
    max_units: int = 4096
    temperature: float = DEFAULT_TEMPERATURE
    timeout_seconds: float | None = None
    trace_id: str = ""
    context_id: int = 0
    depth: int = 0

    def __post_init__(self):
        if self.temperature < 0:
            raise BackendError("temperature must be >= 0")
        if self.max_units < 1:
            raise BackendError("max_units must be >= 1")


class ModelBackend:
    """Interface: (context text, stop markers, limits) -> continuation text."""

    #: whether one instance may serve multiple concurrent workers
    shareable = True
    name = "backend"

    def generate(self, request: GenerationRequest) -> str:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

_ADD_PROBLEM_RE = re.compile(r"^(\d+) ([+\-]) (\d+)$")
_PARITY_PROBLEM_RE = re.compile(r"^What is the parity of (\[[^\[\]]*\])\?$")
_DP_ROOT_RE = re.compile(r"^Compute the maximum sum of nonadjacent subsequences of (\[[^\[\]]*\])$")
_DP_ARRAY_RE = re.compile(r"^Create dp array (\[[^\[\]]*\])$")
_DP_INDICES_RE = re.compile(
    r"^Create chosen indices array: sum array (\[[^\[\]]*\]), "
    r"item array (\[[^\[\]]*\]), can use item (True|False)$"
)
_RETURN_LINE_RE = re.compile(r"(?:^|\n)Return: ([^\n]*)")


def _last_return(context: str) -> str | None:
    found = _RETURN_LINE_RE.findall(context)
    return found[-1] if found else None


def _parse_bits(text: str) -> tuple[int, ...]:
    values = tasks.parse_array(text)
    if any(v not in (0, 1) for v in values):
        raise BackendError(f"non-binary parity array {text!r}")
    return values


def _parse_carry_output(text: str) -> CarryOutput:
    m = re.fullmatch(r"Carry (\d+), Output (\d+)", text.strip())
    if not m:
        raise BackendError(f"unparseable addition return {text!r}")
    return CarryOutput(int(m.group(1)), m.group(2))


class OracleBackend(ModelBackend):
    """Deterministic perfect model for one (task, format) pair.

    Stateless: every call re-derives the grammar position from the context, so
    one instance is safely shared across workers.  Combine steps reuse the
    values actually spliced into the context rather than recomputing them, the
    way a faithfully trained model would.
    """

    shareable = True

    def __init__(self, task: str, fmt: str):
        if task not in tasks.TASKS:
            raise BackendError(f"unknown task {task!r}")
        if fmt not in formats.FORMATS:
            raise BackendError(f"unknown format {fmt!r}")
        self.task = task
        self.fmt = fmt
        self.name = f"oracle:{task}:{fmt}"

    def generate(self, request: GenerationRequest) -> str:
        out = self._continuation(request.context)
        return out[: request.max_units]

    # -- single-shot formats ------------------------------------------------

    def _instance_from_prompt(self, context: str):
        first = context.split("\n", 1)[0]
        if self.task == "addition":
            m = _ADD_PROBLEM_RE.match(first)
            if not m or m.group(2) != "+":
                raise BackendError(f"cannot parse addition problem from {first!r}")
            return tasks.addition_instance(m.group(1), m.group(3))
        if self.task == "parity":
            m = _PARITY_PROBLEM_RE.match(first)
            if not m:
                raise BackendError(f"cannot parse parity problem from {first!r}")
            return tasks.parity_instance(_parse_bits(m.group(1)))
        m = re.search(r"Input = (\[[^\[\]]*\])\.", context) or _DP_ROOT_RE.match(first)
        if not m:
            m = re.search(r"Let's solve input = (\[[^\[\]]*\])\.", context)
        if not m:
            raise BackendError(f"cannot parse dynprog problem from {first!r}")
        return tasks.dynprog_instance(tasks.parse_array(m.group(1)))

    def _single_shot(self, context: str) -> str:
        inst = self._instance_from_prompt(context)
        example = formats.render_training(inst, self.fmt)[0]
        return example.trainable_text()

    # -- recursive format ---------------------------------------------------

    def _continuation(self, context: str) -> str:
        if self.fmt != "retuning":
            return self._single_shot(context)
        if parser.find_unexecuted_call(context) is not None:
            raise BackendError("context still has a pending call; splice before generating")
        try:
            if self.task == "addition":
                return self._addition(context)
            if self.task == "parity":
                return self._parity(context)
            return self._dynprog(context)
        except (tasks.InputError, ValueError, IndexError) as exc:
            raise BackendError(f"context does not match the {self.task} grammar: {exc}") from exc

    def _addition(self, context: str) -> str:
        first = context.split("\n", 1)[0]
        m = _ADD_PROBLEM_RE.match(first)
        if not m or m.group(2) != "+":
            raise BackendError(f"cannot parse addition context {first!r}")
        node = AdditionNode(m.group(1), m.group(3))
        if context.endswith(parser.ANSWER_MARK):
            last = _last_return(context)
            if last is None:
                # answer requested without recursion (adversarial prompt that
                # skips the call flow): emit the full-sum payload directly
                levels = tasks.addition_levels(node.a, node.b)
                return formats.answer_payload(node, levels[-1])
            combined = tasks.combine(node, [_parse_carry_output(last)])
            return formats.answer_payload(node, combined)
        if tasks.is_base_case(node):
            return f"Answer: {formats.answer_payload(node, tasks.base_answer(node))}"
        _, child = tasks.decompose(node)[0]
        return f"Call: {formats.call_text(child)}\n"

    def _parity(self, context: str) -> str:
        first = context.split("\n", 1)[0]
        m = _PARITY_PROBLEM_RE.match(first)
        if not m:
            raise BackendError(f"cannot parse parity context {first!r}")
        node = ParityNode(_parse_bits(m.group(1)))
        if context.endswith(parser.ANSWER_MARK):
            last = _last_return(context)
            if last is None:
                return str(tasks.parity_value(node.bits))
            if last.strip() not in ("0", "1"):
                raise BackendError(f"unparseable parity return {last!r}")
            return str(tasks.combine(node, [int(last.strip())]))
        if tasks.is_base_case(node):
            return f"Answer: {node.bits[0]}"
        _, child = tasks.decompose(node)[0]
        return f"Call: {formats.call_text(child)}\n"

    def _dynprog(self, context: str) -> str:
        first = context.split("\n", 1)[0]
        if m := _DP_ROOT_RE.match(first):
            items = tasks.parse_array(m.group(1))
            returns = _RETURN_LINE_RE.findall(context)
            if not returns:
                return f"Call: Create dp array {tasks.format_array(items)}\n"
            if len(returns) == 1:
                dp_text = tasks.format_array(tasks.parse_array(returns[0]))
                return (
                    f"Call: Create chosen indices array: sum array {dp_text}, "
                    f"item array {tasks.format_array(items)}, can use item True\n"
                )
            return tasks.format_array(tasks.parse_array(returns[-1]))
        if m := _DP_ARRAY_RE.match(first):
            node = DpArrayNode(tasks.parse_array(m.group(1)))
            if context.endswith(parser.ANSWER_MARK):
                child_dp = tasks.parse_array(_last_return(context))
                return tasks.format_array(tasks.combine(node, [child_dp]))
            if tasks.is_base_case(node):
                return f"Answer: {tasks.format_array(tasks.base_answer(node))}"
            _, child = tasks.decompose(node)[0]
            return f"Call: {formats.call_text(child)}\n"
        if m := _DP_INDICES_RE.match(first):
            node = DpIndicesNode(
                tasks.parse_array(m.group(1)), tasks.parse_array(m.group(2)), m.group(3) == "True"
            )
            if context.endswith(parser.ANSWER_MARK):
                sites = parser.call_sites(context)
                if not sites:
                    raise BackendError("indices context reached answer state without a call")
                flag = sites[-1].call_text.rsplit(" ", 1)[-1]
                child_choices = tasks.parse_array(_last_return(context))
                prefix = 1 if flag == "False" else 2
                return tasks.format_array((prefix,) + child_choices)
            if tasks.is_base_case(node):
                return f"Answer: {tasks.format_array(tasks.base_answer(node))}"
            _, child = tasks.decompose(node)[0]
            return f"Call: {formats.call_text(child)}\n"
        raise BackendError(f"cannot parse dynprog context {first!r}")


# ---------------------------------------------------------------------------
# fault injection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FaultConfig:
    """Controls synthetic corruption of oracle output.

    At most one fault is injected per trace so that error attribution stays
    unambiguous.  With ``recover`` set, the root context ignores the corrupted
    return and emits the true final answer, synthesizing a restoration case.
    """

    call_fault_rate: float = 0.0
    compute_fault_rate: float = 0.0
    target_depths: frozenset[int] | None = None
    recover: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        for rate in (self.call_fault_rate, self.compute_fault_rate):
            if not 0.0 <= rate <= 1.0:
                raise BackendError(f"fault rate {rate} outside [0, 1]")


@dataclass
class InjectionRecord:
    trace_id: str
    context_id: int
    depth: int
    fault_class: str  # "call" | "compute"
    original: str
    corrupted: str
    recovered: bool = False


@dataclass
class _TraceFaultState:
    rng: random.Random
    injected: InjectionRecord | None = None
    restored: bool = False


def _perturb_digit_string(rng: random.Random, digits: str) -> str:
    pos = rng.randrange(len(digits))
    old = int(digits[pos])
    new = (old + rng.choice([1, -1])) % 10
    return digits[:pos] + str(new) + digits[pos + 1 :]


def _perturb_call_text(rng: random.Random, task: str, text: str) -> str | None:
    """Single-symbol corruption of a call, guaranteed to change the final answer.

    Addition and parity propagate any operand change to the final sum or
    parity; for dynprog only indices-chain calls qualify, and candidate edits
    are checked against a local walk so the corrupted child provably answers
    differently.
    """
    if task == "addition":
        m = _ADD_PROBLEM_RE.match(text)
        if not m:
            return None
        if rng.random() < 0.5:
            return f"{_perturb_digit_string(rng, m.group(1))} + {m.group(3)}"
        return f"{m.group(1)} + {_perturb_digit_string(rng, m.group(3))}"
    if task == "parity":
        m = _PARITY_PROBLEM_RE.match(text)
        if not m:
            return None
        bits = list(_parse_bits(m.group(1)))
        pos = rng.randrange(len(bits))
        bits[pos] ^= 1
        return f"What is the parity of {tasks.format_array(bits)}?"
    m = _DP_INDICES_RE.match(text)
    if not m:
        return None  # dp-array call corruption may leave the answer unchanged
    dp = list(tasks.parse_array(m.group(1)))
    items = list(tasks.parse_array(m.group(2)))
    can_use = m.group(3) == "True"
    true_child = _indices_walk(dp, items, can_use)
    candidates: list[tuple[list[int], list[int], bool]] = [(dp, items, not can_use)]
    for pos in range(len(dp)):
        for delta in (1, -1):
            edited = dp.copy()
            edited[pos] += delta
            candidates.append((edited, items, can_use))
    for pos in range(len(items)):
        for delta in (1, -1):
            edited = items.copy()
            edited[pos] += delta
            candidates.append((dp, edited, can_use))
    rng.shuffle(candidates)
    for cand_dp, cand_items, cand_flag in candidates:
        if _indices_walk(cand_dp, cand_items, cand_flag) != true_child:
            return (
                f"Create chosen indices array: sum array {tasks.format_array(cand_dp)}, "
                f"item array {tasks.format_array(cand_items)}, can use item {cand_flag}"
            )
    return None


def _indices_walk(dp, items, can_use) -> list[int]:
    """Deterministic reconstruction walk on arbitrary (possibly corrupt) state."""
    out = []
    flag = can_use
    n = len(items)
    for i in range(n):
        follow = dp[i + 2] if i + 2 < n else 0
        if flag and i < len(dp) and dp[i] == items[i] + follow:
            out.append(1)
            flag = False
        else:
            out.append(2)
            flag = True
    return out


def _perturb_answer_payload(rng: random.Random, task: str, context: str, text: str) -> str | None:
    """Single-symbol corruption of an emitted answer that must reach the final."""
    payload = text[len("Answer: ") :] if text.startswith("Answer: ") else text
    prefix = text[: len(text) - len(payload)]
    if task == "addition":
        m = re.fullmatch(r"Carry (\d+), Output (\d+)", payload)
        if not m:
            return None
        if rng.random() < 0.25:
            flipped = "0" if m.group(1) != "0" else "1"
            return f"{prefix}Carry {flipped}, Output {m.group(2)}"
        return f"{prefix}Carry {m.group(1)}, Output {_perturb_digit_string(rng, m.group(2))}"
    if task == "parity":
        if payload.strip() not in ("0", "1"):
            return None
        return f"{prefix}{1 - int(payload.strip())}"
    # dynprog: only indices-chain answers propagate verbatim to the final
    head = context.split("\n", 1)[0]
    if not (head.startswith("Create chosen indices array:") or _DP_ROOT_RE.match(head)):
        return None
    try:
        values = list(tasks.parse_array(payload))
    except tasks.InputError:
        return None
    if not all(v in (1, 2) for v in values):
        return None
    pos = rng.randrange(len(values))
    values[pos] = 3 - values[pos]
    return f"{prefix}{tasks.format_array(values)}"


class FaultyBackend(ModelBackend):
    """Oracle wrapper that injects at most one logged fault per trace.

    With all rates zero the output is byte-identical to the oracle.  The
    injection log is the ground truth the trace classifier is tested against.
    """

    shareable = True

    def __init__(self, task: str, fmt: str, config: FaultConfig):
        self.oracle = OracleBackend(task, fmt)
        self.task = task
        self.config = config
        self.name = f"faulty:{task}:{fmt}"
        self._states: dict[str, _TraceFaultState] = {}
        self._lock = threading.Lock()
        self.log: list[InjectionRecord] = []

    def _state(self, trace_id: str) -> _TraceFaultState:
        with self._lock:
            if trace_id not in self._states:
                self._states[trace_id] = _TraceFaultState(
                    rng=random.Random(f"{self.config.rng_seed}|fault|{trace_id}")
                )
            return self._states[trace_id]

    def _depth_allowed(self, depth: int) -> bool:
        return self.config.target_depths is None or depth in self.config.target_depths

    def _is_root_final(self, request: GenerationRequest, output: str) -> bool:
        if request.depth != 0:
            return False
        return not output.startswith(parser.CALL_MARK)

    def _true_final_payload(self, context: str) -> str:
        inst = self.oracle._instance_from_prompt(context)
        node = inst.root_node()
        if inst.task == "addition":
            value = tasks.addition_levels(inst.a, inst.b)[-1]
            payload = formats.answer_payload(node, value)
        elif inst.task == "parity":
            payload = str(tasks.parity_value(inst.bits))
        else:
            payload = tasks.format_array(tasks.dp_indices(tasks.dp_values(inst.items), inst.items))
        if tasks.is_base_case(node) and _last_return(context) is None:
            return f"Answer: {payload}"
        return payload

    def generate(self, request: GenerationRequest) -> str:
        output = self.oracle.generate(request)
        state = self._state(request.trace_id)
        if state.injected is not None:
            if self.config.recover and not state.restored and self._is_root_final(request, output):
                state.restored = True
                state.injected.recovered = True
                return self._true_final_payload(request.context)
            return output
        if self.config.recover and self._is_root_final(request, output):
            return output  # nothing to recover from; do not corrupt the final
        is_call = output.startswith(parser.CALL_MARK)
        rng = state.rng
        corrupted: str | None = None
        fault_class = ""
        if is_call and self._depth_allowed(request.depth):
            if rng.random() < self.config.call_fault_rate:
                text = output[len(parser.CALL_MARK) : -1]
                edited = _perturb_call_text(rng, self.task, text)
                if edited is not None:
                    corrupted = f"{parser.CALL_MARK}{edited}\n"
                    fault_class = "call"
        elif not is_call and self._depth_allowed(request.depth):
            if rng.random() < self.config.compute_fault_rate:
                edited = _perturb_answer_payload(rng, self.task, request.context, output)
                if edited is not None:
                    corrupted = edited
                    fault_class = "compute"
        if corrupted is None:
            return output
        record = InjectionRecord(
            trace_id=request.trace_id,
            context_id=request.context_id,
            depth=request.depth,
            fault_class=fault_class,
            original=output,
            corrupted=corrupted,
        )
        state.injected = record
        with self._lock:
            self.log.append(record)
        return corrupted


# ---------------------------------------------------------------------------
# network client
# ---------------------------------------------------------------------------


class HttpBackend(ModelBackend):
    """Client for a completion-style server speaking the pinned wire protocol.

    Request: ``POST <endpoint>/v1/completions`` with JSON fields ``prompt``,
    ``max_tokens``, ``temperature``, ``stop``; response must carry
    ``choices[0].text``.  Transport failures are retried with the identical
    request body.
    """

    shareable = True

    def __init__(
        self,
        endpoint: str | None = None,
        headers: dict[str, str] | None = None,
        retries: int = 2,
        timeout_seconds: float = 60.0,
        session: requests.Session | None = None,
    ):
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV_VAR)
        if not endpoint:
            raise BackendError(
                f"no endpoint configured (flag or {ENDPOINT_ENV_VAR} environment variable)"
            )
        self.endpoint = endpoint.rstrip("/")
        self.headers = dict(headers or {})
        self.retries = retries
        self.timeout_seconds = timeout_seconds
        self.session = session or requests.Session()
        self.name = f"http:{self.endpoint}"

    def generate(self, request: GenerationRequest) -> str:
        body = {
            "prompt": request.context,
            "max_tokens": request.max_units,
            "temperature": request.temperature,
            "stop": list(request.stop),
        }
        timeout = request.timeout_seconds or self.timeout_seconds
        url = f"{self.endpoint}/v1/completions"
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self.session.post(url, json=body, headers=self.headers, timeout=timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code // 100 != 2:
                raise BackendError(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["text"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed completion response from {url}: {exc}") from exc
        raise BackendError(f"transport failure reaching {url} after {self.retries + 1} attempts: {last_error}")
