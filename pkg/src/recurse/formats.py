"""Render task instances into training text and extract answers for scoring.

Three formats per task:

* ``baseline``   -- prompt plus the bare answer.
* ``scratchpad`` -- prompt plus every intermediate step inline in one context.
* ``retuning``   -- one training example per context of the recursive call
  tree; the model's own text (call lines, answer payloads) is trainable and
  the executor-provided text (prompt, spliced returns) is frozen.

The strings produced here are the wire contract shared with the parser, the
oracle backend, the dataset generator, and any external trainer; change them
only with the fixture tests open.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from . import parser, tasks
from .errors import ContractViolation, ExtractionError, InputError, TemplateError
from .tasks import (
    AdditionNode,
    CarryOutput,
    DpArrayNode,
    DpIndicesNode,
    DpRootNode,
    Node,
    ParityNode,
    TaskInstance,
)

FORMATS = ("baseline", "scratchpad", "retuning")

INDICES_PREAMBLE = (
    "If there is only 1 item, return 1 if we should use it else 2. "
    "If we should use the first item to get the sum, call False else True. "
)
INDICES_COMBINE_HINT = "Append 1 if False else 2.\n"

DP_BASELINE_PREAMBLE = (
    "Given a sequence of integers, find a subsequence with the highest sum, "
    "such that no two numbers in the subsequence are adjacent in the original "
    'sequence.\n\nOutput a list with "1" for chosen numbers and "2" for '
    "unchosen ones. If multiple solutions exist, select the lexicographically "
    "smallest. Input = {items}.\n"
)

DEFAULT_TEMPLATES: dict[tuple[str, str], str] = {
    ("addition", "baseline"): "{num_1} + {num_2}\nAnswer: ",
    ("addition", "scratchpad"): "{num_1} + {num_2}\nSolution: ",
    ("addition", "retuning"): "{num_1} + {num_2}\nSolution: ",
    ("parity", "baseline"): "What is the parity of {arr}?\nAnswer: ",
    ("parity", "scratchpad"): "What is the parity of {arr}?\nSolution: Compute one element at a time ",
    ("parity", "retuning"): "What is the parity of {arr}?\nSolution: ",
    ("dynprog", "baseline"): DP_BASELINE_PREAMBLE,
    ("dynprog", "scratchpad"): "Question: Let's solve input = {items}. ",
    ("dynprog", "retuning"): "Compute the maximum sum of nonadjacent subsequences of {items}\nSolution: ",
}


@dataclass(frozen=True)
class RenderedExample:
    """One training string as an ordered list of (text, trainable) segments."""

    task: str
    format: str
    length: int
    role: str  # root | intermediate | base
    segments: tuple[tuple[str, bool], ...]

    @property
    def text(self) -> str:
        return "".join(t for t, _ in self.segments)

    @property
    def prompt(self) -> str:
        return self.segments[0][0]

    def trainable_text(self) -> str:
        return "".join(t for t, trainable in self.segments if trainable)


def _template_fields(inst: TaskInstance) -> dict[str, str]:
    if inst.task == "addition":
        return {"num_1": inst.a, "num_2": inst.b}
    if inst.task == "parity":
        return {"arr": tasks.format_array(inst.bits)}
    return {"items": tasks.format_array(inst.items)}


def render_prompt(inst: TaskInstance, fmt: str, template: str | None = None) -> str:
    """Evaluation-time prompt; ``template`` overrides the training default."""
    if fmt not in FORMATS:
        raise InputError(f"unknown format {fmt!r}")
    template = template if template is not None else DEFAULT_TEMPLATES[(inst.task, fmt)]
    try:
        return template.format(**_template_fields(inst))
    except (KeyError, IndexError) as exc:
        raise TemplateError(f"unresolvable placeholder in template {template!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# recursive-format grammar
# ---------------------------------------------------------------------------


def call_text(node: Node) -> str:
    """The text a parent emits between ``Call: `` and the newline."""
    if isinstance(node, AdditionNode):
        return f"{node.a} + {node.b}"
    if isinstance(node, ParityNode):
        return f"What is the parity of {tasks.format_array(node.bits)}?"
    if isinstance(node, DpArrayNode):
        return f"Create dp array {tasks.format_array(node.items)}"
    if isinstance(node, DpIndicesNode):
        return (
            f"Create chosen indices array: sum array {tasks.format_array(node.dp)}, "
            f"item array {tasks.format_array(node.items)}, can use item {node.can_use}"
        )
    raise ContractViolation("a dynprog root is never the target of a call")


def child_prompt_for_call(task: str, text: str) -> str:
    """Map an emitted call to the prompt of its fresh context.

    Purely textual: a corrupted call maps to a corrupted prompt unchanged.
    """
    prompt = f"{text}\n{parser.SOLUTION_MARK}"
    if task == "dynprog" and text.startswith("Create chosen indices array:"):
        prompt += INDICES_PREAMBLE
    return prompt


def node_prompt(node: Node) -> str:
    if isinstance(node, DpRootNode):
        return DEFAULT_TEMPLATES[("dynprog", "retuning")].format(
            items=tasks.format_array(node.items)
        )
    return child_prompt_for_call(node.task, call_text(node))


def answer_payload(node: Node, value) -> str:
    """Render a node's answer value as the text after ``Answer: `` / ``Return: ``."""
    if isinstance(node, AdditionNode):
        return f"Carry {value.carry}, Output {value.output}"
    if isinstance(node, ParityNode):
        return str(value)
    return tasks.format_array(value)


def splice_continuation(task: str, context: str) -> str:
    """Grammar table: what follows ``Return: <answer>`` in this context.

    Addition, parity, and the dp-array chain answer immediately; a dynprog
    root keeps generating after its first return (the second call comes
    next); an indices context gets the combine hint between two answer
    markers.
    """
    if task != "dynprog":
        return "\nAnswer: "
    if context.startswith("Create dp array"):
        return "\nAnswer: "
    if context.startswith("Create chosen indices array:"):
        return f"\nAnswer: {INDICES_COMBINE_HINT}Answer: "
    returns_so_far = len(re.findall(r"(?:^|\n)Return: ", context))
    return "\n" if returns_so_far == 0 else "\nAnswer: "


def stop_sequences(task: str, fmt: str) -> list[str]:
    """Stop set requested from backends for one generation step."""
    if fmt == "retuning" or fmt == "baseline":
        return ["\n"]
    return [] if task == "dynprog" else ["\n\n"]


# ---------------------------------------------------------------------------
# training rendering
# ---------------------------------------------------------------------------


def _scratchpad_addition(inst: TaskInstance) -> str:
    levels = tasks.addition_levels(inst.a, inst.b)
    return "\n".join(f"Carry {lv.carry}, Output {lv.output}" for lv in levels)


def _scratchpad_parity(inst: TaskInstance) -> str:
    running = 0
    parts = []
    for bit in inst.bits:
        running = (running + bit) % 2
        parts.append(str(running))
    return " ".join(parts)


def _scratchpad_dynprog(inst: TaskInstance) -> str:
    items = list(inst.items)
    n = len(items)
    dp = tasks.dp_values(items)
    rows = []
    for i in range(n - 1, -1, -1):
        if i == n - 1:
            rows.append(f"dp[{i}] = max(input[{i}], 0) = max({items[i]}, 0) = {dp[i]}")
        elif i == n - 2:
            rows.append(
                f"dp[{i}] = max(input[{i}], input[{i + 1}], 0) "
                f"= max({items[i]}, {items[i + 1]}, 0) = {dp[i]}"
            )
        else:
            rows.append(
                f"dp[{i}] = max(dp[{i + 1}], input[{i}] + dp[{i + 2}], 0) "
                f"= max({dp[i + 1]}, {items[i]} + {dp[i + 2]}, 0) = {dp[i]}"
            )
    choices = tasks.dp_indices(dp, items)
    walk = ["Let can_use_next_item = True."]
    can_use = True
    for i in range(n):
        follow = f" + dp[{i + 2}]" if i + 2 < n else ""
        follow_val = f" + {dp[i + 2]}" if i + 2 < n else ""
        if choices[i] == 1:
            line = (
                f"Since dp[{i}] == input[{i}]{follow} ({dp[i]} == {items[i]}{follow_val}) "
                f"and can_use_next_item == True, we store output[{i}] = 1."
            )
            can_use = False
        else:
            line = (
                f"Since dp[{i}] != input[{i}]{follow} ({dp[i]} != {items[i]}{follow_val}) "
                f"or can_use_next_item == False, we store output[{i}] = 2."
            )
            can_use = True
        if i < n - 1:
            line += f" We update can_use_next_item = {can_use}."
        walk.append(line)
    return (
        "Scratchpad: "
        + "\n".join(rows)
        + "\n\nFinally, we reconstruct the lexicographically smallest subsequence "
        'that fulfills the task objective by selecting numbers as follows. '
        'We store the result on a list named "output".\n\n'
        + "\n".join(walk)
        + f"\n\nReconstructing all together, output={tasks.format_array(choices)}."
    )


def _single_example(inst: TaskInstance, fmt: str) -> RenderedExample:
    prompt = render_prompt(inst, fmt)
    if fmt == "baseline":
        if inst.task == "addition":
            body = tasks.solve_addition(inst.a, inst.b)
        elif inst.task == "parity":
            body = str(tasks.parity_value(inst.bits))
        else:
            body = "Answer: " + tasks.format_array(
                tasks.dp_indices(tasks.dp_values(inst.items), inst.items)
            )
    else:
        body = {
            "addition": _scratchpad_addition,
            "parity": _scratchpad_parity,
            "dynprog": _scratchpad_dynprog,
        }[inst.task](inst)
    return RenderedExample(
        task=inst.task,
        format=fmt,
        length=inst.length,
        role="root",
        segments=((prompt, False), (body, True)),
    )


def context_example(task: str, node: Node, is_root: bool) -> RenderedExample:
    """The retuning training example for one context of a call tree."""
    prompt = node_prompt(node)
    segments: list[tuple[str, bool]] = [(prompt, False)]
    if tasks.is_base_case(node):
        payload = answer_payload(node, tasks.base_answer(node))
        segments.append((f"Answer: {payload}", True))
        role = "root" if is_root else "base"
    else:
        transcript = prompt
        for _, child in tasks.decompose(node):
            call_line = f"Call: {call_text(child)}\n"
            segments.append((call_line, True))
            transcript += call_line
            child_payload = answer_payload(child, tasks.node_answer(child))
            frozen = f"Return: {child_payload}{splice_continuation(task, transcript)}"
            segments.append((frozen, False))
            transcript += frozen
        segments.append((answer_payload(node, tasks.node_answer(node)), True))
        role = "root" if is_root else "intermediate"
    return RenderedExample(
        task=task,
        format="retuning",
        length=node.length,
        role=role,
        segments=tuple(segments),
    )


def render_training(inst: TaskInstance, fmt: str) -> list[RenderedExample]:
    """All training examples for one instance: one for baseline/scratchpad,
    one per call-tree context for retuning."""
    if fmt not in FORMATS:
        raise InputError(f"unknown format {fmt!r}")
    if fmt != "retuning":
        return [_single_example(inst, fmt)]
    root = inst.root_node()
    return [context_example(inst.task, node, node is root) for node in tasks.walk_tree(root)]


# ---------------------------------------------------------------------------
# answer extraction
# ---------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"\d+")
_CARRY_RE = re.compile(r"Carry (\d+), Output (\d+)")
_ARRAY_RE = re.compile(r"\[[^\[\]]*\]")
_BIT_RE = re.compile(r"[01]")


def extract_final(task: str, fmt: str, text: str) -> str:
    """Canonical answer string pulled from generated text.

    Addition: the last number (baseline) or the last carry/output pair with
    the carry prepended; dynprog: the last bracketed array; parity: the last
    0/1 digit.  Raises ExtractionError when nothing matches.
    """
    if not text:
        raise ExtractionError("empty text")
    if task == "addition":
        if fmt == "baseline":
            numbers = _NUMBER_RE.findall(text)
            if not numbers:
                raise ExtractionError("no number in addition output")
            return tasks.canonical_digits(numbers[-1])
        pairs = _CARRY_RE.findall(text)
        if not pairs:
            raise ExtractionError("no carry/output pair in addition output")
        carry, output = pairs[-1]
        return tasks.canonical_digits(carry + output)
    if task == "dynprog":
        arrays = _ARRAY_RE.findall(text)
        if not arrays:
            raise ExtractionError("no array in dynprog output")
        try:
            return tasks.format_array(tasks.parse_array(arrays[-1]))
        except InputError as exc:
            raise ExtractionError(str(exc)) from exc
    if task == "parity":
        bits = _BIT_RE.findall(text)
        if not bits:
            raise ExtractionError("no parity digit in output")
        return bits[-1]
    raise InputError(f"unknown task {task!r}")
