"""The marker grammar: locating calls, splicing returns, extracting answers.

Normative byte-exact markers::

    Call: <subproblem>\\n     emitted by the model; ends the current generation
    Return: <answer>\\n       spliced by the executor after the call resolves
    Answer: <answer>          introduces a context's answer
    Solution: ...             opens the worked portion of a prompt

A ``Call: `` occurrence only counts when it sits at the start of a line or on a
line that begins with ``Solution: `` (prompts may put instructional prose
between the two).  Anything else is model free-text and is merely flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractViolation, ExtractionError, InputError

CALL_MARK = "Call: "
RETURN_MARK = "Return: "
ANSWER_MARK = "Answer: "
SOLUTION_MARK = "Solution: "


@dataclass(frozen=True)
class CallSite:
    """One ``Call: <call_text>\\n`` region; ``span`` is [start, end) byte offsets."""

    call_text: str
    span: tuple[int, int]
    executed: bool


def _line_start(context: str, pos: int) -> int:
    return context.rfind("\n", 0, pos) + 1


def _is_grammar_position(context: str, pos: int) -> bool:
    start = _line_start(context, pos)
    return pos == start or context.startswith(SOLUTION_MARK, start)


def call_sites(context: str) -> list[CallSite]:
    """All grammar-valid call sites, left to right."""
    sites = []
    pos = 0
    while (pos := context.find(CALL_MARK, pos)) != -1:
        if _is_grammar_position(context, pos):
            nl = context.find("\n", pos + len(CALL_MARK))
            if nl != -1:
                end = nl + 1
                sites.append(
                    CallSite(
                        call_text=context[pos + len(CALL_MARK) : nl],
                        span=(pos, end),
                        executed=context.startswith(RETURN_MARK, end),
                    )
                )
        pos += len(CALL_MARK)
    return sites


def stray_call_marks(context: str) -> int:
    """Count ``Call: `` occurrences outside grammar positions (for trace flags)."""
    count = 0
    pos = 0
    while (pos := context.find(CALL_MARK, pos)) != -1:
        if not _is_grammar_position(context, pos):
            count += 1
        pos += len(CALL_MARK)
    return count


def find_unexecuted_call(context: str) -> CallSite | None:
    """The most recent pending call, scanning right to left."""
    for site in reversed(call_sites(context)):
        if not site.executed:
            return site
    return None


def splice_return(context: str, answer: str, continuation: str = "\nAnswer: ") -> str:
    """Append ``Return: <answer>`` plus the grammar continuation after a pending call.

    ``continuation`` is "\\nAnswer: " where the grammar expects the answer
    immediately, or "\\n" where generation continues (see formats.splice_continuation).
    """
    if not answer:
        raise InputError("cannot splice an empty answer")
    site = find_unexecuted_call(context)
    if site is None:
        raise ContractViolation("splice_return: no pending call in context")
    if site.span[1] != len(context):
        raise ContractViolation("splice_return: context extends past the pending call")
    return f"{context}{RETURN_MARK}{answer}{continuation}"


def extract_answer_text(context: str) -> str:
    """Text after the last ``Answer: ``, trimmed of trailing whitespace."""
    pos = context.rfind(ANSWER_MARK)
    if pos == -1:
        raise ExtractionError("no answer marker in context")
    return context[pos + len(ANSWER_MARK) :].rstrip()
