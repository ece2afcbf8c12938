"""Task definitions, exact oracles, and recursive decomposition.

Three compositional tasks are supported:

* ``addition``  -- sum two non-negative decimal integers given as digit-strings.
* ``dynprog``   -- maximum-sum non-adjacent subsequence selection, answered as a
  {1,2}-choices array (1 = element chosen), lexicographically smallest among optima.
* ``parity``    -- parity of the number of ones in a binary array.

Each task decomposes into strictly smaller subproblems.  The unit of
decomposition is a *context node*: addition and parity nodes shrink by one
leading digit / element per level, while a dynprog problem fans out into a
dp-array chain (suffix maxima) and a chosen-indices chain (reconstruction walk).
Folding ``combine`` over ``decompose`` from the base cases up reproduces the
direct oracles exactly; tests enforce this.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from .errors import ContractViolation, InputError

TASKS = ("addition", "dynprog", "parity")

DP_MIN_ITEM = -5
DP_MAX_ITEM = 5

_DIGITS_RE = re.compile(r"0|[1-9][0-9]*")


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskInstance:
    """One problem: a pair of digit-strings, an int array, or a bit array."""

    task: str
    a: str = ""
    b: str = ""
    items: tuple[int, ...] = ()
    bits: tuple[int, ...] = ()

    def __post_init__(self):
        if self.task == "addition":
            for s in (self.a, self.b):
                if not _DIGITS_RE.fullmatch(s):
                    raise InputError(f"not a canonical digit-string: {s!r}")
        elif self.task == "dynprog":
            if not self.items:
                raise InputError("dynprog instance needs a non-empty item array")
            for v in self.items:
                if not DP_MIN_ITEM <= v <= DP_MAX_ITEM:
                    raise InputError(f"dynprog item {v} outside [{DP_MIN_ITEM}, {DP_MAX_ITEM}]")
        elif self.task == "parity":
            if not self.bits:
                raise InputError("parity instance needs a non-empty bit array")
            if any(b not in (0, 1) for b in self.bits):
                raise InputError("parity bits must be 0 or 1")
        else:
            raise InputError(f"unknown task {self.task!r}")

    @property
    def length(self) -> int:
        if self.task == "addition":
            return max(len(self.a), len(self.b))
        return len(self.items) if self.task == "dynprog" else len(self.bits)

    def root_node(self) -> Node:
        if self.task == "addition":
            return AdditionNode(self.a, self.b)
        if self.task == "dynprog":
            return DpRootNode(self.items)
        return ParityNode(self.bits)


def addition_instance(a: str, b: str) -> TaskInstance:
    return TaskInstance("addition", a=a, b=b)


def dynprog_instance(items) -> TaskInstance:
    return TaskInstance("dynprog", items=tuple(items))


def parity_instance(bits) -> TaskInstance:
    return TaskInstance("parity", bits=tuple(bits))


# ---------------------------------------------------------------------------
# direct oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CarryOutput:
    """One addition level: overflow carry plus the computed suffix digits."""

    carry: int
    output: str

    def joined(self) -> str:
        """Carry prepended to the output, canonicalized (no leading zeros)."""
        return canonical_digits(f"{self.carry}{self.output}")


def canonical_digits(s: str) -> str:
    stripped = s.lstrip("0")
    return stripped if stripped else "0"


def _check_digits(s: str) -> str:
    if not s or any(c not in "0123456789" for c in s):
        raise InputError(f"not a digit-string: {s!r}")
    return s


def solve_addition(a: str, b: str) -> str:
    """Exact arbitrary-precision sum as a canonical digit-string."""
    _check_digits(a), _check_digits(b)
    digits_a, digits_b = a[::-1], b[::-1]
    out: list[str] = []
    carry = 0
    for i in range(max(len(a), len(b))):
        da = int(digits_a[i]) if i < len(digits_a) else 0
        db = int(digits_b[i]) if i < len(digits_b) else 0
        s = da + db + carry
        out.append(str(s % 10))
        carry = s // 10
    if carry:
        out.append(str(carry))
    return canonical_digits("".join(reversed(out)))


def addition_levels(a: str, b: str) -> list[CarryOutput]:
    """Per-level carry/output pairs, least-significant suffix first.

    Level k covers the k-digit suffixes of each operand (the whole operand once
    k reaches its length); the last level's carry joined to its output equals
    the full sum.
    """
    _check_digits(a), _check_digits(b)
    levels = []
    node = AdditionNode(a, b)
    chain = [node]
    while not is_base_case(chain[-1]):
        chain.append(decompose(chain[-1])[0][1])
    answer: CarryOutput | None = None
    for n in reversed(chain):
        answer = base_answer(n) if answer is None else combine(n, [answer])
        levels.append(answer)
    return levels


def dp_values(items) -> list[int]:
    """Suffix maxima of the non-adjacent subsequence sum, clipped at zero."""
    items = list(items)
    if not items:
        raise InputError("empty item array")
    n = len(items)
    dp = [0] * n
    dp[n - 1] = max(items[n - 1], 0)
    if n >= 2:
        dp[n - 2] = max(items[n - 2], items[n - 1], 0)
    for i in range(n - 3, -1, -1):
        dp[i] = max(dp[i + 1], items[i] + dp[i + 2], 0)
    return dp


def dp_indices(dp, items) -> list[int]:
    """Reconstruction walk over a dp array: 1 = chosen, 2 = skipped.

    Greedy choose-first yields the lexicographically smallest optimal encoding;
    ``dp`` must be ``dp_values(items)`` for the result to be optimal, but the
    walk itself is defined for any same-length pair.
    """
    dp, items = list(dp), list(items)
    if len(dp) != len(items):
        raise InputError(f"dp/items length mismatch: {len(dp)} vs {len(items)}")
    if not items:
        raise InputError("empty item array")
    choices = []
    can_use = True
    n = len(items)
    for i in range(n):
        follow = dp[i + 2] if i + 2 < n else 0
        if can_use and dp[i] == items[i] + follow:
            choices.append(1)
            can_use = False
        else:
            choices.append(2)
            can_use = True
    return choices


@lru_cache(maxsize=None)
def _nonadjacent_masks(n: int) -> tuple[tuple[int, ...], ...]:
    """All 0/1 selection masks of length n with no two adjacent 1s."""
    if n == 0:
        return ((),)
    if n == 1:
        return ((0,), (1,))
    shorter = _nonadjacent_masks(n - 1)
    masks = [m + (0,) for m in shorter]
    masks += [m + (1,) for m in shorter if m[-1] == 0]
    return tuple(masks)


def dp_bruteforce(items) -> list[int]:
    """Independent enumeration oracle for the choices array (length <= 20)."""
    items = list(items)
    if not items:
        raise InputError("empty item array")
    if len(items) > 20:
        raise InputError(f"enumeration bound exceeded: {len(items)} > 20")
    best_sum = 0  # the empty selection is always available
    best: list[int] | None = None
    for mask in _nonadjacent_masks(len(items)):
        total = sum(v for v, m in zip(items, mask) if m)
        encoding = [1 if m else 2 for m in mask]
        if total > best_sum or (total == best_sum and (best is None or encoding < best)):
            best_sum, best = total, encoding
    assert best is not None
    return best


def parity_value(bits) -> int:
    bits = list(bits)
    if not bits:
        raise InputError("empty bit array")
    if any(b not in (0, 1) for b in bits):
        raise InputError("parity bits must be 0 or 1")
    return sum(bits) % 2


# ---------------------------------------------------------------------------
# context nodes and recursive decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdditionNode:
    a: str
    b: str

    task = "addition"
    role = "addition"

    @property
    def length(self) -> int:
        return max(len(self.a), len(self.b))


@dataclass(frozen=True)
class ParityNode:
    bits: tuple[int, ...]

    task = "parity"
    role = "parity"

    @property
    def length(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class DpRootNode:
    items: tuple[int, ...]

    task = "dynprog"
    role = "dp_root"

    @property
    def length(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class DpArrayNode:
    items: tuple[int, ...]

    task = "dynprog"
    role = "dp_array"

    @property
    def length(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class DpIndicesNode:
    dp: tuple[int, ...]
    items: tuple[int, ...]
    can_use: bool

    task = "dynprog"
    role = "dp_indices"

    @property
    def length(self) -> int:
        return len(self.items)


Node = AdditionNode | ParityNode | DpRootNode | DpArrayNode | DpIndicesNode


def is_base_case(node: Node | TaskInstance) -> bool:
    """True when the context answers directly instead of recursing."""
    node = node.root_node() if isinstance(node, TaskInstance) else node
    if isinstance(node, AdditionNode):
        return len(node.a) == 1 and len(node.b) == 1
    if isinstance(node, ParityNode):
        return len(node.bits) == 1
    if isinstance(node, DpRootNode):
        return False  # the root always delegates to both chains
    if isinstance(node, DpArrayNode):
        return len(node.items) <= 2
    return len(node.items) == 1


def _indices_choose_first(node: DpIndicesNode) -> bool:
    follow = node.dp[2] if len(node.dp) >= 3 else 0
    return node.can_use and node.dp[0] == node.items[0] + follow


def decompose(node: Node | TaskInstance) -> list[tuple[str, Node]]:
    """Children of a non-base context as ordered (role, node) pairs.

    Addition strips the leading digit from each operand of maximal length;
    parity drops the first bit; a dynprog root calls the dp-array chain and
    then the indices chain on the full problem, while nodes inside either
    chain recurse on their one-shorter tails.
    """
    node = node.root_node() if isinstance(node, TaskInstance) else node
    if is_base_case(node):
        raise ContractViolation(f"decompose called on base case {node!r}")
    if isinstance(node, AdditionNode):
        longest = node.length
        a = node.a[1:] if len(node.a) == longest else node.a
        b = node.b[1:] if len(node.b) == longest else node.b
        return [("addition", AdditionNode(a, b))]
    if isinstance(node, ParityNode):
        return [("parity", ParityNode(node.bits[1:]))]
    if isinstance(node, DpRootNode):
        dp = tuple(dp_values(node.items))
        return [
            ("dp_array", DpArrayNode(node.items)),
            ("dp_indices", DpIndicesNode(dp, node.items, True)),
        ]
    if isinstance(node, DpArrayNode):
        return [("dp_array", DpArrayNode(node.items[1:]))]
    choose = _indices_choose_first(node)
    child = DpIndicesNode(node.dp[1:], node.items[1:], not choose)
    return [("dp_indices", child)]


def base_answer(node: Node):
    """Direct answer at a base context."""
    if isinstance(node, AdditionNode):
        s = int(node.a) + int(node.b)
        return CarryOutput(s // 10, str(s % 10))
    if isinstance(node, ParityNode):
        return node.bits[0]
    if isinstance(node, DpArrayNode):
        return tuple(dp_values(node.items))
    if isinstance(node, DpIndicesNode):
        return (1,) if _indices_choose_first(node) else (2,)
    raise ContractViolation(f"{node!r} has no base case")


def combine(node: Node | TaskInstance, child_answers: list):
    """Answer of a context from its children's answers.

    Mirrors what a faithful model computes in-context from the spliced
    returns, so it accepts whatever the children actually produced.
    """
    node = node.root_node() if isinstance(node, TaskInstance) else node
    expected = len(decompose(node))
    if len(child_answers) != expected:
        raise ContractViolation(
            f"{type(node).__name__} expects {expected} child answers, got {len(child_answers)}"
        )
    if isinstance(node, AdditionNode):
        child: CarryOutput = child_answers[0]
        longest = node.length
        da = int(node.a[0]) if len(node.a) == longest else 0
        db = int(node.b[0]) if len(node.b) == longest else 0
        s = da + db + child.carry
        return CarryOutput(s // 10, f"{s % 10}{child.output}")
    if isinstance(node, ParityNode):
        return (node.bits[0] + child_answers[0]) % 2
    if isinstance(node, DpRootNode):
        return tuple(child_answers[1])
    if isinstance(node, DpArrayNode):
        child_dp = tuple(child_answers[0])
        follow = child_dp[1] if len(child_dp) >= 2 else 0
        return (max(child_dp[0], node.items[0] + follow, 0),) + child_dp
    chose = not decompose(node)[0][1].can_use
    return ((1 if chose else 2),) + tuple(child_answers[0])


def node_answer(node: Node):
    """Full recursive answer of a node: fold combine over decompose."""
    if is_base_case(node):
        return base_answer(node)
    return combine(node, [node_answer(child) for _, child in decompose(node)])


def walk_tree(node: Node):
    """Yield every context node of the call tree rooted at ``node``, preorder."""
    yield node
    if not is_base_case(node):
        for _, child in decompose(node):
            yield from walk_tree(child)


def context_count(node: Node | TaskInstance) -> int:
    node = node.root_node() if isinstance(node, TaskInstance) else node
    return sum(1 for _ in walk_tree(node))


def instance_answer(inst: TaskInstance) -> str:
    """Canonical answer string used for scoring, via independent arithmetic."""
    if inst.task == "addition":
        return str(int(inst.a) + int(inst.b))
    if inst.task == "dynprog":
        return format_array(dp_indices(dp_values(inst.items), inst.items))
    return str(parity_value(inst.bits))


def format_array(values) -> str:
    """Canonical bracketed rendering: ``[a, b, c]`` with comma+space."""
    return "[" + ", ".join(str(v) for v in values) + "]"


def parse_array(text: str) -> tuple[int, ...]:
    body = text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise InputError(f"not a bracketed array: {text!r}")
    inner = body[1:-1].strip()
    if not inner:
        return ()
    try:
        return tuple(int(part.strip()) for part in inner.split(","))
    except ValueError as exc:
        raise InputError(f"non-integer array element in {text!r}") from exc
