import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurse import tasks
from recurse.errors import ContractViolation, InputError
from recurse.tasks import (
    AdditionNode,
    CarryOutput,
    DpArrayNode,
    DpIndicesNode,
    DpRootNode,
    ParityNode,
)

# frozen with an independent big-integer oracle before the build
BIG_A = "6402439337079656237224688665395090223276"
BIG_B = "3440963186449456568324300908514580736755"
BIG_SUM = "9843402523529112805548989573909670960031"

digit_strings = st.integers(min_value=0, max_value=10**60 - 1).map(str)
items_arrays = st.lists(st.integers(-5, 5), min_size=1, max_size=12)
bit_arrays = st.lists(st.integers(0, 1), min_size=1, max_size=40)


class TestSolveAddition:
    @pytest.mark.parametrize(
        "a,b,expected",
        [
            ("637", "123", "760"),
            ("0", "0", "0"),
            (BIG_A, BIG_B, BIG_SUM),
            ("999", "999", "1998"),
            ("5", "1000", "1005"),
        ],
    )
    def test_examples(self, a, b, expected):
        assert tasks.solve_addition(a, b) == expected

    def test_rejects_garbage(self):
        with pytest.raises(InputError):
            tasks.solve_addition("12a", "3")

    @given(digit_strings, digit_strings)
    @settings(max_examples=200)
    def test_matches_bigint(self, a, b):
        assert tasks.solve_addition(a, b) == str(int(a) + int(b))


class TestAdditionLevels:
    def test_fixture_levels(self):
        levels = tasks.addition_levels("637", "123")
        assert levels == [CarryOutput(1, "0"), CarryOutput(0, "60"), CarryOutput(0, "760")]

    def test_single_level(self):
        assert tasks.addition_levels("4", "8") == [CarryOutput(1, "2")]

    def test_last_level_joins_to_sum(self):
        last = tasks.addition_levels("999", "999")[-1]
        assert (last.carry, last.output) == (1, "998")
        assert last.joined() == "1998"

    @given(digit_strings, digit_strings)
    @settings(max_examples=150)
    def test_per_level_invariant(self, a, b):
        # level k: carry * 10^len(output) + output == sum of the k-digit suffixes
        levels = tasks.addition_levels(a, b)
        assert len(levels) == max(len(a), len(b))
        for k, level in enumerate(levels, start=1):
            suffix_sum = int(a[-k:]) + int(b[-k:])
            assert level.carry * 10 ** len(level.output) + int(level.output) == suffix_sum
        assert levels[-1].joined() == str(int(a) + int(b))


class TestDpValues:
    @pytest.mark.parametrize(
        "items,expected",
        [
            ([1, -3, 2], [3, 2, 2]),
            ([-4], [0]),
            ([3, 2, -2, 5, 3], [8, 7, 5, 5, 3]),
        ],
    )
    def test_examples(self, items, expected):
        assert tasks.dp_values(items) == expected

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            tasks.dp_values([])

    @given(st.lists(st.integers(-5, 5), min_size=8, max_size=8))
    @settings(max_examples=100)
    def test_head_matches_exhaustive_max(self, items):
        best = max(
            (
                sum(v for v, m in zip(items, mask) if m)
                for mask in tasks._nonadjacent_masks(len(items))
            ),
            default=0,
        )
        assert tasks.dp_values(items)[0] == max(best, 0)


class TestDpIndices:
    def test_fixture(self):
        assert tasks.dp_indices([3, 2, 2], [1, -3, 2]) == [1, 2, 1]

    def test_longer_fixture(self):
        items = [3, 2, -2, 5, 3]
        assert tasks.dp_indices(tasks.dp_values(items), items) == [1, 2, 2, 1, 2]

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            tasks.dp_indices([1, 2], [1])

    def test_exhaustive_length_at_most_4(self):
        import itertools

        for n in range(1, 5):
            for items in itertools.product(range(-5, 6), repeat=n):
                items = list(items)
                got = tasks.dp_indices(tasks.dp_values(items), items)
                assert got == tasks.dp_bruteforce(items), items

    @given(items_arrays)
    @settings(max_examples=300)
    def test_matches_bruteforce(self, items):
        assert tasks.dp_indices(tasks.dp_values(items), items) == tasks.dp_bruteforce(items)

    @given(items_arrays)
    @settings(max_examples=200)
    def test_chosen_set_valid(self, items):
        choices = tasks.dp_indices(tasks.dp_values(items), items)
        assert all(not (x == 1 and y == 1) for x, y in zip(choices, choices[1:]))
        chosen_sum = sum(v for v, c in zip(items, choices) if c == 1)
        assert chosen_sum == max(tasks.dp_values(items)[0], 0)


class TestDpBruteforce:
    @pytest.mark.parametrize(
        "items,expected",
        [
            ([1, -3, 2], [1, 2, 1]),
            ([-1], [2]),
            ([5, 5], [1, 2]),
            ([0], [1]),
            ([-5, 0], [2, 1]),
        ],
    )
    def test_examples(self, items, expected):
        assert tasks.dp_bruteforce(items) == expected

    def test_bound(self):
        with pytest.raises(InputError):
            tasks.dp_bruteforce([0] * 21)


class TestParity:
    @pytest.mark.parametrize(
        "bits,expected",
        [([0, 1, 0, 0], 1), ([1, 0, 1], 0), ([0] * 60, 0)],
    )
    def test_examples(self, bits, expected):
        assert tasks.parity_value(bits) == expected

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            tasks.parity_value([])

    @given(st.integers(0, 1), bit_arrays)
    def test_combine_identity(self, head, rest):
        assert tasks.parity_value([head] + rest) == (head + tasks.parity_value(rest)) % 2


class TestDecompose:
    def test_addition_strips_leading(self):
        (_, child), = tasks.decompose(AdditionNode("1234", "5678"))
        assert child == AdditionNode("234", "678")

    def test_addition_strips_longest_only(self):
        (_, child), = tasks.decompose(AdditionNode("345", "67"))
        assert child == AdditionNode("45", "67")

    def test_parity_drops_first(self):
        (_, child), = tasks.decompose(ParityNode((1, 0, 1)))
        assert child == ParityNode((0, 1))

    def test_dynprog_root_two_roles(self):
        children = tasks.decompose(DpRootNode((1, -3, 2)))
        assert [role for role, _ in children] == ["dp_array", "dp_indices"]
        assert children[0][1] == DpArrayNode((1, -3, 2))
        assert children[1][1] == DpIndicesNode((3, 2, 2), (1, -3, 2), True)

    def test_dynprog_chain_children(self):
        (_, dp_child), = tasks.decompose(DpArrayNode((1, -3, 2)))
        assert dp_child == DpArrayNode((-3, 2))
        (_, idx_child), = tasks.decompose(DpIndicesNode((3, 2, 2), (1, -3, 2), True))
        assert idx_child == DpIndicesNode((2, 2), (-3, 2), False)

    def test_base_case_refuses(self):
        with pytest.raises(ContractViolation):
            tasks.decompose(AdditionNode("4", "8"))


class TestIsBaseCase:
    @pytest.mark.parametrize(
        "node,expected",
        [
            (AdditionNode("4", "8"), True),
            (AdditionNode("12", "4"), False),
            (ParityNode((0, 1)), False),
            (ParityNode((1,)), True),
            (DpArrayNode((1, 2)), True),
            (DpArrayNode((1, 2, 3)), False),
            (DpIndicesNode((2,), (2,), True), True),
            (DpRootNode((1,)), False),
        ],
    )
    def test_cases(self, node, expected):
        assert tasks.is_base_case(node) is expected


class TestCombine:
    def test_addition_fixture(self):
        got = tasks.combine(AdditionNode("637", "123"), [CarryOutput(0, "60")])
        assert got == CarryOutput(0, "760")

    def test_parity_fixture(self):
        assert tasks.combine(ParityNode((1, 0, 1)), [1]) == 0

    def test_dynprog_indices_fixture(self):
        got = tasks.combine(DpIndicesNode((3, 2, 2), (1, -3, 2), True), [(2, 1)])
        assert got == (1, 2, 1)

    def test_arity_mismatch(self):
        with pytest.raises(ContractViolation):
            tasks.combine(ParityNode((1, 0)), [1, 0])


class TestFoldEqualsOracle:
    def test_addition_to_length_60(self):
        rng = random.Random(11)
        for length in list(range(1, 25)) + [40, 60]:
            a = str(rng.randrange(10 ** (length - 1) if length > 1 else 0, 10**length))
            b = str(rng.randrange(10 ** (length - 1) if length > 1 else 0, 10**length))
            assert tasks.node_answer(AdditionNode(a, b)).joined() == str(int(a) + int(b))

    def test_parity_to_length_60(self):
        rng = random.Random(12)
        for length in list(range(1, 25)) + [40, 60]:
            bits = tuple(rng.randrange(2) for _ in range(length))
            assert tasks.node_answer(ParityNode(bits)) == sum(bits) % 2

    def test_dynprog_to_length_30(self):
        rng = random.Random(13)
        for length in range(1, 31):
            items = tuple(rng.randrange(-5, 6) for _ in range(length))
            expected = tuple(tasks.dp_indices(tasks.dp_values(items), items))
            assert tasks.node_answer(DpRootNode(items)) == expected

    def test_mixed_length_addition(self):
        rng = random.Random(14)
        for _ in range(200):
            a = str(rng.randrange(10 ** rng.randrange(0, 12)))
            b = str(rng.randrange(10 ** rng.randrange(0, 12)))
            assert tasks.node_answer(AdditionNode(a, b)).joined() == str(int(a) + int(b))


class TestTreeShape:
    def test_dynprog_context_count(self):
        # 1 root + (n-1 dp-array contexts, or 1 when n == 1) + n indices contexts
        for n in range(1, 12):
            node = DpRootNode(tuple(1 for _ in range(n)))
            expected = 1 + (n - 1 if n >= 2 else 1) + n
            assert tasks.context_count(node) == expected

    def test_addition_and_parity_are_chains(self):
        assert tasks.context_count(AdditionNode("637", "123")) == 3
        assert tasks.context_count(ParityNode(tuple([0] * 21))) == 21


class TestInstances:
    def test_leading_zero_rejected(self):
        with pytest.raises(InputError):
            tasks.addition_instance("012", "3")

    def test_range_checked(self):
        with pytest.raises(InputError):
            tasks.dynprog_instance([6])

    def test_bits_checked(self):
        with pytest.raises(InputError):
            tasks.parity_instance([0, 2])

    def test_lengths(self):
        assert tasks.addition_instance("123", "4").length == 3
        assert tasks.dynprog_instance([1, 2]).length == 2
        assert tasks.parity_instance([0, 1, 1]).length == 3

    def test_instance_answer(self):
        assert tasks.instance_answer(tasks.addition_instance("45", "97")) == "142"
        assert tasks.instance_answer(tasks.dynprog_instance([1, -3, 2])) == "[1, 2, 1]"
        assert tasks.instance_answer(tasks.parity_instance([1, 0, 1])) == "0"


def test_array_round_trip():
    assert tasks.format_array([1, -3, 2]) == "[1, -3, 2]"
    assert tasks.parse_array("[1, -3, 2]") == (1, -3, 2)
    assert tasks.parse_array("[]") == ()
    with pytest.raises(InputError):
        tasks.parse_array("[1, x]")
