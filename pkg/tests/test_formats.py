import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurse import formats, parser, tasks
from recurse.errors import ExtractionError, TemplateError

ADDITION_RETUNING_ROOT = (
    "637 + 123\nSolution: Call: 37 + 23\n"
    "Return: Carry 0, Output 60\nAnswer: Carry 0, Output 760"
)
ADDITION_SCRATCHPAD = (
    "637 + 123\nSolution: Carry 1, Output 0\nCarry 0, Output 60\nCarry 0, Output 760"
)
ADDITION_BASELINE = "637 + 123\nAnswer: 760"

PARITY_RETUNING_ROOT = (
    "What is the parity of [1, 0, 1]?\nSolution: "
    "Call: What is the parity of [0, 1]?\nReturn: 1\nAnswer: 0"
)
PARITY_BASELINE = "What is the parity of [1, 0, 1]?\nAnswer: 0"

DP_RETUNING_ROOT = (
    "Compute the maximum sum of nonadjacent subsequences of [1, -3, 2]\nSolution: "
    "Call: Create dp array [1, -3, 2]\n"
    "Return: [3, 2, 2]\n"
    "Call: Create chosen indices array: sum array [3, 2, 2], item array [1, -3, 2], "
    "can use item True\n"
    "Return: [1, 2, 1]\nAnswer: [1, 2, 1]"
)
DP_RETUNING_INDICES = (
    "Create chosen indices array: sum array [3, 2, 2], item array [1, -3, 2], "
    "can use item True\nSolution: If there is only 1 item, return 1 if we should use it "
    "else 2. If we should use the first item to get the sum, call False else True. "
    "Call: Create chosen indices array: sum array [2, 2], item array [-3, 2], "
    "can use item False\n"
    "Return: [2, 1]\nAnswer: Append 1 if False else 2.\nAnswer: [1, 2, 1]"
)
DP_SCRATCHPAD = (
    "Question: Let's solve input = [1, -3, 2]. "
    "Scratchpad: dp[2] = max(input[2], 0) = max(2, 0) = 2\n"
    "dp[1] = max(input[1], input[2], 0) = max(-3, 2, 0) = 2\n"
    "dp[0] = max(dp[1], input[0] + dp[2], 0) = max(2, 1 + 2, 0) = 3\n\n"
    "Finally, we reconstruct the lexicographically smallest subsequence that fulfills "
    'the task objective by selecting numbers as follows. We store the result on a list '
    'named "output".\n\n'
    "Let can_use_next_item = True.\n"
    "Since dp[0] == input[0] + dp[2] (3 == 1 + 2) and can_use_next_item == True, "
    "we store output[0] = 1. We update can_use_next_item = False.\n"
    "Since dp[1] != input[1] (2 != -3) or can_use_next_item == False, "
    "we store output[1] = 2. We update can_use_next_item = True.\n"
    "Since dp[2] == input[2] (2 == 2) and can_use_next_item == True, "
    "we store output[2] = 1.\n\n"
    "Reconstructing all together, output=[1, 2, 1]."
)


def _examples(task_inst, fmt):
    return formats.render_training(task_inst, fmt)


class TestAdditionFixtures:
    def test_retuning_contexts(self):
        inst = tasks.addition_instance("637", "123")
        examples = _examples(inst, "retuning")
        assert [ex.text for ex in examples] == [
            ADDITION_RETUNING_ROOT,
            "37 + 23\nSolution: Call: 7 + 3\nReturn: Carry 1, Output 0\nAnswer: Carry 0, Output 60",
            "7 + 3\nSolution: Answer: Carry 1, Output 0",
        ]
        assert [ex.role for ex in examples] == ["root", "intermediate", "base"]
        assert [ex.length for ex in examples] == [3, 2, 1]

    def test_retuning_root_mask(self):
        root = _examples(tasks.addition_instance("637", "123"), "retuning")[0]
        assert root.segments == (
            ("637 + 123\nSolution: ", False),
            ("Call: 37 + 23\n", True),
            ("Return: Carry 0, Output 60\nAnswer: ", False),
            ("Carry 0, Output 760", True),
        )

    def test_scratchpad_and_baseline(self):
        inst = tasks.addition_instance("637", "123")
        assert _examples(inst, "scratchpad")[0].text == ADDITION_SCRATCHPAD
        assert _examples(inst, "baseline")[0].text == ADDITION_BASELINE
        assert _examples(inst, "baseline")[0].segments[1] == ("760", True)


class TestParityFixtures:
    def test_retuning_root(self):
        root = _examples(tasks.parity_instance([1, 0, 1]), "retuning")[0]
        assert root.text == PARITY_RETUNING_ROOT
        assert root.segments == (
            ("What is the parity of [1, 0, 1]?\nSolution: ", False),
            ("Call: What is the parity of [0, 1]?\n", True),
            ("Return: 1\nAnswer: ", False),
            ("0", True),
        )

    def test_baseline(self):
        ex = _examples(tasks.parity_instance([1, 0, 1]), "baseline")[0]
        assert ex.text == PARITY_BASELINE
        assert ex.segments == (("What is the parity of [1, 0, 1]?\nAnswer: ", False), ("0", True))

    def test_scratchpad(self):
        ex = _examples(tasks.parity_instance([1, 0, 1]), "scratchpad")[0]
        assert ex.text == (
            "What is the parity of [1, 0, 1]?\nSolution: Compute one element at a time 1 1 0"
        )


class TestDynprogFixtures:
    def test_retuning_root(self):
        examples = _examples(tasks.dynprog_instance([1, -3, 2]), "retuning")
        assert examples[0].text == DP_RETUNING_ROOT
        trainable = [t for t, tr in examples[0].segments if tr]
        assert trainable == [
            "Call: Create dp array [1, -3, 2]\n",
            "Call: Create chosen indices array: sum array [3, 2, 2], item array [1, -3, 2], "
            "can use item True\n",
            "[1, 2, 1]",
        ]

    def test_retuning_indices_context(self):
        examples = _examples(tasks.dynprog_instance([1, -3, 2]), "retuning")
        by_text = {ex.text: ex for ex in examples}
        assert DP_RETUNING_INDICES in by_text
        trainable = [t for t, tr in by_text[DP_RETUNING_INDICES].segments if tr]
        assert trainable == [
            "Call: Create chosen indices array: sum array [2, 2], item array [-3, 2], "
            "can use item False\n",
            "[1, 2, 1]",
        ]

    def test_retuning_context_roles(self):
        examples = _examples(tasks.dynprog_instance([1, -3, 2]), "retuning")
        assert len(examples) == 6
        assert [ex.role for ex in examples].count("base") == 2

    def test_scratchpad(self):
        assert _examples(tasks.dynprog_instance([1, -3, 2]), "scratchpad")[0].text == DP_SCRATCHPAD

    def test_baseline_mask(self):
        ex = _examples(tasks.dynprog_instance([1, -3, 2]), "baseline")[0]
        assert ex.text.endswith("Input = [1, -3, 2].\nAnswer: [1, 2, 1]")
        assert ex.segments[1] == ("Answer: [1, 2, 1]", True)


class TestRenderPrompt:
    def test_default_templates(self):
        assert formats.render_prompt(tasks.addition_instance("45", "97"), "retuning") == (
            "45 + 97\nSolution: "
        )
        assert formats.render_prompt(tasks.dynprog_instance([1, -3, 2]), "retuning") == (
            "Compute the maximum sum of nonadjacent subsequences of [1, -3, 2]\nSolution: "
        )

    def test_custom_template(self):
        got = formats.render_prompt(
            tasks.addition_instance("45", "97"), "retuning", "{num_1} + {num_2}\nAnswer: "
        )
        assert got == "45 + 97\nAnswer: "

    def test_adversarial_template_accepted(self):
        got = formats.render_prompt(
            tasks.addition_instance("45", "97"), "retuning", "{num_1} - {num_2}\nSolution: "
        )
        assert got == "45 - 97\nSolution: "

    def test_unresolvable_placeholder(self):
        with pytest.raises(TemplateError):
            formats.render_prompt(tasks.addition_instance("45", "97"), "retuning", "{nope}")


class TestExtractFinal:
    @pytest.mark.parametrize(
        "task,fmt,text,expected",
        [
            ("addition", "retuning", "stuff\nAnswer: Carry 1, Output 998", "1998"),
            ("addition", "baseline", "...Answer: 760", "760"),
            ("addition", "scratchpad", ADDITION_SCRATCHPAD, "760"),
            ("dynprog", "retuning", "...Answer: [1, 2, 1]", "[1, 2, 1]"),
            ("parity", "retuning", "...\nAnswer: 0", "0"),
            ("addition", "retuning", "Answer: Carry 0, Output 0042", "42"),
        ],
    )
    def test_examples(self, task, fmt, text, expected):
        assert formats.extract_final(task, fmt, text) == expected

    def test_no_answer(self):
        with pytest.raises(ExtractionError):
            formats.extract_final("addition", "baseline", "no numbers here")
        with pytest.raises(ExtractionError):
            formats.extract_final("dynprog", "retuning", "no array")


class TestRoundTrips:
    def _random_instance(self, rng, task):
        if task == "addition":
            return tasks.addition_instance(
                str(rng.randrange(10**6)), str(rng.randrange(10**6))
            )
        if task == "dynprog":
            n = rng.randrange(1, 7)
            return tasks.dynprog_instance([rng.randrange(-5, 6) for _ in range(n)])
        n = rng.randrange(1, 12)
        return tasks.parity_instance([rng.randrange(2) for _ in range(n)])

    @pytest.mark.parametrize("task", tasks.TASKS)
    @pytest.mark.parametrize("fmt", formats.FORMATS)
    def test_extract_final_of_rendered_root(self, task, fmt):
        rng = random.Random(f"{task}-{fmt}")
        for _ in range(40):
            inst = self._random_instance(rng, task)
            root = formats.render_training(inst, fmt)[0]
            assert formats.extract_final(task, fmt, root.text) == tasks.instance_answer(inst)

    @pytest.mark.parametrize("task", tasks.TASKS)
    def test_call_segments_match_decompose(self, task):
        # prompt + trainable call must parse back to exactly the child produced
        # by the decomposition
        rng = random.Random(f"rt-{task}")
        for _ in range(25):
            inst = self._random_instance(rng, task)
            for ex in formats.render_training(inst, "retuning"):
                if ex.role == "base":
                    assert "Call:" not in ex.text
                if "Call:" not in ex.text:
                    continue
                text = ex.prompt
                call_count = 0
                for seg, trainable in ex.segments[1:]:
                    text += seg
                    if trainable and seg.startswith("Call: "):
                        site = parser.find_unexecuted_call(text)
                        assert site is not None
                        assert f"Call: {site.call_text}\n" == seg
                        call_count += 1
                assert call_count >= 1

    @pytest.mark.parametrize("task", tasks.TASKS)
    @pytest.mark.parametrize("fmt", formats.FORMATS)
    def test_mask_totals(self, task, fmt):
        rng = random.Random(f"mask-{task}-{fmt}")
        for _ in range(20):
            inst = self._random_instance(rng, task)
            for ex in formats.render_training(inst, fmt):
                assert not ex.segments[0][1]  # prompt frozen
                assert len(ex.trainable_text()) > 0
                for seg, trainable in ex.segments:
                    if seg.startswith("Return: "):
                        assert not trainable


@given(st.lists(st.integers(0, 1), min_size=1, max_size=30))
@settings(max_examples=60)
def test_parity_retuning_answer_consistency(bits):
    inst = tasks.parity_instance(bits)
    for ex in formats.render_training(inst, "retuning"):
        got = formats.extract_final("parity", "retuning", ex.text)
        want = str(tasks.parity_value(tasks.parse_array(ex.prompt[ex.prompt.find("[") : ex.prompt.find("]") + 1])))
        assert got == want
