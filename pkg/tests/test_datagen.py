import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recurse import datagen, formats, parser, tasks
from recurse.datagen import DatasetConfig
from recurse.errors import DatasetError, InputError


class TestGenSeed:
    def test_dynprog_exhaustive_count(self):
        # sum of 11^k for k = 1..5, verified by enumeration
        assert datagen.exhaustive_count("dynprog", 5) == 177_155
        cfg = DatasetConfig(task="dynprog", max_length=3, resample="off")
        seeds = datagen.gen_seed(cfg)
        assert len(seeds) == 11 + 121 + 1331
        assert len(set(seeds)) == len(seeds)

    def test_parity_exhaustive_to_length_3(self):
        cfg = DatasetConfig(task="parity", max_length=3, resample="off")
        assert len(datagen.gen_seed(cfg)) == 14

    def test_addition_default_count(self):
        cfg = DatasetConfig(task="addition", seed_count=500, max_length=15, resample="off")
        seeds = datagen.gen_seed(cfg)
        assert len(seeds) == 500
        assert all(s.length <= 15 for s in seeds)
        default = DatasetConfig(task="addition", resample="off")
        assert default.seed_count is None  # library default maps to 304,000
        assert datagen.ADDITION_DEFAULT_SEED_COUNT == 304_000

    def test_exhaustive_cap_refused_with_estimate(self):
        cfg = DatasetConfig(task="parity", max_length=21, resample="off", exhaustive_cap=1000)
        with pytest.raises(DatasetError) as info:
            datagen.gen_seed(cfg)
        assert "4,194,302" in str(info.value)

    def test_deterministic(self):
        cfg = DatasetConfig(task="addition", seed_count=50, rng_seed=9, resample="off")
        assert datagen.gen_seed(cfg) == datagen.gen_seed(cfg)

    def test_low_data_mode_counts(self):
        cfg = DatasetConfig(task="addition", fixed_per_length=10, max_length=15)
        seeds = datagen.gen_seed(cfg)
        assert len(seeds) == 150
        per_length = {}
        for s in seeds:
            per_length[s.length] = per_length.get(s.length, 0) + 1
        assert per_length == {ln: 10 for ln in range(1, 16)}
        assert cfg.resample == "off"


class TestExpandRecursive:
    def test_addition_chain(self):
        examples = datagen.expand_recursive([tasks.addition_instance("637", "123")], "retuning")
        assert len(examples) == 3
        assert sorted(ex.length for ex in examples) == [1, 2, 3]

    def test_parity_21_contexts(self):
        inst = tasks.parity_instance([0, 1] * 10 + [1])
        examples = datagen.expand_recursive([inst], "retuning")
        assert len(examples) == 21

    def test_dynprog_tree(self):
        examples = datagen.expand_recursive([tasks.dynprog_instance([1, -3, 2])], "retuning")
        assert len(examples) == 6  # 1 root + 2 dp-array + 3 indices contexts

    def test_dedup_across_instances(self):
        a = tasks.parity_instance([1, 0, 1])
        b = tasks.parity_instance([0, 0, 1])  # shares the [0, 1] and [1] suffixes
        examples = datagen.expand_recursive([a, b], "retuning")
        assert len(examples) == 4

    def test_single_example_for_flat_formats(self):
        insts = [tasks.addition_instance("12", "34"), tasks.addition_instance("12", "34")]
        assert len(datagen.expand_recursive(insts, "baseline")) == 1
        assert len(datagen.expand_recursive(insts, "scratchpad")) == 1


class TestResample:
    def _examples(self, lengths):
        out = []
        for i, length in enumerate(lengths):
            bits = [(i >> k) & 1 for k in range(length)]
            out.extend(datagen.expand_recursive([tasks.parity_instance(bits)], "baseline"))
        return out

    def test_uniform_target_exact(self):
        target = datagen.uniform_target([1, 2, 3, 4, 5, 6, 7, 8, 9, 10], 1000)
        assert all(v == 100 for v in target.values())
        examples = datagen.expand_recursive(
            [tasks.parity_instance([1] * n) for n in range(1, 11)], "retuning"
        )
        resampled = datagen.resample(examples, target, rng_seed=4)
        assert datagen.length_histogram(resampled) == target

    def test_uniform_remainder_goes_to_short_lengths(self):
        target = datagen.uniform_target([3, 1, 2], 10)
        assert target == {1: 4, 2: 3, 3: 3}

    def test_missing_target_length_rejected(self):
        examples = self._examples([1, 2, 3])
        with pytest.raises(DatasetError) as info:
            datagen.resample(examples, {1: 5, 2: 5}, rng_seed=0)
        assert "3" in str(info.value)

    def test_target_length_absent_from_corpus(self):
        examples = self._examples([1, 2])
        with pytest.raises(DatasetError) as info:
            datagen.resample(examples, {1: 5, 2: 5, 3: 5}, rng_seed=0)
        assert "3" in str(info.value)

    def test_downsample_without_replacement(self):
        examples = self._examples([8] * 50)
        assert len({ex.text for ex in examples}) == 50
        resampled = datagen.resample(examples, {8: 10}, rng_seed=1)
        assert len(resampled) == 10
        assert len({ex.text for ex in resampled}) == 10

    @given(st.dictionaries(st.integers(1, 6), st.integers(0, 40), min_size=1))
    @settings(max_examples=50)
    def test_histogram_matches_any_target(self, target):
        examples = datagen.expand_recursive(
            [tasks.parity_instance([1] * n) for n in range(1, 7)], "retuning"
        )
        resampled = datagen.resample(examples, {n: target.get(n, 1) for n in range(1, 7)}, 7)
        hist = datagen.length_histogram(resampled)
        for n in range(1, 7):
            want = target.get(n, 1)
            assert hist.get(n, 0) == want

    def test_default_targets_sum_to_full_scale_totals(self):
        assert sum(datagen.default_target("addition", range(1, 16)).values()) == 3_676_055
        assert sum(datagen.default_target("dynprog", range(1, 6)).values()) == 342_187
        assert sum(datagen.default_target("parity", range(1, 22)).values()) == 124_780

    def test_resample_off_is_identity(self):
        cfg = DatasetConfig(task="dynprog", max_length=2, resample="off")
        examples = datagen.build_dataset(cfg)
        assert examples == datagen.expand_recursive(datagen.gen_seed(cfg), "retuning")


class TestBuildDataset:
    def test_scaled_counts_exact(self):
        cfg = DatasetConfig(task="dynprog", format="retuning", scale=0.01, rng_seed=3)
        examples = datagen.build_dataset(cfg)
        assert len(examples) == round(342_187 * 0.01)

    def test_histogram_resample_spec(self):
        cfg = DatasetConfig(
            task="parity", max_length=4, resample={1: 7, 2: 7, 3: 7, 4: 7}, rng_seed=1
        )
        examples = datagen.build_dataset(cfg)
        assert datagen.length_histogram(examples) == {1: 7, 2: 7, 3: 7, 4: 7}


class TestSplits:
    def test_counts(self):
        validation, test = datagen.make_splits("addition", range(1, 61), rng_seed=2)
        assert len(validation) == 300
        assert len(test) == 6000

    def test_parity_length_60_slice(self):
        validation, test = datagen.make_splits("parity", [60], rng_seed=2)
        assert len(test) == 100
        assert all(inst.length == 60 for inst in test)

    def test_disjoint_when_space_allows(self):
        validation, test = datagen.make_splits("addition", [8], rng_seed=2)
        assert not set(validation) & set(test)

    def test_deterministic(self):
        a = datagen.make_splits("dynprog", [3, 5], rng_seed=6)
        b = datagen.make_splits("dynprog", [3, 5], rng_seed=6)
        assert a == b

    def test_rejects_empty_lengths(self):
        with pytest.raises(InputError):
            datagen.make_splits("parity", [], rng_seed=0)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        cfg = DatasetConfig(task="dynprog", max_length=3, resample="off", rng_seed=5)
        examples = datagen.build_dataset(cfg)[:1000]
        path = tmp_path / "data.jsonl"
        datagen.persist(examples, path)
        assert datagen.load(path) == examples

    def test_record_schema(self, tmp_path):
        examples = datagen.expand_recursive([tasks.parity_instance([1, 0])], "retuning")
        path = tmp_path / "data.jsonl"
        datagen.persist(examples, path)
        raw = path.read_bytes()
        assert not raw.startswith(b"\xef\xbb\xbf")  # no BOM
        first = json.loads(raw.decode("utf-8").splitlines()[0])
        assert list(first) == ["task", "format", "length", "role", "segments"]
        assert list(first["segments"][0]) == ["text", "trainable"]

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"task": "parity"}\nnot json\n', encoding="utf-8")
        with pytest.raises(DatasetError) as info:
            datagen.load(path)
        assert ":1:" in str(info.value) or ":2:" in str(info.value)

    def test_reloaded_examples_pass_round_trip_invariant(self, tmp_path):
        cfg = DatasetConfig(task="addition", seed_count=20, max_length=5, resample="off")
        path = tmp_path / "add.jsonl"
        datagen.persist(datagen.build_dataset(cfg), path)
        for ex in datagen.load(path):
            if "Call:" not in ex.text:
                continue
            text = ex.prompt
            for seg, trainable in ex.segments[1:]:
                text += seg
                if trainable and seg.startswith("Call: "):
                    site = parser.find_unexecuted_call(text)
                    assert site is not None and f"Call: {site.call_text}\n" == seg


class TestDeterminism:
    def test_byte_identical_jsonl(self, tmp_path):
        cfg = DatasetConfig(task="parity", max_length=6, resample="uniform",
                            resample_total=300, rng_seed=11)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        datagen.persist(datagen.build_dataset(cfg), p1)
        datagen.persist(datagen.build_dataset(cfg), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        base = dict(task="addition", seed_count=30, max_length=4, resample="off")
        a = datagen.build_dataset(DatasetConfig(rng_seed=1, **base))
        b = datagen.build_dataset(DatasetConfig(rng_seed=2, **base))
        assert [e.text for e in a] != [e.text for e in b]
