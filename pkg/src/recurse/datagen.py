"""Seed generation, recursive expansion, length resampling, splits, persistence.

The pipeline is seed instances -> expansion to every call-tree context
(deduplicated) -> per-length resampling to an exact target histogram ->
JSONL.  Every stage draws from an rng stream derived from (rng_seed, stage,
length), so output is deterministic and shards merge deterministically.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field

from . import formats, tasks
from .errors import DatasetError, InputError
from .formats import RenderedExample
from .tasks import TaskInstance

ADDITION_DEFAULT_MAX_LENGTH = 15
DYNPROG_DEFAULT_MAX_LENGTH = 5
PARITY_DEFAULT_MAX_LENGTH = 21

ADDITION_DEFAULT_SEED_COUNT = 304_000

# full-scale resampled dataset totals at scale factor 1.0
DEFAULT_RESAMPLE_TOTALS = {
    "addition": 3_676_055,
    "dynprog": 342_187,
    "parity": 124_780,
}

DEFAULT_EXHAUSTIVE_CAP = 5_000_000

_DP_VALUES = tuple(range(tasks.DP_MIN_ITEM, tasks.DP_MAX_ITEM + 1))


def derive_rng(seed: int, *tags) -> random.Random:
    """Independent deterministic stream for (seed, tags...)."""
    return random.Random("|".join([str(seed), *map(str, tags)]))


@dataclass
class DatasetConfig:
    task: str
    format: str = "retuning"
    max_length: int = 0  # 0 -> task default
    seed_count: int | None = None  # addition only; None -> 304,000
    exhaustive: bool | None = None  # None -> task default (dynprog/parity yes)
    resample: str | dict[int, int] = "uniform"  # "off" | "uniform" | histogram
    resample_total: int | None = None  # None -> full-scale default for the task
    scale: float = 1.0
    fixed_per_length: int | None = None  # low-data mode
    exhaustive_cap: int = DEFAULT_EXHAUSTIVE_CAP
    rng_seed: int = 0

    def __post_init__(self):
        if self.task not in tasks.TASKS:
            raise InputError(f"unknown task {self.task!r}")
        if self.format not in formats.FORMATS:
            raise InputError(f"unknown format {self.format!r}")
        if self.max_length == 0:
            self.max_length = {
                "addition": ADDITION_DEFAULT_MAX_LENGTH,
                "dynprog": DYNPROG_DEFAULT_MAX_LENGTH,
                "parity": PARITY_DEFAULT_MAX_LENGTH,
            }[self.task]
        if self.max_length < 1:
            raise InputError("max_length must be >= 1")
        if self.exhaustive is None:
            self.exhaustive = self.task in ("dynprog", "parity")
        if self.scale <= 0:
            raise InputError("scale must be > 0")
        if self.fixed_per_length is not None:
            if self.fixed_per_length < 1:
                raise InputError("fixed_per_length must be >= 1")
            if self.resample not in ("off", "uniform"):
                raise InputError("low-data mode does not take a resample histogram")
            self.resample = "off"
        if isinstance(self.resample, dict):
            bad = [k for k in self.resample if not 1 <= k <= self.max_length]
            if bad:
                raise InputError(f"histogram keys outside 1..{self.max_length}: {sorted(bad)}")


# ---------------------------------------------------------------------------
# seed data
# ---------------------------------------------------------------------------


def _space_size(task: str, length: int) -> int:
    if task == "addition":
        per = 10**length - 10 ** (length - 1) if length > 1 else 10
        return per * per
    return len(_DP_VALUES) ** length if task == "dynprog" else 2**length


def _random_operand(rng: random.Random, length: int) -> str:
    if length == 1:
        return str(rng.randrange(10))
    return str(rng.randrange(10 ** (length - 1), 10**length))


def _random_instance(rng: random.Random, task: str, length: int) -> TaskInstance:
    """One instance at exactly the given length (addition: equal-length pair)."""
    if task == "addition":
        return tasks.addition_instance(_random_operand(rng, length), _random_operand(rng, length))
    if task == "dynprog":
        return tasks.dynprog_instance(rng.choice(_DP_VALUES) for _ in range(length))
    return tasks.parity_instance(rng.randrange(2) for _ in range(length))


def _exhaustive_instances(task: str, max_length: int):
    values = _DP_VALUES if task == "dynprog" else (0, 1)
    build = tasks.dynprog_instance if task == "dynprog" else tasks.parity_instance
    for length in range(1, max_length + 1):
        for combo in itertools.product(values, repeat=length):
            yield build(combo)


def exhaustive_count(task: str, max_length: int) -> int:
    base = len(_DP_VALUES) if task == "dynprog" else 2
    return sum(base**k for k in range(1, max_length + 1))


def gen_seed(cfg: DatasetConfig) -> list[TaskInstance]:
    """Seed instances: random pairs for addition, exhaustive (or scaled-down
    sampled) arrays for dynprog/parity, or fixed-per-length low-data sets."""
    if cfg.fixed_per_length is not None:
        out = []
        for length in range(1, cfg.max_length + 1):
            rng = derive_rng(cfg.rng_seed, "seed", cfg.task, length)
            out.extend(_random_instance(rng, cfg.task, length) for _ in range(cfg.fixed_per_length))
        return out
    if cfg.task == "addition":
        count = cfg.seed_count if cfg.seed_count is not None else ADDITION_DEFAULT_SEED_COUNT
        count = max(1, round(count * cfg.scale)) if cfg.scale != 1.0 else count
        rng = derive_rng(cfg.rng_seed, "seed", "addition")
        upper = 10**cfg.max_length
        return [
            tasks.addition_instance(str(rng.randrange(upper)), str(rng.randrange(upper)))
            for _ in range(count)
        ]
    if cfg.exhaustive and cfg.scale >= 1.0:
        total = exhaustive_count(cfg.task, cfg.max_length)
        if total > cfg.exhaustive_cap:
            raise DatasetError(
                f"exhaustive {cfg.task} seeds to length {cfg.max_length} would produce "
                f"{total:,} instances, over the cap of {cfg.exhaustive_cap:,}; "
                "raise exhaustive_cap or lower max_length"
            )
        return list(_exhaustive_instances(cfg.task, cfg.max_length))
    # scaled-down regime: sample per length, preserving the exhaustive shape
    out = []
    for length in range(1, cfg.max_length + 1):
        rng = derive_rng(cfg.rng_seed, "seed", cfg.task, length)
        count = max(1, round(_space_size(cfg.task, length) * cfg.scale))
        out.extend(_random_instance(rng, cfg.task, length) for _ in range(count))
    return out


# ---------------------------------------------------------------------------
# recursive expansion
# ---------------------------------------------------------------------------


def _expand_retuning_nodes(instances) -> list[tuple[tasks.Node, bool]]:
    """Deduplicated (node, first_seen_as_root) pairs over all call trees.

    The walk short-circuits on nodes already expanded: a node's subtree is
    fully determined by the node, so revisiting it adds nothing.
    """
    seen: set = set()
    out: list[tuple[tasks.Node, bool]] = []

    def visit(node, is_root: bool):
        if node in seen:
            return
        seen.add(node)
        out.append((node, is_root))
        if not tasks.is_base_case(node):
            for _, child in tasks.decompose(node):
                visit(child, False)

    for inst in instances:
        visit(inst.root_node(), True)
    return out


def expand_recursive(instances, fmt: str) -> list[RenderedExample]:
    """Every context of every call tree as a training example, deduplicated.

    For baseline/scratchpad each instance yields exactly one example.
    """
    if fmt != "retuning":
        seen: set[str] = set()
        out = []
        for inst in instances:
            ex = formats.render_training(inst, fmt)[0]
            if ex.text not in seen:
                seen.add(ex.text)
                out.append(ex)
        return out
    return [
        formats.context_example(node.task, node, is_root)
        for node, is_root in _expand_retuning_nodes(instances)
    ]


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------


def uniform_target(lengths, total: int) -> dict[int, int]:
    """Per-length counts summing exactly to ``total``; shorter lengths take
    the remainder."""
    lengths = sorted(set(lengths))
    if not lengths:
        raise DatasetError("no lengths to build a target over")
    per, extra = divmod(total, len(lengths))
    return {ln: per + (1 if i < extra else 0) for i, ln in enumerate(lengths)}


def default_target(task: str, lengths, scale: float = 1.0) -> dict[int, int]:
    total = DEFAULT_RESAMPLE_TOTALS[task]
    if scale != 1.0:
        total = max(1, round(total * scale))
    return uniform_target(lengths, total)


def _resample_pool(pool, target: dict[int, int], rng_seed: int, length_of):
    by_length: dict[int, list] = {}
    for item in pool:
        by_length.setdefault(length_of(item), []).append(item)
    missing_in_target = sorted(set(by_length) - set(target))
    if missing_in_target:
        raise DatasetError(f"target does not cover corpus lengths: {missing_in_target}")
    missing_in_corpus = sorted(ln for ln, want in target.items() if want > 0 and ln not in by_length)
    if missing_in_corpus:
        raise DatasetError(f"target lengths absent from corpus: {missing_in_corpus}")
    out = []
    for length in sorted(target):
        want = target[length]
        if want == 0:
            continue
        bucket = by_length[length]
        rng = derive_rng(rng_seed, "resample", length)
        if want <= len(bucket):
            out.extend(rng.sample(bucket, want))
        else:
            out.extend(rng.choices(bucket, k=want))
    return out


def resample(examples, target: dict[int, int], rng_seed: int = 0):
    """Exact per-length resampling: with replacement upward, without downward.

    Output is ordered by length, then by draw order, so identical inputs give
    byte-identical datasets.
    """
    return _resample_pool(list(examples), target, rng_seed, lambda ex: ex.length)


def length_histogram(examples) -> dict[int, int]:
    hist: dict[int, int] = {}
    for ex in examples:
        hist[ex.length] = hist.get(ex.length, 0) + 1
    return dict(sorted(hist.items()))


def _target_for(cfg: DatasetConfig, lengths) -> dict[int, int]:
    if cfg.resample == "uniform":
        if cfg.resample_total is None:
            return default_target(cfg.task, lengths, cfg.scale)
        total = cfg.resample_total
        if cfg.scale != 1.0:
            total = max(1, round(total * cfg.scale))
        return uniform_target(lengths, total)
    return dict(cfg.resample)


def iter_dataset(cfg: DatasetConfig):
    """Full pipeline, lazily rendered: seeds, expansion with dedup, resampling.

    Recursive-format corpora are resampled at the context-node level and only
    the drawn nodes are rendered (grouped by length, so the render cache stays
    small); full-scale configs therefore stream within a few GB of memory.
    """
    seeds = gen_seed(cfg)
    if cfg.format != "retuning":
        pool = expand_recursive(seeds, cfg.format)
        if cfg.resample == "off":
            yield from pool
            return
        target = _target_for(cfg, [ex.length for ex in pool])
        yield from _resample_pool(pool, target, cfg.rng_seed, lambda ex: ex.length)
        return
    pairs = _expand_retuning_nodes(seeds)
    if cfg.resample == "off":
        for node, is_root in pairs:
            yield formats.context_example(node.task, node, is_root)
        return
    target = _target_for(cfg, [node.length for node, _ in pairs])
    sampled = _resample_pool(pairs, target, cfg.rng_seed, lambda pair: pair[0].length)
    del pairs
    rendered: dict = {}
    current_length = None
    for node, is_root in sampled:
        if node.length != current_length:
            rendered.clear()
            current_length = node.length
        example = rendered.get(node)
        if example is None:
            example = formats.context_example(node.task, node, is_root)
            rendered[node] = example
        yield example


def build_dataset(cfg: DatasetConfig) -> list[RenderedExample]:
    """Full pipeline: seeds, expansion with dedup, then resampling."""
    return list(iter_dataset(cfg))


# ---------------------------------------------------------------------------
# validation / test splits
# ---------------------------------------------------------------------------


def make_splits(
    task: str,
    lengths,
    rng_seed: int = 0,
    validation_per_length: int = 5,
    test_per_length: int = 100,
) -> tuple[list[TaskInstance], list[TaskInstance]]:
    """Fresh per-length instances: 5 for validation and 100 for test by default.

    The two splits are disjoint whenever the instance space at a length is
    large enough; tiny spaces (length-1 parity) fall back to sampling with
    replacement after exhausting distinct instances.
    """
    lengths = sorted(set(lengths))
    if not lengths:
        raise InputError("lengths must be non-empty")
    validation: list[TaskInstance] = []
    test: list[TaskInstance] = []
    need = validation_per_length + test_per_length
    for length in lengths:
        rng = derive_rng(rng_seed, "splits", task, length)
        chosen: list[TaskInstance] = []
        seen = set()
        attempts = 0
        while len(chosen) < need and attempts < need * 40:
            inst = _random_instance(rng, task, length)
            attempts += 1
            if inst not in seen:
                seen.add(inst)
                chosen.append(inst)
        while len(chosen) < need:  # space smaller than the split sizes
            chosen.append(_random_instance(rng, task, length))
        validation.extend(chosen[:validation_per_length])
        test.extend(chosen[validation_per_length:])
    return validation, test


def sample_eval_instances(task: str, length: int, n: int, rng_seed: int) -> list[TaskInstance]:
    """n fresh evaluation problems at one length (addition: equal-length pairs)."""
    rng = derive_rng(rng_seed, "eval", task, length)
    return [_random_instance(rng, task, length) for _ in range(n)]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def example_record(ex: RenderedExample) -> dict:
    return {
        "task": ex.task,
        "format": ex.format,
        "length": ex.length,
        "role": ex.role,
        "segments": [{"text": t, "trainable": bool(tr)} for t, tr in ex.segments],
    }


def persist(examples, path) -> int:
    """Write one JSON record per example, UTF-8, newline-separated."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps(example_record(ex), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def load(path) -> list[RenderedExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(
                    RenderedExample(
                        task=rec["task"],
                        format=rec["format"],
                        length=int(rec["length"]),
                        role=rec["role"],
                        segments=tuple(
                            (seg["text"], bool(seg["trainable"])) for seg in rec["segments"]
                        ),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return out


def persist_instances(instances, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in instances:
            rec: dict = {"task": inst.task, "length": inst.length}
            if inst.task == "addition":
                rec["a"], rec["b"] = inst.a, inst.b
            elif inst.task == "dynprog":
                rec["items"] = list(inst.items)
            else:
                rec["bits"] = list(inst.bits)
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")
