"""Command-line surface: gen-data, eval, inject, classify, stats.

Every run is reproducible from its flag set plus --seed.  A JSON config file
may supply any long flag (dashes become underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datagen, evaluate, formats, tasks
from .backends import (
    ENDPOINT_ENV_VAR,
    FaultConfig,
    FaultyBackend,
    HttpBackend,
    OracleBackend,
)
from .errors import RecurseError
from .evaluate import WordPieceTokenizer
from .executor import Limits, Trace


def parse_lengths(spec: str) -> list[int]:
    """Parse "a,b,c" or "a..b[..step]" into a sorted length list."""
    spec = spec.strip()
    if ".." in spec:
        parts = spec.split("..")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad length range {spec!r}")
        start, end = int(parts[0]), int(parts[1])
        step = int(parts[2]) if len(parts) == 3 else 1
        if step < 1 or end < start:
            raise ValueError(f"bad length range {spec!r}")
        return list(range(start, end + 1, step))
    return sorted({int(tok) for tok in spec.split(",") if tok.strip()})


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of defaults for any long flag")
    p.add_argument("--task", choices=tasks.TASKS, required=True)
    p.add_argument("--format", choices=formats.FORMATS, default="retuning")
    p.add_argument("--seed", type=int, default=0, help="rng seed (default 0)")


def _add_eval_flags(p: argparse.ArgumentParser, default_n: int) -> None:
    p.add_argument("--backend", default="oracle", help="oracle | http (default oracle)")
    p.add_argument("--endpoint", default=None, help=f"http backend URL (or ${ENDPOINT_ENV_VAR})")
    p.add_argument(
        "--header",
        action="append",
        default=[],
        metavar="NAME:VALUE",
        help="extra http header, repeatable",
    )
    p.add_argument("--lengths", default="1..10", help='"a,b,c" or "a..b[..step]"')
    p.add_argument("--n", type=int, default=default_n, help=f"problems per length (default {default_n})")
    p.add_argument("--template", default=None, help="prompt template override")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", default=None, help="optional CSV flattening of the report")
    p.add_argument("--traces-dir", default=None, help="write one trace JSON per problem")
    p.add_argument("--cache", action="store_true", help="enable the subproblem answer cache")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-depth", type=int, default=128)
    p.add_argument("--max-contexts", type=int, default=4096)
    p.add_argument("--max-units", type=int, default=4096)
    p.add_argument("--timeout", type=float, default=None, help="per-call timeout seconds")
    p.add_argument("--tokenizer", default=None, help="word-piece vocab file for token stats")
    p.add_argument(
        "--stable-output",
        action="store_true",
        help="zero wall-clock fields and omit the timestamp so identical runs are byte-identical",
    )


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(
        prog="recurse",
        description="Recursive self-calling inference harness: data, execution, evaluation.",
    )
    sub = root.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate training data as JSONL")
    _add_common(gen)
    gen.add_argument("--out", required=True, help="output JSONL path")
    gen.add_argument("--max-length", type=int, default=0, help="0 = task default (15/5/21)")
    gen.add_argument("--seed-count", type=int, default=None, help="addition seed pairs (default 304000)")
    gen.add_argument("--exhaustive", dest="exhaustive", action="store_true", default=None)
    gen.add_argument("--no-exhaustive", dest="exhaustive", action="store_false")
    gen.add_argument(
        "--resample",
        default="uniform",
        help='"uniform", "off", or a JSON file {"length": count}',
    )
    gen.add_argument("--resample-total", type=int, default=None, help="override the full-scale default total")
    gen.add_argument("--scale", type=float, default=1.0, help="scale seed counts and totals")
    gen.add_argument("--fixed-per-length", type=int, default=None, help="low-data mode: n roots per length")
    gen.add_argument("--exhaustive-cap", type=int, default=datagen.DEFAULT_EXHAUSTIVE_CAP)
    gen.add_argument("--emit-splits", default=None, metavar="PREFIX",
                     help="also write PREFIX.validation.jsonl and PREFIX.test.jsonl")

    ev = sub.add_parser("eval", help="length-sweep accuracy evaluation")
    _add_common(ev)
    _add_eval_flags(ev, default_n=100)

    inj = sub.add_parser("inject", help="fault-injected evaluation for error analysis")
    _add_common(inj)
    _add_eval_flags(inj, default_n=20)
    inj.add_argument("--call-fault-rate", type=float, default=0.0)
    inj.add_argument("--compute-fault-rate", type=float, default=0.0)
    inj.add_argument("--recover", action="store_true", help="root restores the true final answer")
    inj.add_argument("--target-depths", default=None, help='e.g. "1,2,3"')
    inj.add_argument("--log-out", default=None, help="injection log JSONL path")

    cls = sub.add_parser("classify", help="re-classify stored traces")
    cls.add_argument("--config", help="JSON file of defaults for any long flag")
    cls.add_argument("--traces-dir", required=True)
    cls.add_argument("--out", default=None, help="summary JSON path (default stdout)")

    st = sub.add_parser("stats", help="context statistics over stored traces")
    st.add_argument("--config", help="JSON file of defaults for any long flag")
    st.add_argument("--traces-dir", required=True)
    st.add_argument("--tokenizer", default=None, help="word-piece vocab file")
    st.add_argument("--out", default=None, help="summary JSON path (default stdout)")

    return root


def _apply_config(args: argparse.Namespace, argv: list[str]) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config, encoding="utf-8") as fh:
        defaults = json.load(fh)
    explicit = {tok.split("=")[0].lstrip("-").replace("-", "_") for tok in argv if tok.startswith("--")}
    for key, value in defaults.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise RecurseError(f"config key {key!r} is not a known flag")
        if attr not in explicit:
            setattr(args, attr, value)


def _limits(args) -> Limits:
    return Limits(
        max_depth=args.max_depth,
        max_contexts=args.max_contexts,
        max_generation_units_per_context=args.max_units,
        per_call_timeout_seconds=args.timeout,
    )


def _backend(args, fault_config: FaultConfig | None = None):
    if fault_config is not None:
        return FaultyBackend(args.task, args.format, fault_config)
    if args.backend == "oracle":
        return OracleBackend(args.task, args.format)
    if args.backend == "http":
        headers = {}
        for item in args.header:
            name, _, value = item.partition(":")
            if not value:
                raise RecurseError(f"bad --header {item!r}, expected NAME:VALUE")
            headers[name.strip()] = value.strip()
        return HttpBackend(endpoint=args.endpoint, headers=headers)
    raise RecurseError(f"unknown backend {args.backend!r} (expected oracle or http)")


def _cmd_gen_data(args) -> int:
    resample = args.resample
    if resample not in ("uniform", "off"):
        with open(resample, encoding="utf-8") as fh:
            resample = {int(k): int(v) for k, v in json.load(fh).items()}
    cfg = datagen.DatasetConfig(
        task=args.task,
        format=args.format,
        max_length=args.max_length,
        seed_count=args.seed_count,
        exhaustive=args.exhaustive,
        resample=resample,
        resample_total=args.resample_total,
        scale=args.scale,
        fixed_per_length=args.fixed_per_length,
        exhaustive_cap=args.exhaustive_cap,
        rng_seed=args.seed,
    )
    lengths_seen: set[int] = set()

    def stream():
        for ex in datagen.iter_dataset(cfg):
            lengths_seen.add(ex.length)
            yield ex

    count = datagen.persist(stream(), args.out)
    print(f"wrote {count} records to {args.out}", file=sys.stderr)
    if args.emit_splits:
        validation, test = datagen.make_splits(args.task, sorted(lengths_seen), args.seed)
        datagen.persist_instances(validation, f"{args.emit_splits}.validation.jsonl")
        datagen.persist_instances(test, f"{args.emit_splits}.test.jsonl")
        print(
            f"wrote {len(validation)} validation / {len(test)} test instances "
            f"to {args.emit_splits}.*.jsonl",
            file=sys.stderr,
        )
    return 0


def _run_eval_command(args, fault_config: FaultConfig | None = None) -> int:
    backend = _backend(args, fault_config)
    tokenizer = WordPieceTokenizer(args.tokenizer) if args.tokenizer else None
    run = evaluate.run_eval(
        backend,
        args.task,
        args.format,
        parse_lengths(args.lengths),
        n=args.n,
        template=args.template,
        limits=_limits(args),
        cache=args.cache,
        rng_seed=args.seed,
        traces_dir=args.traces_dir,
        workers=args.workers,
        stable=args.stable_output,
        tokenizer=tokenizer,
    )
    Path(args.out).write_text(run.report.to_json(), encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(run.report.to_csv(), encoding="utf-8")
    if fault_config is not None and args.log_out:
        with open(args.log_out, "w", encoding="utf-8") as fh:
            for rec in backend.log:
                fh.write(
                    json.dumps(
                        {
                            "trace_id": rec.trace_id,
                            "context_id": rec.context_id,
                            "depth": rec.depth,
                            "class": rec.fault_class,
                            "recovered": rec.recovered,
                            "original": rec.original,
                            "corrupted": rec.corrupted,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    overall_n = sum(s.n for s in run.report.per_length)
    overall_correct = sum(s.correct for s in run.report.per_length)
    print(
        f"accuracy {overall_correct}/{overall_n} "
        f"({overall_correct / overall_n:.3f}) -> {args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_inject(args) -> int:
    depths = None
    if args.target_depths:
        depths = frozenset(int(tok) for tok in args.target_depths.split(",") if tok.strip())
    fault_config = FaultConfig(
        call_fault_rate=args.call_fault_rate,
        compute_fault_rate=args.compute_fault_rate,
        target_depths=depths,
        recover=args.recover,
        rng_seed=args.seed,
    )
    return _run_eval_command(args, fault_config)


def _load_traces(traces_dir):
    paths = sorted(Path(traces_dir).glob("trace-*.json"))
    if not paths:
        raise RecurseError(f"no trace-*.json files under {traces_dir}")
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            yield path, json.load(fh)


def _cmd_classify(args) -> int:
    counts: dict[str, int] = {cls.value: 0 for cls in evaluate.ErrorClass}
    rows = []
    for path, payload in _load_traces(args.traces_dir):
        trace = Trace.from_dict(payload)
        cls = evaluate.classify_trace(trace)
        counts[cls.value] += 1
        rows.append({"trace": path.name, "error_class": cls.value})
    summary = {"counts": counts, "traces": rows}
    text = json.dumps(summary, ensure_ascii=False, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_stats(args) -> int:
    tokenizer = WordPieceTokenizer(args.tokenizer) if args.tokenizer else None
    rows = []
    for path, payload in _load_traces(args.traces_dir):
        trace = Trace.from_dict(payload)
        row = {"trace": path.name}
        row.update(evaluate.context_stats(trace, tokenizer))
        rows.append(row)
    n = len(rows)
    summary = {
        "traces": n,
        "mean_contexts": sum(r["context_count"] for r in rows) / n,
        "mean_chars_per_context": sum(r["mean_chars_per_context"] for r in rows) / n,
        "per_trace": rows,
    }
    if tokenizer is not None:
        summary["mean_tokens_per_context"] = sum(r["mean_tokens_per_context"] for r in rows) / n
    text = json.dumps(summary, ensure_ascii=False, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser_ = build_parser()
    args = parser_.parse_args(argv)
    try:
        _apply_config(args, argv)
        if args.command == "gen-data":
            return _cmd_gen_data(args)
        if args.command == "eval":
            return _run_eval_command(args)
        if args.command == "inject":
            return _cmd_inject(args)
        if args.command == "classify":
            return _cmd_classify(args)
        return _cmd_stats(args)
    except RecurseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {getattr(exc, 'filename', '')}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
