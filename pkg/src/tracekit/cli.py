"""Command-line front end wiring the full pipeline.

Each subcommand reads declared inputs, writes declared outputs and prints a
one-line summary. Exit codes: 0 on success, 1 on pipeline errors, 2 on
usage/configuration errors. Artifacts written by the CLI start with a
``# tracekit-... v1`` header line and subcommands refuse artifact files
carrying a different version of that header; headerless files are accepted
as plain user input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import evaluate as evaluate_mod
from . import lstm, markov, restore, trem
from .config import RunConfig
from .core import Trace, build_dictionary
from .errors import ConfigError, TracekitError, VersionMismatch
from .ingest import parse_trace, serialize_trace, split_traces
from .pipeline import (
    DICT_HEADER,
    GAPPED_HEADER,
    TRACE_HEADER,
    read_dictionary,
    run_pipeline,
    write_dictionary,
)
from .restore import LossSpec
from .synth import generate_trace


def _check_artifact_header(path: Path, expected: str) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first.startswith("# tracekit-") and first != f"# {expected}":
        raise VersionMismatch(f"{path}: expected `# {expected}`, found {first!r}")


def _read_trace(path: str | Path) -> Trace:
    p = Path(path)
    _check_artifact_header(p, TRACE_HEADER)
    return parse_trace(p, label=p.stem)


def _read_trace_dir(directory: str | Path) -> list[Trace]:
    paths = sorted(Path(directory).glob("*.trace"))
    if not paths:
        raise TracekitError(f"no .trace files in {directory}")
    return [_read_trace(p) for p in paths]


def _write_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(serialize_trace(trace, header=TRACE_HEADER), encoding="utf-8")


def _load_any_model(path: str | Path):
    """Sniff the serialized model family by its leading bytes."""
    head = Path(path).open("rb").read(16)
    if head.startswith(lstm._MAGIC):
        return lstm.load_model(path)
    return markov.MarkovModel.load(path)


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_synth(args) -> int:
    config = RunConfig.load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = config.synth_trace_count()
    for i in range(count):
        trace = generate_trace(config.generator_spec(i))
        _write_trace(trace, out / f"trace_{i:03d}.trace")
    print(f"synth: wrote {count} traces to {out}")
    return 0


def _cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    for src in args.files:
        trace = _read_trace(src)
        _write_trace(trace, out / (Path(src).stem + ".trace"))
        total += len(trace)
    print(f"ingest: normalized {len(args.files)} files ({total} events) into {out}")
    return 0


def _cmd_split(args) -> int:
    config = RunConfig.load(args.config)
    traces = _read_trace_dir(args.input)
    train_pool, test_pool = split_traces(traces, config.split_spec())
    for name, pool in (("train", train_pool), ("test", test_pool)):
        pool_dir = Path(args.out) / name
        pool_dir.mkdir(parents=True, exist_ok=True)
        for trace in pool:
            _write_trace(trace, pool_dir / f"{trace.label}.trace")
    print(f"split: {len(train_pool)} train / {len(test_pool)} test under {args.out}")
    return 0


def _cmd_dict(args) -> int:
    traces = _read_trace_dir(args.input)
    dictionary = build_dictionary(traces)
    write_dictionary(dictionary, Path(args.out))
    print(f"dict: {len(dictionary.ids)} ids (+OTHER) -> {args.out}")
    return 0


def _cmd_train_markov(args) -> int:
    config = RunConfig.load(args.config)
    traces = _read_trace_dir(args.train)
    dictionary = read_dictionary(Path(args.dict)) if args.dict else None
    model = markov.learn_transitions(traces, config.markov_order(), dictionary)
    model.save(args.out)
    print(
        f"train-markov: order {model.order_n}, {model.state_count} states -> {args.out}"
    )
    return 0


def _cmd_train_lstm(args) -> int:
    config = RunConfig.load(args.config)
    traces = _read_trace_dir(args.train)
    dictionary = read_dictionary(Path(args.dict)) if args.dict else build_dictionary(traces)
    schedule = config.training_schedule()
    model = lstm.LstmModel.initialize(
        config.network_config(dictionary.size), dictionary, seed=schedule.seed
    )
    history = lstm.train(model, traces, schedule)
    lstm.save_model(model, args.out)
    final = history[-1].epochs[-1].val_logloss
    print(
        f"train-lstm: {schedule.rounds} rounds, final val logloss {final:.4f} -> {args.out}"
    )
    return 0


def _cmd_inject_loss(args) -> int:
    trace = _read_trace(args.input)
    spec = LossSpec(
        fraction=args.fraction / 100.0,
        mode=args.mode,
        burst_length=args.burst_length,
        seed=args.seed,
    )
    gapped = restore.inject_loss(trace, spec)
    restore.write_gapped(gapped, args.out, header=GAPPED_HEADER)
    print(
        f"inject-loss: removed {gapped.missing_total()} of "
        f"{gapped.original_length()} events -> {args.out}"
    )
    return 0


def _cmd_predict(args) -> int:
    model = _load_any_model(args.model)
    seed_trace = _read_trace(args.seed_trace)
    ids = seed_trace.ids()
    predicted = restore.predict_step_by_step(model, ids, args.horizon) if isinstance(
        model, lstm.LstmModel
    ) else _markov_rollout(model, ids, args.horizon)
    events = _extrapolate_events(seed_trace, predicted)
    _write_trace(Trace(tuple(events), label=f"{seed_trace.label}_pred"), args.out)
    print(f"predict: {args.horizon} events -> {args.out}")
    return 0


def _markov_rollout(model, ids, horizon):
    context = list(ids)
    out = []
    for _ in range(horizon):
        nxt = model.predict_next(context)
        out.append(nxt)
        context.append(nxt)
    return out


def _extrapolate_events(seed_trace: Trace, predicted):
    from .core import Event

    times = [t for t in seed_trace.timestamps() if t is not None]
    if len(times) >= 2:
        delta = (times[-1] - times[0]) / (len(times) - 1)
    else:
        delta = 1.0
    t0 = times[-1] if times else 0.0
    return [Event(eid, t0 + delta * (i + 1)) for i, eid in enumerate(predicted)]


def _cmd_restore(args) -> int:
    model = _load_any_model(args.model)
    p = Path(args.input)
    _check_artifact_header(p, GAPPED_HEADER)
    gapped = restore.read_gapped(p)
    restored = restore.restore_trace(model, gapped)
    _write_trace(restored, args.out)
    print(
        f"restore: filled {gapped.missing_total()} events, "
        f"{len(restored)} total -> {args.out}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    pred = _read_trace(args.pred)
    truth = _read_trace(args.truth)
    report = evaluate_mod.align_and_classify(
        pred.ids(), truth.ids(), lookahead_w=args.lookahead, order_k=args.order_depth
    )
    lines = report.to_lines()
    if args.out:
        Path(args.out).write_text(
            "\n".join([f"# {REPORT_HEADER_EVAL}"] + lines) + "\n", encoding="utf-8"
        )
    print(
        f"evaluate: accuracy {report.accuracy:.4f}, {report.omissions} omissions, "
        f"{report.ordering_mistakes} ordering mistakes, "
        f"{report.substitutions} substitutions"
    )
    return 0


REPORT_HEADER_EVAL = "tracekit-eval v1"


def _cmd_render(args) -> int:
    trace = _read_trace(args.input)
    dictionary = read_dictionary(Path(args.dict))
    stop = args.start + args.length if args.length else None
    ids = trace.ids()[args.start : stop]
    evaluate_mod.render_onehot_image(ids, dictionary, args.out)
    print(f"render: {len(ids)} columns x {dictionary.size} rows -> {args.out}")
    return 0


def _cmd_mine(args) -> int:
    trace = _read_trace(args.input)
    dictionary = read_dictionary(Path(args.dict))
    report = trem.mine_trace(trace, dictionary)
    if args.top_k:
        report = trem.rank_dominant(report, args.top_k, dictionary)
    Path(args.out).write_text(trem.report_to_text(report), encoding="utf-8")
    print(f"mine: {len(report)} instances -> {args.out}")
    return 0


def _cmd_compare(args) -> int:
    original = trem.report_from_text(Path(args.original).read_text(encoding="utf-8"))
    other = trem.report_from_text(Path(args.other).read_text(encoding="utf-8"))
    decrease = trem.compare_reports(original, other)
    print(f"compare: {decrease!r} percent of original instances lost")
    return 0


def _cmd_report(args) -> int:
    config = RunConfig.load(args.config)
    out = args.out or config.out_dir
    if not out:
        raise ConfigError("no output directory: pass --out or set out_dir in the config")
    summary = run_pipeline(config, out)
    levels = ", ".join(
        f"{pct}%: lossy {level['lossy_decrease_pct']:.1f} / restored "
        f"{level['restored_decrease_pct']:.1f}"
        for pct, level in sorted(summary["loss_study"].items(), key=lambda kv: int(kv[0]))
    )
    print(f"report: wrote {out} (instance decrease {levels})")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracekit",
        description="Restore lossy event traces and evaluate the restoration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic traces from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="validate and normalize trace files")
    p.add_argument("--out", required=True)
    p.add_argument("files", nargs="+")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("split", help="split a trace directory into train/test pools")
    p.add_argument("--config", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("dict", help="build the event dictionary from traces")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dict)

    p = sub.add_parser("train-markov", help="train the benchmark transition model")
    p.add_argument("--config", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dict")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_markov)

    p = sub.add_parser("train-lstm", help="train the recurrent network")
    p.add_argument("--config", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dict")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_lstm)

    p = sub.add_parser("inject-loss", help="remove a controlled fraction of events")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, required=True, help="loss percent, e.g. 25")
    p.add_argument("--mode", choices=("scattered", "burst"), default="scattered")
    p.add_argument("--burst-length", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_inject_loss)

    p = sub.add_parser("predict", help="continue a trace by step-by-step prediction")
    p.add_argument("--model", required=True)
    p.add_argument("--seed-trace", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("restore", help="fill the gaps of a lossy trace")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_restore)

    p = sub.add_parser("evaluate", help="alignment-score a prediction against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.add_argument("--lookahead", type=int, default=3)
    p.add_argument("--order-depth", type=int, default=10)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("render", help="render a one-hot raster image of a trace")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--length", type=int, default=0)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("mine", help="mine timed properties from a trace")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=0)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("compare", help="percent decrease between mining reports")
    p.add_argument("--original", required=True)
    p.add_argument("--other", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="run the full pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TracekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
