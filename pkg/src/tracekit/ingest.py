"""Trace file parsing, serialization and train/test splitting.

File grammar (one event per line, UTF-8)::

    <timestamp> <id>

where ``timestamp`` is a decimal number of seconds and ``id`` a hex-style
token. Lines starting with ``#`` are comments, blank lines are skipped.
Timestamps must be non-decreasing; ids are uppercase-normalized. The
conventional file extension is ``.trace``.
"""

from __future__ import annotations

import io
import math
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

from .core import Event, EventId, Trace
from .errors import InsufficientTraces, MalformedLine, NonMonotonicTimestamp


def parse_trace(source: str | bytes | os.PathLike | IO, label: str = "") -> Trace:
    """Parse TraceFileFormat text into a Trace.

    ``source`` may be a text/bytes blob, a path, or an open file object.
    Raises ``MalformedLine`` / ``NonMonotonicTimestamp`` carrying the
    1-based line number.
    """
    text = _read_text(source)
    events: list[Event] = []
    prev_ts: float | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MalformedLine(line_no, raw, "expected `<timestamp> <id>`")
        ts_token, id_token = parts
        try:
            ts = float(ts_token)
        except ValueError:
            raise MalformedLine(line_no, raw, "timestamp is not a number") from None
        if not (math.isfinite(ts) and ts >= 0):
            raise MalformedLine(line_no, raw, "timestamp must be finite and >= 0")
        if prev_ts is not None and ts < prev_ts:
            raise NonMonotonicTimestamp(line_no)
        prev_ts = ts
        try:
            events.append(Event(EventId(id_token), ts))
        except ValueError as exc:
            raise MalformedLine(line_no, raw, str(exc)) from None
    return Trace(tuple(events), label=label)


def serialize_trace(trace: Trace, header: str | None = None) -> str:
    """Render a trace back into TraceFileFormat text.

    ``parse_trace(serialize_trace(t), label=t.label) == t`` holds because
    ``repr(float)`` round-trips exactly. Every event needs a timestamp.
    """
    lines: list[str] = []
    if header:
        lines.append(f"# {header}")
    for ev in trace.events:
        if ev.timestamp is None:
            raise ValueError("cannot serialize an event without a timestamp")
        lines.append(f"{ev.timestamp!r} {ev.id}")
    return "\n".join(lines) + "\n"


def write_trace(trace: Trace, path: str | os.PathLike, header: str | None = None) -> None:
    Path(path).write_text(serialize_trace(trace, header=header), encoding="utf-8")


def read_trace(path: str | os.PathLike, label: str | None = None) -> Trace:
    p = Path(path)
    return parse_trace(p, label=p.stem if label is None else label)


@dataclass(frozen=True)
class SplitSpec:
    """How to partition a pool of traces into training and test sets."""

    train_count: int
    test_count: int
    shuffle_seed: int

    def __post_init__(self) -> None:
        if self.train_count < 2:
            raise ValueError("train_count must be >= 2 (training draws 2 traces per round)")
        if self.test_count < 0:
            raise ValueError("test_count must be >= 0")


def split_traces(traces: Sequence[Trace], spec: SplitSpec) -> tuple[list[Trace], list[Trace]]:
    """Deterministically shuffle by seed, then cut train/test pools.

    The two pools are disjoint; together they hold the first
    ``train_count + test_count`` traces of the shuffled order.
    """
    needed = spec.train_count + spec.test_count
    if needed > len(traces):
        raise InsufficientTraces(
            f"need {needed} traces for split, have {len(traces)}"
        )
    order = list(range(len(traces)))
    random.Random(spec.shuffle_seed).shuffle(order)
    picked = [traces[i] for i in order[:needed]]
    return picked[: spec.train_count], picked[spec.train_count :]


def _read_text(source: str | bytes | os.PathLike | IO) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        data = source.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    if isinstance(source, os.PathLike):
        return Path(source).read_text(encoding="utf-8")
    if isinstance(source, str):
        # A newline or a parsable trace line means inline content, not a path.
        if "\n" in source or not os.path.exists(source):
            return source
        return Path(source).read_text(encoding="utf-8")
    raise TypeError(f"unsupported trace source: {type(source)!r}")
