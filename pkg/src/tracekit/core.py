"""Domain types shared by every other module.

Events are identified by short hexadecimal message-id tokens. A trace is an
ordered, optionally timestamped recording of such events. The dictionary maps
each id observed during training to a dense index and reserves one trailing
OTHER index that absorbs ids never seen during training, so encoded vectors
have a fixed width of ``len(ids) + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import math

import numpy as np

from .errors import EmptyTrainingSet, IndexOutOfRange

#: Reserved token returned when decoding the OTHER index.
OTHER_TOKEN = "OTHER"


class EventId(str):
    """A message identifier token, uppercase-normalized on construction.

    Subclasses ``str`` so ids hash, sort and compare like plain strings;
    ``EventId("b0") == "B0"`` holds.
    """

    __slots__ = ()

    def __new__(cls, raw: str) -> "EventId":
        token = str(raw).strip().upper()
        if not token:
            raise ValueError("event id must be a non-empty token")
        if any(ch.isspace() for ch in token):
            raise ValueError(f"event id may not contain whitespace: {raw!r}")
        return super().__new__(cls, token)


@dataclass(frozen=True)
class Event:
    """One bus message occurrence: an id plus an optional timestamp in seconds."""

    id: EventId
    timestamp: float | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, EventId):
            object.__setattr__(self, "id", EventId(self.id))
        if self.timestamp is not None:
            ts = float(self.timestamp)
            if not math.isfinite(ts) or ts < 0:
                raise ValueError(f"timestamp must be finite and >= 0, got {ts!r}")
            object.__setattr__(self, "timestamp", ts)


@dataclass(frozen=True)
class Trace:
    """An ordered sequence of events from one recording session.

    Timestamps, where present, must be non-decreasing; the restoration
    pipeline relies on that ordering.
    """

    events: tuple[Event, ...]
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        prev = None
        for ev in self.events:
            if ev.timestamp is None:
                continue
            if prev is not None and ev.timestamp < prev:
                raise ValueError("trace timestamps must be non-decreasing")
            prev = ev.timestamp

    def __len__(self) -> int:
        return len(self.events)

    def ids(self) -> list[EventId]:
        return [ev.id for ev in self.events]

    def timestamps(self) -> list[float | None]:
        return [ev.timestamp for ev in self.events]

    def has_timestamps(self) -> bool:
        return all(ev.timestamp is not None for ev in self.events)


@dataclass(frozen=True)
class Dictionary:
    """Bijection between observed ids and dense indices plus a reserved OTHER slot.

    ``ids[i]`` encodes to index ``i``; every id not in ``ids`` encodes to
    ``other_index``, which is always the last index.
    """

    ids: tuple[EventId, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(EventId(i) for i in self.ids))
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("dictionary ids contain duplicates")

    @property
    def other_index(self) -> int:
        return len(self.ids)

    @property
    def size(self) -> int:
        """Vocabulary size V = number of known ids + 1 for OTHER."""
        return len(self.ids) + 1

    @cached_property
    def _index(self) -> dict[EventId, int]:
        return {eid: i for i, eid in enumerate(self.ids)}

    def index_of(self, eid: EventId | str) -> int:
        """Dense index of ``eid``; unknown ids map to the OTHER index."""
        return self._index.get(EventId(eid), self.other_index)

    def __contains__(self, eid: object) -> bool:
        return isinstance(eid, str) and EventId(eid) in self._index


def build_dictionary(traces: Sequence[Trace]) -> Dictionary:
    """Build a dictionary from training traces, indices in first-occurrence order.

    Raises ``EmptyTrainingSet`` when no events exist at all.
    """
    seen: dict[EventId, None] = {}
    for trace in traces:
        for ev in trace.events:
            seen.setdefault(ev.id, None)
    if not seen:
        raise EmptyTrainingSet("no events in training traces")
    return Dictionary(tuple(seen))


def encode_event(eid: EventId | str, dictionary: Dictionary) -> np.ndarray:
    """One-hot encode ``eid`` into a length-V float vector.

    Unknown ids activate the OTHER index; there is no error path.
    """
    if dictionary.size < 2:
        raise ValueError("dictionary is degenerate (V < 2)")
    vec = np.zeros(dictionary.size, dtype=np.float64)
    vec[dictionary.index_of(eid)] = 1.0
    return vec


def encode_ids(ids: Sequence[EventId | str], dictionary: Dictionary) -> np.ndarray:
    """One-hot encode a sequence of ids into an (L, V) matrix."""
    mat = np.zeros((len(ids), dictionary.size), dtype=np.float64)
    for row, eid in enumerate(ids):
        mat[row, dictionary.index_of(eid)] = 1.0
    return mat


def decode_index(index: int, dictionary: Dictionary) -> EventId:
    """Inverse of ``encode_event``: index back to id, OTHER at the last slot."""
    if not 0 <= index < dictionary.size:
        raise IndexOutOfRange(f"index {index} outside vocabulary of size {dictionary.size}")
    if index == dictionary.other_index:
        return EventId(OTHER_TOKEN)
    return dictionary.ids[index]


def pick_most_frequent(counts: Mapping[EventId, int], dictionary: Dictionary) -> EventId:
    """Argmax of a frequency table, ties broken by lowest dictionary index.

    Shared by the benchmark model's fallback and the network's prior fill so
    every tie in the package resolves the same way.
    """
    if not counts:
        raise ValueError("empty frequency table")
    return min(counts, key=lambda eid: (-counts[eid], dictionary.index_of(eid), eid))


def event_frequencies(traces: Iterable[Trace]) -> dict[EventId, int]:
    """Count id occurrences over a pool of traces."""
    freq: dict[EventId, int] = {}
    for trace in traces:
        for ev in trace.events:
            freq[ev.id] = freq.get(ev.id, 0) + 1
    return freq
