"""Benchmark next-event model: transition-frequency tables with k-gram backoff.

Training walks every trace once and, for every position and every context
length ``k`` in ``1..order_n``, increments the count of the observed
successor for that k-gram. Only states that actually occur are materialized;
the full ``d**n`` table the naive construction would imply never exists.

Prediction finds the longest context suffix present in the table and returns
the most frequent successor recorded for it, backing off to shorter suffixes
and finally to the global event frequency when nothing matches. Ties break
toward the lowest dictionary index so predictions are reproducible.

Internally states are stored as tuples of dense dictionary indices rather
than id strings: equality is unaffected (unknown ids conflate into OTHER,
which never occurs inside training states) and memory stays modest at high
orders.

Serialization is a line-oriented, versioned text format with one line per
(state, successor, count), lexicographically sorted, making model files
byte-stable. A trailing checksum line guards against truncation.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .core import Dictionary, EventId, Trace, build_dictionary, decode_index, pick_most_frequent
from .errors import CorruptModel, EmptyTrainingSet, UntrainedModel, VersionMismatch
from .restore import GappedTrace, fill_gaps

_FORMAT_NAME = "tracekit-markov"
_FORMAT_VERSION = 1

State = tuple[int, ...]


@dataclass
class MarkovModel:
    """Order-n transition-frequency model over event ids."""

    order_n: int
    dictionary: Dictionary
    table: dict[State, dict[int, int]] = field(default_factory=dict)
    global_freq: dict[int, int] = field(default_factory=dict)

    @property
    def vocab_count(self) -> int:
        """Number of unique messages seen in training (the OTHER slot excluded)."""
        return len(self.dictionary.ids)

    @property
    def state_count(self) -> int:
        return len(self.table)

    # -- training ---------------------------------------------------------

    def learn_trace(self, trace: Trace) -> None:
        """Accumulate transition counts from one trace.

        k-grams never span trace boundaries; each trace is an independent
        recording.
        """
        seq = [self.dictionary.index_of(eid) for eid in trace.ids()]
        n = self.order_n
        for idx in seq:
            self.global_freq[idx] = self.global_freq.get(idx, 0) + 1
        for i in range(len(seq)):
            for k in range(1, n + 1):
                if i + k >= len(seq):
                    break
                state = tuple(seq[i : i + k])
                successors = self.table.get(state)
                if successors is None:
                    successors = {}
                    self.table[state] = successors
                nxt = seq[i + k]
                successors[nxt] = successors.get(nxt, 0) + 1

    # -- inference --------------------------------------------------------

    def predict_next(self, context: Sequence[EventId | str]) -> EventId:
        """Most frequent successor of the longest matching context suffix.

        Falls back to progressively shorter suffixes and finally to the
        global frequency table (the k=0 state), so any context, including an
        empty one, gets an answer.
        """
        if not self.table and not self.global_freq:
            raise UntrainedModel("markov model has no transitions")
        ctx = [self.dictionary.index_of(eid) for eid in context]
        max_k = min(self.order_n, len(ctx))
        for k in range(max_k, 0, -1):
            state = tuple(ctx[len(ctx) - k :])
            successors = self.table.get(state)
            if successors:
                return self._argmax(successors)
        return self._argmax(self.global_freq)

    def impute_chronological(self, gapped: GappedTrace) -> Trace:
        """Fill gaps left to right, feeding imputed events back as context.

        Timestamps of imputed events are linearly interpolated between the
        nearest known neighbors.
        """
        if not self.table and not self.global_freq:
            raise UntrainedModel("markov model has no transitions")
        return fill_gaps(gapped, self.predict_next)

    def _argmax(self, counts: dict[int, int]) -> EventId:
        by_id = {decode_index(idx, self.dictionary): c for idx, c in counts.items()}
        return pick_most_frequent(by_id, self.dictionary)

    # -- serialization ----------------------------------------------------

    def to_text(self) -> str:
        """Render the model in the versioned sorted-line text format."""
        lines = [
            f"{_FORMAT_NAME} v{_FORMAT_VERSION}",
            f"order {self.order_n}",
            "vocab " + " ".join(self.dictionary.ids),
        ]
        global_lines = [
            f"g {decode_index(idx, self.dictionary)} {count}"
            for idx, count in self.global_freq.items()
        ]
        lines.extend(sorted(global_lines))
        transition_lines = []
        for state, successors in self.table.items():
            state_token = ",".join(decode_index(i, self.dictionary) for i in state)
            for nxt, count in successors.items():
                transition_lines.append(
                    f"t {state_token} {decode_index(nxt, self.dictionary)} {count}"
                )
        lines.extend(sorted(transition_lines))
        body = "\n".join(lines) + "\n"
        digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
        return body + f"# sha256 {digest}\n"

    @classmethod
    def from_text(cls, text: str) -> "MarkovModel":
        lines = text.splitlines()
        if not lines:
            raise CorruptModel("empty model file")
        header = lines[0].split()
        if len(header) != 2 or header[0] != _FORMAT_NAME:
            raise CorruptModel(f"bad header: {lines[0]!r}")
        if header[1] != f"v{_FORMAT_VERSION}":
            raise VersionMismatch(f"unsupported model version {header[1]!r}")
        if not lines[-1].startswith("# sha256 "):
            raise CorruptModel("missing checksum line")
        body = "\n".join(lines[:-1]) + "\n"
        expected = lines[-1].split()[-1]
        actual = hashlib.sha256(body.encode("utf-8")).hexdigest()
        if actual != expected:
            raise CorruptModel("checksum mismatch")

        order_n: int | None = None
        dictionary: Dictionary | None = None
        global_freq: dict[int, int] = {}
        table: dict[State, dict[int, int]] = {}

        def to_index(token: str) -> int:
            assert dictionary is not None
            if token == "OTHER":
                return dictionary.other_index
            idx = dictionary.index_of(token)
            if idx == dictionary.other_index:
                raise CorruptModel(f"unknown id {token!r} in model body")
            return idx

        try:
            for line in lines[1:-1]:
                kind, rest = line.split(" ", 1)
                if kind == "order":
                    order_n = int(rest)
                elif kind == "vocab":
                    dictionary = Dictionary(tuple(EventId(t) for t in rest.split()))
                elif kind == "g":
                    token, count = rest.split()
                    global_freq[to_index(token)] = int(count)
                elif kind == "t":
                    state_token, succ, count = rest.split()
                    state = tuple(to_index(t) for t in state_token.split(","))
                    table.setdefault(state, {})[to_index(succ)] = int(count)
                else:
                    raise CorruptModel(f"unknown line kind {kind!r}")
        except (ValueError, AssertionError) as exc:
            raise CorruptModel(f"malformed model body: {exc}") from exc
        if order_n is None or dictionary is None:
            raise CorruptModel("model file lacks order or vocab line")
        return cls(order_n=order_n, dictionary=dictionary, table=table, global_freq=global_freq)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "MarkovModel":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def learn_transitions(
    traces: Sequence[Trace],
    order_n: int = 40,
    dictionary: Dictionary | None = None,
) -> MarkovModel:
    """Train a MarkovModel on a pool of traces.

    The default order matches the benchmark setting used alongside the
    40-step network. The dictionary defaults to first-occurrence order over
    the training traces.
    """
    if order_n < 1:
        raise ValueError("order_n must be >= 1")
    if not traces or all(len(t) == 0 for t in traces):
        raise EmptyTrainingSet("no events to learn transitions from")
    if dictionary is None:
        dictionary = build_dictionary(traces)
    model = MarkovModel(order_n=order_n, dictionary=dictionary)
    for trace in traces:
        model.learn_trace(trace)
    return model
