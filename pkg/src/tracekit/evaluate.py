"""Restoration quality measurement.

Two complementary views:

* ``n_forward_accuracy`` is the strict multi-step metric: a prediction step
  counts as correct only when all n of its predictions match the truth.
* ``align_and_classify`` mirrors how long rollouts are scored by hand: the
  predicted and true sequences are scanned together and every mismatch is
  explained as an omission (the model skipped a true event and stays in sync
  one position earlier), a local ordering mistake (one true event was
  predicted a few positions late), or, failing both, a substitution.

The alignment classifier is greedy and deterministic, not edit-distance
optimal. At a mismatch it evaluates each candidate explanation by the length
of the clean run it would produce and keeps the best-supported one; an
explanation needs at least ``lookahead_w`` subsequent matches (or a full
match to the end of either sequence) to be accepted. A displaced event is
searched for up to ``order_k`` positions ahead. Spurious predicted events
(present in the prediction, absent from the truth) are folded into the
substitution count, consuming only the predicted side.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

from .core import Dictionary, EventId, encode_ids
from .errors import DegenerateInput, LengthMismatch


def expected_accuracy(acc1: float, n: int) -> float:
    """Multi-step accuracy a derail-on-first-mistake model would achieve: acc1**n."""
    if not 0.0 <= acc1 <= 1.0:
        raise ValueError("acc1 must be in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    return acc1**n


def n_forward_accuracy(
    predictions: Sequence[Sequence[EventId]],
    truth: Sequence[EventId],
    n: int,
) -> float:
    """Fraction of steps whose n predictions were all correct.

    ``predictions[s]`` is the n-tuple predicted at step s and is compared
    against ``truth[s : s + n]``, so ``truth`` must start at the first
    predicted position and extend ``n - 1`` events past the last step.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not predictions:
        raise LengthMismatch("no prediction steps given")
    if len(truth) < len(predictions) + n - 1:
        raise LengthMismatch(
            f"truth has {len(truth)} events, need {len(predictions) + n - 1}"
        )
    correct = 0
    for s, step in enumerate(predictions):
        if len(step) != n:
            raise LengthMismatch(f"step {s} has {len(step)} predictions, expected {n}")
        if all(step[j] == truth[s + j] for j in range(n)):
            correct += 1
    return correct / len(predictions)


# ---------------------------------------------------------------------------
# alignment


@dataclass(frozen=True)
class AlignmentReport:
    """Counts of alignment decisions between a prediction and the truth.

    ``total`` counts decisions, not positions: an omission consumes only a
    true event, a spurious prediction only a predicted one.
    """

    total: int
    correct: int
    omissions: int
    ordering_mistakes: int
    substitutions: int

    @property
    def omission_rate(self) -> float:
        return self.omissions / self.total if self.total else 0.0

    @property
    def events_per_ordering_mistake(self) -> float:
        return self.total / self.ordering_mistakes if self.ordering_mistakes else float("inf")

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_lines(self) -> list[str]:
        return [
            f"total={self.total}",
            f"correct={self.correct}",
            f"omissions={self.omissions}",
            f"ordering_mistakes={self.ordering_mistakes}",
            f"substitutions={self.substitutions}",
            f"accuracy={self.accuracy!r}",
            f"omission_rate={self.omission_rate!r}",
            f"events_per_ordering_mistake={self.events_per_ordering_mistake!r}",
        ]

    def to_json(self) -> str:
        return json.dumps(
            {
                "total": self.total,
                "correct": self.correct,
                "omissions": self.omissions,
                "ordering_mistakes": self.ordering_mistakes,
                "substitutions": self.substitutions,
                "accuracy": self.accuracy,
                "omission_rate": self.omission_rate,
                "events_per_ordering_mistake": self.events_per_ordering_mistake,
            },
            sort_keys=True,
        )


def _common_prefix(a: Sequence, i: int, b: Sequence, j: int) -> int:
    run = 0
    while i + run < len(a) and j + run < len(b) and a[i + run] == b[j + run]:
        run += 1
    return run


def _supported(run: int, avail: int, w: int) -> bool:
    """A candidate needs w matches of evidence, or everything that remains."""
    if avail <= 0:
        return False
    return run >= min(w, avail)


def align_and_classify(
    predicted: Sequence[EventId],
    truth: Sequence[EventId],
    lookahead_w: int = 3,
    order_k: int = 10,
) -> AlignmentReport:
    """Scan both sequences and classify every mismatch; see module docstring.

    After an accepted omission the truth cursor skips the omitted event;
    after an accepted ordering mistake the displaced pair is consumed from
    both sequences (it is counted once, as the mistake); a substitution
    consumes one event from each side.
    """
    if len(predicted) < lookahead_w + 1 or len(truth) < lookahead_w + 1:
        raise DegenerateInput(
            f"sequences must be longer than lookahead_w={lookahead_w}"
        )
    pred = [EventId(e) for e in predicted]
    tru = [EventId(e) for e in truth]
    p = t = 0
    correct = omissions = ordering = substitutions = 0

    while p < len(pred) and t < len(tru):
        if pred[p] == tru[t]:
            correct += 1
            p += 1
            t += 1
            continue

        # Candidate: the model omitted tru[t]; prediction is in sync with tru[t+1:].
        om_run = _common_prefix(pred, p, tru, t + 1)
        om_avail = min(len(pred) - p, len(tru) - t - 1)
        om_ok = _supported(om_run, om_avail, lookahead_w)

        # Candidate: tru[t] was predicted late, at pred[q]; moving it there
        # must leave a clean run covering at least the displacement.
        ord_ok = False
        ord_run = -1
        ord_q = -1
        for q in range(p + 1, min(p + order_k, len(pred))):
            if pred[q] != tru[t]:
                continue
            moved = tru[:t] + tru[t + 1 :]
            moved.insert(t + (q - p), tru[t])
            run = _common_prefix(pred, p, moved, t)
            avail = min(len(pred) - p, len(moved) - t)
            if run >= q - p + 1 and _supported(run, avail, lookahead_w) and run > ord_run:
                ord_ok = True
                ord_run = run
                ord_q = q

        # Candidate: pred[p] is spurious; skipping it re-synchronizes.
        ins_run = _common_prefix(pred, p + 1, tru, t)
        ins_avail = min(len(pred) - p - 1, len(tru) - t)
        ins_ok = _supported(ins_run, ins_avail, lookahead_w)

        best = None  # (run, priority) — higher run wins, then omission > ordering > spurious
        if om_ok:
            best = (om_run, 3, "omission")
        if ord_ok and (best is None or ord_run > best[0]):
            best = (ord_run, 2, "ordering")
        if ins_ok and (best is None or ins_run > best[0]):
            best = (ins_run, 1, "spurious")

        if best is None:
            substitutions += 1
            p += 1
            t += 1
        elif best[2] == "omission":
            omissions += 1
            t += 1
        elif best[2] == "ordering":
            ordering += 1
            del tru[t]
            del pred[ord_q]
        else:
            substitutions += 1
            p += 1

    # Leftovers: unmatched truth was never predicted; unmatched predictions
    # are spurious.
    omissions += len(tru) - t
    substitutions += len(pred) - p
    total = correct + omissions + ordering + substitutions
    return AlignmentReport(
        total=total,
        correct=correct,
        omissions=omissions,
        ordering_mistakes=ordering,
        substitutions=substitutions,
    )


# ---------------------------------------------------------------------------
# model rollout helpers


def rollout_predictions(
    model,
    ids: Sequence[EventId],
    *,
    horizon: int,
    start: int,
    stop: int | None = None,
) -> tuple[list[tuple[EventId, ...]], list[EventId]]:
    """Per-step self-fed n-tuples over a true trace, ready for n_forward_accuracy.

    For every position i in ``[start, stop)`` the model sees the true ids up
    to i (exclusive) and rolls ``horizon`` predictions forward, feeding each
    back as context. Works for any model exposing ``predict_next``. Returns
    the prediction tuples plus the aligned truth slice.
    """
    ids = [EventId(e) for e in ids]
    if stop is None:
        stop = len(ids) - horizon + 1
    if not 1 <= start < stop <= len(ids) - horizon + 1:
        raise LengthMismatch(
            f"need 1 <= start < stop <= {len(ids) - horizon + 1}, got [{start}, {stop})"
        )
    steps: list[tuple[EventId, ...]] = []
    for i in range(start, stop):
        context = list(ids[:i])
        step: list[EventId] = []
        for _ in range(horizon):
            nxt = model.predict_next(context)
            step.append(nxt)
            context.append(nxt)
        steps.append(tuple(step))
    return steps, ids[start : stop + horizon - 1]


def next_event_accuracy(model, ids: Sequence[EventId], *, start: int) -> float:
    """Teacher-forced 1-step accuracy from position ``start`` onward."""
    ids = [EventId(e) for e in ids]
    if not 1 <= start < len(ids):
        raise LengthMismatch(f"need 1 <= start < {len(ids)}")
    hits = 0
    for i in range(start, len(ids)):
        if model.predict_next(ids[:i]) == ids[i]:
            hits += 1
    return hits / (len(ids) - start)


# ---------------------------------------------------------------------------
# raster rendering


def render_onehot_image(
    events: Sequence[EventId],
    dictionary: Dictionary,
    sink: str | os.PathLike | IO[bytes],
) -> None:
    """Write the one-hot raster of an event sequence as a text PGM (P2).

    One column per event, one row per vocabulary entry; the active index is
    white on black. Identical inputs produce byte-identical files.
    """
    if not events:
        raise ValueError("events must be non-empty")
    mat = encode_ids(list(events), dictionary).T  # (V, L)
    height, width = mat.shape
    lines = ["P2", f"{width} {height}", "1"]
    for row in mat.astype(int):
        lines.append(" ".join(str(v) for v in row))
    payload = ("\n".join(lines) + "\n").encode("ascii")
    if hasattr(sink, "write"):
        sink.write(payload)
    else:
        Path(sink).write_bytes(payload)
