import io

import pytest
from hypothesis import given, settings, strategies as st

from tracekit.core import Dictionary, EventId
from tracekit.errors import DegenerateInput, LengthMismatch
from tracekit.evaluate import (
    AlignmentReport,
    align_and_classify,
    expected_accuracy,
    n_forward_accuracy,
    render_onehot_image,
)


def ids(*tokens):
    return [EventId(t) for t in tokens]


class TestExpectedAccuracy:
    def test_reference_values_to_three_decimals(self):
        assert round(expected_accuracy(0.895, 10), 3) == 0.330
        assert round(expected_accuracy(0.895, 20), 3) == 0.109

    def test_identity_at_one_step(self):
        assert expected_accuracy(0.42, 1) == 0.42

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            expected_accuracy(1.5, 2)
        with pytest.raises(ValueError):
            expected_accuracy(0.5, 0)


class TestNForwardAccuracy:
    def test_all_correct(self):
        truth = ids("A", "B", "C", "D")
        steps = [tuple(truth[s : s + 2]) for s in range(3)]
        assert n_forward_accuracy(steps, truth, 2) == 1.0

    def test_partial_steps(self):
        truth = ids("A", "B", "C", "D")
        steps = [
            (EventId("A"), EventId("B")),  # both right
            (EventId("B"), EventId("C")),  # both right
            (EventId("C"), EventId("X")),  # one wrong
        ]
        assert n_forward_accuracy(steps, truth, 2) == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            n_forward_accuracy([(EventId("A"),)], [], 1)
        with pytest.raises(LengthMismatch):
            n_forward_accuracy([ids("A", "B")], ids("A"), 2)

    def test_step_order_insensitive(self):
        truth = ids("A", "B", "A", "B", "A")
        steps = [tuple(truth[s : s + 2]) for s in range(4)]
        steps[1] = (EventId("X"), EventId("X"))
        acc = n_forward_accuracy(steps, truth, 2)
        # Moving the wrong step elsewhere cannot change c and w.
        assert acc == pytest.approx(3 / 4)


class TestAlignmentFixtures:
    """The three worked examples of hand-scored rollout segments."""

    def test_proper_alignment(self):
        segment = ids("2C6", "5D7", "B0", "224", "B2", "20", "B4", "25", "22", "23")
        report = align_and_classify(segment, segment)
        assert report.correct == 10
        assert report.omissions == 0
        assert report.ordering_mistakes == 0
        assert report.substitutions == 0

    def test_omitted_rare_event(self):
        predicted = ids("B4", "25", "22", "23", "B0", "320", "B2", "2D0", "2C4")
        truth = ids("B4", "25", "22", "23", "340", "B0", "320", "B2", "2D0", "2C4")
        report = align_and_classify(predicted, truth)
        assert report.omissions == 1
        assert report.ordering_mistakes == 0
        assert report.substitutions == 0
        assert report.correct == 9

    def test_local_ordering_mistake(self):
        predicted = ids("25", "22", "23", "2C6", "B0", "320", "B2", "2C4", "20", "223")
        truth = ids("25", "22", "23", "2C4", "2C6", "B0", "320", "B2", "20", "223")
        report = align_and_classify(predicted, truth)
        assert report.omissions == 0
        assert report.ordering_mistakes == 1
        assert report.substitutions == 0
        assert report.correct == 9


class TestAlignmentProperties:
    @given(st.lists(st.sampled_from("ABCDE"), min_size=4, max_size=60))
    def test_identity_alignment(self, tokens):
        seq = ids(*tokens)
        report = align_and_classify(seq, seq)
        assert report.correct == len(seq)
        assert report.omissions == report.ordering_mistakes == report.substitutions == 0

    @settings(deadline=None)
    @given(st.data())
    def test_single_deletion_is_one_omission(self, data):
        tokens = data.draw(st.lists(st.sampled_from("ABCDE"), min_size=8, max_size=50))
        # Deletion site must be followed by >= lookahead matching events.
        pos = data.draw(st.integers(0, len(tokens) - 5))
        truth = ids(*tokens)
        predicted = truth[:pos] + truth[pos + 1 :]
        report = align_and_classify(predicted, truth)
        assert report.omissions == 1
        assert report.substitutions == 0
        assert report.correct == len(predicted)

    @settings(deadline=None)
    @given(st.data())
    def test_single_forward_move_is_one_ordering_mistake(self, data):
        # Unique symbols keep the displaced element unambiguous.
        size = data.draw(st.integers(14, 26))
        base = [f"E{i}" for i in range(size)]
        pos = data.draw(st.integers(0, size - 11))
        shift = data.draw(st.integers(1, 9))
        truth = ids(*base)
        moved = truth.copy()
        item = moved.pop(pos)
        moved.insert(pos + shift, item)
        report = align_and_classify(moved, truth, lookahead_w=3, order_k=10)
        assert report.ordering_mistakes == 1
        assert report.omissions == 0
        assert report.substitutions == 0

    def test_substitution_fallback(self):
        truth = ids("A", "B", "C", "D", "E")
        predicted = ids("A", "X", "C", "D", "E")
        report = align_and_classify(predicted, truth)
        assert report.substitutions == 1
        assert report.correct == 4

    def test_degenerate_input(self):
        with pytest.raises(DegenerateInput):
            align_and_classify(ids("A", "B"), ids("A", "B", "C", "D", "E"))

    def test_rates(self):
        report = AlignmentReport(
            total=100, correct=90, omissions=5, ordering_mistakes=2, substitutions=3
        )
        assert report.omission_rate == pytest.approx(0.05)
        assert report.events_per_ordering_mistake == pytest.approx(50.0)
        assert report.accuracy == pytest.approx(0.9)


class TestRender:
    def test_single_event_raster(self):
        d = Dictionary((EventId("A"), EventId("B")))
        buf = io.BytesIO()
        render_onehot_image([EventId("A")], d, buf)
        assert buf.getvalue() == b"P2\n1 3\n1\n1\n0\n0\n"

    def test_byte_identical_output(self, tmp_path):
        d = Dictionary((EventId("A"), EventId("B"), EventId("C")))
        events = ids(*"ABCCBAAB")
        p1, p2 = tmp_path / "a.pgm", tmp_path / "b.pgm"
        render_onehot_image(events, d, p1)
        render_onehot_image(events, d, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_dimensions(self, tmp_path):
        d = Dictionary(tuple(EventId(f"{i:X}") for i in range(43)))
        events = ids(*(f"{i % 43:X}" for i in range(100)))
        path = tmp_path / "r.pgm"
        render_onehot_image(events, d, path)
        header = path.read_bytes().split(b"\n")[:3]
        assert header == [b"P2", b"100 44", b"1"]

    def test_rejects_empty(self):
        d = Dictionary((EventId("A"),))
        with pytest.raises(ValueError):
            render_onehot_image([], d, io.BytesIO())
