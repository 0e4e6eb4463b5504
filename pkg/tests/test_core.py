import numpy as np
import pytest
from hypothesis import given, strategies as st

from tracekit.core import (
    Dictionary,
    Event,
    EventId,
    Trace,
    build_dictionary,
    decode_index,
    encode_event,
    encode_ids,
    event_frequencies,
    pick_most_frequent,
)
from tracekit.errors import EmptyTrainingSet, IndexOutOfRange


def trace_of(*ids, label=""):
    return Trace(tuple(Event(EventId(i), t * 0.1) for t, i in enumerate(ids)), label=label)


class TestEventId:
    def test_uppercase_normalization(self):
        assert EventId("b0") == "B0"
        assert EventId(" 2c6 ") == "2C6"

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            EventId("")
        with pytest.raises(ValueError):
            EventId("   ")

    def test_behaves_like_str(self):
        assert EventId("B0") in {"B0"}
        assert sorted([EventId("B2"), EventId("B0")]) == ["B0", "B2"]


class TestEvent:
    def test_timestamp_validation(self):
        with pytest.raises(ValueError):
            Event(EventId("B0"), -1.0)
        with pytest.raises(ValueError):
            Event(EventId("B0"), float("nan"))
        assert Event(EventId("B0")).timestamp is None


class TestTrace:
    def test_rejects_decreasing_timestamps(self):
        with pytest.raises(ValueError):
            Trace((Event(EventId("A"), 0.2), Event(EventId("B"), 0.1)))

    def test_allows_missing_timestamps(self):
        t = Trace((Event(EventId("A")), Event(EventId("B"), 0.5), Event(EventId("C"))))
        assert len(t) == 3
        assert not t.has_timestamps()


class TestDictionary:
    def test_first_occurrence_order(self):
        d = build_dictionary([trace_of("B0", "B2", "B0")])
        assert d.ids == ("B0", "B2")
        assert d.size == 3
        assert d.other_index == 2

    def test_43_ids_gives_v44(self):
        d = build_dictionary([trace_of(*[f"{i:X}" for i in range(43)])])
        assert d.size == 44

    def test_empty_training_set(self):
        with pytest.raises(EmptyTrainingSet):
            build_dictionary([])
        with pytest.raises(EmptyTrainingSet):
            build_dictionary([Trace(())])

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            Dictionary((EventId("A"), EventId("A")))

    def test_deterministic(self):
        traces = [trace_of("B0", "B2"), trace_of("2C6", "B0")]
        assert build_dictionary(traces).ids == build_dictionary(traces).ids


class TestEncoding:
    def test_one_hot_position(self):
        d = Dictionary((EventId("A"), EventId("B"), EventId("C")))
        vec = encode_event(EventId("C"), d)
        assert vec.tolist() == [0.0, 0.0, 1.0, 0.0]

    def test_unknown_id_maps_to_other(self):
        d = build_dictionary([trace_of(*[f"{i:X}" for i in range(43)])])
        vec = encode_event(EventId("FFF"), d)
        assert vec[43] == 1.0
        assert vec.sum() == 1.0

    def test_exactly_one_active_element(self):
        d = build_dictionary([trace_of(*[f"{i:X}" for i in range(43)])])
        vec = encode_event(EventId("5"), d)
        assert (vec == 0.0).sum() == 43
        assert (vec == 1.0).sum() == 1

    def test_encode_ids_matrix(self):
        d = Dictionary((EventId("A"), EventId("B")))
        mat = encode_ids([EventId("A"), EventId("B"), EventId("Z")], d)
        assert mat.shape == (3, 3)
        assert mat.argmax(axis=1).tolist() == [0, 1, 2]

    def test_decode(self):
        d = Dictionary((EventId("B0"), EventId("B2")))
        assert decode_index(0, d) == "B0"
        assert decode_index(2, d) == "OTHER"
        with pytest.raises(IndexOutOfRange):
            decode_index(5, d)
        with pytest.raises(IndexOutOfRange):
            decode_index(-1, d)

    @given(st.lists(st.sampled_from("ABCDEF"), min_size=1, max_size=30))
    def test_round_trip(self, ids):
        d = build_dictionary([trace_of(*ids)])
        for eid in d.ids:
            vec = encode_event(eid, d)
            assert len(vec) == d.size
            assert decode_index(int(np.argmax(vec)), d) == eid


class TestFrequencies:
    def test_pick_most_frequent_tie_breaks_by_index(self):
        d = Dictionary((EventId("A"), EventId("B"), EventId("C")))
        counts = {EventId("C"): 3, EventId("B"): 3, EventId("A"): 1}
        assert pick_most_frequent(counts, d) == "B"

    def test_event_frequencies(self):
        freq = event_frequencies([trace_of("A", "B", "A")])
        assert freq == {"A": 2, "B": 1}
