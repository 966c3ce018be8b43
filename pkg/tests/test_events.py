import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcyto.events import (
    EVENT_DTYPE,
    Dataset,
    EventSample,
    EventStream,
    EvcyFormatError,
    events_array,
    load_dataset,
    read_events,
    save_dataset,
    segment_windows,
    validate_stream,
    write_events,
)


def make_stream(tuples, width=640, height=480):
    return EventStream(width=width, height=height, events=events_array(tuples))


# ---------------------------------------------------------------------------
# EVCY write/read


def test_empty_stream_writes_header_only(tmp_path):
    path = tmp_path / "empty.evcy"
    write_events(make_stream([]), path)
    data = path.read_bytes()
    assert len(data) == 20
    assert data[:4] == b"EVCY"
    assert struct.unpack_from("<Q", data, 12)[0] == 0


def test_single_event_byte_layout(tmp_path):
    """Exact bytes: 20-byte header plus one 13-byte packed record."""
    path = tmp_path / "one.evcy"
    write_events(make_stream([(5, 3, 4, 1)]), path)
    expected = struct.pack("<4sHHHHQ", b"EVCY", 1, 640, 480, 0, 1)
    expected += struct.pack("<QHHB", 5, 3, 4, 1)
    assert len(expected) == 33
    assert path.read_bytes() == expected


def test_roundtrip_identity(tmp_path):
    stream = make_stream([(0, 0, 0, 0), (10, 639, 479, 1), (10, 5, 5, 0), (999, 100, 200, 1)])
    path = tmp_path / "s.evcy"
    write_events(stream, path)
    assert read_events(path) == stream


def test_write_is_byte_identical(tmp_path):
    stream = make_stream([(1, 2, 3, 1), (4, 5, 6, 0)])
    a, b = tmp_path / "a.evcy", tmp_path / "b.evcy"
    write_events(stream, a)
    write_events(stream, b)
    assert a.read_bytes() == b.read_bytes()


@st.composite
def streams(draw):
    n = draw(st.integers(min_value=0, max_value=60))
    ts = sorted(draw(st.lists(st.integers(0, 10**7), min_size=n, max_size=n)))
    xs = draw(st.lists(st.integers(0, 639), min_size=n, max_size=n))
    ys = draw(st.lists(st.integers(0, 479), min_size=n, max_size=n))
    ps = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    return make_stream(list(zip(ts, xs, ys, ps)))


@settings(max_examples=60, deadline=None)
@given(streams())
def test_roundtrip_property(tmp_path_factory, stream):
    path = tmp_path_factory.mktemp("rt") / "s.evcy"
    write_events(stream, path)
    assert read_events(path) == stream


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.evcy"
    path.write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(EvcyFormatError, match="bad magic"):
        read_events(path)


def test_truncated_records_rejected(tmp_path):
    """Declared count exceeds the remaining bytes."""
    path = tmp_path / "trunc.evcy"
    path.write_bytes(struct.pack("<4sHHHHQ", b"EVCY", 1, 640, 480, 0, 3) + bytes(13))
    with pytest.raises(EvcyFormatError, match="truncated"):
        read_events(path)


def test_truncated_header_rejected(tmp_path):
    path = tmp_path / "short.evcy"
    path.write_bytes(b"EVCY\x01")
    with pytest.raises(EvcyFormatError, match="truncated"):
        read_events(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "extra.evcy"
    path.write_bytes(struct.pack("<4sHHHHQ", b"EVCY", 1, 640, 480, 0, 0) + b"\x00")
    with pytest.raises(EvcyFormatError, match="trailing"):
        read_events(path)


def test_unsorted_file_rejected(tmp_path):
    path = tmp_path / "unsorted.evcy"
    body = struct.pack("<QHHB", 10, 0, 0, 0) + struct.pack("<QHHB", 5, 0, 0, 0)
    path.write_bytes(struct.pack("<4sHHHHQ", b"EVCY", 1, 640, 480, 0, 2) + body)
    with pytest.raises(EvcyFormatError, match="unsorted"):
        read_events(path)


def test_out_of_bounds_file_rejected(tmp_path):
    path = tmp_path / "oob.evcy"
    body = struct.pack("<QHHB", 1, 640, 0, 0)
    path.write_bytes(struct.pack("<4sHHHHQ", b"EVCY", 1, 640, 480, 0, 1) + body)
    with pytest.raises(EvcyFormatError, match="out of bounds"):
        read_events(path)


def test_write_rejects_invalid_stream(tmp_path):
    stream = make_stream([(5, 0, 0, 0), (1, 0, 0, 0)])  # unsorted
    with pytest.raises(ValueError, match="unsorted"):
        write_events(stream, tmp_path / "x.evcy")


# ---------------------------------------------------------------------------
# validate_stream


def test_validate_clean_stream():
    report = validate_stream(make_stream([(0, 1, 2, 0), (7, 3, 4, 1)]))
    assert report.ok
    assert report.count == 2
    assert report.duration_us == 7
    assert (report.on_count, report.off_count) == (1, 1)


def test_validate_reports_unsorted_with_index():
    report = validate_stream(make_stream([(3, 0, 0, 0), (9, 0, 0, 0), (2, 0, 0, 0)]))
    assert any("unsorted" in v and "2" in v for v in report.violations)


def test_validate_reports_out_of_bounds():
    report = validate_stream(make_stream([(0, 640, 0, 0)]))
    assert any("out of bounds" in v for v in report.violations)


# ---------------------------------------------------------------------------
# segment_windows


def test_segment_boundary_is_half_open():
    stream = make_stream([(0, 1, 1, 0), (10_000, 2, 2, 1)])
    samples = segment_windows(stream, 10_000, label="A", experiment_id=1)
    assert len(samples) == 2
    assert samples[0].events["t"].tolist() == [0]
    assert samples[1].events["t"].tolist() == [0]
    assert samples[1].events["x"].tolist() == [2]


def test_segment_empty_stream():
    assert segment_windows(make_stream([]), 10_000, "A", 1) == []


def test_segment_drops_empty_windows_and_preserves_events():
    tuples = [(100, 0, 0, 0), (250, 1, 1, 1), (90_000, 2, 2, 0)]
    samples = segment_windows(make_stream(tuples), 10_000, "B", 2)
    assert len(samples) == 2  # windows 0 and 9; everything between is empty
    assert sum(len(s) for s in samples) == len(tuples)
    assert all(s.duration == 10_000 for s in samples)
    assert all(s.label == "B" and s.experiment_id == 2 for s in samples)


def test_segment_sixty_second_stream_yields_at_most_6000():
    rng = np.random.default_rng(0)
    n = 30_000
    ts = np.sort(rng.integers(0, 60_000_000, size=n))
    ev = np.empty(n, dtype=EVENT_DTYPE)
    ev["t"] = ts
    ev["x"] = rng.integers(0, 640, n)
    ev["y"] = rng.integers(0, 480, n)
    ev["p"] = rng.integers(0, 2, n)
    samples = segment_windows(EventStream(events=ev), 10_000, "A", 1)
    assert len(samples) <= 6000
    assert sum(len(s) for s in samples) == n


@settings(max_examples=40, deadline=None)
@given(streams(), st.integers(1, 50_000))
def test_segment_partition_property(stream, window):
    samples = segment_windows(stream, window, "A", 1)
    assert sum(len(s) for s in samples) == len(stream)
    for s in samples:
        assert len(s) > 0
        assert int(s.events["t"].max(initial=0)) < window


# ---------------------------------------------------------------------------
# dataset save/load


def test_dataset_roundtrip(tmp_path):
    samples = [
        EventSample(events=events_array([(0, 1, 1, 1)]), label="A", experiment_id=1),
        EventSample(events=events_array([(5, 2, 2, 0)]), label="B", experiment_id=1),
        EventSample(events=events_array([(9, 3, 3, 1)]), label="A", experiment_id=2),
    ]
    ds = Dataset(samples=samples, manifest={"seed": 1, "experiments": []})
    save_dataset(ds, tmp_path)
    loaded = load_dataset(tmp_path)
    assert len(loaded.samples) == 3
    for orig, got in zip(samples, loaded.samples):
        assert got.label == orig.label
        assert got.experiment_id == orig.experiment_id
        assert np.array_equal(got.events, orig.events)
    counts = {e["experiment_id"]: e["counts"] for e in loaded.manifest["experiments"]}
    assert counts[1] == {"A": 1, "B": 1}
    assert counts[2] == {"A": 1}
