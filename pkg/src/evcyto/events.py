"""Event-camera data model and file I/O.

Events are (t, x, y, polarity) tuples at 640x480 sensor resolution,
timestamped in integer microseconds. Streams are stored on disk in the
EVCY container, a fixed little-endian binary layout chosen so identical
streams produce byte-identical files:

    magic    4 bytes  ASCII "EVCY"
    version  u16      = 1
    width    u16
    height   u16
    reserved u16      = 0
    count    u64
    records  count x 13 bytes: t u64 (microseconds), x u16, y u16,
             polarity u8 (0 = OFF, 1 = ON)

A labeled dataset on disk is a directory of per-sample EVCY files plus a
``manifest.json`` listing paths, labels, seeds, and per-experiment counts.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

SENSOR_WIDTH = 640
SENSOR_HEIGHT = 480
DEFAULT_DURATION_US = 10_000

CLASS_LABELS = ("A", "B")

# Packed little-endian record layout; itemsize is exactly 13 bytes, so a
# structured array's raw bytes are the EVCY record stream.
EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

_HEADER = struct.Struct("<4sHHHHQ")
_MAGIC = b"EVCY"
_VERSION = 1


class EvcyFormatError(ValueError):
    """Malformed EVCY file."""


class Event(NamedTuple):
    t: int
    x: int
    y: int
    polarity: int


def label_index(label: str) -> int:
    try:
        return CLASS_LABELS.index(label)
    except ValueError:
        raise ValueError(f"unknown class label {label!r}") from None


def events_array(events: Iterable[tuple] | np.ndarray) -> np.ndarray:
    """Coerce a sequence of (t, x, y, polarity) tuples to the record dtype."""
    if isinstance(events, np.ndarray) and events.dtype == EVENT_DTYPE:
        return events
    return np.array([tuple(e) for e in events], dtype=EVENT_DTYPE)


@dataclass(frozen=True)
class EventStream:
    """An ordered event recording with its sensor geometry.

    Treated as immutable after construction; operations on streams never
    mutate them, so instances are safe to share across threads.
    """

    width: int = SENSOR_WIDTH
    height: int = SENSOR_HEIGHT
    events: np.ndarray = field(default_factory=lambda: np.empty(0, EVENT_DTYPE))

    def __post_init__(self):
        object.__setattr__(self, "events", events_array(self.events))

    def __len__(self) -> int:
        return len(self.events)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and len(self.events) == len(other.events)
            and bool(np.all(self.events == other.events))
        )


@dataclass(frozen=True)
class EventSample:
    """One classification window: events with timestamps relative to the
    window start, a class label, and the experiment it came from."""

    events: np.ndarray
    duration: int = DEFAULT_DURATION_US
    label: str = "A"
    experiment_id: int = 1

    def __post_init__(self):
        object.__setattr__(self, "events", events_array(self.events))
        if len(self.events) and int(self.events["t"].max()) >= self.duration:
            raise ValueError("event timestamp at or beyond sample duration")
        if self.label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.label!r}")

    def __len__(self) -> int:
        return len(self.events)


@dataclass
class Dataset:
    """Labeled samples grouped into experiments, plus the manifest that
    records how they were produced (counts, seeds, generator config)."""

    samples: list[EventSample]
    manifest: dict

    def experiment_ids(self) -> list[int]:
        return sorted({s.experiment_id for s in self.samples})


@dataclass(frozen=True)
class StreamReport:
    """Diagnostics from ``validate_stream``; violations are reported, not
    raised."""

    count: int
    duration_us: int
    on_count: int
    off_count: int
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def _check_events(events: np.ndarray, width: int, height: int) -> list[str]:
    violations = []
    t = events["t"]
    if len(events) > 1:
        bad = np.nonzero(t[1:] < t[:-1])[0]
        if bad.size:
            violations.append(f"unsorted timestamps: first offending index {bad[0] + 1}")
    oob = np.nonzero((events["x"] >= width) | (events["y"] >= height))[0]
    if oob.size:
        violations.append(f"out of bounds coordinates at index {oob[0]}")
    badp = np.nonzero(events["p"] > 1)[0]
    if badp.size:
        violations.append(f"invalid polarity at index {badp[0]}")
    return violations


def validate_stream(stream: EventStream) -> StreamReport:
    """Report counts and invariant violations without mutating the stream."""
    ev = stream.events
    return StreamReport(
        count=len(ev),
        duration_us=int(ev["t"][-1]) if len(ev) else 0,
        on_count=int(np.count_nonzero(ev["p"] == 1)),
        off_count=int(np.count_nonzero(ev["p"] == 0)),
        violations=_check_events(ev, stream.width, stream.height),
    )


def write_events(stream: EventStream, path: str | Path) -> None:
    """Write a stream as an EVCY file; byte-identical for identical inputs."""
    report = validate_stream(stream)
    if not report.ok:
        raise ValueError("invalid stream: " + "; ".join(report.violations))
    header = _HEADER.pack(_MAGIC, _VERSION, stream.width, stream.height, 0, len(stream.events))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stream.events.tobytes())


def read_events(path: str | Path) -> EventStream:
    """Read an EVCY file, rejecting malformed input with a diagnostic."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise EvcyFormatError(f"truncated header: {len(data)} bytes")
    magic, version, width, height, _reserved, count = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise EvcyFormatError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise EvcyFormatError(f"unsupported version {version}")
    payload = len(data) - _HEADER.size
    expected = count * EVENT_DTYPE.itemsize
    if payload < expected:
        raise EvcyFormatError(
            f"truncated record data: header declares {count} events "
            f"({expected} bytes) but {payload} bytes remain"
        )
    if payload > expected:
        raise EvcyFormatError(f"trailing bytes after {count} declared events")
    events = np.frombuffer(data, dtype=EVENT_DTYPE, offset=_HEADER.size, count=count)
    violations = _check_events(events, width, height)
    if violations:
        raise EvcyFormatError("; ".join(violations))
    return EventStream(width=width, height=height, events=events)


def segment_windows(
    stream: EventStream,
    window: int,
    label: str,
    experiment_id: int,
) -> list[EventSample]:
    """Cut a stream into contiguous half-open windows [k*w, (k+1)*w).

    Each event lands in exactly one window (index t // window) and its
    timestamp becomes window-relative. Windows containing no events are
    dropped; training on all-zero samples is meaningless and dropping
    keeps per-recording sample counts at or below duration / window.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    ev = stream.events
    if len(ev) == 0:
        return []
    keys = ev["t"] // window
    starts = np.nonzero(np.r_[True, keys[1:] != keys[:-1]])[0]
    bounds = np.r_[starts, len(ev)]
    samples = []
    for i, start in enumerate(starts):
        chunk = ev[start : bounds[i + 1]].copy()
        chunk["t"] -= keys[start] * window
        samples.append(
            EventSample(events=chunk, duration=window, label=label, experiment_id=experiment_id)
        )
    return samples


# ---------------------------------------------------------------------------
# Dataset directory layout


def sample_filename(experiment_id: int, label: str, index: int) -> str:
    return f"exp{experiment_id}/{label}_{index:05d}.evcy"


def save_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write one EVCY file per sample plus manifest.json; returns manifest path.

    Sample file paths are assigned per (experiment, label) in dataset order
    and recorded in the manifest, which is the authoritative index for
    ``load_dataset``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = json.loads(json.dumps(dataset.manifest))  # deep copy, JSON-shaped
    by_exp = {e["experiment_id"]: e for e in manifest.setdefault("experiments", [])}

    position: dict[int, int] = {}  # cursor into each experiment's manifest entries
    file_index: dict[tuple[int, str], int] = {}
    for sample in dataset.samples:
        eid = sample.experiment_id
        exp = by_exp.get(eid)
        if exp is None:
            exp = {"experiment_id": eid, "samples": []}
            manifest["experiments"].append(exp)
            by_exp[eid] = exp
        entries = exp.setdefault("samples", [])
        pos = position.get(eid, 0)
        position[eid] = pos + 1
        if pos < len(entries):
            entry = entries[pos]
            if entry.get("label", sample.label) != sample.label:
                raise ValueError("manifest sample order does not match dataset order")
        else:
            entry = {}
            entries.append(entry)

        key = (eid, sample.label)
        idx = file_index.get(key, 0)
        file_index[key] = idx + 1
        rel = sample_filename(eid, sample.label, idx)
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_events(EventStream(events=sample.events), path)

        entry["label"] = sample.label
        entry["path"] = rel
        entry["duration_us"] = sample.duration

    for exp in manifest["experiments"]:
        counts: dict[str, int] = {}
        for entry in exp.get("samples", []):
            counts[entry["label"]] = counts.get(entry["label"], 0) + 1
        exp["counts"] = counts

    manifest.setdefault("format", "evcy-dataset")
    manifest.setdefault("version", 1)
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=False))
    return manifest_path


def load_dataset(data_dir: str | Path) -> Dataset:
    """Load a dataset directory written by ``save_dataset``."""
    root = Path(data_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    samples = []
    for exp in manifest.get("experiments", []):
        exp_id = int(exp["experiment_id"])
        for entry in exp.get("samples", []):
            stream = read_events(root / entry["path"])
            samples.append(
                EventSample(
                    events=stream.events,
                    duration=int(entry["duration_us"]),
                    label=entry["label"],
                    experiment_id=exp_id,
                )
            )
    return Dataset(samples=samples, manifest=manifest)


def sample_content_key(sample: EventSample) -> bytes:
    """Stable byte identity of a sample (events + metadata), used as a
    cache key component by the preprocessing cache."""
    meta = f"{sample.duration}|{sample.label}|{sample.experiment_id}|".encode()
    return meta + sample.events.tobytes()
