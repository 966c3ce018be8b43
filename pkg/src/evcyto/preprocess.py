"""Two-stage event downsampling: spatial patch pooling, then a temporal
LIF filter.

Stage 1 pools the 640x480x2 sensor into 32x24x2 = 1536 channels: each
channel collects the events of one 20x20 pixel patch of one polarity,
binned into fixed-width time bins (default 100 us, so a 10 ms sample
becomes 100 steps). A bin/channel cell is 1 if at least one event landed
in it, regardless of how many.

Stage 2 passes every channel independently through a discretized
leaky-integrate-and-fire neuron with a refractory period. With binary
input s(n), membrane u(n), and spike output o(n) (u(0) = 0, o(n<=0) = 0):

    candidate(n+1) = beta * u(n) + w * s(n+1)
    o(n+1) = 1  if candidate(n+1) >= u_thr  else 0
    r(n+1) = max(o(n+1), o(n), ..., o(n+1-t_rf))
    u(n+1) = 0  if r(n+1)  else candidate(n+1)

Row m of a raster holds step n+1 = m+1 of these recurrences. Note the
refractory signal only clamps the membrane; the spike condition is
evaluated every step, so a sufficiently large input can fire during the
refractory window. That is the literal reading of the recurrences and is
implemented as such.

Rasters are plain uint8 arrays of shape [steps, channels] with entries in
{0, 1}. The SPKR dump format stores one bit per cell:

    magic    4 bytes ASCII "SPKR"
    steps    u32 little-endian
    channels u32 little-endian
    payload  steps rows, each ceil(channels / 8) bytes, bit-packed
             MSB-first, zero-padded to the byte boundary
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .events import SENSOR_HEIGHT, SENSOR_WIDTH, EventSample

PATCH = 20
GRID_W = SENSOR_WIDTH // PATCH  # 32
GRID_H = SENSOR_HEIGHT // PATCH  # 24
NUM_CHANNELS = GRID_W * GRID_H * 2  # 1536
DEFAULT_DT_US = 100

_SPKR_HEADER = struct.Struct("<4sII")
_SPKR_MAGIC = b"SPKR"


class RasterFormatError(ValueError):
    """Malformed SPKR file."""


@dataclass(frozen=True)
class LifFilterParams:
    """Parameters of the temporal-downsampling LIF neuron."""

    beta: float = 0.9
    w: float = 1.0
    u_thr: float = 3.0
    t_rf: int = 2

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must be in [0, 1)")
        if self.u_thr <= 0.0:
            raise ValueError("u_thr must be positive")
        if self.t_rf < 0:
            raise ValueError("t_rf must be non-negative")


def channel_index(x, y, polarity):
    """Map pixel coordinates and polarity to a flat channel id.

    Flattening is polarity-major, then patch row, then patch column:
    index = polarity*768 + (y // 20)*32 + (x // 20). Accepts scalars or
    arrays; the mapping is total on the sensor and onto [0, 1536).
    """
    x = np.asarray(x)
    y = np.asarray(y)
    polarity = np.asarray(polarity)
    if np.any(x < 0) or np.any(x >= SENSOR_WIDTH) or np.any(y < 0) or np.any(y >= SENSOR_HEIGHT):
        raise ValueError("pixel coordinates out of bounds")
    if np.any(polarity > 1) or np.any(polarity < 0):
        raise ValueError("polarity must be 0 or 1")
    idx = polarity.astype(np.int64) * (GRID_W * GRID_H) + (y // PATCH).astype(np.int64) * GRID_W + (
        x // PATCH
    ).astype(np.int64)
    return int(idx) if idx.ndim == 0 else idx


def bin_events(sample: EventSample, dt: int = DEFAULT_DT_US) -> np.ndarray:
    """Rasterize a sample into [ceil(duration/dt), 1536] binary steps.

    Multiple events in the same bin and channel OR together into a single 1.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = -(-sample.duration // dt)
    bits = np.zeros((steps, NUM_CHANNELS), dtype=np.uint8)
    ev = sample.events
    if len(ev):
        rows = (ev["t"] // dt).astype(np.int64)
        cols = channel_index(ev["x"], ev["y"], ev["p"])
        bits[rows, cols] = 1
    return bits


def lif_filter(
    bits: np.ndarray,
    params: LifFilterParams = LifFilterParams(),
    return_membrane: bool = False,
):
    """Run the discretized LIF recurrences over every channel of a raster.

    ``bits`` is any [steps, channels] binary array; channels are fully
    independent, so the channel count need not be 1536. Returns the binary
    spike raster, and optionally the stored membrane after each step
    (exactly 0 while the refractory signal is active).
    """
    bits = np.asarray(bits)
    if bits.ndim != 2:
        raise ValueError("raster must be 2-D [steps, channels]")
    steps, channels = bits.shape
    s_in = bits.astype(np.float64)
    out = np.zeros((steps, channels), dtype=np.uint8)
    membrane = np.empty((steps, channels), dtype=np.float64) if return_membrane else None

    u = np.zeros(channels, dtype=np.float64)
    # Row of the most recent spike per channel; the sentinel keeps the
    # refractory test false until a first spike occurs.
    last_spike = np.full(channels, -(params.t_rf + 1), dtype=np.int64)
    for m in range(steps):
        candidate = params.beta * u + params.w * s_in[m]
        fired = candidate >= params.u_thr
        out[m] = fired
        last_spike[fired] = m
        refractory = (m - last_spike) <= params.t_rf
        u = np.where(refractory, 0.0, candidate)
        if membrane is not None:
            membrane[m] = u
    if return_membrane:
        return out, membrane
    return out


def preprocess_sample(
    sample: EventSample,
    dt: int = DEFAULT_DT_US,
    params: LifFilterParams = LifFilterParams(),
) -> np.ndarray:
    """Full preprocessing: patch-pooled binning followed by the LIF filter."""
    return lif_filter(bin_events(sample, dt), params)


def write_raster(bits: np.ndarray, path: str | Path) -> None:
    """Dump a binary raster in the SPKR format."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    steps, channels = bits.shape
    packed = np.packbits(bits, axis=1)
    with open(path, "wb") as fh:
        fh.write(_SPKR_HEADER.pack(_SPKR_MAGIC, steps, channels))
        fh.write(packed.tobytes())


def read_raster(path: str | Path) -> np.ndarray:
    """Read an SPKR raster dump back into a [steps, channels] uint8 array."""
    data = Path(path).read_bytes()
    if len(data) < _SPKR_HEADER.size:
        raise RasterFormatError(f"truncated header: {len(data)} bytes")
    magic, steps, channels = _SPKR_HEADER.unpack_from(data)
    if magic != _SPKR_MAGIC:
        raise RasterFormatError(f"bad magic {magic!r}")
    row_bytes = -(-channels // 8)
    expected = steps * row_bytes
    payload = len(data) - _SPKR_HEADER.size
    if payload != expected:
        raise RasterFormatError(f"payload is {payload} bytes, expected {expected}")
    packed = np.frombuffer(data, dtype=np.uint8, offset=_SPKR_HEADER.size)
    packed = packed.reshape(steps, row_bytes)
    return np.unpackbits(packed, axis=1, count=channels)
