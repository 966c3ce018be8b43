"""Seeded synthetic event-data generator.

Emulates microbead transits through the imaging region with a
moving-disc edge model: a disc of class-dependent radius sweeps
horizontally across the 640x480 frame; pixels newly covered by the disc
in a 100 us slice emit ON events, pixels it uncovers emit OFF events,
each with probability ``event_rate``. Uniform background noise is added
at ``noise_rate`` expected events per slice over the whole frame. The two
classes differ only in disc size (16 um vs 20 um beads at ``px_per_um``
scale), so no single event reveals the label; the classes are separable
only through the spatiotemporal footprint statistics.

Everything is a pure function of (label, config, seed): per-bin draws
happen in a fixed order from one PCG64 generator, so datasets are
byte-reproducible. Per-sample seeds derive from the master seed via
``seeds.mix_seed``; experiments get a seeded velocity jitter (default
+-3%) to emulate run-to-run drift between recordings.

Transits are vertically confined to a band around the sensor midline
(the microfluidic channel focuses particles near its center line), and
the horizontal entry phase varies a little per sample. Both spreads are
deliberately moderate: they decorrelate samples without drowning the
size signal that survives the downstream patch pooling.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .events import (
    CLASS_LABELS,
    EVENT_DTYPE,
    SENSOR_HEIGHT,
    SENSOR_WIDTH,
    Dataset,
    EventSample,
)
from .seeds import TAG_EXPERIMENT_JITTER, TAG_SAMPLE, mix_seed

GEN_BIN_US = 100  # slice width of the emission model, independent of preprocessing dt
N_EXPERIMENTS = 4
DESK_SCALE_PER_CLASS = 600
PAPER_SCALE_PER_CLASS = 6000

Y_BAND_PX = 30.0  # vertical transit spread around the sensor midline
X_PHASE_PX = 20.0  # horizontal entry-phase spread
VELOCITY_JITTER = 0.03  # per-experiment velocity scale spread (fraction)


@dataclass(frozen=True)
class GenConfig:
    """Generator knobs; defaults give a desk-scale but nontrivial task."""

    px_per_um: float = 2.0
    diameter_a_um: float = 16.0
    diameter_b_um: float = 20.0
    velocity_px_per_ms: float = 50.0
    event_rate: float = 0.3
    noise_rate: float = 2.0
    duration_us: int = 10_000

    def __post_init__(self):
        if not self.radius_b_px > self.radius_a_px > 0:
            raise ValueError("class B radius must exceed class A radius, both positive")
        if self.event_rate < 0 or self.noise_rate < 0:
            raise ValueError("rates must be non-negative")
        if self.duration_us <= 0:
            raise ValueError("duration must be positive")

    @property
    def radius_a_px(self) -> float:
        return self.diameter_a_um * self.px_per_um / 2.0

    @property
    def radius_b_px(self) -> float:
        return self.diameter_b_um * self.px_per_um / 2.0

    def radius_px(self, label: str) -> float:
        if label == "A":
            return self.radius_a_px
        if label == "B":
            return self.radius_b_px
        raise ValueError(f"unknown class label {label!r}")


@dataclass
class ExperimentData:
    experiment_id: int
    samples: list[EventSample]
    seed: int
    velocity_scale: float = 1.0
    sample_seeds: list[int] = field(default_factory=list)


def _poisson(rng: np.random.Generator, lam: float) -> int:
    """Knuth's product-of-uniforms Poisson sampler.

    Hand-rolled so the draw sequence depends only on ``rng.random()``,
    keeping generated datasets stable across numpy releases.
    """
    if lam <= 0.0:
        return 0
    limit = math.exp(-lam)
    k = 0
    p = rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k


def _disc_mask(cx: float, cy: float, r: float, x0: int, x1: int, y0: int, y1: int) -> np.ndarray:
    xs = np.arange(x0, x1, dtype=np.float64)
    ys = np.arange(y0, y1, dtype=np.float64)
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    return dx * dx + dy * dy <= r * r


def generate_sample(label: str, config: GenConfig, seed: int) -> EventSample:
    """Generate one transit window, fully determined by (label, config, seed)."""
    rng = np.random.default_rng(seed)
    r = config.radius_px(label)
    px_per_bin = config.velocity_px_per_ms * GEN_BIN_US / 1000.0
    n_bins = -(-config.duration_us // GEN_BIN_US)

    cy = SENSOR_HEIGHT / 2.0 + rng.uniform(-Y_BAND_PX, Y_BAND_PX)
    cx0 = -r - rng.uniform(0.0, X_PHASE_PX)

    ts: list[np.ndarray] = []
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    ps: list[np.ndarray] = []

    def emit(pix_y, pix_x, polarity, t0, t1, n_kept_rng):
        keep = n_kept_rng < config.event_rate
        n = int(np.count_nonzero(keep))
        if n == 0:
            return
        ts.append(rng.integers(t0, t1, size=n, dtype=np.int64))
        xs.append(pix_x[keep])
        ys.append(pix_y[keep])
        ps.append(np.full(n, polarity, dtype=np.int64))

    for k in range(n_bins):
        t0 = k * GEN_BIN_US
        t1 = min((k + 1) * GEN_BIN_US, config.duration_us)
        cx_prev = cx0 + px_per_bin * k
        cx_now = cx_prev + px_per_bin

        x_lo = max(0, int(math.floor(min(cx_prev, cx_now) - r)) - 1)
        x_hi = min(SENSOR_WIDTH, int(math.ceil(max(cx_prev, cx_now) + r)) + 2)
        y_lo = max(0, int(math.floor(cy - r)) - 1)
        y_hi = min(SENSOR_HEIGHT, int(math.ceil(cy + r)) + 2)
        if x_lo < x_hi and y_lo < y_hi and config.event_rate > 0:
            prev = _disc_mask(cx_prev, cy, r, x_lo, x_hi, y_lo, y_hi)
            now = _disc_mask(cx_now, cy, r, x_lo, x_hi, y_lo, y_hi)
            lead_y, lead_x = np.nonzero(now & ~prev)
            trail_y, trail_x = np.nonzero(prev & ~now)
            if lead_y.size:
                emit(lead_y + y_lo, lead_x + x_lo, 1, t0, t1, rng.random(lead_y.size))
            if trail_y.size:
                emit(trail_y + y_lo, trail_x + x_lo, 0, t0, t1, rng.random(trail_y.size))

        n_noise = _poisson(rng, config.noise_rate)
        if n_noise:
            xs.append(rng.integers(0, SENSOR_WIDTH, size=n_noise, dtype=np.int64))
            ys.append(rng.integers(0, SENSOR_HEIGHT, size=n_noise, dtype=np.int64))
            ps.append(rng.integers(0, 2, size=n_noise, dtype=np.int64))
            ts.append(rng.integers(t0, t1, size=n_noise, dtype=np.int64))

    if ts:
        t = np.concatenate(ts)
        order = np.argsort(t, kind="stable")
        events = np.empty(len(t), dtype=EVENT_DTYPE)
        events["t"] = t[order]
        events["x"] = np.concatenate(xs)[order]
        events["y"] = np.concatenate(ys)[order]
        events["p"] = np.concatenate(ps)[order]
    else:
        events = np.empty(0, dtype=EVENT_DTYPE)
    return EventSample(events=events, duration=config.duration_us, label=label)


def experiment_velocity_scale(master_seed: int, experiment_id: int) -> float:
    """Per-experiment velocity jitter factor, seed-derived."""
    rng = np.random.default_rng(mix_seed(master_seed, TAG_EXPERIMENT_JITTER, experiment_id))
    return 1.0 + VELOCITY_JITTER * rng.uniform(-1.0, 1.0)


def sample_seed(master_seed: int, experiment_id: int, label: str, index: int) -> int:
    return mix_seed(master_seed, TAG_SAMPLE, experiment_id, CLASS_LABELS.index(label), index)


def generate_experiment(
    experiment_id: int,
    n_per_class: int,
    config: GenConfig,
    seed: int,
) -> ExperimentData:
    """Generate both classes for one experiment (class A block, then B).

    Per-sample seeds mix (seed, experiment_id, class, index), so different
    experiments draw disjoint streams from the same master seed.
    """
    if n_per_class <= 0:
        raise ValueError("n_per_class must be positive")
    scale = experiment_velocity_scale(seed, experiment_id)
    cfg = replace(config, velocity_px_per_ms=config.velocity_px_per_ms * scale)
    samples = []
    sample_seeds = []
    for label in CLASS_LABELS:
        for i in range(n_per_class):
            s = sample_seed(seed, experiment_id, label, i)
            sample_seeds.append(s)
            sample = generate_sample(label, cfg, s)
            samples.append(replace(sample, experiment_id=experiment_id))
    return ExperimentData(
        experiment_id=experiment_id,
        samples=samples,
        seed=seed,
        velocity_scale=scale,
        sample_seeds=sample_seeds,
    )


def generate_dataset(
    config: GenConfig = GenConfig(),
    n_per_class_per_exp: int = DESK_SCALE_PER_CLASS,
    seed: int = 0,
) -> Dataset:
    """Generate experiments 1..4 with a manifest of counts and seeds."""
    samples: list[EventSample] = []
    experiments = []
    for exp_id in range(1, N_EXPERIMENTS + 1):
        exp = generate_experiment(exp_id, n_per_class_per_exp, config, seed)
        samples.extend(exp.samples)
        entries = [
            {"label": s.label, "seed": sseed}
            for s, sseed in zip(exp.samples, exp.sample_seeds)
        ]
        experiments.append(
            {
                "experiment_id": exp_id,
                "velocity_scale": exp.velocity_scale,
                "counts": {label: n_per_class_per_exp for label in CLASS_LABELS},
                "samples": entries,
            }
        )
    manifest = {
        "format": "evcy-dataset",
        "version": 1,
        "width": SENSOR_WIDTH,
        "height": SENSOR_HEIGHT,
        "seed": seed,
        "n_per_class_per_experiment": n_per_class_per_exp,
        "generator": asdict(config),
        "experiments": experiments,
    }
    return Dataset(samples=samples, manifest=manifest)
