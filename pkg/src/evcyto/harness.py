"""Leave-one-experiment-out evaluation protocol.

Each of the four recorded experiments serves as the test set exactly
once while the other three train a freshly initialized network. All
stochastic choices derive from one master seed (``TrainConfig.seed``):
the per-split network init seed mixes (master, TAG_SPLIT_NET, split id)
and the per-split shuffle seed mixes (master, TAG_SPLIT_TRAIN, split id),
so the four runs differ but the whole table is reproducible.

Preprocessed rasters are cached on disk as SPKR dumps keyed by a SHA-256
over (sample bytes, dt, LIF parameters); the cache is shared across
splits and across processes. Cache writes go through a temp file and an
atomic rename.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .events import Dataset, label_index, sample_content_key
from .preprocess import DEFAULT_DT_US, LifFilterParams, preprocess_sample, read_raster, write_raster
from .seeds import TAG_SPLIT_NET, TAG_SPLIT_TRAIN, mix_seed
from .snn import Network, NetworkConfig, init_network
from .train import EpochMetrics, RasterSet, TrainConfig, evaluate, init_adam_state, train_epoch

N_EXPERIMENTS = 4

RESULTS_CSV_HEADER = ("split", "epoch", "train_loss", "train_acc", "test_acc", "seconds")


@dataclass(frozen=True)
class Split:
    test_experiment_id: int
    train_indices: np.ndarray
    test_indices: np.ndarray


@dataclass
class ResultsTable:
    """Per-split epoch metrics plus summary means over final epochs."""

    per_split: dict[int, list[EpochMetrics]]

    @property
    def mean_final_train_acc(self) -> float:
        return float(np.mean([rows[-1].train_acc for rows in self.per_split.values()]))

    @property
    def mean_final_test_acc(self) -> float:
        return float(np.mean([rows[-1].test_acc for rows in self.per_split.values()]))

    def rows(self) -> list[tuple[int, EpochMetrics]]:
        out = []
        for split_id in sorted(self.per_split):
            out.extend((split_id, m) for m in self.per_split[split_id])
        return out


def make_splits(dataset: Dataset) -> list[Split]:
    """One split per experiment; split k tests on experiment k and trains
    on the rest. The four test sets partition the dataset."""
    exp_of = np.array([s.experiment_id for s in dataset.samples])
    present = set(int(e) for e in np.unique(exp_of))
    required = set(range(1, N_EXPERIMENTS + 1))
    if present != required:
        missing = sorted(required - present)
        extra = sorted(present - required)
        parts = []
        if missing:
            parts.append(f"missing experiments {missing}")
        if extra:
            parts.append(f"unexpected experiments {extra}")
        raise ValueError("; ".join(parts))
    splits = []
    for k in range(1, N_EXPERIMENTS + 1):
        test = np.nonzero(exp_of == k)[0]
        train = np.nonzero(exp_of != k)[0]
        splits.append(Split(test_experiment_id=k, train_indices=train, test_indices=test))
    return splits


# ---------------------------------------------------------------------------
# Preprocessing cache


def raster_cache_key(sample, dt: int, params: LifFilterParams) -> str:
    h = hashlib.sha256()
    h.update(sample_content_key(sample))
    h.update(
        f"|dt={dt}|beta={params.beta!r}|w={params.w!r}"
        f"|u_thr={params.u_thr!r}|t_rf={params.t_rf}".encode()
    )
    return h.hexdigest()


def preprocess_dataset(
    dataset: Dataset,
    dt: int = DEFAULT_DT_US,
    params: LifFilterParams = LifFilterParams(),
    cache_dir: str | Path | None = None,
    log: Callable[[str], None] | None = None,
) -> RasterSet:
    """Preprocess every sample, reading/writing the SPKR cache if given."""
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
    rasters = []
    labels = []
    hits = 0
    for sample in dataset.samples:
        bits = None
        path = None
        if cache is not None:
            path = cache / (raster_cache_key(sample, dt, params) + ".spkr")
            if path.exists():
                bits = read_raster(path)
                hits += 1
        if bits is None:
            bits = preprocess_sample(sample, dt, params)
            if path is not None:
                tmp = path.with_name(path.name + f".tmp{os.getpid()}")
                write_raster(bits, tmp)
                os.replace(tmp, path)
        rasters.append(bits)
        labels.append(label_index(sample.label))
    if log is not None:
        log(f"preprocessed {len(rasters)} samples ({hits} cache hits)")
    return RasterSet.from_rasters(rasters, labels)


# ---------------------------------------------------------------------------
# Protocol


def run_split(
    split: Split,
    rasters: RasterSet,
    net_config: NetworkConfig,
    train_config: TrainConfig,
    evaluate_test: bool = True,
    log: Callable[[str], None] | None = None,
) -> tuple[list[EpochMetrics], Network]:
    """Train one split from a fresh seeded init; test accuracy is evaluated
    after every epoch. Test samples never reach the training loop, so
    dropping them (evaluate_test=False) leaves the trained parameters
    bitwise unchanged."""
    master = train_config.seed
    k = split.test_experiment_id
    network = init_network(net_config, mix_seed(master, TAG_SPLIT_NET, k))
    state = init_adam_state(network)
    cfg = replace(train_config, seed=mix_seed(master, TAG_SPLIT_TRAIN, k))
    train_set = rasters.subset(split.train_indices)
    test_set = rasters.subset(split.test_indices) if evaluate_test else None

    metrics: list[EpochMetrics] = []
    for epoch in range(cfg.epochs):
        network, state, m = train_epoch(network, train_set, cfg, state, epoch)
        test_acc = evaluate(network, test_set) if test_set is not None else float("nan")
        m = replace(m, test_acc=test_acc)
        metrics.append(m)
        if log is not None:
            log(
                f"split {k} epoch {m.epoch}: loss {m.mean_loss:.6f} "
                f"train_acc {m.train_acc:.4f} test_acc {m.test_acc:.4f} "
                f"({m.seconds:.1f}s)"
            )
    return metrics, network


def run_experiment(
    dataset: Dataset,
    dt: int = DEFAULT_DT_US,
    lif_params: LifFilterParams = LifFilterParams(),
    net_config: NetworkConfig = NetworkConfig(),
    train_config: TrainConfig = TrainConfig(),
    cache_dir: str | Path | None = None,
    log: Callable[[str], None] | None = None,
) -> ResultsTable:
    """The full four-split protocol on one dataset."""
    rasters = preprocess_dataset(dataset, dt, lif_params, cache_dir=cache_dir, log=log)
    table: dict[int, list[EpochMetrics]] = {}
    for split in make_splits(dataset):
        metrics, _ = run_split(split, rasters, net_config, train_config, log=log)
        table[split.test_experiment_id] = metrics
    return ResultsTable(per_split=table)


# ---------------------------------------------------------------------------
# Results serialization


def strip_timing(table: ResultsTable) -> ResultsTable:
    """Zero the wall-time column so exports are byte-reproducible."""
    return ResultsTable(
        per_split={
            k: [replace(m, seconds=0.0) for m in rows] for k, rows in table.per_split.items()
        }
    )


def export_results(table: ResultsTable, path: str | Path, format: str = "csv") -> None:
    """Write the table as CSV (stable column order) or JSON.

    Floats are serialized with repr, which is both at least six
    significant digits and exact under roundtrip parsing.
    """
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULTS_CSV_HEADER)
            for split_id, m in table.rows():
                writer.writerow(
                    [
                        split_id,
                        m.epoch,
                        repr(m.mean_loss),
                        repr(m.train_acc),
                        repr(m.test_acc),
                        repr(m.seconds),
                    ]
                )
    elif format == "json":
        doc = {
            "splits": {
                str(split_id): [
                    {
                        "epoch": m.epoch,
                        "train_loss": m.mean_loss,
                        "train_acc": m.train_acc,
                        "test_acc": m.test_acc,
                        "seconds": m.seconds,
                    }
                    for m in rows
                ]
                for split_id, rows in sorted(table.per_split.items())
            },
            "summary": {
                "mean_final_train_acc": table.mean_final_train_acc,
                "mean_final_test_acc": table.mean_final_test_acc,
            },
        }
        path.write_text(json.dumps(doc, indent=2))
    else:
        raise ValueError("format must be 'csv' or 'json'")


def load_results(path: str | Path) -> ResultsTable:
    """Parse a results file written by ``export_results``."""
    path = Path(path)
    per_split: dict[int, list[EpochMetrics]] = {}
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        for split_id, rows in doc["splits"].items():
            per_split[int(split_id)] = [
                EpochMetrics(
                    epoch=int(r["epoch"]),
                    mean_loss=float(r["train_loss"]),
                    train_acc=float(r["train_acc"]),
                    test_acc=float(r["test_acc"]),
                    seconds=float(r["seconds"]),
                )
                for r in rows
            ]
    else:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != RESULTS_CSV_HEADER:
                raise ValueError(f"unexpected results header {header}")
            for row in reader:
                split_id = int(row[0])
                per_split.setdefault(split_id, []).append(
                    EpochMetrics(
                        epoch=int(row[1]),
                        mean_loss=float(row[2]),
                        train_acc=float(row[3]),
                        test_acc=float(row[4]),
                        seconds=float(row[5]),
                    )
                )
    return ResultsTable(per_split=per_split)
