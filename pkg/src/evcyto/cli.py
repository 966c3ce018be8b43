"""Command-line interface.

Subcommands cover the full pipeline: ``gen`` (synthetic dataset),
``preprocess`` (cached rasters), ``train`` (single split), ``loeo``
(the four-split protocol), and ``report`` (curve data + figures).
Errors exit nonzero with a one-line diagnostic on stderr.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click

from . import harness, report, synthgen
from .events import load_dataset, save_dataset
from .preprocess import DEFAULT_DT_US, LifFilterParams
from .snn import NetworkConfig, save_network
from .train import TrainConfig


def _fail_with_diagnostic(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (OSError, ValueError, KeyError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _log(msg: str) -> None:
    click.echo(msg, err=True)


@click.group()
def main():
    """Event-based flow cytometry classification pipeline."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Dataset directory.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option(
    "--samples-per-class-per-exp",
    "n_per_class",
    default=synthgen.DESK_SCALE_PER_CLASS,
    show_default=True,
    type=int,
)
@click.option("--paper-scale", is_flag=True, help="Use 6,000 samples per class per experiment.")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="JSON file with generator config fields.",
)
@_fail_with_diagnostic
def gen(out_dir, seed, n_per_class, paper_scale, config_path):
    """Generate a synthetic dataset (EVCY files + manifest)."""
    cfg = synthgen.GenConfig()
    if config_path:
        cfg = synthgen.GenConfig(**json.loads(Path(config_path).read_text()))
    if paper_scale:
        n_per_class = synthgen.PAPER_SCALE_PER_CLASS
    _log(f"generating {4 * 2 * n_per_class} samples (seed {seed})")
    dataset = synthgen.generate_dataset(cfg, n_per_class, seed)
    manifest_path = save_dataset(dataset, out_dir)
    click.echo(str(manifest_path))


def _lif_options(fn):
    fn = click.option("--dt-us", default=DEFAULT_DT_US, show_default=True, type=int)(fn)
    fn = click.option("--beta", default=0.9, show_default=True, type=float)(fn)
    fn = click.option("--w", default=1.0, show_default=True, type=float)(fn)
    fn = click.option("--u-thr", default=3.0, show_default=True, type=float)(fn)
    fn = click.option("--t-rf", default=2, show_default=True, type=int)(fn)
    return fn


def _default_cache(data_dir: str, cache: str | None) -> Path:
    return Path(cache) if cache else Path(data_dir) / "spkr-cache"


@main.command("preprocess")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@_lif_options
@click.option("--out", "out_dir", default=None, type=click.Path(), help="Cache directory [default: DATA/spkr-cache].")
@_fail_with_diagnostic
def preprocess_cmd(data_dir, dt_us, beta, w, u_thr, t_rf, out_dir):
    """Preprocess a dataset into cached SPKR rasters."""
    params = LifFilterParams(beta=beta, w=w, u_thr=u_thr, t_rf=t_rf)
    cache = _default_cache(data_dir, out_dir)
    dataset = load_dataset(data_dir)
    harness.preprocess_dataset(dataset, dt_us, params, cache_dir=cache, log=_log)
    click.echo(str(cache))


def _train_options(fn):
    fn = click.option("--epochs", default=10, show_default=True, type=int)(fn)
    fn = click.option("--seed", default=0, show_default=True, type=int)(fn)
    fn = click.option("--batch-size", default=128, show_default=True, type=int)(fn)
    fn = click.option("--learning-rate", default=5e-4, show_default=True, type=float)(fn)
    fn = click.option("--rate-correct", default=0.8, show_default=True, type=float)(fn)
    fn = click.option("--rate-incorrect", default=0.2, show_default=True, type=float)(fn)
    fn = click.option("--cache", default=None, type=click.Path(), help="Raster cache directory [default: DATA/spkr-cache].")(fn)
    return fn


def _configs(epochs, seed, batch_size, learning_rate, rate_correct, rate_incorrect):
    net_config = NetworkConfig()
    train_config = TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=learning_rate,
        rate_correct=rate_correct,
        rate_incorrect=rate_incorrect,
        seed=seed,
    )
    return net_config, train_config


@main.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--test-exp", "test_exp", required=True, type=click.IntRange(1, 4))
@_lif_options
@_train_options
@click.option("--out", "out_path", default="run.json", show_default=True, type=click.Path())
@_fail_with_diagnostic
def train_cmd(data_dir, test_exp, dt_us, beta, w, u_thr, t_rf, epochs, seed, batch_size,
              learning_rate, rate_correct, rate_incorrect, cache, out_path):
    """Train one leave-one-experiment-out split and write run.json + checkpoint."""
    params = LifFilterParams(beta=beta, w=w, u_thr=u_thr, t_rf=t_rf)
    net_config, train_config = _configs(
        epochs, seed, batch_size, learning_rate, rate_correct, rate_incorrect
    )
    dataset = load_dataset(data_dir)
    rasters = harness.preprocess_dataset(
        dataset, dt_us, params, cache_dir=_default_cache(data_dir, cache), log=_log
    )
    split = next(
        s for s in harness.make_splits(dataset) if s.test_experiment_id == test_exp
    )
    metrics, network = harness.run_split(split, rasters, net_config, train_config, log=_log)
    out_path = Path(out_path)
    ckpt_path = out_path.with_name(out_path.stem + ".network.json")
    save_network(network, ckpt_path)
    doc = {
        "test_experiment_id": test_exp,
        "seed": seed,
        "checkpoint": ckpt_path.name,
        "epochs": [dataclasses.asdict(m) for m in metrics],
        "final_train_acc": metrics[-1].train_acc,
        "final_test_acc": metrics[-1].test_acc,
    }
    out_path.write_text(json.dumps(doc, indent=2))
    click.echo(str(out_path))


@main.command("loeo")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@_lif_options
@_train_options
@click.option("--out", "out_path", default="results.csv", show_default=True, type=click.Path())
@click.option(
    "--timing/--no-timing",
    default=False,
    show_default=True,
    help="Include real wall-clock seconds (breaks byte-reproducibility of the output).",
)
@_fail_with_diagnostic
def loeo_cmd(data_dir, dt_us, beta, w, u_thr, t_rf, epochs, seed, batch_size, learning_rate,
             rate_correct, rate_incorrect, cache, out_path, timing):
    """Run the full four-split protocol and export results."""
    params = LifFilterParams(beta=beta, w=w, u_thr=u_thr, t_rf=t_rf)
    net_config, train_config = _configs(
        epochs, seed, batch_size, learning_rate, rate_correct, rate_incorrect
    )
    dataset = load_dataset(data_dir)
    table = harness.run_experiment(
        dataset,
        dt=dt_us,
        lif_params=params,
        net_config=net_config,
        train_config=train_config,
        cache_dir=_default_cache(data_dir, cache),
        log=_log,
    )
    _log(
        f"mean final train_acc {table.mean_final_train_acc:.4f} "
        f"test_acc {table.mean_final_test_acc:.4f}"
    )
    exported = table if timing else harness.strip_timing(table)
    fmt = "json" if str(out_path).endswith(".json") else "csv"
    harness.export_results(exported, out_path, format=fmt)
    click.echo(str(out_path))


@main.command("report")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default="curves.csv", show_default=True, type=click.Path())
@click.option("--fig-dir", default=None, type=click.Path(), help="Figure directory [default: alongside --out].")
@click.option("--figures/--no-figures", default=True, show_default=True)
@_fail_with_diagnostic
def report_cmd(in_path, out_path, fig_dir, figures):
    """Emit per-epoch curves and render accuracy/loss figures."""
    table = harness.load_results(in_path)
    written = report.write_report(table, out_path, fig_dir=fig_dir, figures=figures)
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
