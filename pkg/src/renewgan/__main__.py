"""
Scenario generation for renewable power: synthesize (or ingest) data, train a GAN or a copula baseline,
sample scenarios and evaluate them against held-out real days
"""

import functools
import logging
import os

import click
import numpy as np
import pandas as pd
import runez
from runez.render import PrettyTable

from renewgan import copula, gan
from renewgan.artifacts import checkpoint_name, load_model, sample_model
from renewgan.config import RunConfig
from renewgan.data import load_csv, read_samples_csv, ScenarioDataset, split_indices
from renewgan.evaluation import evaluate as evaluation_report
from renewgan.synth import synthesize
from renewgan.system import ArtifactIOError, ConfigurationError, LOG, RenewganError


@runez.click.group()
@runez.click.version()
@runez.click.debug()
@runez.click.log(expose_value=False)
def main(debug):
    """Generate and evaluate renewable power scenarios"""
    runez.system.AbortException = SystemExit
    runez.log.setup(
        debug=debug,
        console_format="%(levelname)s %(message)s",
        console_level=logging.INFO,
        locations=None,
        greetings=":: {argv}",
    )


def run_options(func):
    """Options shared by all commands"""
    func = runez.click.config("-s", "overrides", name="set", expose_value=True, adapter=None)(func)
    func = click.option("--out", "-o", metavar="PATH", help="Output folder (default: config 'out', or current folder)")(func)
    func = click.option("--seed", type=int, help="Global seed (default: config 'seed', or 0)")(func)
    func = click.option("--config", "-c", "config_path", metavar="PATH", help="JSON config file")(func)
    return func


def guarded(func):
    """Report renewgan errors as a message and the exit code of their kind"""

    @functools.wraps(func)
    def inner(*args, **kwargs):
        try:
            return func(*args, **kwargs)

        except RenewganError as e:
            runez.abort(e.message, code=e.exit_code)

    return inner


def _run_config(config_path, seed, out, overrides):
    return RunConfig(config_path, overrides=overrides and overrides.values, seed=seed, out=out)


def _output_folder(run):
    folder = run.out
    runez.ensure_folder(folder, fatal=ArtifactIOError, logger=None)
    return folder


def _dataset_table(dataset):
    table = PrettyTable("Terrain,Farms,Mean,Samples", border="github")
    for terrain in dataset.terrains:
        values = dataset.terrain_values(terrain)
        table.add_row(terrain, len(dataset.farm_indices(terrain)), "%.4f" % values.mean(), len(dataset))

    return table


@main.command()
@run_options
@guarded
def synth(config_path, seed, out, overrides):
    """Write a dataset archive: synthetic, or ingested from raw measurements ('ingest.csv' + 'ingest.meta')"""
    run = _run_config(config_path, seed, out, overrides)
    raw = run.get("ingest.csv")
    if raw:
        meta = run.get("ingest.meta")
        if not meta:
            raise ConfigurationError("ingest.meta: required along with ingest.csv")

        resolution = run.get("ingest.resolution_hours")
        if resolution is not None:
            resolution = run.number("ingest.resolution_hours", minimum=0)

        dataset = load_csv(raw, meta, resolution_hours=resolution)

    else:
        dataset = synthesize(run.synth_config())

    folder = _output_folder(run)
    dataset.save(folder)
    LOG.info("Saved %s to %s", dataset, runez.short(folder))
    print(_dataset_table(dataset))


def _save_history(model, path):
    frame = pd.DataFrame(
        {
            "epoch": np.arange(1, len(model.history) + 1),
            "d_loss": [h[0] for h in model.history],
            "g_loss": [h[1] for h in model.history],
        }
    )
    try:
        frame.to_csv(path, index=False)

    except OSError as e:
        raise ArtifactIOError("Can't write %s: %s" % (runez.short(path), e))


@main.command()
@run_options
@guarded
def train(config_path, seed, out, overrides):
    """Train a GAN ('train.gan.loss_kind': bce or wasserstein), or fit a baseline ('train.baseline': copula)"""
    run = _run_config(config_path, seed, out, overrides)
    baseline = run.baseline
    gan_config = None if baseline else run.gan_config()
    fraction = run.number("train.train_fraction")
    dataset = ScenarioDataset.load_archive(run.get("train.dataset"))
    train_indices, test_indices = split_indices(len(dataset), train_fraction=fraction, seed=run.seed)
    train_set = dataset.subset(train_indices)
    if baseline:
        model = copula.fit(train_set)

    else:
        model = gan.train(train_set, gan_config)

    folder = _output_folder(run)
    path = os.path.join(folder, checkpoint_name(model.source))
    model.save(path)
    if not baseline:
        _save_history(model, os.path.join(folder, "loss_history.csv"))

    split_info = {
        "seed": run.seed,
        "train_fraction": fraction,
        "train": train_set.day_index.tolist(),
        "test": dataset.day_index[test_indices].tolist(),
    }
    runez.save_json(split_info, os.path.join(folder, "split.json"), fatal=ArtifactIOError, logger=None)
    LOG.info("Saved %s to %s", model, runez.short(path))


@main.command()
@run_options
@click.option("-n", "count", type=int, help="Number of scenarios to generate (default: config 'generate.n')")
@click.argument("checkpoint")
@guarded
def generate(config_path, seed, out, overrides, count, checkpoint):
    """Sample scenarios from a GAN checkpoint or copula model, written to <out>/<source>.csv"""
    run = _run_config(config_path, seed, out, overrides)
    if count is None:
        count = run.number("generate.n", integer=True)

    model = load_model(checkpoint)
    scenarios = sample_model(model, count, seed=run.seed)
    path = os.path.join(_output_folder(run), "%s.csv" % scenarios.source)
    scenarios.save_samples(path)
    LOG.info("Saved %s to %s", scenarios, runez.short(path))


def _held_out(dataset, run, split_path):
    """Test days of `dataset`: from a split.json written by 'train', or recomputed from train_fraction + seed"""
    if not split_path:
        fraction = run.number("evaluate.train_fraction")
        return dataset.subset(split_indices(len(dataset), train_fraction=fraction, seed=run.seed)[1])

    if not os.path.isfile(split_path):
        raise ArtifactIOError("Split file %s does not exist" % runez.short(split_path))

    data = runez.read_json(split_path, fatal=None, logger=None)
    test_days = data.get("test") if isinstance(data, dict) else None
    if not isinstance(test_days, list) or not test_days:
        raise ConfigurationError("%s: expecting a non-empty 'test' list of day indices" % runez.short(split_path))

    positions = {day: i for i, day in enumerate(dataset.day_index.tolist())}
    missing = [day for day in test_days if day not in positions]
    if missing:
        raise ConfigurationError("%s: day(s) %s not in dataset" % (runez.short(split_path), runez.short(missing)))

    return dataset.subset([positions[day] for day in test_days])


def _kld_tables(report):
    models = report.models
    summary = PrettyTable(["Scope"] + ["KLD %s" % m for m in models], border="github")
    summary.add_row("all", *("%.4f" % report.kld_global[m] for m in models))
    for terrain, klds in report.kld_by_terrain.items():
        summary.add_row(terrain, *("%.4f" % klds[m] for m in models))

    return summary


@main.command()
@run_options
@click.option("--split", "split_path", metavar="PATH", help="split.json written by 'train', selects the held-out days")
@click.argument("real")
@click.argument("generated", nargs=-1, required=True)
@guarded
def evaluate(config_path, seed, out, overrides, split_path, real, generated):
    """Compare generated samples (one csv per model, named after its source) with the held-out days of REAL"""
    run = _run_config(config_path, seed, out, overrides)
    bandwidth = run.number("evaluate.bandwidth")
    if not bandwidth > 0:
        raise ConfigurationError("evaluate.bandwidth must be positive, got %s" % bandwidth)

    dataset = ScenarioDataset.load_archive(real)
    test_set = _held_out(dataset, run, split_path)
    models = [read_samples_csv(path, dataset.farms) for path in generated]
    report = evaluation_report(test_set, models, bandwidth=bandwidth)
    folder = _output_folder(run)
    report.save(folder)
    LOG.info("Saved %s to %s", report, runez.short(folder))
    print(_kld_tables(report))


if __name__ == "__main__":
    runez.click.protected_main(main)
