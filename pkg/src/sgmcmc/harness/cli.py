"""Command-line entry point: ``sgmcmc run | validate | gen-synth``."""

import logging
import sys

import click
import numpy as np

from ..exceptions import FormatError, InvalidInputError
from ..models import synth_linreg
from .config import ExperimentConfig
from .experiment import prepare_data, run_experiment
from .io import save_synthetic


def _load(config_path, seed=None, out=None, jobs=None):
    try:
        cfg = ExperimentConfig.load(config_path)
        if seed is not None:
            cfg.seed = seed
        if out is not None:
            cfg.out = out
        if jobs is not None:
            cfg.jobs = jobs
        return cfg.validate()
    except InvalidInputError as err:
        raise click.UsageError(str(err)) from None


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log chain progress and divergences.")
def main(verbose):
    """Stochastic-gradient thermostat experiments."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--jobs", type=click.IntRange(min=1), help="Worker processes.")
@click.option("--seed", type=click.IntRange(min=0, max=2**64 - 1), help="Override the seed.")
def run(config_path, out, jobs, seed):
    """Run every (sampler, h, friction) cell and write CSV files."""
    cfg = _load(config_path, seed=seed, out=out, jobs=jobs)
    try:
        summary = run_experiment(cfg)
    except (OSError, FormatError) as err:
        raise click.ClickException(str(err)) from None
    for row in summary:
        status = f"diverged at step {row['diverged_step']}" if row["diverged"] else "ok"
        click.echo(f"{row['sampler']:>7} h={row['h']:g} A={row['friction']:g}: {status}")
    click.echo(f"wrote {len(summary)} cell files and summary.csv to {cfg.out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
def validate(config_path):
    """Check the config and parse every referenced data file."""
    cfg = _load(config_path)
    try:
        prepared = prepare_data(cfg)
    except (OSError, FormatError, InvalidInputError) as err:
        raise click.ClickException(str(err)) from None
    n = 0 if prepared.train is None else len(prepared.train)
    click.echo(
        f"ok: {prepared.model.kind}, dim {prepared.model.dim}, {n} training rows, "
        f"{len(cfg.cells())} cells"
    )


@main.command("gen-synth")
@click.option("--n", "n", required=True, type=click.IntRange(min=1))
@click.option("--dim", required=True, type=click.IntRange(min=1))
@click.option("--seed", required=True, type=click.IntRange(min=0, max=2**64 - 1))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def gen_synth(n, dim, seed, out):
    """Write a synthetic linear-regression dataset (.npz with X, y, theta_true)."""
    data, theta = synth_linreg(n, dim, np.random.default_rng(seed))
    try:
        save_synthetic(out, data, theta, seed)
    except OSError as err:
        raise click.ClickException(str(err)) from None
    click.echo(f"wrote {n} x {dim} dataset to {out}")


if __name__ == "__main__":
    sys.exit(main())
