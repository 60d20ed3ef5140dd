"""Experiment orchestration: data preparation, per-cell chains, CSV output."""

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import metrics
from ..models import (
    GAUSSIAN_TOY,
    LINEAR_REGRESSION,
    LOGISTIC_REGRESSION,
    Dataset,
    ModelSpec,
    linreg_true_posterior,
    synth_linreg,
)
from ..samplers import SamplerConfig, run_chain, steps_for
from .io import load_idx, load_libsvm, load_npz, random_projection

logger = logging.getLogger(__name__)

CSV_FIELDS = ("pass", "w2", "test_ll", "log_loss", "mean_kinetic", "mean_xi", "diverged")
SUMMARY_FIELDS = ("sampler", "h", "friction", "w2", "log_loss", "diverged", "diverged_step")
DEFAULT_PRIOR_VARIANCE = {LINEAR_REGRESSION: 10.0, LOGISTIC_REGRESSION: 1.0, GAUSSIAN_TOY: 1.0}


@dataclass
class PreparedData:
    model: ModelSpec
    train: Dataset = None
    test: Dataset = None
    posterior: metrics.GaussianSummary = None
    meta: dict = None


@dataclass
class MetricsRecord:
    pass_: float
    w2: float = None
    test_ll: float = None
    log_loss: float = None
    mean_kinetic: float = None
    mean_xi: float = None
    diverged: bool = False

    def row(self):
        values = (self.pass_, self.w2, self.test_ll, self.log_loss,
                  self.mean_kinetic, self.mean_xi)
        return [_fmt(v) for v in values] + [str(int(self.diverged))]


def _fmt(value):
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "NaN"
    return repr(value)


def _pair_dims(train, test):
    """Zero-pad two LIBSVM datasets to a common feature count."""
    d = max(train.n_features, test.n_features)

    def pad(ds):
        if ds.n_features == d:
            return ds
        X = np.zeros((ds.n_samples, d))
        X[:, : ds.n_features] = ds.X
        return Dataset(X, ds.y)

    return pad(train), pad(test)


def prepare_data(cfg):
    """Load or generate every dataset the config names. Fails before any chain runs."""
    cfg.validate()
    kind = cfg.model["kind"]
    source = cfg.data["source"]
    paths = cfg.data_paths()
    train = test = None
    meta = {}
    if source == "synthetic":
        seed = int(cfg.data.get("seed", cfg.seed))
        rng = np.random.default_rng(seed)
        train, theta_true = synth_linreg(int(cfg.data["n"]), int(cfg.data["dim"]), rng)
        meta = {"theta_true": theta_true, "seed": seed}
    elif source == "npz":
        train, meta = load_npz(paths["path"])
    elif source == "idx":
        digits = cfg.data.get("digits")
        digits = tuple(digits) if digits is not None else None
        train = load_idx(paths["train_images"], paths["train_labels"], digits)
        test = load_idx(paths["test_images"], paths["test_labels"], digits)
    elif source == "libsvm":
        train = load_libsvm(paths["train"])
        if "test" in paths:
            test = load_libsvm(paths["test"])
            train, test = _pair_dims(train, test)

    if cfg.projection is not None and train is not None:
        out_dim = int(cfg.projection["out_dim"])
        seed = int(cfg.projection.get("seed", 0))
        # same seed, same matrix for both splits
        train = random_projection(train, out_dim, seed)
        if test is not None:
            test = random_projection(test, out_dim, seed)

    if kind == GAUSSIAN_TOY:
        dim = int(cfg.model["dim"])
    else:
        dim = train.n_features
    model = ModelSpec(
        kind,
        dim,
        prior_variance=float(cfg.model.get("prior_variance", DEFAULT_PRIOR_VARIANCE[kind])),
        toy_noise_cov=cfg.model.get("noise_cov"),
    )
    model.check_data(train)
    if test is not None:
        model.check_data(test)
    posterior = None
    if kind == LINEAR_REGRESSION:
        posterior = linreg_true_posterior(train, model.prior_variance)
    return PreparedData(model, train, test, posterior, meta)


class MetricsSink:
    """Accumulates post-burn-in statistics and emits one record per checkpoint."""

    def __init__(self, prepared, mass_diag, steps_per_pass):
        self.prepared = prepared
        self.steps_per_pass = steps_per_pass
        dim = prepared.model.dim
        kind = prepared.model.kind
        self.moments = metrics.RunningMoments(dim) if kind == LINEAR_REGRESSION else None
        self.track_logistic = kind == LOGISTIC_REGRESSION and prepared.test is not None
        self.theta_mean = np.zeros(dim)
        self.loss_mean = 0.0
        self.count = 0
        self.diag = metrics.ThermostatDiagnostics(mass_diag)

    def observe(self, state):
        self.count += 1
        self.diag.update(state.momentum, state.xi)
        if self.moments is not None:
            self.moments.update(state.theta)
        if self.track_logistic:
            self.theta_mean += (state.theta - self.theta_mean) / self.count
            loss = metrics.log_loss(state.theta, self.prepared.test)
            self.loss_mean += (loss - self.loss_mean) / self.count

    def checkpoint(self, step, diverged):
        rec = MetricsRecord(pass_=step / self.steps_per_pass, diverged=diverged)
        nan = math.nan
        if diverged:
            rec.mean_kinetic = rec.mean_xi = nan
            if self.moments is not None:
                rec.w2 = nan
            if self.track_logistic:
                rec.test_ll = rec.log_loss = nan
            return rec
        if self.count:
            rec.mean_kinetic = self.diag.mean_kinetic
            rec.mean_xi = self.diag.mean_xi
        if self.moments is not None:
            summary = self.moments.summary()
            if summary is not None:
                rec.w2 = metrics.w2_gaussian(summary, self.prepared.posterior)
        if self.track_logistic and self.count:
            rec.test_ll = metrics.test_log_likelihood(self.theta_mean, self.prepared.test)
            rec.log_loss = self.loss_mean
        return rec


def cell_filename(sampler, h, friction):
    return f"{sampler}_h{h:g}_A{friction:g}.csv"


def run_cell(cfg, prepared, cell):
    """Run one (sampler, h, friction) chain; returns (cell, records, report)."""
    index, sampler, h, friction = cell
    scfg = SamplerConfig(
        h=h,
        beta=float(cfg.beta),
        friction=friction,
        thermal_mass=cfg.thermal_mass,
        mass_diag=cfg.mass_diag,
        batch=int(cfg.batch),
        seed=int(cfg.seed),
        passes=float(cfg.passes),
        burn_in_fraction=float(cfg.burn_in_fraction),
        theta0=prepared.posterior.mean if cfg.init == "posterior_mean" else None,
    )
    resolved = scfg.resolve(prepared.model.dim)
    # gaussian_toy has no dataset: a "pass" is one step
    steps_per_pass = 1.0 if prepared.train is None else len(prepared.train) / resolved.batch
    n_steps = cfg.steps if cfg.steps is not None else steps_for(resolved, prepared.train)
    every = max(1, int(round(cfg.checkpoint_every * steps_per_pass)))
    sink = MetricsSink(prepared, resolved.mass_diag, steps_per_pass)
    report = run_chain(
        sampler,
        prepared.model,
        prepared.train,
        scfg,
        sink,
        chain_index=index,
        n_steps=n_steps,
        checkpoint_every=every,
    )
    return cell, report.records, report.diverged_step


def _run_cell_star(args):
    return run_cell(*args)


def write_cell_csv(path, records):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for rec in records:
            w.writerow(rec.row())


def run_experiment(cfg, out_dir=None, jobs=None):
    """Run every cell of ``cfg`` and write per-cell CSVs plus ``summary.csv``.

    Returns the list of summary rows. Diverged chains are results, not errors.
    """
    prepared = prepare_data(cfg)
    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    cells = cfg.cells()
    jobs = jobs or cfg.jobs or os.cpu_count() or 1
    args = [(cfg, prepared, cell) for cell in cells]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(cells))) as pool:
            results = list(pool.map(_run_cell_star, args))
    else:
        results = [run_cell(*a) for a in args]

    summary = []
    for (index, sampler, h, friction), records, diverged_step in results:
        write_cell_csv(os.path.join(out_dir, cell_filename(sampler, h, friction)), records)
        last = records[-1] if records else MetricsRecord(pass_=0.0)
        summary.append({
            "sampler": sampler,
            "h": h,
            "friction": friction,
            "w2": last.w2,
            "log_loss": last.log_loss,
            "diverged": diverged_step is not None,
            "diverged_step": diverged_step,
        })
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for row in summary:
            w.writerow([
                row["sampler"], repr(row["h"]), repr(row["friction"]),
                _fmt(row["w2"]), _fmt(row["log_loss"]), str(int(row["diverged"])),
                "" if row["diverged_step"] is None else str(row["diverged_step"]),
            ])
    return summary
